//! Error of the DPP solution against the closed-form example, binned by radius.
//!
//! Usage: `cargo run --release --example eps_study -- <eps> <h> <directions>`

use coupled_tug::domain::{BoundaryData, DomainSpec};
use coupled_tug::exact::Example1;
use coupled_tug::markov::GeneratorMatrix;
use coupled_tug::solver::{solve, ProblemSpec};

const BINS: usize = 10;

fn main() {
    let args: Vec<f64> = std::env::args().skip(1).map(|a| a.parse().expect("numeric argument")).collect();
    let (eps, h, dirs) = match args[..] {
        [e, h, d] => (e, h, d as usize),
        _ => (0.1, 0.025, 64),
    };
    let spec = ProblemSpec::new(
        DomainSpec::unit_disk(),
        GeneratorMatrix::symmetric_two_state(),
        BoundaryData::constants(&[-1.0, 1.0]),
        eps,
    )
    .with_spacing(h)
    .with_tol(1e-8)
    .with_directions(dirs);
    let rep = solve(&spec, None).expect("valid problem");
    println!("eps = {eps}, h = {h}, D = {dirs}: {} sweeps, converged = {}", rep.iterations, rep.converged);

    let lat = rep.field.lattice();
    let mut worst = [0.0f64; BINS];
    for k in 0..lat.interior_len() {
        let x = lat.node(k);
        let r = x[0].hypot(x[1]);
        let err = rep.field.at_node(0, k) - Example1::radial(r).0;
        let b = ((r * BINS as f64) as usize).min(BINS - 1);
        if err.abs() > worst[b].abs() {
            worst[b] = err;
        }
    }
    for (b, e) in worst.iter().enumerate() {
        println!("|x| in [{:.1}, {:.1}): max error {e:+.5}", b as f64 / BINS as f64, (b + 1) as f64 / BINS as f64);
    }
}
