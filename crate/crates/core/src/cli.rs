//! Subcommand orchestration behind the `coupled-tug` binary.
//!
//! Exit codes: 0 success, 1 invalid configuration, 2 solver did not
//! converge (artifacts are still written), 3 runtime failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Serialize;

use crate::analysis::{
    blowup_deviation, check_a_monotone, check_lemma_Ll, cone_comparison_check, lipschitz_bound_check,
    running_sup, slope_stats, symmetric_slope_check, AMonotone, BlowupReport, LemmaSlack, LipschitzCheck,
    SlopeReport, SymmetricSlopeReport,
};
use crate::config::{AnalysisSource, RunConfig, StrategySpec};
use crate::domain::CoupledField;
use crate::error::{Error, Result};
use crate::exact::{default_fd_step, radial_residual, ConeCoefficients, Example1, ModeFunction};
use crate::game::{estimate_value, replay_episode, GreedyMax, GreedyMin, Player, PullToPoint, Strategy, ValueEstimate};
use crate::io::{fmt_f64, heatmap, write_csv, write_csv_records, write_json, write_pgm};
use crate::solver::{solve, ProblemSpec, SolveReport, SolveSummary};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subcommand {
    Solve,
    Simulate,
    Analyze,
    Cones,
    Markov,
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_NOT_CONVERGED: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

/// Failure split by phase: validation before any computation, runtime after.
enum Failure {
    Invalid(Error),
    Runtime(Error),
}

fn invalid<T>(r: Result<T>) -> std::result::Result<T, Failure> {
    r.map_err(Failure::Invalid)
}

fn runtime<T>(r: Result<T>) -> std::result::Result<T, Failure> {
    r.map_err(Failure::Runtime)
}

fn error_kind(e: &Error) -> String {
    let dbg = format!("{e:?}");
    dbg.split(|c: char| !c.is_alphanumeric()).next().unwrap_or("Error").to_string()
}

/// Runs one subcommand; returns the process exit code. Diagnostics go to stderr.
pub fn run(cmd: Subcommand, config: &Path, out: &Path, seed: Option<u64>) -> i32 {
    let result = (|| {
        let mut cfg = invalid(RunConfig::load(config))?;
        if let Some(s) = seed {
            cfg.simulate.seed = s;
        }
        runtime(fs::create_dir_all(out).map_err(Error::from))?;
        match cmd {
            Subcommand::Solve => cmd_solve(&cfg, out),
            Subcommand::Simulate => cmd_simulate(&cfg, out),
            Subcommand::Analyze => cmd_analyze(&cfg, out),
            Subcommand::Cones => cmd_cones(&cfg, out),
            Subcommand::Markov => cmd_markov(&cfg, out),
        }
    })();
    match result {
        Ok(code) => code,
        Err(Failure::Invalid(e)) => {
            eprintln!("invalid configuration [{}]: {e}", error_kind(&e));
            EXIT_INVALID
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error [{}]: {e}", error_kind(&e));
            EXIT_RUNTIME
        }
    }
}

fn out_file(out: &Path, name: &str) -> PathBuf {
    out.join(name)
}

fn mode_header(prefix: &str, modes: usize) -> Vec<String> {
    (1..=modes).map(|i| format!("{prefix}{i}")).collect()
}

fn coord_names(dim: usize) -> Vec<String> {
    ["x", "y"][..dim].iter().map(|s| s.to_string()).collect()
}

fn write_field(field: &CoupledField, out: &Path) -> Result<()> {
    let lat = field.lattice();
    let mut header = coord_names(lat.dim());
    header.extend(mode_header("u", field.modes()));
    let rows: Vec<Vec<f64>> = (0..lat.interior_len())
        .map(|k| {
            let mut row = lat.node(k);
            row.extend((0..field.modes()).map(|i| field.at_node(i, k)));
            row
        })
        .collect();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    write_csv(&out_file(out, "field.csv"), &header, &rows)?;
    if lat.dim() == 2 {
        for i in 0..field.modes() {
            let (w, h, px) = heatmap(field, i);
            write_pgm(&out_file(out, &format!("field_mode{}.pgm", i + 1)), w, h, &px)?;
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct SolveOutput<'a> {
    summary: &'a SolveSummary,
    modes: usize,
    dim: usize,
}

fn solve_problem(spec: &ProblemSpec) -> std::result::Result<SolveReport, Failure> {
    runtime(solve(spec, None))
}

fn cmd_solve(cfg: &RunConfig, out: &Path) -> std::result::Result<i32, Failure> {
    let spec = invalid(cfg.problem())?;
    let report = solve_problem(&spec)?;
    let summary = report.summary(&spec);
    runtime(write_field(&report.field, out))?;
    runtime(write_json(
        &out_file(out, "solve.json"),
        &SolveOutput { summary: &summary, modes: spec.modes(), dim: spec.dim() },
    ))?;
    if !report.converged {
        eprintln!("solver stopped after {} sweeps with change {:e} > tol {:e}", report.iterations, report.delta, spec.tol);
        return Ok(EXIT_NOT_CONVERGED);
    }
    Ok(EXIT_OK)
}

fn build_strategy(s: &StrategySpec, field: Option<&Arc<CoupledField>>, directions: usize) -> Box<dyn Strategy> {
    match (s, field) {
        (StrategySpec::GreedyMax, Some(f)) => Box::new(GreedyMax::new(Arc::clone(f), directions)),
        (StrategySpec::GreedyMin, Some(f)) => Box::new(GreedyMin::new(Arc::clone(f), directions)),
        (StrategySpec::Pull { target }, _) => Box::new(PullToPoint { target: target.clone() }),
        _ => unreachable!("greedy strategies are built with a solved field"),
    }
}

#[derive(Serialize)]
struct SimulateOutput<'a> {
    estimate: &'a ValueEstimate,
    first: &'a StrategySpec,
    second: &'a StrategySpec,
    solve: Option<SolveSummary>,
}

fn cmd_simulate(cfg: &RunConfig, out: &Path) -> std::result::Result<i32, Failure> {
    let spec = invalid(cfg.problem())?;
    let sim = &cfg.simulate;
    let start = cfg.start();
    let mode = invalid(cfg.start_mode(spec.modes()))?;
    if sim.episodes < 2 {
        return Err(Failure::Invalid(Error::TooFewEpisodes(sim.episodes)));
    }
    if start.len() != spec.dim() {
        return Err(Failure::Invalid(Error::DimensionMismatch { expected: spec.dim(), got: start.len() }));
    }
    if spec.domain.signed_distance(&start) <= 0.0 {
        return Err(Failure::Invalid(Error::NotInterior(start)));
    }
    let (field, summary) = if sim.first.needs_field() || sim.second.needs_field() {
        let report = solve_problem(&spec)?;
        let summary = report.summary(&spec);
        (Some(Arc::new(report.field)), Some(summary))
    } else {
        (None, None)
    };
    let d = spec.effective_directions();
    let first = build_strategy(&sim.first, field.as_ref(), d);
    let second = build_strategy(&sim.second, field.as_ref(), d);
    let est = runtime(estimate_value(&spec, first.as_ref(), second.as_ref(), &start, mode, sim.episodes, sim.seed))?;
    let summary_converged = summary.as_ref().map(|s| s.converged);
    runtime(write_json(
        &out_file(out, "simulate.json"),
        &SimulateOutput { estimate: &est, first: &sim.first, second: &sim.second, solve: summary },
    ))?;
    if sim.traces > 0 {
        let mut header = vec!["episode".to_string(), "step".to_string()];
        header.extend(coord_names(spec.dim()));
        header.extend(["mode".to_string(), "coin".to_string()]);
        let mut rows = Vec::new();
        for e in 0..sim.traces.min(sim.episodes) {
            let t = runtime(replay_episode(&spec, first.as_ref(), second.as_ref(), &start, mode, sim.seed, e))?;
            let mut push = |step: usize, x: &[f64], m: usize, coin: &str| {
                let mut row = vec![e.to_string(), step.to_string()];
                row.extend(x.iter().map(|v| fmt_f64(*v)));
                row.extend([(m + 1).to_string(), coin.to_string()]);
                rows.push(row);
            };
            push(0, &t.start, t.start_mode, "");
            for (k, s) in t.steps.iter().enumerate() {
                push(k + 1, &s.point, s.mode, if s.coin == Player::First { "1" } else { "2" });
            }
        }
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        runtime(write_csv_records(&out_file(out, "trace.csv"), &header, &rows))?;
    }
    if let Some(s) = &summary_converged {
        if !s {
            eprintln!("solver did not converge; greedy strategies used the last iterate");
            return Ok(EXIT_NOT_CONVERGED);
        }
    }
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct CenterAnalysis {
    center: Vec<f64>,
    slopes: SlopeReport,
    lemma_slack: LemmaSlack,
    a_monotone: AMonotone,
    cone_violation: f64,
    lipschitz: LipschitzCheck,
    running_sup: [Vec<f64>; 2],
    blowup: BlowupReport,
    symmetric: SymmetricSlopeReport,
}

#[derive(Serialize)]
struct AnalyzeOutput {
    source: AnalysisSource,
    samples: usize,
    radius: f64,
    inner_radius: f64,
    solve: Option<SolveSummary>,
    centers: Vec<CenterAnalysis>,
}

fn analyze_center(f: &dyn ModeFunction, cfg: &RunConfig, x0: &[f64]) -> Result<CenterAnalysis> {
    let a = &cfg.analyze;
    let inner = a.inner_radius.unwrap_or(a.radius / 2.0);
    Ok(CenterAnalysis {
        center: x0.to_vec(),
        slopes: slope_stats(f, x0, a.radius, a.samples)?,
        lemma_slack: check_lemma_Ll(f, x0, inner, a.radius, a.samples)?,
        a_monotone: check_a_monotone(f, x0, &a.radii, a.samples)?,
        cone_violation: cone_comparison_check(f, x0, a.radius, a.samples)?,
        lipschitz: lipschitz_bound_check(f, x0, a.radius, a.h_fd)?,
        running_sup: running_sup(f, x0, &a.radii, a.samples)?,
        blowup: blowup_deviation(f, x0, &a.ladder, a.samples)?,
        symmetric: symmetric_slope_check(f, x0, &a.ladder, a.samples)?,
    })
}

fn write_ladders(out: &Path, k: usize, c: &CenterAnalysis) -> Result<()> {
    let rows: Vec<Vec<f64>> = c
        .a_monotone
        .radii
        .iter()
        .enumerate()
        .map(|(j, r)| vec![*r, c.a_monotone.a[j], c.running_sup[0][j], c.running_sup[1][j]])
        .collect();
    write_csv(&out_file(out, &format!("radii_{k}.csv")), &["r", "a", "L1", "L2"], &rows)?;
    let rows: Vec<Vec<f64>> = c
        .blowup
        .rungs
        .iter()
        .enumerate()
        .map(|(j, g)| {
            vec![
                g.radius,
                g.residual[0],
                g.residual[1],
                g.slope_norm[0],
                g.slope_norm[1],
                c.symmetric.s_plus[0][j],
                c.symmetric.s_minus[0][j],
                c.symmetric.s_plus[1][j],
                c.symmetric.s_minus[1][j],
            ]
        })
        .collect();
    write_csv(
        &out_file(out, &format!("ladder_{k}.csv")),
        &["r", "residual1", "residual2", "slope1", "slope2", "S1plus", "S1minus", "S2plus", "S2minus"],
        &rows,
    )
}

fn cmd_analyze(cfg: &RunConfig, out: &Path) -> std::result::Result<i32, Failure> {
    let a = &cfg.analyze;
    let spec = invalid(cfg.problem())?;
    if spec.modes() != 2 {
        return Err(Failure::Invalid(Error::NotTwoModes(spec.modes())));
    }
    let centers = if a.centers.is_empty() { vec![cfg.start()] } else { a.centers.clone() };
    let margin_of = |x: &[f64]| match a.source {
        AnalysisSource::Field => spec.domain.signed_distance(x),
        AnalysisSource::Example1 => 1.0 - x.iter().map(|v| v * v).sum::<f64>().sqrt(),
    };
    let outer = a.radii.last().copied().unwrap_or(0.0).max(a.radius).max(a.ladder.first().copied().unwrap_or(0.0));
    for c in &centers {
        if c.len() != spec.dim() {
            return Err(Failure::Invalid(Error::DimensionMismatch { expected: spec.dim(), got: c.len() }));
        }
        if margin_of(c) < outer {
            return Err(Failure::Invalid(Error::BallNotContained { center: c.clone(), radius: outer }));
        }
    }
    let (field, summary) = match a.source {
        AnalysisSource::Field => {
            let report = solve_problem(&spec)?;
            let summary = report.summary(&spec);
            (Some(report.field), Some(summary))
        }
        AnalysisSource::Example1 => (None, None),
    };
    let example = Example1 { dim: spec.dim() };
    let f: &dyn ModeFunction = match &field {
        Some(fd) => fd,
        None => &example,
    };
    let mut results = Vec::with_capacity(centers.len());
    for (k, c) in centers.iter().enumerate() {
        let r = runtime(analyze_center(f, cfg, c))?;
        runtime(write_ladders(out, k, &r))?;
        results.push(r);
    }
    let converged = summary.as_ref().is_none_or(|s| s.converged);
    let output = AnalyzeOutput {
        source: a.source,
        samples: a.samples,
        radius: a.radius,
        inner_radius: a.inner_radius.unwrap_or(a.radius / 2.0),
        solve: summary,
        centers: results,
    };
    runtime(write_json(&out_file(out, "analyze.json"), &output))?;
    if !converged {
        return Ok(EXIT_NOT_CONVERGED);
    }
    Ok(EXIT_OK)
}

fn cmd_cones(cfg: &RunConfig, out: &Path) -> std::result::Result<i32, Failure> {
    let c = &cfg.cones;
    if !(c.r_max > 0.0) || c.count < 2 {
        return Err(Failure::Invalid(Error::Config("cones: need r_max > 0 and count ≥ 2".into())));
    }
    let coef = ConeCoefficients { c1: c.c1, c2: c.c2, a: c.a, b: c.b };
    let mut rows = Vec::with_capacity(c.count);
    for k in 0..c.count {
        let r = c.r_max * k as f64 / (c.count - 1) as f64;
        let (p1, p2) = coef.profiles(r);
        let delta = default_fd_step(r);
        let (r1, r2) = if r > delta {
            runtime(radial_residual(|s| coef.profiles(s).0, |s| coef.profiles(s).1, r, delta))?
        } else {
            (f64::NAN, f64::NAN)
        };
        rows.push(vec![r, p1, p2, r1, r2]);
    }
    runtime(write_csv(&out_file(out, "cones.csv"), &["r", "psi1", "psi2", "residual1", "residual2"], &rows))?;
    Ok(EXIT_OK)
}

fn cmd_markov(cfg: &RunConfig, out: &Path) -> std::result::Result<i32, Failure> {
    let g = invalid(cfg.generator())?;
    let m = g.modes();
    if let Some(t) = cfg.markov.times.iter().find(|t| !(t.is_finite() && **t >= 0.0)) {
        return Err(Failure::Invalid(Error::InvalidTime(*t)));
    }
    let mut header = vec!["s".to_string()];
    for i in 1..=m {
        header.extend((1..=m).map(|k| format!("rho_{i}_{k}")));
    }
    let mut rows = Vec::with_capacity(cfg.markov.times.len());
    for &s in &cfg.markov.times {
        let kernel = runtime(g.kernel(s))?;
        let mut row = vec![s];
        for i in 0..m {
            row.extend_from_slice(kernel.row(i));
        }
        rows.push(row);
    }
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    runtime(write_csv(&out_file(out, "markov.csv"), &header, &rows))?;
    Ok(EXIT_OK)
}
