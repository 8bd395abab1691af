//! Fixed-point iteration of the coupled dynamic programming principle
//!
//! ```text
//! u_i(x) = ½ { max_{|y-x|=ε} Σ_k ρ_k^i(ε²) u_k(y) + min_{|y-x|=ε} Σ_k ρ_k^i(ε²) u_k(y) }
//! ```
//!
//! with boundary probes reading the payoffs `g_k`. Sweeps are Jacobi: every
//! node reads the previous iterate only, so a sweep is monotone and
//! sup-norm nonexpansive and its result does not depend on the parallel
//! schedule.

use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::domain::{
    build_lattice, hit_pt, probe_directions, BoundaryData, CoupledField, DomainSpec, Lattice, Pt,
    DEFAULT_DIRECTIONS,
};
use crate::error::{Error, Result};
use crate::exact::ModeFunction;
use crate::markov::{GeneratorMatrix, TransitionKernel};

/// Everything that defines one discrete Dirichlet problem.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub domain: DomainSpec,
    pub generator: GeneratorMatrix,
    pub boundary: BoundaryData,
    pub eps: f64,
    pub h: f64,
    pub directions: usize,
    pub tol: f64,
    pub max_iters: usize,
    pub damping: f64,
}

impl ProblemSpec {
    /// Defaults: `h = ε/4`, 64 directions, `tol = 1e-8`, undamped,
    /// `max_iters = 10 (diam/ε)²`.
    pub fn new(domain: DomainSpec, generator: GeneratorMatrix, boundary: BoundaryData, eps: f64) -> Self {
        let max_iters = default_max_iters(&domain, eps);
        Self {
            domain,
            generator,
            boundary,
            eps,
            h: eps / 4.0,
            directions: DEFAULT_DIRECTIONS,
            tol: 1e-8,
            max_iters,
            damping: 1.0,
        }
    }

    pub fn with_spacing(mut self, h: f64) -> Self {
        self.h = h;
        self
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_directions(mut self, d: usize) -> Self {
        self.directions = d;
        self
    }

    pub fn with_max_iters(mut self, n: usize) -> Self {
        self.max_iters = n;
        self
    }

    pub fn with_damping(mut self, theta: f64) -> Self {
        self.damping = theta;
        self
    }

    pub fn with_boundary(mut self, boundary: BoundaryData) -> Self {
        self.boundary = boundary;
        self
    }

    pub fn modes(&self) -> usize {
        self.generator.modes()
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    /// Probe count actually used: 1-D always probes `±1`.
    pub fn effective_directions(&self) -> usize {
        if self.dim() == 1 {
            2
        } else {
            self.directions
        }
    }

    /// ε must be at least `2h` (at least `h` in 1-D, where probes land on nodes).
    pub fn validate(&self) -> Result<()> {
        self.domain.validate()?;
        let bad = |m: String| Err(Error::InvalidProblem(m));
        if self.boundary.modes() != self.generator.modes() {
            return bad(format!(
                "{} boundary functions for {} modes",
                self.boundary.modes(),
                self.generator.modes()
            ));
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return bad(format!("step length must be positive, got {}", self.eps));
        }
        if !(self.h > 0.0 && self.h.is_finite()) {
            return bad(format!("spacing must be positive, got {}", self.h));
        }
        let ratio = if self.dim() == 1 { 1.0 } else { 2.0 };
        if self.eps < ratio * self.h * (1.0 - 1e-12) {
            return bad(format!("step {} below {ratio}·h = {}", self.eps, ratio * self.h));
        }
        if self.dim() > 1 && self.directions < 2 {
            return bad("need at least two probe directions".into());
        }
        if !(self.tol > 0.0) {
            return bad("tolerance must be positive".into());
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return bad(format!("damping must lie in (0, 1], got {}", self.damping));
        }
        Ok(())
    }
}

pub fn default_max_iters(domain: &DomainSpec, eps: f64) -> usize {
    let r = domain.diameter() / eps;
    (10.0 * r * r).ceil() as usize
}

/// Precomputed probe geometry for one problem on one lattice.
///
/// Probe `(node, d)` evaluates `Σ_c w_c W_i[c] + κ_i`, where `W_i = Σ_k ρ_k^i u_k`
/// is the combined field on interior nodes and `κ_i` gathers boundary data
/// (boundary hits and interpolation corners outside the domain).
pub struct DppOperator {
    lattice: Arc<Lattice>,
    kernel: TransitionKernel,
    m: usize,
    d: usize,
    corners: usize,
    slots: Vec<u32>,
    weights: Vec<f64>,
    consts: Vec<f64>,
    damping: f64,
    boundary_mean: Vec<f64>,
}

impl DppOperator {
    pub fn new(spec: &ProblemSpec) -> Result<Self> {
        spec.validate()?;
        let lattice = Arc::new(build_lattice(&spec.domain, spec.h)?);
        Self::on_lattice(spec, lattice)
    }

    pub fn on_lattice(spec: &ProblemSpec, lattice: Arc<Lattice>) -> Result<Self> {
        spec.validate()?;
        if lattice.spec() != &spec.domain || lattice.spacing() != spec.h {
            return Err(Error::FieldMismatch("lattice was built for a different problem".into()));
        }
        let m = spec.modes();
        let dim = lattice.dim();
        let kernel = spec.generator.kernel(spec.eps * spec.eps)?;
        let dirs = probe_directions(dim, spec.directions);
        let d = dirs.len();
        let corners = 1 << dim;
        let n = lattice.interior_len();

        struct Built {
            slots: Vec<u32>,
            weights: Vec<f64>,
            consts: Vec<f64>,
            bsum: Vec<f64>,
            bcount: usize,
        }
        let per_node: Vec<Result<Built>> = (0..n)
            .into_par_iter()
            .map(|k| {
                let x = lattice.node_pt(k);
                let mut b = Built {
                    slots: vec![0; d * corners],
                    weights: vec![0.0; d * corners],
                    consts: vec![0.0; d * m],
                    bsum: vec![0.0; m],
                    bcount: 0,
                };
                let mut g = vec![0.0; m];
                for (j, v) in dirs.iter().enumerate() {
                    let (y, on_boundary) = hit_pt(&spec.domain, x, *v, spec.eps)?;
                    let ghosts: Vec<(f64, Pt)> = if on_boundary {
                        vec![(1.0, y)]
                    } else {
                        let st = lattice.stencil(y);
                        for (c, &(slot, w)) in st.nodes.iter().enumerate() {
                            b.slots[j * corners + c] = slot;
                            b.weights[j * corners + c] = w;
                        }
                        st.ghosts
                    };
                    for (w, p) in ghosts {
                        for (kk, gk) in g.iter_mut().enumerate() {
                            *gk = spec.boundary.eval_pt(kk, p, dim)?;
                        }
                        if on_boundary {
                            for kk in 0..m {
                                b.bsum[kk] += g[kk];
                            }
                            b.bcount += 1;
                        }
                        for i in 0..m {
                            let rho = kernel.row(i);
                            let mix: f64 = (0..m).map(|kk| rho[kk] * g[kk]).sum();
                            b.consts[j * m + i] += w * mix;
                        }
                    }
                }
                Ok(b)
            })
            .collect();

        let mut op = DppOperator {
            lattice: Arc::clone(&lattice),
            kernel,
            m,
            d,
            corners,
            slots: Vec::with_capacity(n * d * corners),
            weights: Vec::with_capacity(n * d * corners),
            consts: Vec::with_capacity(n * d * m),
            damping: spec.damping,
            boundary_mean: vec![0.0; m],
        };
        let mut bsum = vec![0.0; m];
        let mut bcount = 0usize;
        for b in per_node {
            let b = b?;
            op.slots.extend_from_slice(&b.slots);
            op.weights.extend_from_slice(&b.weights);
            op.consts.extend_from_slice(&b.consts);
            for i in 0..m {
                bsum[i] += b.bsum[i];
            }
            bcount += b.bcount;
        }
        if bcount > 0 {
            op.boundary_mean = bsum.iter().map(|s| s / bcount as f64).collect();
        }
        Ok(op)
    }

    pub fn lattice(&self) -> &Arc<Lattice> {
        &self.lattice
    }

    pub fn kernel(&self) -> &TransitionKernel {
        &self.kernel
    }

    /// Per-mode mean of the boundary data over all boundary probe points.
    pub fn boundary_mean(&self) -> &[f64] {
        &self.boundary_mean
    }

    fn check(&self, field: &CoupledField) -> Result<()> {
        if !Arc::ptr_eq(field.lattice(), &self.lattice)
            && (field.lattice().spec() != self.lattice.spec()
                || field.lattice().spacing() != self.lattice.spacing())
        {
            return Err(Error::FieldMismatch("field lives on a different lattice".into()));
        }
        if field.modes() != self.m {
            return Err(Error::FieldMismatch(format!("{} modes, expected {}", field.modes(), self.m)));
        }
        Ok(())
    }

    fn combined(&self, field: &CoupledField) -> Vec<Vec<f64>> {
        let n = self.lattice.interior_len();
        (0..self.m)
            .map(|i| {
                let rho = self.kernel.row(i);
                (0..n)
                    .map(|s| (0..self.m).map(|k| rho[k] * field.at_node(k, s)).sum())
                    .collect()
            })
            .collect()
    }

    /// `½(max + min)` of the probes of node `k` for mode `i`.
    fn midrange(&self, combined: &[f64], k: usize, i: usize) -> f64 {
        let mut hi = f64::NEG_INFINITY;
        let mut lo = f64::INFINITY;
        let base = k * self.d;
        for j in 0..self.d {
            let p = base + j;
            let mut v = self.consts[p * self.m + i];
            let off = p * self.corners;
            for c in 0..self.corners {
                v += self.weights[off + c] * combined[self.slots[off + c] as usize];
            }
            hi = hi.max(v);
            lo = lo.min(v);
        }
        0.5 * (hi + lo)
    }

    fn apply(&self, field: &CoupledField) -> Vec<Vec<f64>> {
        let w = self.combined(field);
        let n = self.lattice.interior_len();
        (0..self.m)
            .map(|i| (0..n).into_par_iter().map(|k| self.midrange(&w[i], k, i)).collect())
            .collect()
    }

    /// One damped Jacobi sweep; returns the new field and the sup-norm change.
    pub fn sweep(&self, field: &CoupledField) -> Result<(CoupledField, f64)> {
        self.check(field)?;
        let t = self.apply(field);
        let theta = self.damping;
        let mut delta: f64 = 0.0;
        let values: Vec<Vec<f64>> = t
            .into_iter()
            .enumerate()
            .map(|(i, ti)| {
                ti.into_iter()
                    .zip(field.values(i))
                    .map(|(tv, &old)| {
                        let new = if theta == 1.0 { tv } else { (1.0 - theta) * old + theta * tv };
                        delta = delta.max((new - old).abs());
                        new
                    })
                    .collect()
            })
            .collect();
        Ok((field.with_values(values), delta))
    }

    /// `max |u_i(x) - ½(max + min)|` without updating.
    pub fn residual(&self, field: &CoupledField) -> Result<f64> {
        self.check(field)?;
        let t = self.apply(field);
        let mut r: f64 = 0.0;
        for (i, ti) in t.iter().enumerate() {
            for (tv, u) in ti.iter().zip(field.values(i)) {
                r = r.max((tv - u).abs());
            }
        }
        Ok(r)
    }

    /// Constant per-mode boundary average on this lattice.
    pub fn initial_field(&self, boundary: &BoundaryData) -> Result<CoupledField> {
        CoupledField::constant(Arc::clone(&self.lattice), boundary.clone(), &self.boundary_mean)
    }
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub field: CoupledField,
    pub iterations: usize,
    pub delta: f64,
    pub residual: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveSummary {
    pub iterations: usize,
    pub delta: f64,
    pub residual: f64,
    pub converged: bool,
    pub interior_nodes: usize,
    pub eps: f64,
    pub h: f64,
    pub directions: usize,
}

impl SolveReport {
    pub fn summary(&self, spec: &ProblemSpec) -> SolveSummary {
        SolveSummary {
            iterations: self.iterations,
            delta: self.delta,
            residual: self.residual,
            converged: self.converged,
            interior_nodes: self.field.lattice().interior_len(),
            eps: spec.eps,
            h: spec.h,
            directions: spec.effective_directions(),
        }
    }
}

/// One sweep of the DPP map on `field`.
pub fn dpp_sweep(field: &CoupledField, spec: &ProblemSpec) -> Result<(CoupledField, f64)> {
    DppOperator::on_lattice(spec, Arc::clone(field.lattice()))?.sweep(field)
}

/// Sup-norm DPP defect of `field`.
pub fn dpp_residual(field: &CoupledField, spec: &ProblemSpec) -> Result<f64> {
    DppOperator::on_lattice(spec, Arc::clone(field.lattice()))?.residual(field)
}

/// Iterates sweeps until the change drops to `tol` or `max_iters` is hit.
pub fn solve(spec: &ProblemSpec, initial: Option<CoupledField>) -> Result<SolveReport> {
    let op = match &initial {
        Some(f) => DppOperator::on_lattice(spec, Arc::clone(f.lattice()))?,
        None => DppOperator::new(spec)?,
    };
    solve_with(&op, spec, initial)
}

/// [`solve`] with a prebuilt operator.
pub fn solve_with(op: &DppOperator, spec: &ProblemSpec, initial: Option<CoupledField>) -> Result<SolveReport> {
    let mut field = match initial {
        Some(f) => f,
        None => op.initial_field(&spec.boundary)?,
    };
    let mut delta = f64::INFINITY;
    let mut iterations = 0;
    while iterations < spec.max_iters {
        let (next, d) = op.sweep(&field)?;
        field = next;
        delta = d;
        iterations += 1;
        if delta <= spec.tol {
            break;
        }
    }
    let residual = op.residual(&field)?;
    Ok(SolveReport { converged: delta <= spec.tol, field, iterations, delta, residual })
}

/// Residual of the multiplied two-mode form
/// `-Σ_{jk} ∂_j u_i ∂_k u_i ∂_{jk} u_i + |Du_i|² (u_i - u_{3-i})`
/// with central differences of step `h_fd`.
pub fn pde_residual(pair: &dyn ModeFunction, x: &[f64], h_fd: f64) -> Result<(f64, f64)> {
    if pair.modes() != 2 {
        return Err(Error::NotTwoModes(pair.modes()));
    }
    let n = pair.dim();
    if x.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: x.len() });
    }
    if !(pair.margin(x) > h_fd * (n as f64).sqrt()) {
        return Err(Error::TooCloseToBoundary(x.to_vec()));
    }
    let shifted = |mode: usize, steps: &[(usize, f64)]| -> Result<f64> {
        let mut y = x.to_vec();
        for &(k, s) in steps {
            y[k] += s * h_fd;
        }
        pair.value(mode, &y)
    };
    let mut out = [0.0; 2];
    let centers = [pair.value(0, x)?, pair.value(1, x)?];
    for i in 0..2 {
        let u0 = centers[i];
        let mut grad = vec![0.0; n];
        let mut hess = vec![vec![0.0; n]; n];
        for j in 0..n {
            let (p, q) = (shifted(i, &[(j, 1.0)])?, shifted(i, &[(j, -1.0)])?);
            grad[j] = (p - q) / (2.0 * h_fd);
            hess[j][j] = (p - 2.0 * u0 + q) / (h_fd * h_fd);
            for k in 0..j {
                let pp = shifted(i, &[(j, 1.0), (k, 1.0)])?;
                let pm = shifted(i, &[(j, 1.0), (k, -1.0)])?;
                let mp = shifted(i, &[(j, -1.0), (k, 1.0)])?;
                let mm = shifted(i, &[(j, -1.0), (k, -1.0)])?;
                hess[j][k] = (pp - pm - mp + mm) / (4.0 * h_fd * h_fd);
                hess[k][j] = hess[j][k];
            }
        }
        let mut quad = 0.0;
        for j in 0..n {
            for k in 0..n {
                quad += grad[j] * grad[k] * hess[j][k];
            }
        }
        let g2: f64 = grad.iter().map(|g| g * g).sum();
        out[i] = -quad + g2 * (u0 - centers[1 - i]);
    }
    Ok((out[0], out[1]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::{ConePair, Example1, FnPair};
    use rand::{Rng, SeedableRng};

    fn line(x: &[f64]) -> f64 {
        (x[0] + 1.0) / 2.0
    }

    fn interval_problem(eps: f64) -> ProblemSpec {
        let g = BoundaryData::new(vec![Arc::new(line), Arc::new(line)]);
        ProblemSpec::new(
            DomainSpec::Interval { a: -1.0, b: 1.0 },
            GeneratorMatrix::symmetric_two_state(),
            g,
            eps,
        )
        .with_spacing(eps)
        .with_tol(1e-10)
    }

    #[test]
    fn validation_rejects_bad_knobs() {
        let spec = interval_problem(0.05);
        assert!(spec.clone().with_damping(0.0).validate().is_err());
        assert!(spec.clone().with_damping(1.5).validate().is_err());
        assert!(spec.clone().with_spacing(0.1).validate().is_err());
        let disk = ProblemSpec::new(
            DomainSpec::unit_disk(),
            GeneratorMatrix::symmetric_two_state(),
            BoundaryData::constants(&[0.0, 0.0]),
            0.05,
        );
        assert!(disk.validate().is_ok());
        assert!(disk.clone().with_spacing(0.04).validate().is_err());
        let three = disk.clone().with_boundary(BoundaryData::constants(&[0.0, 0.0, 1.0]));
        assert!(three.validate().is_err());
    }

    #[test]
    fn affine_is_fixed_point_in_one_dimension() {
        let spec = interval_problem(0.05);
        let op = DppOperator::new(&spec).unwrap();
        let f = CoupledField::from_fn(op.lattice().clone(), spec.boundary.clone(), |_, x| line(x)).unwrap();
        let (_, delta) = op.sweep(&f).unwrap();
        assert!(delta < 1e-15, "{delta}");
    }

    #[test]
    fn three_node_average() {
        // interval (-2h, 2h) with h = 1: interior nodes -1, 0, 1
        let g = BoundaryData::constants(&[0.0, 0.0]);
        let spec = ProblemSpec::new(
            DomainSpec::Interval { a: -2.0, b: 2.0 },
            GeneratorMatrix::symmetric_two_state(),
            g,
            1.0,
        )
        .with_spacing(1.0);
        let op = DppOperator::new(&spec).unwrap();
        let vals = vec![0.0, 0.0, 1.0];
        let f = CoupledField::new(op.lattice().clone(), spec.boundary.clone(), vec![vals.clone(), vals]).unwrap();
        let (next, _) = op.sweep(&f).unwrap();
        assert!((next.at_node(0, 1) - 0.5).abs() < 1e-15);
        assert!((next.at_node(1, 1) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn solves_linear_data_on_interval() {
        let spec = interval_problem(0.05);
        let rep = solve(&spec, None).unwrap();
        assert!(rep.converged);
        let lat = rep.field.lattice().clone();
        for k in 0..lat.interior_len() {
            let x = lat.node(k);
            for i in 0..2 {
                assert!((rep.field.at_node(i, k) - line(&x)).abs() < 1e-6);
            }
        }
        let mid = lat.nearest_interior(&[0.0]).unwrap();
        assert!((rep.field.at_node(0, mid) - 0.5).abs() < 1e-6);
    }

    #[test]
    fn brute_force_fixed_point_on_five_nodes() {
        // interval (-1, 1), h = ε = 1/3: interior nodes -2/3..2/3 (5 nodes).
        // Oracle: Gauss-Seidel on the scalar averaging rule to machine precision.
        let eps = 1.0 / 3.0;
        let spec = interval_problem(eps).with_tol(1e-14);
        let rep = solve(&spec, None).unwrap();
        let lat = rep.field.lattice().clone();
        assert_eq!(lat.interior_len(), 5);
        let mut u = [0.0f64; 7];
        u[6] = 1.0;
        for _ in 0..10_000 {
            for k in 1..6 {
                u[k] = 0.5 * (u[k - 1].max(u[k + 1]) + u[k - 1].min(u[k + 1]));
            }
        }
        for k in 0..5 {
            assert!((rep.field.at_node(0, k) - u[k + 1]).abs() < 1e-10);
        }
    }

    #[test]
    fn constants_fixed_after_one_sweep() {
        let spec = ProblemSpec::new(
            DomainSpec::unit_disk(),
            GeneratorMatrix::symmetric_two_state(),
            BoundaryData::constants(&[0.25, 0.25]),
            0.1,
        )
        .with_spacing(0.05);
        let rep = solve(&spec, None).unwrap();
        assert!(rep.converged);
        assert_eq!(rep.iterations, 1);
        assert!(rep.field.all_values().iter().flatten().all(|&v| (v - 0.25).abs() < 1e-15));
        assert!(dpp_residual(&rep.field, &spec).unwrap() < 1e-15);
    }

    #[test]
    fn sweep_monotone_nonexpansive_and_shift_equivariant() {
        let g = BoundaryData::new(vec![
            Arc::new(|x: &[f64]| x[0] * x[1]),
            Arc::new(|x: &[f64]| (3.0 * x[0]).sin()),
        ]);
        let spec = ProblemSpec::new(
            DomainSpec::Polygon2d { vertices: vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 0.8]] },
            GeneratorMatrix::symmetric_two_state(),
            g,
            0.1,
        )
        .with_spacing(0.05)
        .with_directions(32);
        let op = DppOperator::new(&spec).unwrap();
        let lat = op.lattice().clone();
        let n = lat.interior_len();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let a: Vec<Vec<f64>> = (0..2).map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
            let b: Vec<Vec<f64>> = a
                .iter()
                .map(|v| v.iter().map(|x| x + rng.gen_range(0.0..0.5)).collect())
                .collect();
            let fa = CoupledField::new(lat.clone(), spec.boundary.clone(), a.clone()).unwrap();
            let fb = CoupledField::new(lat.clone(), spec.boundary.clone(), b.clone()).unwrap();
            let (sa, _) = op.sweep(&fa).unwrap();
            let (sb, _) = op.sweep(&fb).unwrap();
            let mut dist_in: f64 = 0.0;
            let mut dist_out: f64 = 0.0;
            for i in 0..2 {
                for k in 0..n {
                    assert!(sa.at_node(i, k) <= sb.at_node(i, k));
                    dist_in = dist_in.max((a[i][k] - b[i][k]).abs());
                    dist_out = dist_out.max((sa.at_node(i, k) - sb.at_node(i, k)).abs());
                }
            }
            assert!(dist_out <= dist_in + 1e-15);

            let c = rng.gen_range(-2.0..2.0);
            let shifted = spec.clone().with_boundary(spec.boundary.affine(1.0, c));
            let ops = DppOperator::on_lattice(&shifted, lat.clone()).unwrap();
            let fs = CoupledField::new(
                lat.clone(),
                shifted.boundary.clone(),
                a.iter().map(|v| v.iter().map(|x| x + c).collect()).collect(),
            )
            .unwrap();
            let (ss, _) = ops.sweep(&fs).unwrap();
            for i in 0..2 {
                for k in 0..n {
                    assert!((ss.at_node(i, k) - sa.at_node(i, k) - c).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn operator_matches_sphere_probe() {
        use crate::domain::sphere_probe;
        let g = BoundaryData::new(vec![
            Arc::new(|x: &[f64]| x[0]),
            Arc::new(|x: &[f64]| x[1] * x[1]),
        ]);
        let spec = ProblemSpec::new(DomainSpec::unit_disk(), GeneratorMatrix::symmetric_two_state(), g, 0.1)
            .with_spacing(0.05)
            .with_directions(16);
        let op = DppOperator::new(&spec).unwrap();
        let lat = op.lattice().clone();
        let f = CoupledField::from_fn(lat.clone(), spec.boundary.clone(), |i, x| {
            if i == 0 { (2.0 * x[0]).sin() } else { x[0] * x[1] }
        })
        .unwrap();
        let (next, _) = op.sweep(&f).unwrap();
        for k in (0..lat.interior_len()).step_by(7) {
            for i in 0..2 {
                let w = op.kernel().distribution(i);
                let p = sphere_probe(&f, &w, &lat.node(k), spec.eps, 16).unwrap();
                assert!((next.at_node(i, k) - 0.5 * (p.max + p.min)).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn pde_residual_examples() {
        let half_sq = FnPair { dim: 2, f: |_: usize, x: &[f64]| 0.5 * (x[0] * x[0] + x[1] * x[1]) };
        let (r1, r2) = pde_residual(&half_sq, &[1.0, 0.0], 1e-3).unwrap();
        assert!((r1 + 1.0).abs() < 1e-6 && (r2 + 1.0).abs() < 1e-6);

        let ex = Example1 { dim: 2 };
        let x = [0.3, 0.4];
        let (r1, r2) = pde_residual(&ex, &x, 1e-3).unwrap();
        assert!(r1.abs() < 1e-4 && r2.abs() < 1e-4, "{r1} {r2}");

        let cone = ConePair::new(vec![0.1, 0.2], 1.0, 0.0, 0.0, 0.0);
        let (r1, r2) = pde_residual(&cone, &[0.1 + 0.6, 0.2 + 0.8], 1e-4).unwrap();
        assert!(r1.abs() < 1e-3 && r2.abs() < 1e-3, "{r1} {r2}");

        assert!(matches!(pde_residual(&ex, &[0.9999, 0.0], 1e-3), Err(Error::TooCloseToBoundary(_))));
    }
}
