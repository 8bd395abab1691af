//! Slope statistics and the monotonicity, comparison, Lipschitz and blow-up
//! diagnostics for two-mode solutions.
//!
//! All checks take a [`ModeFunction`], so closed forms and solved lattice
//! fields go through the same code. Sphere extrema use `K` equally spaced
//! directions at angles `2π(k+½)/K` — the solver's probe layout — and, for
//! closed forms only, a golden-section refinement around the best samples.

use std::f64::consts::{PI, SQRT_2};

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exact::{fit_cone, ModeFunction};

/// Sphere sample count used when the caller does not choose one.
pub const DEFAULT_SAMPLES: usize = 256;
pub const MIN_SAMPLES: usize = 16;

const GOLDEN_ITERS: usize = 80;
const CLOSED_FORM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModeSlopes {
    /// `u_i(x₀)`.
    pub center_value: f64,
    /// `M_i`, `m_i`: sphere max and min.
    pub max: f64,
    pub min: f64,
    pub s_plus: f64,
    pub s_minus: f64,
    pub sc_plus: f64,
    pub sc_minus: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlopeReport {
    pub center: Vec<f64>,
    pub radius: f64,
    pub samples: usize,
    pub modes: [ModeSlopes; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LemmaSlack {
    pub plus: [f64; 2],
    pub minus: [f64; 2],
}

impl LemmaSlack {
    pub fn min(&self) -> f64 {
        self.plus.iter().chain(&self.minus).copied().fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AMonotone {
    pub radii: Vec<f64>,
    pub a: Vec<f64>,
    pub tolerance: f64,
    pub monotone: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LipschitzCheck {
    pub gradient_norm: f64,
    pub bound: f64,
    pub slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlowupRung {
    pub radius: f64,
    /// Max deviation of `v_i^r` from its least-squares affine fit on the unit ball.
    pub residual: [f64; 2],
    pub slope: [Vec<f64>; 2],
    pub slope_norm: [f64; 2],
    pub s_plus: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlowupReport {
    pub center: Vec<f64>,
    pub rungs: Vec<BlowupRung>,
    pub extrapolated_s_plus: [f64; 2],
    pub residuals_decreasing: [bool; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SymmetricSlopeReport {
    pub center: Vec<f64>,
    pub radii: Vec<f64>,
    pub s_plus: [Vec<f64>; 2],
    pub s_minus: [Vec<f64>; 2],
    pub limit_plus: [f64; 2],
    pub limit_minus: [f64; 2],
    /// `|S_i⁺ + S_i⁻|` of the extrapolated limits.
    pub defect: [f64; 2],
}

/// `ξ(r) = (e^{√2r} − e^{−√2r})/r`.
pub fn xi(r: f64) -> f64 {
    2.0 * (SQRT_2 * r).sinh() / r
}

/// Coupling correction `(1 − e^{−√2 r})/r`.
fn coupling(r: f64) -> f64 {
    -(-SQRT_2 * r).exp_m1() / r
}

fn check_pair(f: &dyn ModeFunction, x0: &[f64]) -> Result<()> {
    if f.modes() != 2 {
        return Err(Error::NotTwoModes(f.modes()));
    }
    if x0.len() != f.dim() {
        return Err(Error::DimensionMismatch { expected: f.dim(), got: x0.len() });
    }
    if !(1..=2).contains(&f.dim()) {
        return Err(Error::DimensionMismatch { expected: 2, got: f.dim() });
    }
    Ok(())
}

fn check_ball(f: &dyn ModeFunction, x0: &[f64], r: f64) -> Result<()> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::NonpositiveRadius(r));
    }
    if f.margin(x0) < r - 1e-12 {
        return Err(Error::BallNotContained { center: x0.to_vec(), radius: r });
    }
    Ok(())
}

fn check_samples(k: usize) -> Result<()> {
    if k < MIN_SAMPLES {
        return Err(Error::TooFewSamples { min: MIN_SAMPLES, got: k });
    }
    Ok(())
}

fn on_circle(x0: &[f64], r: f64, t: f64) -> [f64; 2] {
    [x0[0] + r * t.cos(), x0[1] + r * t.sin()]
}

/// Golden-section search for the maximum of `g` on `[lo, hi]`.
fn golden_max(g: &dyn Fn(f64) -> Result<f64>, mut lo: f64, mut hi: f64) -> Result<f64> {
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - phi * (hi - lo);
    let mut b = lo + phi * (hi - lo);
    let (mut fa, mut fb) = (g(a)?, g(b)?);
    for _ in 0..GOLDEN_ITERS {
        if fa >= fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - phi * (hi - lo);
            fa = g(a)?;
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + phi * (hi - lo);
            fb = g(b)?;
        }
    }
    Ok(fa.max(fb))
}

/// Max and min of `u_mode` over the sphere `|y − x₀| = r`.
pub fn sphere_extrema(f: &dyn ModeFunction, mode: usize, x0: &[f64], r: f64, k: usize) -> Result<(f64, f64)> {
    if f.dim() == 1 {
        let a = f.value(mode, &[x0[0] + r])?;
        let b = f.value(mode, &[x0[0] - r])?;
        return Ok((a.max(b), a.min(b)));
    }
    let step = 2.0 * PI / k as f64;
    let mut vals = Vec::with_capacity(k);
    for j in 0..k {
        vals.push(f.value(mode, &on_circle(x0, r, step * (j as f64 + 0.5)))?);
    }
    let (mut imax, mut imin) = (0, 0);
    for (j, v) in vals.iter().enumerate() {
        if *v > vals[imax] {
            imax = j;
        }
        if *v < vals[imin] {
            imin = j;
        }
    }
    let (mut hi, mut lo) = (vals[imax], vals[imin]);
    if f.resolution().is_none() {
        let t_max = step * (imax as f64 + 0.5);
        let t_min = step * (imin as f64 + 0.5);
        let up = |t: f64| f.value(mode, &on_circle(x0, r, t));
        let down = |t: f64| f.value(mode, &on_circle(x0, r, t)).map(|v| -v);
        hi = hi.max(golden_max(&up, t_max - step, t_max + step)?);
        lo = lo.min(-golden_max(&down, t_min - step, t_min + step)?);
    }
    Ok((hi, lo))
}

/// `S_i^±` and the coupling-corrected `SC_i^±` on the sphere of radius `r`.
pub fn slope_stats(f: &dyn ModeFunction, x0: &[f64], r: f64, k: usize) -> Result<SlopeReport> {
    check_pair(f, x0)?;
    check_samples(k)?;
    check_ball(f, x0, r)?;
    let u = [f.value(0, x0)?, f.value(1, x0)?];
    let corr = coupling(r);
    let mode = |i: usize| -> Result<ModeSlopes> {
        let (max, min) = sphere_extrema(f, i, x0, r, k)?;
        let s_plus = (max - u[i]) / r;
        let s_minus = (min - u[i]) / r;
        let c = (u[i] - u[1 - i]) / 2.0 * corr;
        Ok(ModeSlopes { center_value: u[i], max, min, s_plus, s_minus, sc_plus: s_plus + c, sc_minus: s_minus + c })
    };
    Ok(SlopeReport { center: x0.to_vec(), radius: r, samples: k, modes: [mode(0)?, mode(1)?] })
}

/// Slacks of the coupled monotonicity inequalities between radii `s ≤ r`.
/// Nonnegative slack means the inequality holds.
#[allow(non_snake_case)]
pub fn check_lemma_Ll(f: &dyn ModeFunction, x0: &[f64], s: f64, r: f64, k: usize) -> Result<LemmaSlack> {
    if !(s > 0.0) || s > r {
        return Err(Error::RadiusOrder(format!("need 0 < s ≤ r, got s = {s}, r = {r}")));
    }
    let outer = slope_stats(f, x0, r, k)?;
    let inner = slope_stats(f, x0, s, k)?;
    let q = xi(s) / xi(r);
    let (wi, wj) = (0.5 * (1.0 + q), 0.5 * (1.0 - q));
    let mut out = LemmaSlack { plus: [0.0; 2], minus: [0.0; 2] };
    for i in 0..2 {
        let j = 1 - i;
        let (o, oj, n) = (&outer.modes[i], &outer.modes[j], &inner.modes[i]);
        out.plus[i] = wi * o.sc_plus + wj * oj.sc_plus - n.sc_plus;
        out.minus[i] = n.sc_minus - (wi * o.sc_minus + wj * oj.sc_minus);
    }
    Ok(out)
}

fn default_tolerance(f: &dyn ModeFunction) -> f64 {
    f.resolution().map_or(CLOSED_FORM_TOL, |h| 5.0 * h)
}

/// `a(x₀,r) = (M₁ + M₂ − u₁(x₀) − u₂(x₀))/(2r)` along increasing radii.
pub fn check_a_monotone(f: &dyn ModeFunction, x0: &[f64], radii: &[f64], k: usize) -> Result<AMonotone> {
    if radii.is_empty() || radii.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::RadiusOrder("radii must be nonempty and strictly increasing".into()));
    }
    let mut a = Vec::with_capacity(radii.len());
    for &r in radii {
        let rep = slope_stats(f, x0, r, k)?;
        let [m1, m2] = &rep.modes;
        a.push((m1.max + m2.max - m1.center_value - m2.center_value) / (2.0 * r));
    }
    let tolerance = default_tolerance(f);
    let monotone = a.windows(2).all(|w| w[1] >= w[0] - tolerance);
    Ok(AMonotone { radii: radii.to_vec(), a, tolerance, monotone })
}

fn ball_samples(dim: usize, k: usize) -> Vec<Vec<f64>> {
    if dim == 1 {
        return (0..=k).map(|j| vec![-1.0 + 2.0 * j as f64 / k as f64]).collect();
    }
    let rings = 16;
    let mut pts = vec![vec![0.0, 0.0]];
    let step = 2.0 * PI / k as f64;
    for ring in 1..=rings {
        let rho = ring as f64 / rings as f64;
        for j in 0..k {
            let t = step * (j as f64 + 0.5);
            pts.push(vec![rho * t.cos(), rho * t.sin()]);
        }
    }
    pts
}

/// Largest excess `u_i − ψ_i` over a grid of the closed ball, where `ψ` is
/// the cone pair fitted to the centre values and sphere maxima.
pub fn cone_comparison_check(f: &dyn ModeFunction, x0: &[f64], r: f64, k: usize) -> Result<f64> {
    let rep = slope_stats(f, x0, r, k)?;
    let [m1, m2] = &rep.modes;
    let coef = fit_cone(m1.center_value, m2.center_value, m1.max, m2.max, r)?;
    let mut worst = f64::NEG_INFINITY;
    for z in ball_samples(f.dim(), k) {
        let rho = r * z.iter().map(|v| v * v).sum::<f64>().sqrt();
        let y: Vec<f64> = x0.iter().zip(&z).map(|(c, d)| c + r * d).collect();
        let (p1, p2) = coef.profiles(rho);
        worst = worst.max(f.value(0, &y)? - p1).max(f.value(1, &y)? - p2);
    }
    Ok(worst)
}

/// Compares a central-difference `|Du₁(x₀)|` with
/// `max_i max(|S_i⁺|, |S_i⁻|) + √2 |u₁(x₀) − u₂(x₀)|`.
pub fn lipschitz_bound_check(f: &dyn ModeFunction, x0: &[f64], r: f64, h_fd: f64) -> Result<LipschitzCheck> {
    check_pair(f, x0)?;
    if !(h_fd > 0.0) {
        return Err(Error::NonpositiveRadius(h_fd));
    }
    if f.margin(x0) <= h_fd {
        return Err(Error::TooCloseToBoundary(x0.to_vec()));
    }
    let rep = slope_stats(f, x0, r, DEFAULT_SAMPLES)?;
    let mut g2 = 0.0;
    for d in 0..f.dim() {
        let mut p = x0.to_vec();
        let mut m = x0.to_vec();
        p[d] += h_fd;
        m[d] -= h_fd;
        let g = (f.value(0, &p)? - f.value(0, &m)?) / (2.0 * h_fd);
        g2 += g * g;
    }
    let gradient_norm = g2.sqrt();
    let s = rep.modes.iter().map(|m| m.s_plus.abs().max(m.s_minus.abs())).fold(0.0, f64::max);
    let bound = s + SQRT_2 * (rep.modes[0].center_value - rep.modes[1].center_value).abs();
    Ok(LipschitzCheck { gradient_norm, bound, slack: bound - gradient_norm })
}

/// Two-point Richardson extrapolation to `r → 0` from `(ra, sa)`, `(rb, sb)`.
pub fn richardson(ra: f64, sa: f64, rb: f64, sb: f64) -> f64 {
    (ra * sb - rb * sa) / (ra - rb)
}

fn check_ladder(f: &dyn ModeFunction, radii: &[f64]) -> Result<()> {
    if radii.len() < 2 || radii.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::RadiusOrder("need at least two strictly decreasing radii".into()));
    }
    if let Some(h) = f.resolution() {
        let last = radii[radii.len() - 1];
        if last < 4.0 * h {
            return Err(Error::RadiusOrder(format!("radius {last} below four lattice spacings ({})", 4.0 * h)));
        }
    }
    Ok(())
}

/// Least-squares affine fits of `v_i^r(z) = (u_i(x₀ + r z) − u_i(x₀))/r`
/// on the unit ball, along a decreasing ladder of radii.
pub fn blowup_deviation(f: &dyn ModeFunction, x0: &[f64], radii: &[f64], k: usize) -> Result<BlowupReport> {
    check_pair(f, x0)?;
    check_samples(k)?;
    check_ladder(f, radii)?;
    let dim = f.dim();
    let zs = ball_samples(dim, (k / 4).max(8));
    let design = DMatrix::from_fn(zs.len(), dim + 1, |row, col| if col == 0 { 1.0 } else { zs[row][col - 1] });
    let svd = design.clone().svd(true, true);
    let u0 = [f.value(0, x0)?, f.value(1, x0)?];
    let mut rungs = Vec::with_capacity(radii.len());
    for &r in radii {
        let rep = slope_stats(f, x0, r, k)?;
        let mut residual = [0.0; 2];
        let mut slope: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
        let mut slope_norm = [0.0; 2];
        for i in 0..2 {
            let mut v = DVector::zeros(zs.len());
            for (row, z) in zs.iter().enumerate() {
                let y: Vec<f64> = x0.iter().zip(z).map(|(c, d)| c + r * d).collect();
                v[row] = (f.value(i, &y)? - u0[i]) / r;
            }
            let coef = svd.solve(&v, 1e-14).map_err(|e| Error::Eval(e.to_string()))?;
            let fit = &design * &coef;
            residual[i] = (v - fit).amax();
            slope[i] = coef.iter().skip(1).copied().collect();
            slope_norm[i] = slope[i].iter().map(|p| p * p).sum::<f64>().sqrt();
        }
        rungs.push(BlowupRung {
            radius: r,
            residual,
            slope,
            slope_norm,
            s_plus: [rep.modes[0].s_plus, rep.modes[1].s_plus],
        });
    }
    let n = rungs.len();
    let (a, b) = (&rungs[n - 2], &rungs[n - 1]);
    let extrapolated_s_plus =
        [0, 1].map(|i| richardson(a.radius, a.s_plus[i], b.radius, b.s_plus[i]));
    let residuals_decreasing =
        [0, 1].map(|i| rungs.windows(2).all(|w| w[1].residual[i] <= w[0].residual[i]));
    Ok(BlowupReport { center: x0.to_vec(), rungs, extrapolated_s_plus, residuals_decreasing })
}

/// Extrapolates the `S_i^±` ladders to `r → 0` and reports `|S_i⁺ + S_i⁻|`.
pub fn symmetric_slope_check(f: &dyn ModeFunction, x0: &[f64], radii: &[f64], k: usize) -> Result<SymmetricSlopeReport> {
    check_pair(f, x0)?;
    check_ladder(f, radii)?;
    let mut s_plus: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
    let mut s_minus: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
    for &r in radii {
        let rep = slope_stats(f, x0, r, k)?;
        for i in 0..2 {
            s_plus[i].push(rep.modes[i].s_plus);
            s_minus[i].push(rep.modes[i].s_minus);
        }
    }
    let n = radii.len();
    let (ra, rb) = (radii[n - 2], radii[n - 1]);
    let limit_plus = [0, 1].map(|i| richardson(ra, s_plus[i][n - 2], rb, s_plus[i][n - 1]));
    let limit_minus = [0, 1].map(|i| richardson(ra, s_minus[i][n - 2], rb, s_minus[i][n - 1]));
    let defect = [0, 1].map(|i| (limit_plus[i] + limit_minus[i]).abs());
    Ok(SymmetricSlopeReport { center: x0.to_vec(), radii: radii.to_vec(), s_plus, s_minus, limit_plus, limit_minus, defect })
}

/// `L_i(y, R_j) = max_{s ∈ ladder, s ≤ R_j} S_i⁺(y, s)` for increasing radii.
pub fn running_sup(f: &dyn ModeFunction, y: &[f64], radii: &[f64], k: usize) -> Result<[Vec<f64>; 2]> {
    if radii.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::RadiusOrder("radii must be strictly increasing".into()));
    }
    let mut out: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
    let mut best = [f64::NEG_INFINITY; 2];
    for &r in radii {
        let rep = slope_stats(f, y, r, k)?;
        for i in 0..2 {
            best[i] = best[i].max(rep.modes[i].s_plus);
            out[i].push(best[i]);
        }
    }
    Ok(out)
}
