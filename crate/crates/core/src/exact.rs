//! Closed-form solutions of the two-mode system `-Δ∞u_i + (u_i - u_j) = 0`.
//!
//! Radial solutions solve `-η_1'' + η_1 - η_2 = 0`, `-η_2'' + η_2 - η_1 = 0`,
//! giving the generalized cones
//! `ψ_{1,2}(x) = ±(C_1 e^{√2 r} + C_2 e^{-√2 r}) + a r + b`, `r = |x - x_0|`.

use std::f64::consts::SQRT_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A (possibly multi-mode) function of position, evaluable on its own domain.
///
/// `margin` is the signed distance from `x` to the edge of the set on which
/// the function is defined (`+∞` for entire functions).
pub trait ModeFunction: Sync {
    fn dim(&self) -> usize;
    fn modes(&self) -> usize;
    fn value(&self, mode: usize, x: &[f64]) -> Result<f64>;
    fn margin(&self, x: &[f64]) -> f64;
    /// Grid spacing for sampled data, `None` for closed forms.
    fn resolution(&self) -> Option<f64> {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConeCoefficients {
    pub c1: f64,
    pub c2: f64,
    pub a: f64,
    pub b: f64,
}

impl ConeCoefficients {
    /// `(η_1(r), η_2(r))`.
    pub fn profiles(&self, r: f64) -> (f64, f64) {
        let e = self.c1 * (SQRT_2 * r).exp() + self.c2 * (-SQRT_2 * r).exp();
        let lin = self.a * r + self.b;
        (e + lin, -e + lin)
    }
}

/// Rescales coefficients so that `max_{0≤r≤r_max} |η_i(r)| = 1` (sampled on
/// a fine grid); the coupled system is linear, so scaling preserves solutions.
pub fn unit_scale(coef: ConeCoefficients, r_max: f64) -> ConeCoefficients {
    let samples = 4096;
    let mut peak: f64 = 0.0;
    for k in 0..=samples {
        let (p, q) = coef.profiles(r_max * k as f64 / samples as f64);
        peak = peak.max(p.abs()).max(q.abs());
    }
    // grid maximum may undershoot the true one slightly
    let peak = peak * (1.0 + 1e-9);
    if peak == 0.0 {
        return coef;
    }
    ConeCoefficients { c1: coef.c1 / peak, c2: coef.c2 / peak, a: coef.a / peak, b: coef.b / peak }
}

/// Generalized cone pair with vertex `x_0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConePair {
    pub vertex: Vec<f64>,
    pub coef: ConeCoefficients,
}

impl ConePair {
    pub fn new(vertex: Vec<f64>, c1: f64, c2: f64, a: f64, b: f64) -> Self {
        Self { vertex, coef: ConeCoefficients { c1, c2, a, b } }
    }

    pub fn radius(&self, x: &[f64]) -> f64 {
        self.vertex.iter().zip(x).map(|(c, y)| (y - c).powi(2)).sum::<f64>().sqrt()
    }

    /// `ψ_1` is differentiable at the vertex iff `√2 (C_1 - C_2) + a = 0`.
    pub fn first_differentiable_at_vertex(&self) -> bool {
        SQRT_2 * (self.coef.c1 - self.coef.c2) + self.coef.a == 0.0
    }

    /// `ψ_2` is differentiable at the vertex iff `√2 (C_2 - C_1) + a = 0`.
    pub fn second_differentiable_at_vertex(&self) -> bool {
        SQRT_2 * (self.coef.c2 - self.coef.c1) + self.coef.a == 0.0
    }
}

impl ModeFunction for ConePair {
    fn dim(&self) -> usize {
        self.vertex.len()
    }
    fn modes(&self) -> usize {
        2
    }
    fn value(&self, mode: usize, x: &[f64]) -> Result<f64> {
        let (p1, p2) = cone_eval(self, x);
        match mode {
            0 => Ok(p1),
            1 => Ok(p2),
            _ => Err(Error::ModeOutOfRange { mode, modes: 2 }),
        }
    }
    fn margin(&self, _x: &[f64]) -> f64 {
        f64::INFINITY
    }
}

/// `(ψ_1(x), ψ_2(x))`.
pub fn cone_eval(p: &ConePair, x: &[f64]) -> (f64, f64) {
    p.coef.profiles(p.radius(x))
}

/// Cone coefficients matching `u_i(x_0) = u_i0` at the vertex and the sphere
/// maxima `M_i` at radius `r`.
pub fn fit_cone(u10: f64, u20: f64, m1: f64, m2: f64, r: f64) -> Result<ConeCoefficients> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::NonpositiveRadius(r));
    }
    let (ep, em) = ((SQRT_2 * r).exp(), (-SQRT_2 * r).exp());
    let denom = 2.0 * (ep - em);
    let d = u10 - u20;
    let dm = m1 - m2;
    Ok(ConeCoefficients {
        c1: (-d * em + dm) / denom,
        c2: (d * ep - dm) / denom,
        a: (m1 + m2 - (u10 + u20)) / (2.0 * r),
        b: 0.5 * (u10 + u20),
    })
}

/// `cosh(√2)`-normalized radial solution on the unit ball with data
/// `g_1 ≡ -1`, `g_2 ≡ 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Example1 {
    pub dim: usize,
}

impl Example1 {
    pub fn radial(r: f64) -> (f64, f64) {
        let v1 = -((SQRT_2 * r).exp() + (-SQRT_2 * r).exp()) / (SQRT_2.exp() + (-SQRT_2).exp());
        (v1, -v1)
    }

    /// Its exact cone representation: `C_1 = C_2 = -1/(e^{√2} + e^{-√2})`.
    pub fn cone(dim: usize) -> ConePair {
        let c = -1.0 / (SQRT_2.exp() + (-SQRT_2).exp());
        ConePair::new(vec![0.0; dim], c, c, 0.0, 0.0)
    }

    /// `|∇v_1|` at radius `r`.
    pub fn gradient_norm(r: f64) -> f64 {
        SQRT_2 * ((SQRT_2 * r).exp() - (-SQRT_2 * r).exp()) / (SQRT_2.exp() + (-SQRT_2).exp())
    }
}

impl ModeFunction for Example1 {
    fn dim(&self) -> usize {
        self.dim
    }
    fn modes(&self) -> usize {
        2
    }
    fn value(&self, mode: usize, x: &[f64]) -> Result<f64> {
        let (v1, v2) = example1(x, self.dim)?;
        match mode {
            0 => Ok(v1),
            1 => Ok(v2),
            _ => Err(Error::ModeOutOfRange { mode, modes: 2 }),
        }
    }
    fn margin(&self, x: &[f64]) -> f64 {
        1.0 - x.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// `(v_1(x), v_2(x))` for `|x| ≤ 1` in dimension `n`.
pub fn example1(x: &[f64], n: usize) -> Result<(f64, f64)> {
    if x.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: x.len() });
    }
    let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if r > 1.0 + 1e-12 {
        return Err(Error::OutOfBall(r));
    }
    Ok(Example1::radial(r))
}

/// Default finite-difference step for radial residuals.
pub fn default_fd_step(s: f64) -> f64 {
    1e-4 * s.max(1.0)
}

/// `res_i = -η_i''(s) + η_i(s) - η_j(s)` with a central second difference.
pub fn radial_residual(
    eta1: impl Fn(f64) -> f64,
    eta2: impl Fn(f64) -> f64,
    s: f64,
    delta: f64,
) -> Result<(f64, f64)> {
    if !(delta > 0.0 && delta < s) {
        return Err(Error::StepTooLarge { step: delta, radius: s });
    }
    let d2 = |f: &dyn Fn(f64) -> f64| (f(s + delta) - 2.0 * f(s) + f(s - delta)) / (delta * delta);
    let (e1, e2) = (eta1(s), eta2(s));
    Ok((-d2(&eta1) + e1 - e2, -d2(&eta2) + e2 - e1))
}

/// Barrier `w = e^{-α|x|²} - e^{-αR²}` on the annulus `R/2 < |x| < R` and its
/// infinity-Laplace residual `e^{-α|x|²}(2α - 4α²|x|²)`, negative once
/// `α > 2/R²`.
pub fn barrier(alpha: f64, radius: f64, x: &[f64]) -> Result<(f64, f64)> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::NonpositiveExponent(alpha));
    }
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::NonpositiveRadius(radius));
    }
    let n2: f64 = x.iter().map(|v| v * v).sum();
    let norm = n2.sqrt();
    if !(norm > radius / 2.0 && norm < radius) {
        return Err(Error::OutOfAnnulus { norm, inner: radius / 2.0, outer: radius });
    }
    let e = (-alpha * n2).exp();
    let w = e - (-alpha * radius * radius).exp();
    Ok((w, e * (2.0 * alpha - 4.0 * alpha * alpha * n2)))
}

/// Pair `u_1 = u_2 = p·x + c`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinePair {
    pub slope: Vec<f64>,
    pub offset: f64,
}

impl ModeFunction for AffinePair {
    fn dim(&self) -> usize {
        self.slope.len()
    }
    fn modes(&self) -> usize {
        2
    }
    fn value(&self, mode: usize, x: &[f64]) -> Result<f64> {
        if mode >= 2 {
            return Err(Error::ModeOutOfRange { mode, modes: 2 });
        }
        Ok(self.slope.iter().zip(x).map(|(p, y)| p * y).sum::<f64>() + self.offset)
    }
    fn margin(&self, _x: &[f64]) -> f64 {
        f64::INFINITY
    }
}

/// Adapter turning a closure `(mode, x) -> value` into an entire [`ModeFunction`].
pub struct FnPair<F> {
    pub dim: usize,
    pub f: F,
}

impl<F> ModeFunction for FnPair<F>
where
    F: Fn(usize, &[f64]) -> f64 + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }
    fn modes(&self) -> usize {
        2
    }
    fn value(&self, mode: usize, x: &[f64]) -> Result<f64> {
        if mode >= 2 {
            return Err(Error::ModeOutOfRange { mode, modes: 2 });
        }
        Ok((self.f)(mode, x))
    }
    fn margin(&self, _x: &[f64]) -> f64 {
        f64::INFINITY
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const EX1_CENTER: f64 = -0.459_098_131_085_425_5;

    #[test]
    fn cone_eval_examples() {
        let p = ConePair::new(vec![0.0, 0.0], 0.0, 0.0, 1.0, 0.0);
        let (a, b) = cone_eval(&p, &[0.7, 0.0]);
        assert!((a - 0.7).abs() < 1e-15 && (b - 0.7).abs() < 1e-15);

        let ex = Example1::cone(2);
        assert!((ex.coef.c1 + 0.229548).abs() < 2e-6);
        let (a, b) = cone_eval(&ex, &[0.0, 0.0]);
        assert!((a - EX1_CENTER).abs() < 1e-15 && (b + EX1_CENTER).abs() < 1e-15);
        let (a, b) = cone_eval(&ex, &[0.6, 0.8]);
        assert!((a + 1.0).abs() < 1e-15 && (b - 1.0).abs() < 1e-15);
    }

    #[test]
    fn fit_cone_examples() {
        let c = fit_cone(0.0, 0.0, 1.0, 1.0, 1.0).unwrap();
        assert_eq!((c.c1, c.c2, c.a, c.b), (0.0, 0.0, 1.0, 0.0));

        let c = fit_cone(EX1_CENTER, -EX1_CENTER, -1.0, 1.0, 1.0).unwrap();
        let expect = Example1::cone(2).coef;
        assert!((c.c1 - expect.c1).abs() < 1e-15 && (c.c2 - expect.c2).abs() < 1e-15);
        assert!(c.a.abs() < 1e-15 && c.b.abs() < 1e-15);

        let c = fit_cone(0.3, 0.3, 1.1, 1.1, 0.4).unwrap();
        assert!(c.c1.abs() < 1e-15 && c.c2.abs() < 1e-15);
        assert!((c.a - 2.0).abs() < 1e-14 && (c.b - 0.3).abs() < 1e-15);

        assert!(matches!(fit_cone(0.0, 0.0, 1.0, 1.0, 0.0), Err(Error::NonpositiveRadius(_))));
    }

    #[test]
    fn example1_values() {
        let (a, b) = example1(&[0.6, 0.8], 2).unwrap();
        assert!((a + 1.0).abs() < 1e-15 && (b - 1.0).abs() < 1e-15);
        let (a, _) = example1(&[0.0, 0.0], 2).unwrap();
        assert!((a + 0.459097).abs() < 2e-6);
        let (a, b) = example1(&[0.3, 0.4], 2).unwrap();
        assert!((a + 0.578734).abs() < 2e-6 && (b - 0.578734).abs() < 2e-6);
        assert!(matches!(example1(&[1.0, 1.0], 2), Err(Error::OutOfBall(_))));
        assert!(example1(&[0.0, 0.0, 0.5], 3).is_ok());
    }

    #[test]
    fn radial_residual_examples() {
        let (r1, r2) = radial_residual(|s| s, |s| s, 0.5, 1e-3).unwrap();
        assert!(r1.abs() < 1e-9 && r2.abs() < 1e-9);

        let (r1, r2) =
            radial_residual(|s| Example1::radial(s).0, |s| Example1::radial(s).1, 0.5, 1e-3).unwrap();
        assert!(r1.abs() < 1e-5 && r2.abs() < 1e-5);

        let (r1, r2) =
            radial_residual(|s| (SQRT_2 * s).exp(), |s| -(SQRT_2 * s).exp(), 1.0, 1e-3).unwrap();
        assert!(r1.abs() < 1e-4 && r2.abs() < 1e-4);

        assert!(matches!(radial_residual(|s| s, |s| s, 0.1, 0.1), Err(Error::StepTooLarge { .. })));
    }

    #[test]
    fn barrier_examples() {
        let x = [0.5f64.sqrt(), 0.0];
        let (_, res) = barrier(3.0, 1.0, &x).unwrap();
        assert!((res + 2.677562).abs() < 1e-6);
        // exact value by direct evaluation
        assert!((res - (-1.5f64).exp() * -12.0).abs() < 1e-12);

        let (_, res) = barrier(0.1, 1.0, &[0.26f64.sqrt()]).unwrap();
        assert!((res - 0.184733).abs() < 1e-6 && res > 0.0);

        // sign at α = 2/R²: 1 - 2αR² = -3 < 0
        let r = 1.7;
        let alpha = 2.0 / (r * r);
        assert!(2.0 * alpha - 4.0 * alpha * alpha * r * r < 0.0);
        let (_, res) = barrier(alpha, r, &[0.0, r * 0.999]).unwrap();
        assert!(res < 0.0);

        assert!(matches!(barrier(3.0, 1.0, &[0.2]), Err(Error::OutOfAnnulus { .. })));
    }

    #[test]
    fn vertex_differentiability_flags() {
        assert!(Example1::cone(2).first_differentiable_at_vertex());
        assert!(Example1::cone(2).second_differentiable_at_vertex());
        let p = ConePair::new(vec![0.0], 0.5, 0.0, -0.5 * SQRT_2, 0.0);
        assert!(p.first_differentiable_at_vertex());
        assert!(!p.second_differentiable_at_vertex());
    }

    fn one_sided_slopes(p: &ConePair, h: f64) -> (f64, f64) {
        let x0 = p.vertex[0];
        let f = |t: f64| cone_eval(p, &[x0 + t, p.vertex[1]]).0;
        // second-order one-sided differences
        let right = (-3.0 * f(0.0) + 4.0 * f(h) - f(2.0 * h)) / (2.0 * h);
        let left = (3.0 * f(0.0) - 4.0 * f(-h) + f(-2.0 * h)) / (2.0 * h);
        (right, left)
    }

    proptest! {
        #[test]
        fn unit_scale_bounds_profiles(c1 in -1.0f64..1.0, c2 in -1.0f64..1.0, a in -1.0f64..1.0, b in -1.0f64..1.0) {
            let coef = unit_scale(ConeCoefficients { c1, c2, a, b }, 3.0);
            for k in 0..=300 {
                let (p, q) = coef.profiles(k as f64 * 0.01);
                prop_assert!(p.abs() <= 1.0 + 1e-12 && q.abs() <= 1.0 + 1e-12);
            }
        }

        #[test]
        fn cone_profiles_solve_radial_system(
            c1 in -1.0f64..1.0, c2 in -1.0f64..1.0, a in -1.0f64..1.0, b in -1.0f64..1.0,
            s in 0.1f64..3.0,
        ) {
            let coef = unit_scale(ConeCoefficients { c1, c2, a, b }, 3.0);
            let (r1, r2) = radial_residual(|t| coef.profiles(t).0, |t| coef.profiles(t).1, s, 1e-4).unwrap();
            prop_assert!(r1.abs() <= 1e-6 && r2.abs() <= 1e-6, "{} {}", r1, r2);
        }

        #[test]
        fn fit_cone_round_trip(
            c1 in -1.0f64..1.0, c2 in -1.0f64..1.0, a in -1.0f64..1.0, b in -1.0f64..1.0,
            r in 0.2f64..2.0, th in 0.0f64..6.28,
        ) {
            let p = ConePair::new(vec![0.1, -0.2], c1, c2, a, b);
            let (u10, u20) = cone_eval(&p, &p.vertex.clone());
            let y = [0.1 + r * th.cos(), -0.2 + r * th.sin()];
            let (m1, m2) = cone_eval(&p, &y);
            let f = fit_cone(u10, u20, m1, m2, r).unwrap();
            prop_assert!((f.c1 - c1).abs() < 1e-9 && (f.c2 - c2).abs() < 1e-9);
            prop_assert!((f.a - a).abs() < 1e-9 && (f.b - b).abs() < 1e-9);
        }

        #[test]
        fn kink_at_vertex(c1 in -1.0f64..1.0, c2 in -1.0f64..1.0, a in -1.0f64..1.0) {
            let p = ConePair::new(vec![0.2, 0.3], c1, c2, a, 0.0);
            let (right, left) = one_sided_slopes(&p, 1e-4);
            let jump = 2.0 * (SQRT_2 * (c1 - c2) + a);
            prop_assert!((right - left - jump).abs() < 1e-3, "{} vs {}", right - left, jump);
        }
    }

    #[test]
    fn smooth_vertex_has_matching_slopes() {
        for c in [-0.3, 0.0, 0.7] {
            let p = ConePair::new(vec![0.0, 0.0], c, c, 0.0, 0.1);
            let (right, left) = one_sided_slopes(&p, 1e-4);
            assert!((right - left).abs() < 1e-6);
        }
    }
}
