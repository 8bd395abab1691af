//! Mode-switching chain.
//!
//! The mode `ν(s)` is a continuous-time Markov chain whose off-diagonal jump
//! rates are `c_ij / 2`. Row distributions evolve by the forward equation
//! `dρ/ds = ρ (c/2)` with `ρ(0) = e_i`, so `ρ^i(s)` is the `i`-th row of
//! `exp(s c / 2)`. Modes are 0-based throughout the crate.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance on generator row sums.
pub const ROW_SUM_TOL: f64 = 1e-12;

/// Largest mode count accepted by the dense exponential.
pub const MAX_MODES: usize = 64;

/// Validated switching matrix: strictly positive off-diagonal rates and
/// zero row sums.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct GeneratorMatrix {
    m: usize,
    c: Vec<f64>,
}

impl GeneratorMatrix {
    /// The normalized two-mode coupling `c_12 = c_21 = 1`, `c_11 = c_22 = -1`.
    pub fn symmetric_two_state() -> Self {
        Self { m: 2, c: vec![-1.0, 1.0, 1.0, -1.0] }
    }

    /// Uniform coupling on `m` modes: every off-diagonal rate is `rate`.
    pub fn uniform(m: usize, rate: f64) -> Result<Self> {
        let rows = (0..m)
            .map(|i| {
                (0..m)
                    .map(|j| if i == j { -(m as f64 - 1.0) * rate } else { rate })
                    .collect()
            })
            .collect::<Vec<Vec<f64>>>();
        validate_generator(&rows)
    }

    pub fn modes(&self) -> usize {
        self.m
    }

    pub fn rate(&self, i: usize, j: usize) -> f64 {
        self.c[i * self.m + j]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.c.chunks(self.m).map(|r| r.to_vec()).collect()
    }

    fn check_mode(&self, mode: usize) -> Result<()> {
        if mode >= self.m {
            return Err(Error::ModeOutOfRange { mode, modes: self.m });
        }
        Ok(())
    }

    /// Transition matrix `exp(s c / 2)`; row `i` is `ρ^i(s)`.
    pub fn kernel(&self, s: f64) -> Result<TransitionKernel> {
        if !s.is_finite() || s < 0.0 {
            return Err(Error::InvalidTime(s));
        }
        let a = DMatrix::from_row_slice(self.m, self.m, &self.c) * (0.5 * s);
        let p = expm(&a);
        let mut probs = Vec::with_capacity(self.m * self.m);
        for i in 0..self.m {
            for k in 0..self.m {
                probs.push(p[(i, k)].clamp(0.0, 1.0));
            }
        }
        Ok(TransitionKernel { m: self.m, time: s, probs })
    }
}

impl TryFrom<Vec<Vec<f64>>> for GeneratorMatrix {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        validate_generator(&rows)
    }
}

impl From<GeneratorMatrix> for Vec<Vec<f64>> {
    fn from(g: GeneratorMatrix) -> Self {
        g.rows()
    }
}

/// Checks shape, strict positivity off the diagonal and zero row sums.
pub fn validate_generator(raw: &[Vec<f64>]) -> Result<GeneratorMatrix> {
    let m = raw.len();
    if m < 2 {
        return Err(Error::TooFewModes(m));
    }
    if m > MAX_MODES {
        return Err(Error::InvalidProblem(format!("at most {MAX_MODES} modes supported, got {m}")));
    }
    for (row, r) in raw.iter().enumerate() {
        if r.len() != m {
            return Err(Error::NotSquare { row, len: r.len(), expected: m });
        }
    }
    for (i, r) in raw.iter().enumerate() {
        for (j, &value) in r.iter().enumerate() {
            if i != j && !(value > 0.0 && value.is_finite()) {
                return Err(Error::NonpositiveOffDiagonal { i, j, value });
            }
        }
    }
    for (row, r) in raw.iter().enumerate() {
        let sum: f64 = r.iter().sum();
        if !sum.is_finite() || sum.abs() > ROW_SUM_TOL {
            return Err(Error::RowSumViolation { row, sum });
        }
    }
    Ok(GeneratorMatrix { m, c: raw.iter().flatten().copied().collect() })
}

/// Distribution of the mode at chain time `time`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModeDistribution {
    pub probabilities: Vec<f64>,
    pub time: f64,
}

impl ModeDistribution {
    pub fn modes(&self) -> usize {
        self.probabilities.len()
    }

    /// Point mass on `mode`.
    pub fn point_mass(m: usize, mode: usize) -> Self {
        let mut probabilities = vec![0.0; m];
        probabilities[mode] = 1.0;
        Self { probabilities, time: 0.0 }
    }

    /// Inverse-CDF draw: the first `k` with `u < Σ_{l≤k} ρ_l`.
    pub fn sample(&self, u: f64) -> usize {
        let mut acc = 0.0;
        for (k, p) in self.probabilities.iter().enumerate() {
            acc += p;
            if u < acc {
                return k;
            }
        }
        // u beyond the accumulated mass (roundoff): last mode with positive weight
        self.probabilities.iter().rposition(|&p| p > 0.0).unwrap_or(self.modes() - 1)
    }
}

/// All rows of `exp(s c / 2)` for one fixed elapsed time.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionKernel {
    m: usize,
    time: f64,
    probs: Vec<f64>,
}

impl TransitionKernel {
    pub fn modes(&self) -> usize {
        self.m
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.probs[i * self.m..(i + 1) * self.m]
    }

    pub fn distribution(&self, i: usize) -> ModeDistribution {
        ModeDistribution { probabilities: self.row(i).to_vec(), time: self.time }
    }

    pub fn sample(&self, i: usize, u: f64) -> usize {
        let row = self.row(i);
        let mut acc = 0.0;
        for (k, p) in row.iter().enumerate() {
            acc += p;
            if u < acc {
                return k;
            }
        }
        row.iter().rposition(|&p| p > 0.0).unwrap_or(self.m - 1)
    }
}

/// `ρ^i(s)`: distribution of `ν(s)` given `ν(0) = i`.
pub fn mode_distribution(g: &GeneratorMatrix, i: usize, s: f64) -> Result<ModeDistribution> {
    g.check_mode(i)?;
    Ok(g.kernel(s)?.distribution(i))
}

/// Draws `ν(s)` given `ν(0) = i` from a uniform variate `u ∈ [0, 1)`.
pub fn switch_sample(g: &GeneratorMatrix, i: usize, s: f64, u: f64) -> Result<usize> {
    Ok(mode_distribution(g, i, s)?.sample(u))
}

const PADE_ORDER: usize = 6;
const SCALED_NORM: f64 = 0.5;

/// Scaling-and-squaring exponential with a diagonal Padé approximant.
fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let norm1 = (0..n)
        .map(|j| a.column(j).iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let squarings = if norm1 > SCALED_NORM {
        (norm1 / SCALED_NORM).log2().ceil() as i32
    } else {
        0
    };
    let scaled = a / 2f64.powi(squarings);

    let mut coef = 1.0;
    let mut num = DMatrix::<f64>::identity(n, n);
    let mut den = DMatrix::<f64>::identity(n, n);
    let mut power = DMatrix::<f64>::identity(n, n);
    for k in 1..=PADE_ORDER {
        coef *= (PADE_ORDER - k + 1) as f64 / (k * (2 * PADE_ORDER - k + 1)) as f64;
        power = &power * &scaled;
        num += &power * coef;
        if k % 2 == 0 {
            den += &power * coef;
        } else {
            den -= &power * coef;
        }
    }
    let mut result = den
        .lu()
        .solve(&num)
        .expect("Padé denominator is nonsingular for scaled norm ≤ 1/2");
    for _ in 0..squarings {
        result = &result * &result;
    }
    result
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Classical RK4 on dρ/ds = ρ (c/2) with step s/1024.
    fn rk4_oracle(g: &GeneratorMatrix, i: usize, s: f64) -> Vec<f64> {
        let m = g.modes();
        let rhs = |rho: &[f64]| -> Vec<f64> {
            (0..m).map(|k| (0..m).map(|j| rho[j] * g.rate(j, k) * 0.5).sum()).collect()
        };
        let steps = 1024;
        let dt = s / steps as f64;
        let mut rho = vec![0.0; m];
        rho[i] = 1.0;
        for _ in 0..steps {
            let k1 = rhs(&rho);
            let y2: Vec<f64> = (0..m).map(|k| rho[k] + 0.5 * dt * k1[k]).collect();
            let k2 = rhs(&y2);
            let y3: Vec<f64> = (0..m).map(|k| rho[k] + 0.5 * dt * k2[k]).collect();
            let k3 = rhs(&y3);
            let y4: Vec<f64> = (0..m).map(|k| rho[k] + dt * k3[k]).collect();
            let k4 = rhs(&y4);
            for k in 0..m {
                rho[k] += dt / 6.0 * (k1[k] + 2.0 * k2[k] + 2.0 * k3[k] + k4[k]);
            }
        }
        rho
    }

    #[test]
    fn validates_normalized_and_uniform() {
        assert!(validate_generator(&[vec![-1.0, 1.0], vec![1.0, -1.0]]).is_ok());
        let three = vec![vec![-2.0, 1.0, 1.0], vec![1.0, -2.0, 1.0], vec![1.0, 1.0, -2.0]];
        assert!(validate_generator(&three).is_ok());
    }

    #[test]
    fn rejects_bad_generators() {
        let e = validate_generator(&[vec![-1.0, 1.0], vec![0.5, -1.0]]).unwrap_err();
        assert!(matches!(e, Error::RowSumViolation { row: 1, .. }));
        let e = validate_generator(&[vec![0.0, 0.0], vec![0.0, 0.0]]).unwrap_err();
        assert!(matches!(e, Error::NonpositiveOffDiagonal { i: 0, j: 1, .. }));
        let e = validate_generator(&[vec![-1.0, 1.0], vec![1.0]]).unwrap_err();
        assert!(matches!(e, Error::NotSquare { row: 1, .. }));
        assert!(matches!(validate_generator(&[vec![0.0]]), Err(Error::TooFewModes(1))));
    }

    #[test]
    fn two_state_examples() {
        let g = GeneratorMatrix::symmetric_two_state();
        let d = mode_distribution(&g, 0, 0.0).unwrap();
        assert_eq!(d.probabilities, vec![1.0, 0.0]);
        let d = mode_distribution(&g, 0, 0.01).unwrap();
        assert!((d.probabilities[0] - 0.9950249).abs() < 1e-7);
        assert!((d.probabilities[1] - 0.0049751).abs() < 1e-7);
        let oracle = rk4_oracle(&g, 0, 0.01);
        assert!((d.probabilities[0] - oracle[0]).abs() < 1e-12);
    }

    #[test]
    fn three_state_example() {
        let g = GeneratorMatrix::uniform(3, 1.0).unwrap();
        let s = (2.0 / 3.0) * 2f64.ln();
        let d = mode_distribution(&g, 0, s).unwrap();
        let expect = [2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0];
        for (p, e) in d.probabilities.iter().zip(expect) {
            assert!((p - e).abs() < 1e-12, "{p} vs {e}");
        }
        let oracle = rk4_oracle(&g, 0, s);
        for (p, o) in d.probabilities.iter().zip(oracle) {
            assert!((p - o).abs() < 1e-10);
        }
    }

    #[test]
    fn long_time_limit_is_uniform() {
        // uniform limit needs doubly stochastic rates
        for g in [GeneratorMatrix::symmetric_two_state(), GeneratorMatrix::uniform(4, 0.7).unwrap()] {
            for i in 0..g.modes() {
                let d = mode_distribution(&g, i, 20.0).unwrap();
                for p in d.probabilities {
                    assert!((p - 1.0 / g.modes() as f64).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn rk4_agrees_on_asymmetric_generator() {
        let rows = vec![
            vec![-1.5, 0.5, 1.0],
            vec![0.25, -0.75, 0.5],
            vec![2.0, 1.0, -3.0],
        ];
        let g = validate_generator(&rows).unwrap();
        for &s in &[0.003, 0.4, 2.5, 9.0] {
            for i in 0..3 {
                let d = mode_distribution(&g, i, s).unwrap();
                let o = rk4_oracle(&g, i, s);
                for (p, q) in d.probabilities.iter().zip(o) {
                    assert!((p - q).abs() < 1e-10, "s={s} i={i}: {p} vs {q}");
                }
            }
        }
    }

    #[test]
    fn switch_examples() {
        let g = GeneratorMatrix::symmetric_two_state();
        assert_eq!(switch_sample(&g, 0, 0.0, 0.73).unwrap(), 0);
        assert_eq!(switch_sample(&g, 0, 0.01, 0.999).unwrap(), 1);
        assert_eq!(switch_sample(&g, 0, 0.01, 0.5).unwrap(), 0);
        assert!(matches!(switch_sample(&g, 2, 0.1, 0.5), Err(Error::ModeOutOfRange { .. })));
        assert!(matches!(mode_distribution(&g, 0, -1.0), Err(Error::InvalidTime(_))));
    }

    #[test]
    fn sample_frequencies_match() {
        use rand::{Rng, SeedableRng};
        let g = GeneratorMatrix::uniform(3, 1.0).unwrap();
        let kernel = g.kernel(0.3).unwrap();
        let rho = kernel.row(1).to_vec();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let n = 1_000_000;
        let mut counts = [0usize; 3];
        for _ in 0..n {
            counts[kernel.sample(1, rng.gen::<f64>())] += 1;
        }
        for k in 0..3 {
            let freq = counts[k] as f64 / n as f64;
            let se = (rho[k] * (1.0 - rho[k]) / n as f64).sqrt();
            assert!((freq - rho[k]).abs() < 4.0 * se, "mode {k}: {freq} vs {}", rho[k]);
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn generator() -> impl Strategy<Value = GeneratorMatrix> {
            (2usize..6).prop_flat_map(|m| {
                prop::collection::vec(0.05f64..3.0, m * m).prop_map(move |vals| {
                    let mut rows = vec![vec![0.0; m]; m];
                    for i in 0..m {
                        let mut sum = 0.0;
                        for j in 0..m {
                            if i != j {
                                rows[i][j] = vals[i * m + j];
                                sum += vals[i * m + j];
                            }
                        }
                        rows[i][i] = -sum;
                    }
                    validate_generator(&rows).expect("constructed generator is valid")
                })
            })
        }

        proptest! {
            #[test]
            fn distributions_are_probability_vectors(g in generator(), s in 0.0f64..15.0, seed in 0usize..64) {
                let i = seed % g.modes();
                let d = mode_distribution(&g, i, s).unwrap();
                let sum: f64 = d.probabilities.iter().sum();
                prop_assert!((sum - 1.0).abs() < 1e-12);
                prop_assert!(d.probabilities.iter().all(|&p| (0.0..=1.0).contains(&p)));
            }

            #[test]
            fn chapman_kolmogorov(g in generator(), s in 0.0f64..4.0, t in 0.0f64..4.0) {
                let ks = g.kernel(s).unwrap();
                let kt = g.kernel(t).unwrap();
                let kst = g.kernel(s + t).unwrap();
                let m = g.modes();
                for i in 0..m {
                    for k in 0..m {
                        let composed: f64 = (0..m).map(|j| ks.row(i)[j] * kt.row(j)[k]).sum();
                        prop_assert!((composed - kst.row(i)[k]).abs() < 1e-10);
                    }
                }
            }
        }
    }
}
