//! TOML run configuration. Modes are numbered from 1 in config files.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::domain::{BoundaryData, BoundaryFn, DomainSpec};
use crate::error::{Error, Result};
use crate::expr::parse_boundary_expr;
use crate::markov::{validate_generator, GeneratorMatrix};
use crate::solver::ProblemSpec;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub domain: DomainSpec,
    #[serde(default)]
    pub generator: GeneratorSection,
    pub boundary: BoundarySection,
    pub solver: SolverSection,
    #[serde(default)]
    pub simulate: SimulateSection,
    #[serde(default)]
    pub analyze: AnalyzeSection,
    #[serde(default)]
    pub cones: ConesSection,
    #[serde(default)]
    pub markov: MarkovSection,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSection {
    /// Generator rows; the symmetric two-mode coupling when absent.
    pub rows: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundarySection {
    /// One expression per mode.
    pub modes: Vec<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub eps: f64,
    pub h: Option<f64>,
    pub directions: Option<usize>,
    pub tol: Option<f64>,
    pub max_iters: Option<usize>,
    pub damping: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrategySpec {
    GreedyMax,
    GreedyMin,
    Pull { target: Vec<f64> },
}

impl StrategySpec {
    pub fn needs_field(&self) -> bool {
        !matches!(self, StrategySpec::Pull { .. })
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateSection {
    /// Starting point; the domain's centre of its bounding box when absent.
    pub start: Option<Vec<f64>>,
    pub mode: usize,
    pub episodes: usize,
    pub seed: u64,
    pub first: StrategySpec,
    pub second: StrategySpec,
    /// Number of batch episodes to replay into the trace CSV.
    pub traces: usize,
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self {
            start: None,
            mode: 1,
            episodes: 1000,
            seed: 0,
            first: StrategySpec::GreedyMax,
            second: StrategySpec::GreedyMin,
            traces: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AnalysisSource {
    /// The field produced by the solver section.
    Field,
    /// The closed-form two-mode solution on the unit ball.
    Example1,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalyzeSection {
    pub source: AnalysisSource,
    pub centers: Vec<Vec<f64>>,
    /// Outer radius for slopes, the coupled inequality and cone comparison.
    pub radius: f64,
    /// Inner radius for the coupled inequality; `radius/2` when absent.
    pub inner_radius: Option<f64>,
    /// Increasing radii for `a(x₀, r)` and the running sup.
    pub radii: Vec<f64>,
    /// Decreasing radii for blow-ups and symmetric slopes.
    pub ladder: Vec<f64>,
    pub samples: usize,
    pub h_fd: f64,
}

impl Default for AnalyzeSection {
    fn default() -> Self {
        Self {
            source: AnalysisSource::Field,
            centers: Vec::new(),
            radius: 0.4,
            inner_radius: None,
            radii: vec![0.1, 0.2, 0.3, 0.4],
            ladder: vec![0.4, 0.2, 0.1],
            samples: 256,
            h_fd: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConesSection {
    pub c1: f64,
    pub c2: f64,
    pub a: f64,
    pub b: f64,
    pub r_max: f64,
    pub count: usize,
}

impl Default for ConesSection {
    fn default() -> Self {
        let c = -1.0 / (2.0 * std::f64::consts::SQRT_2.cosh());
        Self { c1: c, c2: c, a: 0.0, b: 0.0, r_max: 1.0, count: 101 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MarkovSection {
    pub times: Vec<f64>,
}

impl Default for MarkovSection {
    fn default() -> Self {
        Self { times: vec![0.0, 0.01, 1.0] }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn generator(&self) -> Result<GeneratorMatrix> {
        match &self.generator.rows {
            Some(rows) => validate_generator(rows),
            None => Ok(GeneratorMatrix::symmetric_two_state()),
        }
    }

    pub fn boundary(&self) -> Result<BoundaryData> {
        let fns = self
            .boundary
            .modes
            .iter()
            .map(|src| parse_boundary_expr(src).map(|e| Arc::new(e) as Arc<dyn BoundaryFn>))
            .collect::<Result<Vec<_>>>()?;
        Ok(BoundaryData::new(fns))
    }

    /// Builds and validates the problem.
    pub fn problem(&self) -> Result<ProblemSpec> {
        self.domain.validate()?;
        let s = &self.solver;
        let mut spec = ProblemSpec::new(self.domain.clone(), self.generator()?, self.boundary()?, s.eps);
        if let Some(h) = s.h {
            spec = spec.with_spacing(h);
        }
        if let Some(d) = s.directions {
            spec = spec.with_directions(d);
        }
        if let Some(t) = s.tol {
            spec = spec.with_tol(t);
        }
        if let Some(n) = s.max_iters {
            spec = spec.with_max_iters(n);
        }
        if let Some(th) = s.damping {
            spec = spec.with_damping(th);
        }
        spec.validate()?;
        Ok(spec)
    }

    /// Simulation start point (bounding-box centre by default).
    pub fn start(&self) -> Vec<f64> {
        match &self.simulate.start {
            Some(x) => x.clone(),
            None => {
                let (lo, hi) = self.domain.bounds();
                (0..self.domain.dim()).map(|d| 0.5 * (lo[d] + hi[d])).collect()
            }
        }
    }

    /// Zero-based start mode.
    pub fn start_mode(&self, modes: usize) -> Result<usize> {
        let m = self.simulate.mode;
        if m == 0 || m > modes {
            return Err(Error::ModeOutOfRange { mode: m, modes });
        }
        Ok(m - 1)
    }
}
