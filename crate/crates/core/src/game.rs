//! Monte Carlo ε-tug-of-war with Markov mode switching.
//!
//! Each move: a fair coin picks the player, the winner's strategy picks a
//! unit direction, the token moves by ε (stopping on the boundary), and the
//! mode is resampled from `ρ^{mode}(ε²)`. Reaching the boundary ends the game
//! with payoff `g_{mode}(x)` in the freshly sampled mode.
//!
//! Randomness comes from ChaCha8 with the episode index as stream id, so
//! episode `e` of a given seed is the same whether played alone or in a batch.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::domain::{hit_pt, probe_directions, probe_with, CoupledField, Pt};
use crate::error::{Error, Result};
use crate::markov::TransitionKernel;
use crate::solver::ProblemSpec;

/// Moves allowed before an episode is declared stalled.
pub const STEP_CAP: u64 = 10_000_000;

/// What a strategy sees when asked for a move.
pub struct MoveContext<'a> {
    pub point: &'a [f64],
    pub mode: usize,
    pub eps: f64,
    /// `ρ^{mode}(ε²)`.
    pub weights: &'a [f64],
}

/// Markovian strategy: current state to a unit direction.
pub trait Strategy: Sync {
    fn choose(&self, ctx: &MoveContext<'_>) -> Result<Vec<f64>>;
}

/// Moves toward the probe direction maximizing the combined field
/// `Σ_k ρ_k u_k`; ties go to the lowest direction index.
pub struct GreedyMax {
    field: Arc<CoupledField>,
    dirs: Vec<Pt>,
}

/// Moves toward the probe direction minimizing the combined field.
pub struct GreedyMin {
    field: Arc<CoupledField>,
    dirs: Vec<Pt>,
}

impl GreedyMax {
    pub fn new(field: Arc<CoupledField>, directions: usize) -> Self {
        let dirs = probe_directions(field.lattice().dim(), directions);
        Self { field, dirs }
    }
}

impl GreedyMin {
    pub fn new(field: Arc<CoupledField>, directions: usize) -> Self {
        let dirs = probe_directions(field.lattice().dim(), directions);
        Self { field, dirs }
    }
}

fn to_pt(x: &[f64]) -> Pt {
    [x[0], if x.len() > 1 { x[1] } else { 0.0 }]
}

impl Strategy for GreedyMax {
    fn choose(&self, ctx: &MoveContext<'_>) -> Result<Vec<f64>> {
        let p = probe_with(&self.field, ctx.weights, to_pt(ctx.point), ctx.eps, &self.dirs)?;
        Ok(self.dirs[p.argmax][..ctx.point.len()].to_vec())
    }
}

impl Strategy for GreedyMin {
    fn choose(&self, ctx: &MoveContext<'_>) -> Result<Vec<f64>> {
        let p = probe_with(&self.field, ctx.weights, to_pt(ctx.point), ctx.eps, &self.dirs)?;
        Ok(self.dirs[p.argmin][..ctx.point.len()].to_vec())
    }
}

/// Heads straight for `target`.
pub struct PullToPoint {
    pub target: Vec<f64>,
}

impl Strategy for PullToPoint {
    fn choose(&self, ctx: &MoveContext<'_>) -> Result<Vec<f64>> {
        let d: Vec<f64> = self.target.iter().zip(ctx.point).map(|(t, x)| t - x).collect();
        let norm = d.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            let mut e = vec![0.0; ctx.point.len()];
            e[0] = 1.0;
            return Ok(e);
        }
        Ok(d.into_iter().map(|v| v / norm).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Player {
    First,
    Second,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceStep {
    pub point: Vec<f64>,
    pub mode: usize,
    /// Winner of the toss that produced this position.
    pub coin: Player,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GameTrace {
    pub start: Vec<f64>,
    pub start_mode: usize,
    pub steps: Vec<TraceStep>,
    pub terminal: Vec<f64>,
    pub terminal_mode: usize,
    pub payoff: f64,
    pub step_count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValueEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub episodes: usize,
    pub eps: f64,
    pub mode: usize,
    pub start: Vec<f64>,
    pub seed: u64,
}

struct Outcome {
    payoff: f64,
    terminal: Pt,
    terminal_mode: usize,
    steps: u64,
}

fn episode(
    spec: &ProblemSpec,
    kernel: &TransitionKernel,
    first: &dyn Strategy,
    second: &dyn Strategy,
    start: &[f64],
    start_mode: usize,
    seed: u64,
    stream: u64,
    cap: u64,
    mut record: Option<&mut Vec<TraceStep>>,
) -> Result<Outcome> {
    let dim = spec.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let mut x = to_pt(start);
    let mut mode = start_mode;
    let mut steps = 0u64;
    loop {
        if steps >= cap {
            return Err(Error::StalledGame { steps, episode: None });
        }
        let coin = if rng.gen::<bool>() { Player::First } else { Player::Second };
        let ctx = MoveContext { point: &x[..dim], mode, eps: spec.eps, weights: kernel.row(mode) };
        let v = match coin {
            Player::First => first.choose(&ctx)?,
            Player::Second => second.choose(&ctx)?,
        };
        let (y, done) = hit_pt(&spec.domain, x, to_pt(&v), spec.eps)?;
        mode = kernel.sample(mode, rng.gen::<f64>());
        x = y;
        steps += 1;
        if let Some(rec) = record.as_deref_mut() {
            rec.push(TraceStep { point: x[..dim].to_vec(), mode, coin });
        }
        if done {
            let payoff = spec.boundary.eval(mode, &x[..dim])?;
            return Ok(Outcome { payoff, terminal: x, terminal_mode: mode, steps });
        }
    }
}

fn check_start(spec: &ProblemSpec, start: &[f64], mode: usize) -> Result<()> {
    spec.validate()?;
    if start.len() != spec.dim() {
        return Err(Error::DimensionMismatch { expected: spec.dim(), got: start.len() });
    }
    if spec.domain.signed_distance(start) <= 0.0 {
        return Err(Error::NotInterior(start.to_vec()));
    }
    if mode >= spec.modes() {
        return Err(Error::ModeOutOfRange { mode, modes: spec.modes() });
    }
    Ok(())
}

/// Plays one recorded episode (stream 0 of `seed`).
pub fn play_episode(
    spec: &ProblemSpec,
    first: &dyn Strategy,
    second: &dyn Strategy,
    start: &[f64],
    start_mode: usize,
    seed: u64,
) -> Result<GameTrace> {
    play_episode_capped(spec, first, second, start, start_mode, seed, STEP_CAP)
}

/// [`play_episode`] with an explicit step cap.
pub fn play_episode_capped(
    spec: &ProblemSpec,
    first: &dyn Strategy,
    second: &dyn Strategy,
    start: &[f64],
    start_mode: usize,
    seed: u64,
    cap: u64,
) -> Result<GameTrace> {
    record_episode(spec, first, second, start, start_mode, seed, 0, cap)
}

/// Recorded replay of episode `episode` of an [`estimate_value`] batch.
pub fn replay_episode(
    spec: &ProblemSpec,
    first: &dyn Strategy,
    second: &dyn Strategy,
    start: &[f64],
    start_mode: usize,
    seed: u64,
    episode: usize,
) -> Result<GameTrace> {
    record_episode(spec, first, second, start, start_mode, seed, episode as u64, STEP_CAP)
}

#[allow(clippy::too_many_arguments)]
fn record_episode(
    spec: &ProblemSpec,
    first: &dyn Strategy,
    second: &dyn Strategy,
    start: &[f64],
    start_mode: usize,
    seed: u64,
    stream: u64,
    cap: u64,
) -> Result<GameTrace> {
    check_start(spec, start, start_mode)?;
    let kernel = spec.generator.kernel(spec.eps * spec.eps)?;
    let mut steps = Vec::new();
    let out = episode(spec, &kernel, first, second, start, start_mode, seed, stream, cap, Some(&mut steps))?;
    let dim = spec.dim();
    Ok(GameTrace {
        start: start.to_vec(),
        start_mode,
        steps,
        terminal: out.terminal[..dim].to_vec(),
        terminal_mode: out.terminal_mode,
        payoff: out.payoff,
        step_count: out.steps,
    })
}

/// Mean payoff and standard error over `n` independent episodes.
pub fn estimate_value(
    spec: &ProblemSpec,
    first: &dyn Strategy,
    second: &dyn Strategy,
    start: &[f64],
    start_mode: usize,
    n: usize,
    seed: u64,
) -> Result<ValueEstimate> {
    estimate_value_capped(spec, first, second, start, start_mode, n, seed, STEP_CAP)
}

#[allow(clippy::too_many_arguments)]
pub fn estimate_value_capped(
    spec: &ProblemSpec,
    first: &dyn Strategy,
    second: &dyn Strategy,
    start: &[f64],
    start_mode: usize,
    n: usize,
    seed: u64,
    cap: u64,
) -> Result<ValueEstimate> {
    if n < 2 {
        return Err(Error::TooFewEpisodes(n));
    }
    check_start(spec, start, start_mode)?;
    let kernel = spec.generator.kernel(spec.eps * spec.eps)?;
    let payoffs: Vec<Result<f64>> = (0..n)
        .into_par_iter()
        .map(|e| {
            episode(spec, &kernel, first, second, start, start_mode, seed, e as u64, cap, None)
                .map(|o| o.payoff)
                .map_err(|err| match err {
                    Error::StalledGame { steps, .. } => Error::StalledGame { steps, episode: Some(e) },
                    other => other,
                })
        })
        .collect();
    let payoffs = payoffs.into_iter().collect::<Result<Vec<f64>>>()?;
    // shifted by the first payoff so that constant samples give exactly zero spread
    let shift = payoffs[0];
    let sum: f64 = payoffs.iter().map(|p| p - shift).sum();
    let sq: f64 = payoffs.iter().map(|p| (p - shift).powi(2)).sum();
    let mean = shift + sum / n as f64;
    let var = ((sq - sum * sum / n as f64) / (n - 1) as f64).max(0.0);
    Ok(ValueEstimate {
        mean,
        stderr: (var / n as f64).sqrt(),
        episodes: n,
        eps: spec.eps,
        mode: start_mode,
        start: start.to_vec(),
        seed,
    })
}
