//! The sampling loop: estimate the gradient, take one exact integrator step,
//! record diagnostics. Ensembles run independent chains in parallel.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::estimator::{q_metric, Estimator, EstimatorConfig};
use crate::integrator::{noise_coefficients, step, ChainState, DynamicsParams};
use crate::metrics::{bures_w2, GaussianSummary, MomentAccumulator};
use crate::potential::{full_gradient_into, Potential};

pub const DEFAULT_BURN_IN: u64 = 10_000;

/// Divergence threshold relative to `max(‖x₀‖, 1)`.
pub const DIVERGENCE_FACTOR: f64 = 1e6;

/// When to stop: after a number of iterations, or once the cumulative
/// gradient-query count (initialization included) reaches a budget.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Budget {
    Iterations(u64),
    Queries(u64),
}

/// Optional per-row diagnostics. All cost extra work; all are off by default.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// `‖∇̃_k − ∇f(x_k)‖²`, one full gradient per recorded row.
    pub gradient_error: bool,
    /// `Q_k`, two full passes per recorded row.
    pub q_metric: bool,
    /// Keep the position at every recorded row (needed for W2 tracking).
    pub positions: bool,
    /// Accumulate post-burn-in moments of `(x, v)` jointly.
    pub joint_moments: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub estimator: EstimatorConfig,
    pub dynamics: DynamicsParams,
    pub budget: Budget,
    /// Iterations excluded from time averages.
    pub burn_in: u64,
    /// Record every `stride`-th iteration.
    pub stride: u64,
    pub diagnostics: Diagnostics,
    pub seed: u64,
    pub chains: usize,
    /// Defaults to the origin.
    pub initial_position: Option<Vec<f64>>,
}

impl SamplerConfig {
    /// One chain, stride 1, default burn-in capped below an iteration budget.
    pub fn new(estimator: EstimatorConfig, dynamics: DynamicsParams, budget: Budget) -> Self {
        let burn_in = match budget {
            Budget::Iterations(k) => DEFAULT_BURN_IN.min(k / 2),
            Budget::Queries(_) => 0,
        };
        Self {
            estimator,
            dynamics,
            budget,
            burn_in,
            stride: 1,
            diagnostics: Diagnostics::default(),
            seed: 0,
            chains: 1,
            initial_position: None,
        }
    }

    pub fn validate(&self, n: usize, d: usize) -> Result<()> {
        self.estimator.validate(n)?;
        if self.stride == 0 {
            return Err(Error::InvalidParameter("stride must be at least 1".into()));
        }
        if self.chains == 0 {
            return Err(Error::InvalidParameter("at least one chain is required".into()));
        }
        match self.budget {
            Budget::Iterations(k) if k > 0 && self.burn_in >= k => {
                return Err(Error::InvalidParameter(format!(
                    "burn-in {} must be below the iteration budget {k}",
                    self.burn_in
                )))
            }
            Budget::Queries(0) => return Err(Error::InvalidParameter("query budget must be positive".into())),
            _ => {}
        }
        if let Some(x0) = &self.initial_position {
            check_dim(d, x0.len())?;
        }
        Ok(())
    }
}

/// Diagnostics at one recorded iteration. `grad_err_sq` and `q_k` describe
/// the step that produced this iterate; both are `None` on the initial row.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecordRow {
    pub iter: u64,
    pub queries: u64,
    pub potential: f64,
    pub grad_err_sq: Option<f64>,
    pub q_k: Option<f64>,
}

/// One chain's output. Equality ignores wall time.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunRecord {
    pub rows: Vec<RecordRow>,
    pub burn_in: u64,
    /// Position at each row, when requested.
    pub positions: Vec<Vec<f64>>,
    /// Post-burn-in moments of `x`, over every iteration.
    pub moments: MomentAccumulator,
    /// Post-burn-in moments of `(x, v)`, when requested.
    pub joint_moments: Option<MomentAccumulator>,
    pub final_state: Option<ChainState>,
    pub queries: u64,
    pub wall_seconds: f64,
}

impl PartialEq for RunRecord {
    fn eq(&self, other: &Self) -> bool {
        self.rows == other.rows
            && self.burn_in == other.burn_in
            && self.positions == other.positions
            && self.moments == other.moments
            && self.joint_moments == other.joint_moments
            && self.final_state == other.final_state
            && self.queries == other.queries
    }
}

impl RunRecord {
    /// A bare record carrying only rows, for externally produced series.
    pub fn from_rows(rows: Vec<RecordRow>, burn_in: u64) -> Self {
        let queries = rows.last().map_or(0, |r| r.queries);
        Self {
            rows,
            burn_in,
            positions: Vec::new(),
            moments: MomentAccumulator::new(0),
            joint_moments: None,
            final_state: None,
            queries,
            wall_seconds: 0.0,
        }
    }

    pub fn post_burn_in(&self) -> impl Iterator<Item = &RecordRow> {
        self.rows.iter().filter(move |r| r.iter > self.burn_in)
    }

    /// Time-averaged potential over post-burn-in rows.
    pub fn mean_potential(&self) -> Option<f64> {
        let (sum, count) = self
            .post_burn_in()
            .fold((0.0, 0usize), |(s, c), r| (s + r.potential, c + 1));
        (count > 0).then(|| sum / count as f64)
    }

    /// Running post-burn-in mean of the potential at each row.
    pub fn running_mean_potential(&self) -> Vec<Option<f64>> {
        let (mut sum, mut count) = (0.0, 0usize);
        self.rows
            .iter()
            .map(|r| {
                if r.iter > self.burn_in {
                    sum += r.potential;
                    count += 1;
                }
                (count > 0).then(|| sum / count as f64)
            })
            .collect()
    }

    pub fn position_summary(&self) -> Result<GaussianSummary> {
        self.moments.summary()
    }
}

/// Independent stream `chain` of the generator seeded by `seed`.
pub fn chain_rng(seed: u64, chain: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chain as u64);
    rng
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Runs one chain from `(x₀, 0)`.
pub fn run_chain<M: Potential + ?Sized, R: Rng + ?Sized>(
    config: &SamplerConfig,
    model: &M,
    rng: &mut R,
) -> Result<RunRecord> {
    let started = Instant::now();
    let (n, d) = (model.n_components(), model.dim());
    config.validate(n, d)?;
    let x0 = config.initial_position.clone().unwrap_or_else(|| vec![0.0; d]);
    let mut estimator = Estimator::new(config.estimator, model, &x0)?;
    let mut state = ChainState::at_rest(x0)?;
    let coeffs = noise_coefficients(&config.dynamics);
    let delta = config.dynamics.delta();
    let limit = DIVERGENCE_FACTOR * norm(&state.position).max(1.0);
    let diag = config.diagnostics;

    let mut rows = vec![RecordRow {
        iter: 0,
        queries: estimator.queries(),
        potential: model.value(&state.position),
        grad_err_sq: None,
        q_k: None,
    }];
    let mut positions = Vec::new();
    if diag.positions {
        positions.push(state.position.clone());
    }
    let mut moments = MomentAccumulator::new(d);
    let mut joint = diag.joint_moments.then(|| MomentAccumulator::new(2 * d));
    let mut joint_buf = vec![0.0; 2 * d];

    let mut gradient = vec![0.0; d];
    let mut exact = vec![0.0; d];
    let mut scratch = vec![0.0; d];
    let mut x_before = vec![0.0; d];

    let diverged = |k: u64, x: &[f64]| Error::Divergence {
        chain: None,
        step: k,
        norm: norm(x),
        delta,
    };

    let mut k = 0u64;
    loop {
        let done = match config.budget {
            Budget::Iterations(total) => k >= total,
            Budget::Queries(total) => estimator.queries() >= total,
        };
        if done {
            break;
        }
        let recording = (k + 1).is_multiple_of(config.stride);
        match estimator.estimate(model, &state.position, rng, &mut gradient) {
            Err(Error::NonFinite(_)) => return Err(diverged(k + 1, &state.position)),
            other => other?,
        }
        let grad_err_sq = (recording && diag.gradient_error).then(|| {
            full_gradient_into(model, &state.position, &mut scratch, &mut exact);
            gradient.iter().zip(&exact).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
        });
        if recording && diag.q_metric {
            x_before.copy_from_slice(&state.position);
        }
        step(&mut state, &gradient, &coeffs, rng)?;
        k += 1;

        let r = norm(&state.position);
        if r.is_nan() || r > limit || state.momentum.iter().any(|v| !v.is_finite()) {
            return Err(diverged(k, &state.position));
        }
        if k > config.burn_in {
            moments.push(&state.position)?;
            if let Some(j) = joint.as_mut() {
                joint_buf[..d].copy_from_slice(&state.position);
                joint_buf[d..].copy_from_slice(&state.momentum);
                j.push(&joint_buf)?;
            }
        }
        if recording {
            let q_k = if diag.q_metric {
                Some(q_metric(model, &x_before, &state.position)?)
            } else {
                None
            };
            rows.push(RecordRow {
                iter: k,
                queries: estimator.queries(),
                potential: model.value(&state.position),
                grad_err_sq,
                q_k,
            });
            if diag.positions {
                positions.push(state.position.clone());
            }
        }
    }

    Ok(RunRecord {
        rows,
        burn_in: config.burn_in,
        positions,
        moments,
        joint_moments: joint,
        final_state: Some(state),
        queries: estimator.queries(),
        wall_seconds: started.elapsed().as_secs_f64(),
    })
}

/// Cross-chain mean at one point of the query grid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub iter: u64,
    pub queries: u64,
    pub potential: f64,
    pub grad_err_sq: Option<f64>,
    pub q_k: Option<f64>,
    pub w2: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Ensemble {
    pub records: Vec<RunRecord>,
    pub aggregate: Vec<AggregateRow>,
}

impl Ensemble {
    /// Fills the `w2` column from pooled positions; requires
    /// `Diagnostics::positions` and at least `d + 1` chains.
    pub fn attach_w2(&mut self, target: &GaussianSummary) -> Result<()> {
        let series = wasserstein_tracker(&self.records, target)?;
        let mut it = series.iter().peekable();
        for row in &mut self.aggregate {
            while let Some(&&(iter, w)) = it.peek() {
                if iter < row.iter {
                    it.next();
                } else {
                    if iter == row.iter {
                        row.w2 = Some(w);
                    }
                    break;
                }
            }
        }
        Ok(())
    }

    pub fn pooled_moments(&self) -> Result<GaussianSummary> {
        pooled_moments(&self.records)
    }
}

/// Runs `config.chains` independent chains, chain `c` on stream `c` of
/// `config.seed`, and aggregates them.
pub fn run_ensemble<M: Potential + ?Sized>(config: &SamplerConfig, model: &M) -> Result<Ensemble> {
    config.validate(model.n_components(), model.dim())?;
    let records = (0..config.chains)
        .into_par_iter()
        .map(|c| run_chain(config, model, &mut chain_rng(config.seed, c)).map_err(|e| e.in_chain(c)))
        .collect::<Result<Vec<_>>>()?;
    let aggregate = aggregate(&records);
    Ok(Ensemble { records, aggregate })
}

/// For each row of the first chain, the index of the row every chain
/// contributes at that query count: its last row at or below the grid point,
/// or its first row if none is.
pub fn query_alignment(records: &[RunRecord]) -> Vec<Vec<usize>> {
    let Some(first) = records.first() else {
        return Vec::new();
    };
    let mut cursors = vec![0usize; records.len()];
    first
        .rows
        .iter()
        .map(|grid| {
            records
                .iter()
                .zip(cursors.iter_mut())
                .map(|(rec, cur)| {
                    while *cur + 1 < rec.rows.len() && rec.rows[*cur + 1].queries <= grid.queries {
                        *cur += 1;
                    }
                    *cur
                })
                .collect()
        })
        .collect()
}

/// Pointwise mean over chains on the first chain's query grid
/// (see [`query_alignment`]).
pub fn aggregate(records: &[RunRecord]) -> Vec<AggregateRow> {
    let Some(first) = records.first() else {
        return Vec::new();
    };
    let chains = records.len() as f64;
    first
        .rows
        .iter()
        .zip(query_alignment(records))
        .map(|(grid, picks)| {
            let mut potential = 0.0;
            let mut grad = Some(0.0);
            let mut q = Some(0.0);
            for (rec, &i) in records.iter().zip(&picks) {
                let row = &rec.rows[i];
                potential += row.potential;
                grad = grad.zip(row.grad_err_sq).map(|(a, b)| a + b);
                q = q.zip(row.q_k).map(|(a, b)| a + b);
            }
            AggregateRow {
                iter: grid.iter,
                queries: grid.queries,
                potential: potential / chains,
                grad_err_sq: grad.map(|g| g / chains),
                q_k: q.map(|v| v / chains),
                w2: None,
            }
        })
        .collect()
}

/// Gaussian-approximation W2 between the pooled cross-chain positions and
/// `target` at every recorded iteration shared by all chains.
///
/// Exact for linear chains on Gaussian targets, where the law of `x_k` is
/// Gaussian.
pub fn wasserstein_tracker(records: &[RunRecord], target: &GaussianSummary) -> Result<Vec<(u64, f64)>> {
    let d = target.dim();
    let first = records.first().ok_or(Error::Empty("records"))?;
    if records.len() < d + 1 {
        return Err(Error::TooFewSamples {
            needed: d + 1,
            have: records.len(),
        });
    }
    if records.iter().any(|r| r.positions.len() != r.rows.len()) {
        return Err(Error::Empty("recorded positions"));
    }
    let mut out = Vec::new();
    for (i, row) in first.rows.iter().enumerate() {
        if !records
            .iter()
            .all(|r| r.rows.get(i).is_some_and(|s| s.iter == row.iter))
        {
            continue;
        }
        let mut acc = MomentAccumulator::new(d);
        for r in records {
            acc.push(&r.positions[i])?;
        }
        out.push((row.iter, bures_w2(&acc.summary()?, target)?));
    }
    Ok(out)
}

/// Post-burn-in position moments pooled over chains and time.
pub fn pooled_moments(records: &[RunRecord]) -> Result<GaussianSummary> {
    let first = records.first().ok_or(Error::Empty("records"))?;
    let mut acc = MomentAccumulator::new(first.moments.dim());
    for r in records {
        acc.merge(&r.moments)?;
    }
    acc.summary()
}
