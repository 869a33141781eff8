//! Stochastic gradient estimators and their MSEB constants.
//!
//! Every estimator owns its memory (snapshots, gradient tables, recursion
//! state) and counts component-gradient queries. A step is split into a
//! random [`Draw`] (refresh coin and minibatch) and a deterministic
//! [`Estimator::apply`], so the conditional law of the next estimate can be
//! enumerated exactly.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::potential::{full_gradient_into, Potential};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EstimatorKind {
    Full,
    Sg,
    Saga,
    Svrg,
    Sarah,
    Sarge,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 6] = [
        EstimatorKind::Full,
        EstimatorKind::Sg,
        EstimatorKind::Saga,
        EstimatorKind::Svrg,
        EstimatorKind::Sarah,
        EstimatorKind::Sarge,
    ];

    /// Short lowercase identifier used in configs and file names.
    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::Full => "full",
            EstimatorKind::Sg => "sg",
            EstimatorKind::Saga => "saga",
            EstimatorKind::Svrg => "svrg",
            EstimatorKind::Sarah => "sarah",
            EstimatorKind::Sarge => "sarge",
        }
    }

    /// Display label of the resulting sampler.
    pub fn label(self) -> &'static str {
        match self {
            EstimatorKind::Full => "HMC",
            EstimatorKind::Sg => "SG-HMC",
            EstimatorKind::Saga => "SAGA-HMC",
            EstimatorKind::Svrg => "SVRG-HMC",
            EstimatorKind::Sarah => "SARAH-HMC",
            EstimatorKind::Sarge => "SARGE-HMC",
        }
    }

    /// Whether the estimator flips a refresh coin with probability `1/p`.
    pub fn uses_epoch(self) -> bool {
        matches!(self, EstimatorKind::Svrg | EstimatorKind::Sarah)
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase();
        let key = key.strip_suffix("-hmc").unwrap_or(&key);
        Ok(match key {
            "full" | "hmc" => EstimatorKind::Full,
            "sg" | "sghmc" => EstimatorKind::Sg,
            "saga" => EstimatorKind::Saga,
            "svrg" => EstimatorKind::Svrg,
            "sarah" => EstimatorKind::Sarah,
            "sarge" => EstimatorKind::Sarge,
            _ => return Err(Error::InvalidParameter(format!("unknown estimator {s:?}"))),
        })
    }
}

/// Estimator kind with minibatch size `b` and epoch length `p`.
///
/// `p` only affects SVRG and SARAH.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub kind: EstimatorKind,
    pub batch_size: usize,
    pub epoch_length: usize,
}

impl EstimatorConfig {
    pub fn new(kind: EstimatorKind, batch_size: usize, epoch_length: usize) -> Self {
        Self {
            kind,
            batch_size,
            epoch_length,
        }
    }

    /// `p = round(N/b)`, at least 1.
    pub fn with_default_epoch(kind: EstimatorKind, n: usize, batch_size: usize) -> Self {
        let p = if batch_size == 0 {
            1
        } else {
            ((n as f64 / batch_size as f64).round() as usize).max(1)
        };
        Self::new(kind, batch_size, p)
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.batch_size == 0 || self.batch_size > n {
            return Err(Error::InvalidParameter(format!(
                "batch size {} outside 1..={n}",
                self.batch_size
            )));
        }
        if self.epoch_length == 0 {
            return Err(Error::InvalidParameter("epoch length must be at least 1".into()));
        }
        Ok(())
    }

    pub fn descriptor(&self, n: usize) -> Option<MsebDescriptor> {
        mseb_descriptor(self.kind, n, self.batch_size, self.epoch_length)
    }
}

/// Uniform size-`b` subset of `0..n` without replacement.
///
/// `b = n` returns `0..n` in order without consuming randomness.
pub fn sample_batch<R: Rng + ?Sized>(rng: &mut R, n: usize, b: usize) -> Result<Vec<usize>> {
    if b == 0 || b > n {
        return Err(Error::InvalidParameter(format!("batch size {b} outside 1..={n}")));
    }
    if b == n {
        return Ok((0..n).collect());
    }
    Ok(rand::seq::index::sample(rng, n, b).into_vec())
}

/// Random inputs of one estimator step.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Draw {
    /// SVRG snapshot refresh or SARAH restart.
    pub refresh: bool,
    /// Empty on SARAH restarts.
    pub batch: Vec<usize>,
}

#[derive(Clone, Debug)]
enum Memory {
    Full,
    Sg,
    Svrg {
        snapshot: Vec<f64>,
        snapshot_gradient: Vec<f64>,
    },
    Saga {
        table: Vec<f64>,
        sum: Vec<f64>,
    },
    Sarah {
        previous: Vec<f64>,
        previous_estimate: Vec<f64>,
    },
    Sarge {
        table: Vec<f64>,
        sum: Vec<f64>,
        previous: Vec<f64>,
        previous_estimate: Vec<f64>,
    },
}

/// Steps between full recomputations of the SAGA and SARGE running sums.
const RESUM_PERIOD: u64 = 10_000;

/// An initialized estimator bound to a model's `(N, d)`.
#[derive(Clone, Debug)]
pub struct Estimator {
    config: EstimatorConfig,
    n: usize,
    d: usize,
    memory: Memory,
    queries: u64,
    steps: u64,
    scratch: Vec<f64>,
    scratch2: Vec<f64>,
}

fn add_assign(out: &mut [f64], a: &[f64]) {
    for (o, v) in out.iter_mut().zip(a) {
        *o += v;
    }
}

fn table_sum(table: &[f64], n: usize, d: usize, out: &mut [f64]) {
    out.fill(0.0);
    for i in 0..n {
        add_assign(out, &table[i * d..(i + 1) * d]);
    }
}

impl Estimator {
    /// Builds the estimator memory at `x0`. SAGA, SVRG, SARAH and SARGE spend
    /// `N` queries here.
    pub fn new<M: Potential + ?Sized>(config: EstimatorConfig, model: &M, x0: &[f64]) -> Result<Self> {
        let (n, d) = (model.n_components(), model.dim());
        config.validate(n)?;
        check_dim(d, x0.len())?;
        if x0.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("initial position"));
        }
        let mut scratch = vec![0.0; d];
        let mut queries = 0u64;
        let mut full_at_x0 = || {
            let mut g = vec![0.0; d];
            full_gradient_into(model, x0, &mut scratch, &mut g);
            queries += n as u64;
            g
        };
        let memory = match config.kind {
            EstimatorKind::Full => Memory::Full,
            EstimatorKind::Sg => Memory::Sg,
            EstimatorKind::Svrg => Memory::Svrg {
                snapshot: x0.to_vec(),
                snapshot_gradient: full_at_x0(),
            },
            EstimatorKind::Sarah => Memory::Sarah {
                previous: x0.to_vec(),
                previous_estimate: full_at_x0(),
            },
            EstimatorKind::Saga | EstimatorKind::Sarge => {
                let mut table = vec![0.0; n * d];
                for i in 0..n {
                    model.write_component_gradient(i, x0, &mut table[i * d..(i + 1) * d]);
                }
                queries += n as u64;
                let mut sum = vec![0.0; d];
                table_sum(&table, n, d, &mut sum);
                if config.kind == EstimatorKind::Saga {
                    Memory::Saga { table, sum }
                } else {
                    let previous_estimate = sum.clone();
                    Memory::Sarge {
                        table,
                        sum,
                        previous: x0.to_vec(),
                        previous_estimate,
                    }
                }
            }
        };
        Ok(Self {
            config,
            n,
            d,
            memory,
            queries,
            steps: 0,
            scratch: vec![0.0; d],
            scratch2: vec![0.0; d],
        })
    }

    pub fn kind(&self) -> EstimatorKind {
        self.config.kind
    }

    pub fn config(&self) -> &EstimatorConfig {
        &self.config
    }

    /// Cumulative component-gradient evaluations, including initialization.
    pub fn queries(&self) -> u64 {
        self.queries
    }

    /// Steps taken since initialization.
    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// `x_{k−1}` for the recursive estimators.
    pub fn previous_iterate(&self) -> Option<&[f64]> {
        match &self.memory {
            Memory::Sarah { previous, .. } | Memory::Sarge { previous, .. } => Some(previous),
            _ => None,
        }
    }

    /// `∇̃_{k−1}` for the recursive estimators.
    pub fn previous_estimate(&self) -> Option<&[f64]> {
        match &self.memory {
            Memory::Sarah { previous_estimate, .. } | Memory::Sarge { previous_estimate, .. } => {
                Some(previous_estimate)
            }
            _ => None,
        }
    }

    fn refresh_probability(&self) -> f64 {
        1.0 / self.config.epoch_length as f64
    }

    fn coin<R: Rng + ?Sized>(&self, rng: &mut R) -> bool {
        self.config.epoch_length == 1 || rng.random_bool(self.refresh_probability())
    }

    /// Draws the refresh coin (SVRG, SARAH) and then the minibatch.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Draw {
        let (n, b) = (self.n, self.config.batch_size);
        let batch = |rng: &mut R| sample_batch(rng, n, b).expect("batch size validated at construction");
        match self.config.kind {
            EstimatorKind::Full => Draw {
                refresh: false,
                batch: Vec::new(),
            },
            EstimatorKind::Svrg => {
                let refresh = self.coin(rng);
                Draw {
                    refresh,
                    batch: batch(rng),
                }
            }
            EstimatorKind::Sarah => {
                if self.coin(rng) {
                    Draw {
                        refresh: true,
                        batch: Vec::new(),
                    }
                } else {
                    Draw {
                        refresh: false,
                        batch: batch(rng),
                    }
                }
            }
            _ => Draw {
                refresh: false,
                batch: batch(rng),
            },
        }
    }

    fn check_draw(&self, draw: &Draw) -> Result<()> {
        let kind = self.config.kind;
        let expected = match kind {
            EstimatorKind::Full => 0,
            EstimatorKind::Sarah if draw.refresh => 0,
            _ => self.config.batch_size,
        };
        if draw.batch.len() != expected {
            return Err(Error::InvalidParameter(format!(
                "{kind} draw has batch of {} indices, expected {expected}",
                draw.batch.len()
            )));
        }
        if draw.refresh && !kind.uses_epoch() {
            return Err(Error::InvalidParameter(format!("{kind} has no refresh step")));
        }
        if let Some(&index) = draw.batch.iter().find(|&&i| i >= self.n) {
            return Err(Error::IndexOutOfRange { index, len: self.n });
        }
        Ok(())
    }

    /// Estimate at `x` from a fresh draw; writes into `out`.
    pub fn estimate<M: Potential + ?Sized, R: Rng + ?Sized>(
        &mut self,
        model: &M,
        x: &[f64],
        rng: &mut R,
        out: &mut [f64],
    ) -> Result<()> {
        let draw = self.draw(rng);
        self.apply(model, x, &draw, out)
    }

    /// Deterministic part of a step: estimate at `x` for the given draw,
    /// then commit memory updates.
    pub fn apply<M: Potential + ?Sized>(&mut self, model: &M, x: &[f64], draw: &Draw, out: &mut [f64]) -> Result<()> {
        check_dim(self.n, model.n_components())?;
        check_dim(self.d, model.dim())?;
        check_dim(self.d, x.len())?;
        check_dim(self.d, out.len())?;
        self.check_draw(draw)?;

        let (n, d, b) = (self.n, self.d, self.config.batch_size);
        let scale = n as f64 / b as f64;
        let full_batch = b == n;
        let s1 = &mut self.scratch;
        let s2 = &mut self.scratch2;
        let mut queries = 0usize;
        self.steps += 1;
        let resum = self.steps.is_multiple_of(RESUM_PERIOD);

        match &mut self.memory {
            Memory::Full => {
                full_gradient_into(model, x, s1, out);
                queries += n;
            }
            Memory::Sg => {
                out.fill(0.0);
                for &i in &draw.batch {
                    model.write_component_gradient(i, x, s1);
                    add_assign(out, s1);
                }
                out.iter_mut().for_each(|o| *o *= scale);
                queries += b;
            }
            Memory::Svrg {
                snapshot,
                snapshot_gradient,
            } => {
                if draw.refresh {
                    snapshot.copy_from_slice(x);
                    full_gradient_into(model, x, s1, snapshot_gradient);
                    queries += n;
                }
                out.fill(0.0);
                for &i in &draw.batch {
                    model.write_component_gradient(i, x, s1);
                    model.write_component_gradient(i, snapshot, s2);
                    for ((o, a), c) in out.iter_mut().zip(s1.iter()).zip(s2.iter()) {
                        *o += a - c;
                    }
                }
                queries += 2 * b;
                for (o, g) in out.iter_mut().zip(snapshot_gradient.iter()) {
                    *o = scale * *o + g;
                }
            }
            Memory::Saga { table, sum } => {
                if full_batch {
                    // Table terms cancel; summing fresh gradients in index
                    // order reproduces the full gradient bit for bit.
                    out.fill(0.0);
                    for i in 0..n {
                        let row = &mut table[i * d..(i + 1) * d];
                        model.write_component_gradient(i, x, row);
                        add_assign(out, row);
                    }
                    sum.copy_from_slice(out);
                } else {
                    // s2 accumulates Σ_B (fresh − stored)
                    s2.fill(0.0);
                    for &i in &draw.batch {
                        let row = &mut table[i * d..(i + 1) * d];
                        model.write_component_gradient(i, x, s1);
                        for ((acc, f), r) in s2.iter_mut().zip(s1.iter()).zip(row.iter_mut()) {
                            *acc += f - *r;
                            *r = *f;
                        }
                    }
                    for ((o, delta), s) in out.iter_mut().zip(s2.iter()).zip(sum.iter_mut()) {
                        *o = scale * delta + *s;
                        *s += delta;
                    }
                    if resum {
                        table_sum(table, n, d, sum);
                    }
                }
                queries += b;
            }
            Memory::Sarah {
                previous,
                previous_estimate,
            } => {
                if draw.refresh {
                    full_gradient_into(model, x, s1, out);
                    queries += n;
                } else {
                    out.fill(0.0);
                    for &i in &draw.batch {
                        model.write_component_gradient(i, x, s1);
                        model.write_component_gradient(i, previous, s2);
                        for ((o, a), c) in out.iter_mut().zip(s1.iter()).zip(s2.iter()) {
                            *o += a - c;
                        }
                    }
                    for (o, g) in out.iter_mut().zip(previous_estimate.iter()) {
                        *o = scale * *o + g;
                    }
                    queries += 2 * b;
                }
                previous.copy_from_slice(x);
                previous_estimate.copy_from_slice(out);
            }
            Memory::Sarge {
                table,
                sum,
                previous,
                previous_estimate,
            } => {
                let carry = 1.0 - b as f64 / n as f64;
                if full_batch {
                    // carry = 0: ψ_new = fresh and the table terms cancel.
                    out.fill(0.0);
                    for i in 0..n {
                        let row = &mut table[i * d..(i + 1) * d];
                        model.write_component_gradient(i, x, s1);
                        model.write_component_gradient(i, previous, s2);
                        row.copy_from_slice(s1);
                        add_assign(out, s1);
                    }
                    sum.copy_from_slice(out);
                } else {
                    let mut delta = vec![0.0; d];
                    for &i in &draw.batch {
                        let row = &mut table[i * d..(i + 1) * d];
                        model.write_component_gradient(i, x, s1);
                        model.write_component_gradient(i, previous, s2);
                        for (((acc, f), old), r) in delta.iter_mut().zip(s1.iter()).zip(s2.iter()).zip(row.iter_mut()) {
                            let psi = f - carry * old;
                            *acc += psi - *r;
                            *r = psi;
                        }
                    }
                    for (((o, dl), s), g) in out
                        .iter_mut()
                        .zip(&delta)
                        .zip(sum.iter_mut())
                        .zip(previous_estimate.iter())
                    {
                        *o = scale * dl + *s + carry * g;
                        *s += dl;
                    }
                    if resum {
                        table_sum(table, n, d, sum);
                    }
                }
                queries += 2 * b;
                previous.copy_from_slice(x);
                previous_estimate.copy_from_slice(out);
            }
        }
        self.queries += queries as u64;
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("gradient estimate"));
        }
        Ok(())
    }

    /// Expected query count after `steps` steps, with the standard deviation
    /// of the refresh-coin noise.
    pub fn expected_queries(config: &EstimatorConfig, n: usize, steps: u64) -> (f64, f64) {
        let (nf, b, k) = (n as f64, config.batch_size as f64, steps as f64);
        let q = 1.0 / config.epoch_length as f64;
        let binom_sd = (k * q * (1.0 - q)).sqrt();
        match config.kind {
            EstimatorKind::Full => (k * nf, 0.0),
            EstimatorKind::Sg => (k * b, 0.0),
            EstimatorKind::Saga => (nf + k * b, 0.0),
            EstimatorKind::Sarge => (nf + 2.0 * k * b, 0.0),
            EstimatorKind::Svrg => (nf + k * (2.0 * b + q * nf), nf * binom_sd),
            EstimatorKind::Sarah => (nf + k * (q * nf + (1.0 - q) * 2.0 * b), (nf - 2.0 * b).abs() * binom_sd),
        }
    }
}

/// Largest number of batches [`conditional_mean_oracle`] will enumerate.
pub const ENUMERATION_LIMIT: u128 = 10_000;

fn binomial_capped(n: usize, k: usize, cap: u128) -> u128 {
    let k = k.min(n - k);
    let mut c: u128 = 1;
    for j in 0..k {
        c = c * (n - j) as u128 / (j + 1) as u128;
        if c > cap {
            return c;
        }
    }
    c
}

fn next_combination(idx: &mut [usize], n: usize) -> bool {
    let b = idx.len();
    for pos in (0..b).rev() {
        if idx[pos] < n - b + pos {
            idx[pos] += 1;
            for j in pos + 1..b {
                idx[j] = idx[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Exact conditional mean `E_k[∇̃_{k+1}]` of the next estimate at `x_next`,
/// by enumerating every batch and refresh outcome. Does not mutate `state`.
///
/// `x_prev` must be the last iterate the estimator saw (checked for the
/// recursive estimators).
pub fn conditional_mean_oracle<M: Potential + ?Sized>(
    state: &Estimator,
    model: &M,
    x_prev: &[f64],
    x_next: &[f64],
) -> Result<Vec<f64>> {
    check_dim(state.d, x_prev.len())?;
    check_dim(state.d, x_next.len())?;
    if let Some(prev) = state.previous_iterate() {
        if prev != x_prev {
            return Err(Error::InvalidParameter(
                "x_prev differs from the estimator's stored previous iterate".into(),
            ));
        }
    }
    let (n, b, d) = (state.n, state.config.batch_size, state.d);
    let count = binomial_capped(n, b, ENUMERATION_LIMIT);
    if count > ENUMERATION_LIMIT {
        return Err(Error::EnumerationTooLarge {
            count,
            limit: ENUMERATION_LIMIT,
        });
    }

    let kind = state.config.kind;
    let mut out = vec![0.0; d];
    let mut estimate = vec![0.0; d];
    let mut branch_mean = |refresh: bool, enumerate_batches: bool, weight: f64, out: &mut [f64]| -> Result<()> {
        if !enumerate_batches {
            let mut s = state.clone();
            s.apply(
                model,
                x_next,
                &Draw {
                    refresh,
                    batch: Vec::new(),
                },
                &mut estimate,
            )?;
            for (o, e) in out.iter_mut().zip(&estimate) {
                *o += weight * e;
            }
            return Ok(());
        }
        let w = weight / count as f64;
        let mut idx: Vec<usize> = (0..b).collect();
        loop {
            let mut s = state.clone();
            s.apply(
                model,
                x_next,
                &Draw {
                    refresh,
                    batch: idx.clone(),
                },
                &mut estimate,
            )?;
            for (o, e) in out.iter_mut().zip(&estimate) {
                *o += w * e;
            }
            if !next_combination(&mut idx, n) {
                return Ok(());
            }
        }
    };

    let q = state.refresh_probability();
    match kind {
        EstimatorKind::Full => branch_mean(false, false, 1.0, &mut out)?,
        EstimatorKind::Svrg | EstimatorKind::Sarah => {
            let batches_on_refresh = kind == EstimatorKind::Svrg;
            branch_mean(true, batches_on_refresh, q, &mut out)?;
            if state.config.epoch_length > 1 {
                branch_mean(false, true, 1.0 - q, &mut out)?;
            }
        }
        _ => branch_mean(false, true, 1.0, &mut out)?,
    }
    Ok(out)
}

/// `Q = N Σ_i ‖∇f_i(x_next) − ∇f_i(x_k)‖²`
pub fn q_metric<M: Potential + ?Sized>(model: &M, x_k: &[f64], x_next: &[f64]) -> Result<f64> {
    let d = model.dim();
    check_dim(d, x_k.len())?;
    check_dim(d, x_next.len())?;
    let mut a = vec![0.0; d];
    let mut c = vec![0.0; d];
    let mut total = 0.0;
    for i in 0..model.n_components() {
        model.write_component_gradient(i, x_next, &mut a);
        model.write_component_gradient(i, x_k, &mut c);
        total += a.iter().zip(&c).map(|(u, v)| (u - v) * (u - v)).sum::<f64>();
    }
    Ok(model.n_components() as f64 * total)
}

/// Constants `(M₁, M₂, ρ_M, ρ_B, ρ_F)` of the MSEB property.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MsebDescriptor {
    pub m1: f64,
    pub m2: f64,
    pub rho_m: f64,
    pub rho_b: f64,
    pub rho_f: f64,
}

impl MsebDescriptor {
    /// `Θ = M₁/ρ_M + M₂/(ρ_M ρ_F)`
    pub fn theta(&self) -> f64 {
        self.m1 / self.rho_m + self.m2 / (self.rho_m * self.rho_f)
    }
}

/// MSEB constants for `kind`; `None` for SG, which has none.
pub fn mseb_descriptor(kind: EstimatorKind, n: usize, b: usize, p: usize) -> Option<MsebDescriptor> {
    let (n, b, p) = (n as f64, b as f64, p as f64);
    let d = |m1, m2, rho_m, rho_b, rho_f| {
        Some(MsebDescriptor {
            m1,
            m2,
            rho_m,
            rho_b,
            rho_f,
        })
    };
    match kind {
        EstimatorKind::Full => d(0.0, 0.0, 1.0, 1.0, 1.0),
        EstimatorKind::Sg => None,
        EstimatorKind::Saga => d(3.0 * n / (b * b), 0.0, b / (2.0 * n), 1.0, 1.0),
        EstimatorKind::Svrg => d(3.0 * p / b, 0.0, 1.0 / (2.0 * p), 1.0, 1.0),
        EstimatorKind::Sarah => d(1.0, 0.0, 1.0 / p, 1.0 / p, 1.0),
        EstimatorKind::Sarge => d(12.0, (27.0 + 12.0 * b) / n, b / (2.0 * n), b / n, b / (2.0 * n)),
    }
}
