//! Gaussian summaries, the Bures–Wasserstein distance, and the error metrics
//! reported by experiments.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::potential::LogisticPotential;
use crate::sampler::RunRecord;

const SYMMETRY_TOL: f64 = 1e-12;
const EIGEN_TOL: f64 = 1e-10;

/// Mean and covariance of a Gaussian. The covariance is stored exactly
/// symmetric.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianSummary {
    mean: DVector<f64>,
    covariance: DMatrix<f64>,
}

impl GaussianSummary {
    /// Rejects covariances asymmetric beyond `1e-12` (relative to their
    /// largest entry) or with an eigenvalue below `−1e-10`.
    pub fn new(mean: Vec<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if d == 0 {
            return Err(Error::Empty("mean"));
        }
        check_dim(d, covariance.nrows())?;
        check_dim(d, covariance.ncols())?;
        if mean.iter().chain(covariance.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("Gaussian summary"));
        }
        let scale = covariance.amax().max(1.0);
        let asym = (&covariance - covariance.transpose()).amax();
        if asym > SYMMETRY_TOL * scale {
            return Err(Error::NotSymmetric(asym));
        }
        let covariance = (&covariance + covariance.transpose()) * 0.5;
        let min_eig = SymmetricEigen::new(covariance.clone()).eigenvalues.min();
        if min_eig < -EIGEN_TOL * scale {
            return Err(Error::NotPositiveSemidefinite(min_eig));
        }
        Ok(Self {
            mean: DVector::from_vec(mean),
            covariance,
        })
    }

    pub fn point_mass(mean: Vec<f64>) -> Result<Self> {
        let d = mean.len();
        Self::new(mean, DMatrix::zeros(d, d))
    }

    /// Sample mean and unbiased sample covariance; needs at least `d + 1` rows.
    pub fn from_samples<S: AsRef<[f64]>>(samples: &[S]) -> Result<Self> {
        let first = samples.first().ok_or(Error::Empty("samples"))?;
        let mut acc = MomentAccumulator::new(first.as_ref().len());
        for s in samples {
            acc.push(s.as_ref())?;
        }
        acc.summary()
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    /// Law of `(x, x + v)` given the law of `(x, v)` stacked as `2d`
    /// coordinates.
    pub fn coupled(&self) -> Result<Self> {
        let n = self.dim();
        if !n.is_multiple_of(2) {
            return Err(Error::InvalidParameter(format!("joint dimension {n} is odd")));
        }
        let d = n / 2;
        let mut t = DMatrix::<f64>::identity(n, n);
        t.view_mut((d, 0), (d, d)).fill_with_identity();
        let mean = &t * &self.mean;
        let cov = &t * &self.covariance * t.transpose();
        Self::new(mean.as_slice().to_vec(), (&cov + cov.transpose()) * 0.5)
    }

    /// Stationary law of `(x, v)` for position law `self` and inverse mass
    /// `xi`: momentum independent of position with covariance `I/ξ`.
    pub fn with_momentum(&self, xi: f64) -> Result<Self> {
        if !(xi > 0.0 && xi.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "inverse mass must be positive, got {xi}"
            )));
        }
        let d = self.dim();
        let mut cov = DMatrix::zeros(2 * d, 2 * d);
        cov.view_mut((0, 0), (d, d)).copy_from(&self.covariance);
        cov.view_mut((d, d), (d, d)).fill_diagonal(1.0 / xi);
        let mut mean = self.mean.as_slice().to_vec();
        mean.resize(2 * d, 0.0);
        Self::new(mean, cov)
    }
}

/// Streaming mean and co-moment (Welford), mergeable across chains.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentAccumulator {
    count: u64,
    mean: Vec<f64>,
    comoment: Vec<f64>,
}

impl MomentAccumulator {
    pub fn new(d: usize) -> Self {
        Self {
            count: 0,
            mean: vec![0.0; d],
            comoment: vec![0.0; d * d],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn push(&mut self, x: &[f64]) -> Result<()> {
        let d = self.dim();
        check_dim(d, x.len())?;
        self.count += 1;
        let inv = 1.0 / self.count as f64;
        let before: Vec<f64> = x.iter().zip(&self.mean).map(|(v, m)| v - m).collect();
        for (m, dl) in self.mean.iter_mut().zip(&before) {
            *m += dl * inv;
        }
        for ((row, xr), mr) in self.comoment.chunks_mut(d).zip(x).zip(&self.mean) {
            let after_r = xr - mr;
            for (entry, b) in row.iter_mut().zip(&before) {
                *entry += b * after_r;
            }
        }
        Ok(())
    }

    /// Combines two disjoint sample sets.
    pub fn merge(&mut self, other: &MomentAccumulator) -> Result<()> {
        let d = self.dim();
        check_dim(d, other.dim())?;
        if other.count == 0 {
            return Ok(());
        }
        if self.count == 0 {
            *self = other.clone();
            return Ok(());
        }
        let (na, nb) = (self.count as f64, other.count as f64);
        let n = na + nb;
        let delta: Vec<f64> = other.mean.iter().zip(&self.mean).map(|(b, a)| b - a).collect();
        for r in 0..d {
            for c in 0..d {
                self.comoment[r * d + c] += other.comoment[r * d + c] + delta[r] * delta[c] * na * nb / n;
            }
        }
        for (m, dl) in self.mean.iter_mut().zip(&delta) {
            *m += dl * nb / n;
        }
        self.count += other.count;
        Ok(())
    }

    pub fn summary(&self) -> Result<GaussianSummary> {
        let d = self.dim();
        let have = self.count as usize;
        if have < d + 1 {
            return Err(Error::TooFewSamples { needed: d + 1, have });
        }
        let c = DMatrix::from_row_slice(d, d, &self.comoment) / (self.count - 1) as f64;
        GaussianSummary::new(self.mean.clone(), (&c + c.transpose()) * 0.5)
    }
}

fn sqrt_psd(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(m.clone());
    let roots = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose()
}

/// `tr((A^{1/2} B A^{1/2})^{1/2})`
fn fidelity_trace(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let ra = sqrt_psd(a);
    let inner = &ra * b * &ra;
    sqrt_psd(&((&inner + inner.transpose()) * 0.5)).trace()
}

/// 2-Wasserstein distance between two Gaussians.
///
/// The cross term is averaged over both argument orders, so the result is
/// exactly symmetric.
pub fn bures_w2(a: &GaussianSummary, b: &GaussianSummary) -> Result<f64> {
    check_dim(a.dim(), b.dim())?;
    let shift = (&a.mean - &b.mean).norm_squared();
    let cross = 0.5 * (fidelity_trace(&a.covariance, &b.covariance) + fidelity_trace(&b.covariance, &a.covariance));
    // grouped so that swapping the arguments only commutes additions
    let sq = shift + (a.covariance.trace() + b.covariance.trace()) - 2.0 * cross;
    Ok(sq.max(0.0).sqrt())
}

/// Time average of `‖∇̃_k − ∇f(x_k)‖²` over post-burn-in rows.
pub fn gradient_mse(record: &RunRecord) -> Result<f64> {
    let values: Vec<f64> = record.post_burn_in().filter_map(|r| r.grad_err_sq).collect();
    if values.is_empty() {
        return Err(Error::Empty("gradient error series"));
    }
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

/// Mean over chains of the squared error of each chain's time-averaged
/// post-burn-in potential.
pub fn potential_mse(records: &[RunRecord], true_mean_potential: f64) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::Empty("records"));
    }
    if !true_mean_potential.is_finite() {
        return Err(Error::NonFinite("reference mean potential"));
    }
    let mut total = 0.0;
    for r in records {
        let m = r
            .mean_potential()
            .ok_or(Error::Empty("post-burn-in potential series"))?;
        total += (m - true_mean_potential).powi(2);
    }
    Ok(total / records.len() as f64)
}

/// Held-out negative log-likelihood averaged over posterior samples
/// (prior excluded).
pub fn test_nll<S: AsRef<[f64]>>(model: &LogisticPotential, samples: &[S]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Empty("samples"));
    }
    let mut total = 0.0;
    for s in samples {
        total += model.likelihood_nll(s.as_ref())?;
    }
    Ok(total / samples.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::{Estimator, EstimatorConfig, EstimatorKind};
    use crate::potential::{Potential, QuadraticPotential};
    use crate::sampler::RecordRow;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn random_gaussian(rng: &mut ChaCha8Rng, d: usize) -> GaussianSummary {
        let mean = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let a = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let cov = &a * a.transpose() + DMatrix::identity(d, d) * 0.1;
        GaussianSummary::new(mean, (&cov + cov.transpose()) * 0.5).unwrap()
    }

    fn record(potentials: &[f64], grad_err: Option<f64>, burn_in: u64) -> RunRecord {
        let rows = potentials
            .iter()
            .enumerate()
            .map(|(k, &p)| RecordRow {
                iter: k as u64,
                queries: k as u64,
                potential: p,
                grad_err_sq: grad_err,
                q_k: None,
            })
            .collect();
        RunRecord::from_rows(rows, burn_in)
    }

    #[test]
    fn identical_gaussians_are_at_distance_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = random_gaussian(&mut rng, 4);
        assert!(bures_w2(&g, &g).unwrap() < 1e-6);
    }

    #[test]
    fn translation_only() {
        let cov = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        let a = GaussianSummary::new(vec![0.0, 0.0], cov.clone()).unwrap();
        let b = GaussianSummary::new(vec![3.0, -4.0], cov).unwrap();
        assert!((bures_w2(&a, &b).unwrap() - 5.0).abs() < 1e-6);
    }

    #[test]
    fn commuting_diagonal_case() {
        let a = GaussianSummary::new(vec![0.0; 2], DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 4.0]))).unwrap();
        let b = GaussianSummary::new(vec![0.0; 2], DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 1.0]))).unwrap();
        assert!((bures_w2(&a, &b).unwrap() - 2f64.sqrt()).abs() < 1e-12);

        // same pair in a rotated basis exercises the non-diagonal root path
        let (c, s) = (0.6f64, 0.8f64);
        let r = DMatrix::from_row_slice(2, 2, &[c, -s, s, c]);
        let rot = |g: &GaussianSummary| {
            let m = &r * g.covariance() * r.transpose();
            GaussianSummary::new(vec![0.0; 2], (&m + m.transpose()) * 0.5).unwrap()
        };
        assert!((bures_w2(&rot(&a), &rot(&b)).unwrap() - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn point_mass_distance_is_root_trace() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let g = random_gaussian(&mut rng, 3);
        let p = GaussianSummary::point_mass(g.mean().as_slice().to_vec()).unwrap();
        let w = bures_w2(&p, &g).unwrap();
        assert!((w * w - g.covariance().trace()).abs() < 1e-10 * g.covariance().trace());
    }

    #[test]
    fn metric_axioms_on_random_triples() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let d = rng.random_range(1..5);
            let (a, b, c) = (
                random_gaussian(&mut rng, d),
                random_gaussian(&mut rng, d),
                random_gaussian(&mut rng, d),
            );
            let ab = bures_w2(&a, &b).unwrap();
            assert_eq!(ab.to_bits(), bures_w2(&b, &a).unwrap().to_bits());
            let ac = bures_w2(&a, &c).unwrap();
            let cb = bures_w2(&c, &b).unwrap();
            assert!(ab <= ac + cb + 1e-9, "{ab} > {ac} + {cb}");
        }
    }

    #[test]
    fn rotation_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let d = 3;
            let (a, b) = (random_gaussian(&mut rng, d), random_gaussian(&mut rng, d));
            let q = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal))
                .qr()
                .q();
            let rot = |g: &GaussianSummary| {
                let m = &q * g.covariance() * q.transpose();
                GaussianSummary::new((&q * g.mean()).as_slice().to_vec(), (&m + m.transpose()) * 0.5).unwrap()
            };
            let before = bures_w2(&a, &b).unwrap();
            let after = bures_w2(&rot(&a), &rot(&b)).unwrap();
            assert!((before - after).abs() < 1e-9);
        }
    }

    #[test]
    fn coupled_coordinates_of_the_stationary_law() {
        let x = GaussianSummary::new(vec![1.0, -2.0], DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0])).unwrap();
        let joint = x.with_momentum(4.0).unwrap();
        let q = joint.coupled().unwrap();
        assert_eq!(q.mean().as_slice(), &[1.0, -2.0, 1.0, -2.0]);
        // Cov(x, x+v) = Σ and Cov(x+v) = Σ + I/ξ
        let expected = DMatrix::from_row_slice(
            4,
            4,
            &[
                2.0, 0.5, 2.0, 0.5, 0.5, 1.0, 0.5, 1.0, 2.0, 0.5, 2.25, 0.5, 0.5, 1.0, 0.5, 1.25,
            ],
        );
        assert_eq!(q.covariance(), &expected);
        assert!(x.coupled().is_ok());
        assert!(GaussianSummary::point_mass(vec![0.0; 3]).unwrap().coupled().is_err());
        assert!(x.with_momentum(0.0).is_err());
    }

    #[test]
    fn summary_validation() {
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0]);
        assert!(matches!(
            GaussianSummary::new(vec![0.0; 2], asym),
            Err(Error::NotSymmetric(_))
        ));
        let indefinite = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(
            GaussianSummary::new(vec![0.0; 2], indefinite),
            Err(Error::NotPositiveSemidefinite(_))
        ));
        assert!(GaussianSummary::new(vec![0.0; 2], DMatrix::identity(3, 3)).is_err());
        let tiny_negative = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1e-12]);
        assert!(GaussianSummary::new(vec![0.0; 2], tiny_negative).is_ok());
        let a = GaussianSummary::point_mass(vec![0.0; 2]).unwrap();
        let b = GaussianSummary::point_mass(vec![0.0; 3]).unwrap();
        assert!(bures_w2(&a, &b).is_err());
    }

    #[test]
    fn sample_moments() {
        let samples = vec![vec![1.0, 0.0], vec![-1.0, 0.0], vec![0.0, 2.0], vec![0.0, -2.0]];
        let g = GaussianSummary::from_samples(&samples).unwrap();
        assert!(g.mean().norm() < 1e-15);
        assert!((g.covariance()[(0, 0)] - 2.0 / 3.0).abs() < 1e-15);
        assert!((g.covariance()[(1, 1)] - 8.0 / 3.0).abs() < 1e-15);
        assert_eq!(g.covariance()[(0, 1)], 0.0);
        assert!(matches!(
            GaussianSummary::from_samples(&samples[..2]),
            Err(Error::TooFewSamples { needed: 3, have: 2 })
        ));
    }

    #[test]
    fn merged_accumulators_match_sequential() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let xs: Vec<Vec<f64>> = (0..50)
            .map(|_| (0..3).map(|_| rng.sample(StandardNormal)).collect())
            .collect();
        let mut all = MomentAccumulator::new(3);
        let (mut left, mut right) = (MomentAccumulator::new(3), MomentAccumulator::new(3));
        for (k, x) in xs.iter().enumerate() {
            all.push(x).unwrap();
            if k < 17 {
                left.push(x).unwrap()
            } else {
                right.push(x).unwrap()
            }
        }
        left.merge(&right).unwrap();
        let (a, b) = (all.summary().unwrap(), left.summary().unwrap());
        assert!((a.mean() - b.mean()).amax() < 1e-14);
        assert!((a.covariance() - b.covariance()).amax() < 1e-13);
    }

    #[test]
    fn sg_gradient_error_matches_component_variance() {
        // two components with different centres; SG with b = 1 at a frozen x
        let model = QuadraticPotential::new(vec![vec![0.0, 1.0], vec![2.0, -1.0]], DMatrix::identity(2, 2)).unwrap();
        let x = [0.5, 0.25];
        let g: Vec<Vec<f64>> = (0..2).map(|i| model.gradient_component(i, &x).unwrap()).collect();
        let full = model.gradient_full(&x).unwrap();
        // N² Var_i[∇f_i] with the population variance over i
        let n = 2.0;
        let var: f64 = (0..2)
            .map(|i| (0..2).map(|j| (g[i][j] - full[j] / n).powi(2)).sum::<f64>())
            .sum::<f64>()
            / n;
        let analytic = n * n * var;

        let mut est = Estimator::new(EstimatorConfig::new(EstimatorKind::Sg, 1, 1), &model, &x).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut out = [0.0; 2];
        let draws = 40_000;
        let errs: Vec<f64> = (0..draws)
            .map(|_| {
                est.estimate(&model, &x, &mut rng, &mut out).unwrap();
                out.iter().zip(&full).map(|(a, b)| (a - b).powi(2)).sum()
            })
            .collect();
        let r = record(&vec![0.0; draws], None, 0);
        let r = RunRecord {
            rows: r
                .rows
                .into_iter()
                .zip(&errs)
                .map(|(row, &e)| RecordRow {
                    grad_err_sq: Some(e),
                    ..row
                })
                .collect(),
            ..r
        };
        let mse = gradient_mse(&r).unwrap();
        // with two components both draws give an error of the same size
        assert!(
            (mse - analytic).abs() < 5.0 * analytic / (draws as f64).sqrt(),
            "{mse} vs {analytic}"
        );
    }

    #[test]
    fn gradient_mse_uses_post_burn_in_rows() {
        let r = record(&[0.0; 5], Some(2.0), 2);
        assert_eq!(gradient_mse(&r).unwrap(), 2.0);
        assert!(gradient_mse(&record(&[0.0; 5], None, 0)).is_err());
    }

    #[test]
    fn potential_mse_of_a_stuck_chain() {
        let model = QuadraticPotential::new(vec![vec![1.0], vec![1.0]], DMatrix::identity(1, 1)).unwrap();
        let stuck = model.value(&[1.0]);
        assert_eq!(stuck, 0.0);
        let truth = model.mean_potential();
        let records = vec![record(&[stuck; 10], None, 3), record(&[stuck; 10], None, 3)];
        assert!((potential_mse(&records, truth).unwrap() - truth * truth).abs() < 1e-15);
        assert!(potential_mse(&[], truth).is_err());
        assert!(potential_mse(&records, f64::NAN).is_err());
    }

    #[test]
    fn potential_mse_shrinks_with_exact_draws() {
        let model = QuadraticPotential::generate(7, 30, 3, 10.0, 1.0).unwrap();
        let (mean, cov) = model.target_moments();
        let chol = cov.cholesky().unwrap().l();
        let truth = model.mean_potential();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut mse_at = |len: usize| {
            let records: Vec<RunRecord> = (0..200)
                .map(|_| {
                    let pots: Vec<f64> = (0..len)
                        .map(|_| {
                            let z = DVector::from_fn(3, |_, _| rng.sample::<f64, _>(StandardNormal));
                            let x = DVector::from_column_slice(&mean) + &chol * z;
                            model.value(x.as_slice())
                        })
                        .collect();
                    record(&pots, None, 0)
                })
                .collect();
            potential_mse(&records, truth).unwrap()
        };
        let (short, long) = (mse_at(10), mse_at(100));
        // Var f = d/2 for exact draws, so MSE ≈ d/(2·len)
        assert!((short / long) > 5.0 && (short / long) < 20.0, "{short} / {long}");
        assert!((long - 1.5 / 100.0).abs() < 0.5 * 1.5 / 100.0, "{long}");
    }

    #[test]
    fn test_nll_at_origin_and_separated_limit() {
        let model = LogisticPotential::new(vec![vec![1.0], vec![-2.0], vec![0.5]], vec![1.0, -1.0, 1.0], 1.0).unwrap();
        let nll = test_nll(&model, &[vec![0.0]]).unwrap();
        assert!((nll - 3.0 * 2f64.ln()).abs() < 1e-14);
        assert!(test_nll(&model, &[vec![60.0]]).unwrap() < 1e-12);
        assert!(test_nll::<Vec<f64>>(&model, &[]).is_err());
        assert!(test_nll(&model, &[vec![0.0, 1.0]]).is_err());
    }
}
