//! Sum-decomposable potential energies `f(x) = Σ_i f_i(x)`.
//!
//! Two families are provided: a synthetic quadratic whose target law is an
//! exactly known Gaussian, and Bayesian logistic regression with a Gaussian
//! prior spread evenly over the components.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::dataio::Dataset;
use crate::error::{check_dim, Error, Result};

/// A potential `f = Σ_{i<N} f_i` on `R^d` with per-component gradients.
///
/// Implementors provide the unchecked component kernels; the checked
/// operations are provided on top of them. Models are immutable once built
/// and may be shared across chains.
pub trait Potential: Send + Sync {
    fn n_components(&self) -> usize;

    fn dim(&self) -> usize;

    /// Lipschitz constant `L` of `∇f`.
    fn smoothness(&self) -> f64;

    /// Strong convexity constant `m` of `f`.
    fn strong_convexity(&self) -> f64;

    fn condition_number(&self) -> f64 {
        self.smoothness() / self.strong_convexity()
    }

    /// Writes `∇f_i(x)` into `out`. `i < N` and `x.len() == out.len() == d`
    /// are the caller's responsibility.
    fn write_component_gradient(&self, i: usize, x: &[f64], out: &mut [f64]);

    /// `f_i(x)`, unchecked like [`Potential::write_component_gradient`].
    fn component_value(&self, i: usize, x: &[f64]) -> f64;

    /// `f(x)`, unchecked. Defaults to summing the components.
    fn value(&self, x: &[f64]) -> f64 {
        (0..self.n_components()).map(|i| self.component_value(i, x)).sum()
    }

    fn gradient_component(&self, i: usize, x: &[f64]) -> Result<Vec<f64>> {
        if i >= self.n_components() {
            return Err(Error::IndexOutOfRange {
                index: i,
                len: self.n_components(),
            });
        }
        check_dim(self.dim(), x.len())?;
        let mut out = vec![0.0; self.dim()];
        self.write_component_gradient(i, x, &mut out);
        Ok(out)
    }

    /// `Σ_i ∇f_i(x)`, summed in index order. Query accounting happens in the
    /// estimators, not here.
    fn gradient_full(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), x.len())?;
        let mut scratch = vec![0.0; self.dim()];
        let mut out = vec![0.0; self.dim()];
        full_gradient_into(self, x, &mut scratch, &mut out);
        Ok(out)
    }

    fn potential_full(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim(), x.len())?;
        Ok(self.value(x))
    }
}

/// Accumulates `Σ_i ∇f_i(x)` into `out` in index order.
///
/// Every full-gradient evaluation in the crate goes through here so that
/// estimators that collapse to the full gradient agree bit for bit.
pub(crate) fn full_gradient_into<M: Potential + ?Sized>(model: &M, x: &[f64], scratch: &mut [f64], out: &mut [f64]) {
    out.fill(0.0);
    for i in 0..model.n_components() {
        model.write_component_gradient(i, x, scratch);
        for (o, s) in out.iter_mut().zip(scratch.iter()) {
            *o += s;
        }
    }
}

/// `f_i(x) = (1/N)(d_i − x)ᵀ P (d_i − x)` with a symmetric positive-definite
/// precision `P`. The full potential targets `N(mean(d_i), P⁻¹/2)`.
#[derive(Clone, Debug)]
pub struct QuadraticPotential {
    n: usize,
    d: usize,
    data: Vec<f64>,
    precision: Vec<f64>,
    precision_matrix: DMatrix<f64>,
    data_mean: Vec<f64>,
    // (1/N) Σ (d_i − d̄)ᵀ P (d_i − d̄)
    offset: f64,
    eig_min: f64,
    eig_max: f64,
}

impl QuadraticPotential {
    pub fn new(data: Vec<Vec<f64>>, precision: DMatrix<f64>) -> Result<Self> {
        let n = data.len();
        if n == 0 {
            return Err(Error::Empty("data points"));
        }
        let d = precision.nrows();
        if d == 0 || precision.ncols() != d {
            return Err(Error::InvalidParameter(format!(
                "precision must be square and non-empty, got {}x{}",
                precision.nrows(),
                precision.ncols()
            )));
        }
        for row in &data {
            check_dim(d, row.len())?;
        }
        let asym = (0..d)
            .flat_map(|r| (0..d).map(move |c| (r, c)))
            .map(|(r, c)| (precision[(r, c)] - precision[(c, r)]).abs())
            .fold(0.0, f64::max);
        let scale = precision.amax().max(1.0);
        if asym > 1e-12 * scale {
            return Err(Error::NotSymmetric(asym));
        }
        let eig = SymmetricEigen::new(precision.clone()).eigenvalues;
        let eig_min = eig.min();
        let eig_max = eig.max();
        if eig_min.is_nan() || eig_min <= 0.0 {
            return Err(Error::NotPositiveSemidefinite(eig_min));
        }

        let mut data_mean = vec![0.0; d];
        for row in &data {
            for (m, v) in data_mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        data_mean.iter_mut().for_each(|m| *m /= n as f64);

        let mut flat_p = Vec::with_capacity(d * d);
        for r in 0..d {
            for c in 0..d {
                flat_p.push(precision[(r, c)]);
            }
        }
        let mut model = Self {
            n,
            d,
            data: data.into_iter().flatten().collect(),
            precision: flat_p,
            precision_matrix: precision,
            data_mean,
            offset: 0.0,
            eig_min,
            eig_max,
        };
        let offset = (0..n)
            .map(|i| {
                let di = model.data_point(i);
                model.quad_form(di, &model.data_mean)
            })
            .sum::<f64>()
            / n as f64;
        model.offset = offset;
        Ok(model)
    }

    /// Random model: `d_i ~ N(2·1, 2I)` and a precision with a random
    /// orthogonal eigenbasis and eigenvalues log-uniform in `[m, L]`, with
    /// the extremes pinned to `m` and `L` when `d ≥ 2`.
    pub fn generate(seed: u64, n: usize, d: usize, l: f64, m: f64) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(Error::InvalidParameter(format!(
                "need N >= 1 and d >= 1, got N={n}, d={d}"
            )));
        }
        if !(m > 0.0 && m <= l && l.is_finite()) {
            return Err(Error::InvalidParameter(format!("need 0 < m <= L, got m={m}, L={l}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gauss = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let q = gauss.qr().q();
        let eigenvalues: Vec<f64> = if d == 1 {
            vec![l]
        } else {
            let (lo, hi) = (m.ln(), l.ln());
            (0..d)
                .map(|k| match k {
                    0 => m,
                    k if k == d - 1 => l,
                    _ => (lo + (hi - lo) * rng.random::<f64>()).exp(),
                })
                .collect()
        };
        let lambda = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(eigenvalues));
        let p = &q * lambda * q.transpose();
        let p = (&p + p.transpose()) * 0.5;

        let data = (0..n)
            .map(|_| {
                (0..d)
                    .map(|_| 2.0 + 2f64.sqrt() * rng.sample::<f64, _>(StandardNormal))
                    .collect()
            })
            .collect();
        Self::new(data, p)
    }

    pub fn data_point(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn precision(&self) -> &DMatrix<f64> {
        &self.precision_matrix
    }

    /// Extreme eigenvalues of the stored precision `P`.
    pub fn precision_spectrum(&self) -> (f64, f64) {
        (self.eig_min, self.eig_max)
    }

    /// Mean and covariance of the target `∝ exp(−f)`: `(d̄, P⁻¹/2)`.
    pub fn target_moments(&self) -> (Vec<f64>, DMatrix<f64>) {
        let inv = self
            .precision_matrix
            .clone()
            .cholesky()
            .expect("precision validated positive definite")
            .inverse();
        let cov = (&inv + inv.transpose()) * 0.25;
        (self.data_mean.clone(), cov)
    }

    /// `E_{p*}[f] = d/2 + (1/N) Σ (d_i − d̄)ᵀ P (d_i − d̄)`.
    pub fn mean_potential(&self) -> f64 {
        self.d as f64 / 2.0 + self.offset
    }

    fn quad_form(&self, a: &[f64], b: &[f64]) -> f64 {
        let d = self.d;
        let mut acc = 0.0;
        for r in 0..d {
            let row = &self.precision[r * d..(r + 1) * d];
            let mut s = 0.0;
            for c in 0..d {
                s += row[c] * (a[c] - b[c]);
            }
            acc += (a[r] - b[r]) * s;
        }
        acc
    }
}

impl Potential for QuadraticPotential {
    fn n_components(&self) -> usize {
        self.n
    }

    fn dim(&self) -> usize {
        self.d
    }

    fn smoothness(&self) -> f64 {
        2.0 * self.eig_max
    }

    fn strong_convexity(&self) -> f64 {
        2.0 * self.eig_min
    }

    fn write_component_gradient(&self, i: usize, x: &[f64], out: &mut [f64]) {
        let d = self.d;
        let di = &self.data[i * d..(i + 1) * d];
        let scale = 2.0 / self.n as f64;
        for (o, row) in out.iter_mut().zip(self.precision.chunks(d)) {
            let mut s = 0.0;
            for ((p, xc), dc) in row.iter().zip(x).zip(di) {
                s += p * (xc - dc);
            }
            *o = scale * s;
        }
    }

    fn component_value(&self, i: usize, x: &[f64]) -> f64 {
        self.quad_form(self.data_point(i), x) / self.n as f64
    }

    /// Closed form `(x − d̄)ᵀ P (x − d̄) + const`, O(d²) instead of O(N d²).
    fn value(&self, x: &[f64]) -> f64 {
        self.quad_form(x, &self.data_mean) + self.offset
    }
}

/// `log(1 + e^z)` without overflow.
pub fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// `1 / (1 + e^{−z})` without overflow.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Bayesian logistic regression with prior `N(0, m⁻¹ I)`:
/// `f(x) = (m/2)|x|² + Σ_i log(1 + exp(−y_i a_iᵀx))`.
///
/// Component `i` carries `(m/2N)|x|²` plus its own log-loss.
#[derive(Clone, Debug)]
pub struct LogisticPotential {
    n: usize,
    d: usize,
    features: Vec<f64>,
    labels: Vec<f64>,
    prior_precision: f64,
    smoothness: f64,
}

impl LogisticPotential {
    pub fn new(features: Vec<Vec<f64>>, labels: Vec<f64>, prior_precision: f64) -> Result<Self> {
        let n = features.len();
        if n == 0 {
            return Err(Error::Empty("features"));
        }
        check_dim(n, labels.len())?;
        let d = features[0].len();
        if d == 0 {
            return Err(Error::InvalidParameter("feature dimension is zero".into()));
        }
        for row in &features {
            check_dim(d, row.len())?;
        }
        if let Some(bad) = labels.iter().find(|&&y| y != 1.0 && y != -1.0) {
            return Err(Error::InvalidParameter(format!("label {bad} is not +1/-1")));
        }
        if !(prior_precision > 0.0 && prior_precision.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "prior precision must be positive, got {prior_precision}"
            )));
        }
        let mut model = Self {
            n,
            d,
            features: features.into_iter().flatten().collect(),
            labels,
            prior_precision,
            smoothness: 0.0,
        };
        model.smoothness = prior_precision + model.gram_top_eigenvalue(100) / 4.0;
        Ok(model)
    }

    /// Dense features from a sparse dataset.
    pub fn from_dataset(dataset: &Dataset, prior_precision: f64) -> Result<Self> {
        let features = dataset.dense_rows();
        Self::new(features, dataset.labels().to_vec(), prior_precision)
    }

    pub fn feature_row(&self, i: usize) -> &[f64] {
        &self.features[i * self.d..(i + 1) * self.d]
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn prior_precision(&self) -> f64 {
        self.prior_precision
    }

    fn margin(&self, i: usize, x: &[f64]) -> f64 {
        let a = self.feature_row(i);
        self.labels[i] * a.iter().zip(x).map(|(a, x)| a * x).sum::<f64>()
    }

    /// `Σ_i log(1 + exp(−y_i a_iᵀx))`, the likelihood part without the prior.
    pub fn likelihood_nll(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.d, x.len())?;
        Ok((0..self.n).map(|i| softplus(-self.margin(i, x))).sum())
    }

    /// Power iteration for `λ_max(AᵀA)`.
    fn gram_top_eigenvalue(&self, iters: usize) -> f64 {
        let d = self.d;
        let mut v = vec![1.0 / (d as f64).sqrt(); d];
        let mut av = vec![0.0; self.n];
        let mut w = vec![0.0; d];
        let mut lambda = 0.0;
        for _ in 0..iters {
            for (i, slot) in av.iter_mut().enumerate() {
                *slot = self.feature_row(i).iter().zip(&v).map(|(a, b)| a * b).sum();
            }
            w.fill(0.0);
            for (i, &s) in av.iter().enumerate() {
                for (wj, aj) in w.iter_mut().zip(self.feature_row(i)) {
                    *wj += s * aj;
                }
            }
            let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 {
                return 0.0;
            }
            lambda = v.iter().zip(&w).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(&w).for_each(|(vi, wi)| *vi = wi / norm);
        }
        lambda
    }
}

impl Potential for LogisticPotential {
    fn n_components(&self) -> usize {
        self.n
    }

    fn dim(&self) -> usize {
        self.d
    }

    fn smoothness(&self) -> f64 {
        self.smoothness
    }

    fn strong_convexity(&self) -> f64 {
        self.prior_precision
    }

    fn write_component_gradient(&self, i: usize, x: &[f64], out: &mut [f64]) {
        let y = self.labels[i];
        let coef = -y * sigmoid(-self.margin(i, x));
        let prior = self.prior_precision / self.n as f64;
        for ((o, a), xj) in out.iter_mut().zip(self.feature_row(i)).zip(x) {
            *o = prior * xj + coef * a;
        }
    }

    fn component_value(&self, i: usize, x: &[f64]) -> f64 {
        let sq: f64 = x.iter().map(|v| v * v).sum();
        self.prior_precision / (2.0 * self.n as f64) * sq + softplus(-self.margin(i, x))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn dot(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    fn small_logistic(seed: u64, n: usize, d: usize) -> LogisticPotential {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let features = (0..n)
            .map(|_| (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
            .collect();
        let labels = (0..n).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
        LogisticPotential::new(features, labels, 0.7).unwrap()
    }

    fn central_diff<F: Fn(&[f64]) -> f64>(f: F, x: &[f64], h: f64) -> Vec<f64> {
        (0..x.len())
            .map(|j| {
                let mut xp = x.to_vec();
                let mut xm = x.to_vec();
                xp[j] += h;
                xm[j] -= h;
                (f(&xp) - f(&xm)) / (2.0 * h)
            })
            .collect()
    }

    fn rel_err(a: &[f64], b: &[f64]) -> f64 {
        let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt().max(1e-3);
        num / den
    }

    #[test]
    fn quadratic_component_gradient_at_origin_data() {
        let model = QuadraticPotential::new(vec![vec![0.0, 0.0]], DMatrix::identity(2, 2)).unwrap();
        assert_eq!(model.gradient_component(0, &[1.0, 0.0]).unwrap(), vec![2.0, 0.0]);
        assert_eq!(model.potential_full(&[0.0, 0.0]).unwrap(), 0.0);
    }

    #[test]
    fn logistic_component_gradient_at_zero() {
        let model = LogisticPotential::new(vec![vec![1.0]], vec![1.0], 1e-9).unwrap();
        let g = model.gradient_component(0, &[0.0]).unwrap();
        assert_eq!(g, vec![-0.5]);
    }

    #[test]
    fn checked_operations_reject_bad_input() {
        let model = QuadraticPotential::generate(1, 4, 3, 10.0, 1.0).unwrap();
        assert!(matches!(
            model.gradient_component(4, &[0.0; 3]),
            Err(Error::IndexOutOfRange { index: 4, len: 4 })
        ));
        assert!(matches!(
            model.gradient_full(&[0.0; 2]),
            Err(Error::DimensionMismatch { expected: 3, found: 2 })
        ));
        assert!(model.potential_full(&[0.0; 4]).is_err());
        assert!(QuadraticPotential::generate(1, 4, 3, 1.0, 2.0).is_err());
        assert!(QuadraticPotential::generate(1, 0, 3, 10.0, 1.0).is_err());
        assert!(LogisticPotential::new(vec![vec![1.0]], vec![0.0], 1.0).is_err());
        assert!(LogisticPotential::new(vec![vec![1.0]], vec![1.0], 0.0).is_err());
    }

    #[test]
    fn generated_precision_has_pinned_spectrum() {
        let model = QuadraticPotential::generate(3, 10, 5, 10.0, 1.0).unwrap();
        let (lo, hi) = model.precision_spectrum();
        assert!((lo - 1.0).abs() < 1e-10, "{lo}");
        assert!((hi - 10.0).abs() < 1e-10, "{hi}");
        assert!((model.smoothness() - 20.0).abs() < 1e-9);
        assert!((model.condition_number() - 10.0).abs() < 1e-9);
    }

    #[test]
    fn full_gradient_vanishes_at_data_mean() {
        let model = QuadraticPotential::generate(11, 1000, 5, 10.0, 1.0).unwrap();
        let (mean, _) = model.target_moments();
        let g = model.gradient_full(&mean).unwrap();
        // brute-force sum over components, independent of the accumulation helper
        let mut brute = [0.0; 5];
        for i in 0..1000 {
            let gi = model.gradient_component(i, &mean).unwrap();
            for j in 0..5 {
                brute[j] += gi[j];
            }
        }
        for j in 0..5 {
            assert!(g[j].abs() < 1e-12, "{g:?}");
            assert!((g[j] - brute[j]).abs() < 1e-12);
        }

        let equal = QuadraticPotential::new(vec![vec![1.5, -2.0]; 7], DMatrix::identity(2, 2)).unwrap();
        assert!(equal
            .gradient_full(&[1.5, -2.0])
            .unwrap()
            .iter()
            .all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn target_moments_complete_the_square() {
        let one = QuadraticPotential::new(vec![vec![3.0]], DMatrix::identity(1, 1)).unwrap();
        let (mean, cov) = one.target_moments();
        assert_eq!(mean, vec![3.0]);
        assert!((cov[(0, 0)] - 0.5).abs() < 1e-15);

        let two = QuadraticPotential::new(vec![vec![0.0], vec![2.0]], DMatrix::identity(1, 1)).unwrap();
        let (mean, cov) = two.target_moments();
        assert_eq!(mean, vec![1.0]);
        assert!((cov[(0, 0)] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn mean_potential_matches_quadrature_in_one_dimension() {
        let p = 3.0;
        let model =
            QuadraticPotential::new(vec![vec![-1.0], vec![0.5], vec![2.0]], DMatrix::from_element(1, 1, p)).unwrap();
        // trapezoid quadrature of f e^{-f} / ∫ e^{-f} over ±12 sd
        let (mean, cov) = model.target_moments();
        let sd = cov[(0, 0)].sqrt();
        let steps = 200_000;
        let (a, b) = (mean[0] - 12.0 * sd, mean[0] + 12.0 * sd);
        let dx = (b - a) / steps as f64;
        let (mut num, mut den) = (0.0, 0.0);
        for k in 0..=steps {
            let x = a + k as f64 * dx;
            let w = if k == 0 || k == steps { 0.5 } else { 1.0 };
            let f = model.value(&[x]);
            let e = (-(f - model.offset)).exp();
            num += w * f * e;
            den += w * e;
        }
        assert!((num / den - model.mean_potential()).abs() < 1e-9);
    }

    #[test]
    fn logistic_potential_at_origin_is_n_log_two() {
        let model = small_logistic(5, 13, 3);
        let f = model.potential_full(&[0.0; 3]).unwrap();
        assert!((f - 13.0 * 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn logistic_label_flip_is_reflection() {
        let model = small_logistic(9, 20, 4);
        let flipped = LogisticPotential::new(
            (0..20).map(|i| model.feature_row(i).to_vec()).collect(),
            model.labels().iter().map(|y| -y).collect(),
            model.prior_precision(),
        )
        .unwrap();
        let x = [0.3, -1.2, 0.8, 0.05];
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        let g = model.gradient_full(&neg).unwrap();
        let gf = flipped.gradient_full(&x).unwrap();
        for j in 0..4 {
            assert!((gf[j] + g[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let quad = QuadraticPotential::generate(2, 30, 4, 10.0, 1.0).unwrap();
        let logi = small_logistic(4, 30, 4);
        let models: [&dyn Potential; 2] = [&quad, &logi];
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for model in models {
            for _ in 0..6 {
                let x: Vec<f64> = (0..4).map(|_| 2.0 * rng.sample::<f64, _>(StandardNormal)).collect();
                let fd = central_diff(|y| model.value(y), &x, 1e-6);
                let g = model.gradient_full(&x).unwrap();
                assert!(rel_err(&g, &fd) < 1e-5, "{g:?} vs {fd:?}");
                for i in [0, 7, 29] {
                    let fd = central_diff(|y| model.component_value(i, y), &x, 1e-6);
                    let gi = model.gradient_component(i, &x).unwrap();
                    assert!(rel_err(&gi, &fd) < 1e-5, "component {i}: {gi:?} vs {fd:?}");
                }
            }
        }
    }

    #[test]
    fn quadratic_gradient_differences_are_component_independent() {
        let model = QuadraticPotential::generate(8, 50, 5, 10.0, 1.0).unwrap();
        let x = [0.1, 2.0, -1.0, 3.0, 0.5];
        let y = [1.1, -0.5, 0.0, 2.5, 0.7];
        let p = model.precision();
        let expected: Vec<f64> = (0..5)
            .map(|r| (2.0 / 50.0) * (0..5).map(|c| p[(r, c)] * (x[c] - y[c])).sum::<f64>())
            .collect();
        for i in 0..50 {
            let gx = model.gradient_component(i, &x).unwrap();
            let gy = model.gradient_component(i, &y).unwrap();
            for j in 0..5 {
                assert!((gx[j] - gy[j] - expected[j]).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn secant_inequalities_hold() {
        let quad = QuadraticPotential::generate(21, 40, 5, 10.0, 1.0).unwrap();
        let logi = small_logistic(22, 40, 5);
        let models: [&dyn Potential; 2] = [&quad, &logi];
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for model in models {
            let (m, l) = (model.strong_convexity(), model.smoothness());
            for _ in 0..100 {
                let x: Vec<f64> = (0..5).map(|_| 3.0 * rng.sample::<f64, _>(StandardNormal)).collect();
                let y: Vec<f64> = (0..5).map(|_| 3.0 * rng.sample::<f64, _>(StandardNormal)).collect();
                let gx = model.gradient_full(&x).unwrap();
                let gy = model.gradient_full(&y).unwrap();
                let diff: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a - b).collect();
                let gd: Vec<f64> = gx.iter().zip(&gy).map(|(a, b)| a - b).collect();
                let inner = dot(&gd, &diff);
                let sq = dot(&diff, &diff);
                assert!(m * sq <= inner * (1.0 + 1e-10), "{m} {sq} {inner}");
                assert!(inner <= l * sq * (1.0 + 1e-10), "{l} {sq} {inner}");
            }
        }
    }

    #[test]
    fn stable_log_loss_does_not_overflow() {
        assert_eq!(softplus(1000.0), 1000.0);
        assert_eq!(softplus(-1000.0), 0.0);
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-16);
        assert_eq!(sigmoid(-1000.0), 0.0);
        assert_eq!(sigmoid(1000.0), 1.0);
    }
}
