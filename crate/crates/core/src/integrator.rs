//! Exact one-step transition of underdamped Langevin dynamics with the
//! gradient frozen at the current iterate:
//!
//! ```text
//! dV = −g dt − γξ V dt + √(2γ) dB,    dX = ξ V dt
//! ```
//!
//! Over a step `h` this is a linear SDE, so the transition is a Gaussian with
//! closed-form mean and a 2×2 covariance shared by every coordinate.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Dissipation `γ`, inverse mass `ξ` and step size `h`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DynamicsParams {
    gamma: f64,
    xi: f64,
    step: f64,
}

impl DynamicsParams {
    pub fn new(gamma: f64, xi: f64, step: f64) -> Result<Self> {
        for (name, v) in [("gamma", gamma), ("xi", xi), ("step", step)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        let params = Self { gamma, xi, step };
        if !params.delta().is_finite() {
            return Err(Error::InvalidParameter("gamma * xi * step overflows".into()));
        }
        Ok(params)
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn xi(&self) -> f64 {
        self.xi
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    /// `δ = γ ξ h`
    pub fn delta(&self) -> f64 {
        self.gamma * self.xi * self.step
    }

    pub fn with_step(&self, step: f64) -> Result<Self> {
        Self::new(self.gamma, self.xi, step)
    }
}

/// Drift coefficients and noise covariance of one exact step.
///
/// Mean update: `x' = x + c_xv v − c_xg g`, `v' = c_vv v − c_vg g`.
/// Per-coordinate noise covariance `[[s_xx, s_xv], [s_xv, s_vv]]` with lower
/// Cholesky factor `[[l_xx, 0], [l_vx, l_vv]]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseCoefficients {
    pub c_vv: f64,
    pub c_vg: f64,
    pub c_xv: f64,
    pub c_xg: f64,
    pub s_vv: f64,
    pub s_xv: f64,
    pub s_xx: f64,
    pub l_xx: f64,
    pub l_vx: f64,
    pub l_vv: f64,
    /// `s_vv − s_xv²/s_xx`, before clamping into `l_vv`.
    pub discriminant: f64,
}

// Below this δ the cancelling combinations are summed as power series.
const SERIES_CUTOFF: f64 = 1.0;

/// `e^{−δ} − 1 + δ`
fn exp_remainder2(delta: f64) -> f64 {
    if delta < SERIES_CUTOFF {
        // Σ_{n≥2} (−δ)^n / n!
        let mut term = delta * delta / 2.0;
        let mut sum = 0.0f64;
        let mut n = 2.0;
        while term.abs() > f64::EPSILON * 1e-3 * sum.abs() && n < 60.0 {
            sum += term;
            n += 1.0;
            term *= -delta / n;
        }
        sum
    } else {
        delta + (-delta).exp_m1()
    }
}

/// `2δ − 3 + 4e^{−δ} − e^{−2δ}`, which is `O(δ³)` as `δ → 0`.
fn position_variance_core(delta: f64) -> f64 {
    if delta < SERIES_CUTOFF {
        // Σ_{n≥3} (−1)^n (4 − 2^n) δ^n / n!
        let mut pow_over_fact = delta * delta * delta / 6.0;
        let mut two_n = 8.0;
        let mut sign = -1.0;
        let mut sum = 0.0f64;
        let mut n = 3.0;
        loop {
            let term = sign * (4.0 - two_n) * pow_over_fact;
            sum += term;
            if term.abs() <= f64::EPSILON * 1e-3 * sum.abs() || n > 80.0 {
                break sum;
            }
            n += 1.0;
            pow_over_fact *= delta / n;
            two_n *= 2.0;
            sign = -sign;
        }
    } else {
        let e = (-delta).exp();
        2.0 * delta - 3.0 + 4.0 * e - e * e
    }
}

pub fn noise_coefficients(params: &DynamicsParams) -> NoiseCoefficients {
    let DynamicsParams { gamma, xi, step: _ } = *params;
    let delta = params.delta();
    // 1 − e^{−δ} and 1 − e^{−2δ}
    let one_m = -(-delta).exp_m1();
    let one_m2 = -(-2.0 * delta).exp_m1();
    let r2 = exp_remainder2(delta);
    let core = position_variance_core(delta);

    let g2xi = gamma * gamma * xi;
    let s_vv = one_m2 / xi;
    let s_xv = one_m * one_m / (gamma * xi);
    let s_xx = core / g2xi;

    // s_vv − s_xv²/s_xx = (one_m2·core − one_m⁴) / (core·ξ); the leading
    // δ⁴ terms only partially cancel (4/3 − 1), so the product form is stable.
    let discriminant = if core > 0.0 {
        (one_m2 * core - one_m.powi(4)) / (core * xi)
    } else {
        0.0
    };
    let l_xx = s_xx.max(0.0).sqrt();
    let l_vx = if l_xx > 0.0 { s_xv / l_xx } else { 0.0 };
    let l_vv = discriminant.max(0.0).sqrt();

    NoiseCoefficients {
        c_vv: (-delta).exp(),
        c_vg: one_m / (gamma * xi),
        c_xv: one_m / gamma,
        c_xg: r2 / g2xi,
        s_vv,
        s_xv,
        s_xx,
        l_xx,
        l_vx,
        l_vv,
        discriminant,
    }
}

impl NoiseCoefficients {
    /// Relative slack allowed on a negative discriminant before it counts as
    /// a coefficient bug rather than round-off.
    const DISCRIMINANT_SLACK: f64 = 1e-12;

    pub fn is_psd(&self) -> bool {
        self.s_xx >= 0.0 && self.s_vv >= 0.0 && self.discriminant >= -Self::DISCRIMINANT_SLACK * self.s_vv.abs()
    }

    fn check(&self) -> Result<()> {
        if self.is_psd() {
            Ok(())
        } else {
            Err(Error::NoiseCovariance(self.discriminant))
        }
    }
}

/// Position, momentum and iteration counter of one chain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainState {
    pub position: Vec<f64>,
    pub momentum: Vec<f64>,
    pub iteration: u64,
}

impl ChainState {
    pub fn new(position: Vec<f64>, momentum: Vec<f64>) -> Result<Self> {
        check_dim(position.len(), momentum.len())?;
        if position.iter().chain(&momentum).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("initial state"));
        }
        Ok(Self {
            position,
            momentum,
            iteration: 0,
        })
    }

    /// At rest at `position`.
    pub fn at_rest(position: Vec<f64>) -> Result<Self> {
        let d = position.len();
        Self::new(position, vec![0.0; d])
    }

    pub fn dim(&self) -> usize {
        self.position.len()
    }
}

/// Fills `e_x`, `e_v` coordinate-wise: `e_x = l_xx z₁`, `e_v = l_vx z₁ + l_vv z₂`.
pub fn fill_noise<R: Rng + ?Sized>(
    coeffs: &NoiseCoefficients,
    rng: &mut R,
    e_x: &mut [f64],
    e_v: &mut [f64],
) -> Result<()> {
    coeffs.check()?;
    check_dim(e_x.len(), e_v.len())?;
    for (ex, ev) in e_x.iter_mut().zip(e_v.iter_mut()) {
        let z1: f64 = rng.sample(StandardNormal);
        let z2: f64 = rng.sample(StandardNormal);
        *ex = coeffs.l_xx * z1;
        *ev = coeffs.l_vx * z1 + coeffs.l_vv * z2;
    }
    Ok(())
}

pub fn sample_noise<R: Rng + ?Sized>(
    coeffs: &NoiseCoefficients,
    d: usize,
    rng: &mut R,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut e_x = vec![0.0; d];
    let mut e_v = vec![0.0; d];
    fill_noise(coeffs, rng, &mut e_x, &mut e_v)?;
    Ok((e_x, e_v))
}

fn check_gradient(state: &ChainState, gradient: &[f64]) -> Result<()> {
    check_dim(state.dim(), gradient.len())?;
    if gradient.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("gradient"));
    }
    Ok(())
}

/// Deterministic part of the step (noise suppressed).
pub fn drift(state: &mut ChainState, gradient: &[f64], coeffs: &NoiseCoefficients) -> Result<()> {
    check_gradient(state, gradient)?;
    for ((x, v), g) in state.position.iter_mut().zip(state.momentum.iter_mut()).zip(gradient) {
        let v0 = *v;
        *x += coeffs.c_xv * v0 - coeffs.c_xg * g;
        *v = coeffs.c_vv * v0 - coeffs.c_vg * g;
    }
    state.iteration += 1;
    Ok(())
}

/// One exact step with gradient (or gradient estimate) `gradient`.
pub fn step<R: Rng + ?Sized>(
    state: &mut ChainState,
    gradient: &[f64],
    coeffs: &NoiseCoefficients,
    rng: &mut R,
) -> Result<()> {
    check_gradient(state, gradient)?;
    coeffs.check()?;
    for ((x, v), g) in state.position.iter_mut().zip(state.momentum.iter_mut()).zip(gradient) {
        let z1: f64 = rng.sample(StandardNormal);
        let z2: f64 = rng.sample(StandardNormal);
        let v0 = *v;
        *x += coeffs.c_xv * v0 - coeffs.c_xg * g + coeffs.l_xx * z1;
        *v = coeffs.c_vv * v0 - coeffs.c_vg * g + coeffs.l_vx * z1 + coeffs.l_vv * z2;
    }
    state.iteration += 1;
    Ok(())
}
