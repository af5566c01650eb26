//! Test-state families in the truncated number basis and the photon-loss
//! channel applied before measurement.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::fock::{rotate_matrix, CMatrix, DensityMatrix, C64};

/// Truncation leakage above which a preparation carries a warning.
pub const LEAKAGE_WARN: f64 = 1e-6;

pub const DEFAULT_TRANSMISSIVITY: f64 = 0.95;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StateKind {
    /// Even cat `|α⟩ + |−α⟩` with real `α`.
    Cat { alpha: f64 },
    /// Squeezed vacuum; `variance_ratio` is the squeezed-quadrature variance
    /// over the vacuum variance. `angle` rotates the squeezed axis away
    /// from `X`.
    SqueezedVacuum {
        variance_ratio: f64,
        #[serde(default)]
        angle: f64,
    },
    Fock { n: usize },
}

impl StateKind {
    /// `⟨n̂⟩` of the untruncated, lossless state.
    pub fn analytic_mean_photon(&self) -> f64 {
        match *self {
            StateKind::Cat { alpha } => {
                let a2 = alpha * alpha;
                a2 * a2.tanh()
            }
            StateKind::SqueezedVacuum { variance_ratio, .. } => squeeze_parameter(variance_ratio).sinh().powi(2),
            StateKind::Fock { n } => n as f64,
        }
    }

    pub fn label(&self) -> String {
        match *self {
            StateKind::Cat { alpha } => format!("cat(alpha={alpha})"),
            StateKind::SqueezedVacuum { variance_ratio, .. } => format!("squeezed(ratio={variance_ratio})"),
            StateKind::Fock { n } => format!("fock(n={n})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSpec {
    #[serde(flatten)]
    pub kind: StateKind,
    pub truncation: usize,
    #[serde(default = "default_transmissivity")]
    pub loss_transmissivity: f64,
}

fn default_transmissivity() -> f64 {
    DEFAULT_TRANSMISSIVITY
}

/// A prepared test state: the pure state, the state after loss (the
/// reconstruction target), and truncation metadata.
#[derive(Debug, Clone)]
pub struct PreparedState {
    pub pure: DensityMatrix,
    pub rho_true: DensityMatrix,
    /// Probability mass of the untruncated state above `t`.
    pub leakage: f64,
    pub warning: Option<String>,
}

impl StateSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.loss_transmissivity > 0.0 && self.loss_transmissivity <= 1.0) {
            return invalid(format!("transmissivity must lie in (0, 1], got {}", self.loss_transmissivity));
        }
        match self.kind {
            StateKind::Cat { alpha } => {
                if !(alpha > 0.0 && alpha.is_finite()) {
                    return invalid(format!("cat amplitude must be positive, got {alpha}"));
                }
                if self.truncation < 2 {
                    return invalid("cat states need truncation t >= 2");
                }
            }
            StateKind::SqueezedVacuum { variance_ratio, angle } => {
                if !(variance_ratio > 0.0 && variance_ratio <= 1.0) {
                    return invalid(format!("variance ratio must lie in (0, 1], got {variance_ratio}"));
                }
                if !angle.is_finite() {
                    return invalid("squeezing angle must be finite");
                }
            }
            StateKind::Fock { n } => {
                if n > self.truncation {
                    return invalid(format!("Fock state n = {n} exceeds truncation {}", self.truncation));
                }
            }
        }
        Ok(())
    }

    pub fn prepare(&self) -> Result<PreparedState> {
        self.validate()?;
        let t = self.truncation;
        let (pure, leakage) = match self.kind {
            StateKind::Cat { alpha } => (make_cat(alpha, t)?, cat_leakage(alpha, t)),
            StateKind::SqueezedVacuum { variance_ratio, angle } => {
                let rho = make_squeezed_vacuum(variance_ratio, t)?;
                let rho = if angle != 0.0 {
                    DensityMatrix::from_matrix_normalized(&rotate_matrix(rho.matrix(), angle))
                } else {
                    rho
                };
                (rho, squeezed_leakage(variance_ratio, t))
            }
            StateKind::Fock { n } => (make_fock(n, t)?, 0.0),
        };
        let rho_true = apply_loss(&pure, self.loss_transmissivity)?;
        let warning = (leakage > LEAKAGE_WARN)
            .then(|| format!("{} truncated at t = {t} leaks {leakage:.3e} of its norm", self.kind.label()));
        Ok(PreparedState { pure, rho_true, leakage, warning })
    }
}

fn squeeze_parameter(variance_ratio: f64) -> f64 {
    -0.5 * variance_ratio.ln()
}

fn cat_amplitudes(alpha: f64, t: usize) -> Vec<C64> {
    let mut amp = vec![C64::new(0.0, 0.0); t + 1];
    let mut c = 1.0;
    for (n, slot) in amp.iter_mut().enumerate() {
        if n > 0 {
            c *= alpha / (n as f64).sqrt();
        }
        if n % 2 == 0 {
            *slot = C64::new(c, 0.0);
        }
    }
    amp
}

/// Even cat state, renormalized after truncation.
pub fn make_cat(alpha: f64, t: usize) -> Result<DensityMatrix> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return invalid(format!("cat amplitude must be positive, got {alpha}"));
    }
    if t < 2 {
        return invalid("cat states need truncation t >= 2");
    }
    DensityMatrix::from_pure(&cat_amplitudes(alpha, t))
}

/// Norm of the untruncated even cat above photon number `t`.
pub fn cat_leakage(alpha: f64, t: usize) -> f64 {
    // |c_n|² ∝ α^(2n)/n! on even n, normalized by cosh(α²)
    let a2 = alpha * alpha;
    let ln_cosh = a2 + (-2.0 * a2).exp().ln_1p() - std::f64::consts::LN_2;
    let mut ln_term = 0.0;
    let mut tail = 0.0;
    for n in 1..t + 4000 {
        ln_term += a2.ln() - (n as f64).ln();
        if n > t && n % 2 == 0 {
            let term = (ln_term - ln_cosh).exp();
            tail += term;
            if n as f64 > a2 && term < 1e-18 * tail.max(1e-300) {
                break;
            }
        }
    }
    tail
}

fn squeezed_amplitudes(variance_ratio: f64, len: usize) -> Vec<f64> {
    let r = squeeze_parameter(variance_ratio);
    let th = r.tanh();
    let mut amp = vec![0.0; len];
    let mut c = (1.0 / r.cosh()).sqrt();
    for n in (0..len).step_by(2) {
        amp[n] = c;
        let m = (n / 2) as f64;
        c *= -th * ((2.0 * m + 1.0) / (2.0 * m + 2.0)).sqrt();
    }
    amp
}

/// Squeezed vacuum with the squeezed quadrature along `X`.
pub fn make_squeezed_vacuum(variance_ratio: f64, t: usize) -> Result<DensityMatrix> {
    if !(variance_ratio > 0.0 && variance_ratio <= 1.0) {
        return invalid(format!("variance ratio must lie in (0, 1], got {variance_ratio}"));
    }
    let amp: Vec<C64> = squeezed_amplitudes(variance_ratio, t + 1).into_iter().map(|c| C64::new(c, 0.0)).collect();
    DensityMatrix::from_pure(&amp)
}

pub fn squeezed_leakage(variance_ratio: f64, t: usize) -> f64 {
    let th2 = squeeze_parameter(variance_ratio).tanh().powi(2);
    if th2 == 0.0 {
        return 0.0;
    }
    let mut p = 1.0 / squeeze_parameter(variance_ratio).cosh();
    let mut tail = 0.0;
    let mut n = 0usize;
    while n < t + 100_000 {
        if n > t {
            tail += p;
            if p < 1e-18 * tail {
                break;
            }
        }
        let m = (n / 2) as f64;
        p *= th2 * (2.0 * m + 1.0) / (2.0 * m + 2.0);
        n += 2;
    }
    tail
}

pub fn make_fock(n: usize, t: usize) -> Result<DensityMatrix> {
    if n > t {
        return invalid(format!("Fock state n = {n} exceeds truncation {t}"));
    }
    let mut m = CMatrix::zeros(t + 1, t + 1);
    m[(n, n)] = C64::new(1.0, 0.0);
    DensityMatrix::new(m)
}

/// `√(C(n,k) τ^(n−k) (1−τ)^k)`, the amplitude `⟨n−k|E_k|n⟩` of the loss
/// Kraus operator that removes `k` photons.
pub fn loss_kraus_coefficient(n: usize, k: usize, tau: f64) -> f64 {
    if k > n {
        return 0.0;
    }
    let mut binom = 1.0;
    for j in 0..k {
        binom *= (n - j) as f64 / (j + 1) as f64;
    }
    (binom * tau.powi((n - k) as i32) * (1.0 - tau).powi(k as i32)).sqrt()
}

/// Table `coef[n][k]` for `n, k < dim`.
pub(crate) fn loss_kraus_table(dim: usize, tau: f64) -> Vec<Vec<f64>> {
    (0..dim).map(|n| (0..dim).map(|k| loss_kraus_coefficient(n, k, tau)).collect()).collect()
}

fn check_tau(tau: f64) -> Result<()> {
    if !(tau > 0.0 && tau <= 1.0) {
        return invalid(format!("transmissivity must lie in (0, 1], got {tau}"));
    }
    Ok(())
}

/// `Σ_k E_k M E_k†` on a raw matrix.
pub fn loss_channel_matrix(m: &CMatrix, tau: f64) -> Result<CMatrix> {
    check_tau(tau)?;
    let d = m.nrows();
    if tau == 1.0 {
        return Ok(m.clone());
    }
    let coef = loss_kraus_table(d, tau);
    Ok(CMatrix::from_fn(d, d, |i, j| {
        let mut acc = C64::new(0.0, 0.0);
        for k in 0..d - i.max(j) {
            acc += m[(i + k, j + k)] * (coef[i + k][k] * coef[j + k][k]);
        }
        acc
    }))
}

/// Adjoint channel `Σ_k E_k† M E_k`; maps ideal POVM elements to
/// efficiency-`τ` ones.
pub fn loss_dual_matrix(m: &CMatrix, tau: f64) -> Result<CMatrix> {
    check_tau(tau)?;
    let d = m.nrows();
    if tau == 1.0 {
        return Ok(m.clone());
    }
    let coef = loss_kraus_table(d, tau);
    Ok(CMatrix::from_fn(d, d, |i, j| {
        let mut acc = C64::new(0.0, 0.0);
        for k in 0..=i.min(j) {
            acc += m[(i - k, j - k)] * (coef[i][k] * coef[j][k]);
        }
        acc
    }))
}

/// Photon loss through a beamsplitter of transmissivity `τ`.
pub fn apply_loss(rho: &DensityMatrix, tau: f64) -> Result<DensityMatrix> {
    Ok(DensityMatrix::from_matrix_normalized(&loss_channel_matrix(rho.matrix(), tau)?))
}
