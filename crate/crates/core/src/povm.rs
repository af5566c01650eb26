//! Quadrature measurement operators.
//!
//! The ideal homodyne element is `U(θ)†|x⟩⟨x|U(θ)`. Detector efficiency
//! `η` enters through the adjoint of the loss channel,
//! `Π_η(x|θ) = Σ_k E_k(η)† U(θ)†|x⟩⟨x|U(θ) E_k(η)`, with the same Kraus
//! operators as [`crate::states::apply_loss`]. Phase rotation and loss
//! commute, so operators are assembled as: ideal real matrix at `θ = 0`,
//! then the loss adjoint, then the phase factors `e^(i(m−n)θ)`.

use std::collections::HashMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::binning::PhaseHistogram;
use crate::error::{invalid, Result};
use crate::fock::{fill_wavefunctions, CMatrix, MeasurementOperator, HermitianOperator, C64};
use crate::mle::LikelihoodModel;
use crate::quadrature::{panels, GaussLegendre};
use crate::states::loss_kraus_table;

pub const DEFAULT_EFFICIENCY: f64 = 0.9;

/// Distance beyond `√(2t+1)` at which tail integrals are cut off.
const TAIL_MARGIN: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyModel {
    pub eta: f64,
}

impl Default for EfficiencyModel {
    fn default() -> Self {
        Self { eta: DEFAULT_EFFICIENCY }
    }
}

impl EfficiencyModel {
    pub fn new(eta: f64) -> Result<Self> {
        check_eta(eta)?;
        Ok(Self { eta })
    }
}

fn check_eta(eta: f64) -> Result<()> {
    if !(eta > 0.0 && eta <= 1.0) {
        return invalid(format!("detection efficiency must lie in (0, 1], got {eta}"));
    }
    Ok(())
}

/// How a histogram bin is turned into a measurement operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinMode {
    /// Point density at the bin centre times the bin width.
    Center,
    /// Point operator integrated over the bin.
    Integral,
}

/// Gauss–Legendre order per bin: `max(20, t + 2)`.
pub fn default_quadrature_order(t: usize) -> usize {
    (t + 2).max(20)
}

/// `Σ_k E_k† M E_k` followed by the phase factors, for a real symmetric
/// ideal-measurement matrix `M` at `θ = 0`.
fn finish_operator(ideal: &DMatrix<f64>, theta: f64, kraus: &[Vec<f64>]) -> MeasurementOperator {
    let d = ideal.nrows();
    let phases: Vec<C64> = (0..d).map(|n| C64::from_polar(1.0, n as f64 * theta)).collect();
    let mut out = CMatrix::zeros(d, d);
    for i in 0..d {
        for j in i..d {
            let mut acc = 0.0;
            for k in 0..=i.min(j) {
                acc += kraus[i][k] * kraus[j][k] * ideal[(i - k, j - k)];
            }
            let v = phases[i] * phases[j].conj() * acc;
            out[(i, j)] = v;
            out[(j, i)] = v.conj();
        }
    }
    HermitianOperator::from_matrix_hermitized(&out)
}

fn outer_wavefunctions(x: f64, psi: &mut [f64], acc: &mut DMatrix<f64>, weight: f64) {
    fill_wavefunctions(x, psi);
    let d = psi.len();
    for j in 0..d {
        let wj = weight * psi[j];
        for i in 0..d {
            acc[(i, j)] += psi[i] * wj;
        }
    }
}

/// `∫_a^b |x⟩⟨x| dx` on one Gauss–Legendre panel.
fn ideal_integral(a: f64, b: f64, dim: usize, rule: &GaussLegendre) -> DMatrix<f64> {
    let mut acc = DMatrix::zeros(dim, dim);
    let mut psi = vec![0.0; dim];
    for (x, w) in rule.on_interval(a, b) {
        outer_wavefunctions(x, &mut psi, &mut acc, w);
    }
    acc
}

/// Density-valued element `Π_η(x|θ)`: `Tr(Π ρ)` is the probability density
/// of outcome `x` at phase `θ`.
pub fn point_povm(x: f64, theta: f64, t: usize, eta: f64) -> Result<MeasurementOperator> {
    check_eta(eta)?;
    if !x.is_finite() || !theta.is_finite() {
        return invalid("quadrature value and phase must be finite");
    }
    let d = t + 1;
    let mut ideal = DMatrix::zeros(d, d);
    let mut psi = vec![0.0; d];
    outer_wavefunctions(x, &mut psi, &mut ideal, 1.0);
    Ok(finish_operator(&ideal, theta, &loss_kraus_table(d, eta)))
}

/// Reusable builder for many point operators at one `(t, η)`.
pub struct PointPovmBuilder {
    dim: usize,
    kraus: Vec<Vec<f64>>,
    psi: Vec<f64>,
    ideal: DMatrix<f64>,
}

impl PointPovmBuilder {
    pub fn new(t: usize, eta: f64) -> Result<Self> {
        check_eta(eta)?;
        let dim = t + 1;
        Ok(Self { dim, kraus: loss_kraus_table(dim, eta), psi: vec![0.0; dim], ideal: DMatrix::zeros(dim, dim) })
    }

    pub fn build(&mut self, x: f64, theta: f64) -> MeasurementOperator {
        self.ideal.fill(0.0);
        outer_wavefunctions(x, &mut self.psi, &mut self.ideal, 1.0);
        finish_operator(&self.ideal, theta, &self.kraus)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
}

/// Probability-valued element `∫_a^b Π_η(x|θ) dx`, by one Gauss–Legendre
/// panel of the given order.
pub fn integrated_povm(a: f64, b: f64, theta: f64, t: usize, eta: f64, quadrature_order: usize) -> Result<MeasurementOperator> {
    check_eta(eta)?;
    check_interval(a, b)?;
    let rule = GaussLegendre::new(quadrature_order)?;
    let d = t + 1;
    Ok(finish_operator(&ideal_integral(a, b, d, &rule), theta, &loss_kraus_table(d, eta)))
}

/// `width · Π_η((a+b)/2 | θ)`, the midpoint approximation of the bin
/// probability operator.
pub fn center_povm_for_bin(a: f64, b: f64, theta: f64, t: usize, eta: f64) -> Result<MeasurementOperator> {
    check_interval(a, b)?;
    let point = point_povm(0.5 * (a + b), theta, t, eta)?;
    Ok(HermitianOperator::from_matrix_hermitized(&(point.into_matrix() * C64::new(b - a, 0.0))))
}

/// Operators for `(−∞, lower)` and `[upper, ∞)`.
///
/// The tails are integrated with composite panels out to
/// `√(2t+1) + 20`, beyond which every `ψ_n` with `n ≤ t` is negligible.
pub fn tail_povms(
    lower: f64,
    upper: f64,
    theta: f64,
    t: usize,
    eta: f64,
    quadrature_order: usize,
) -> Result<(MeasurementOperator, MeasurementOperator)> {
    check_eta(eta)?;
    check_interval(lower, upper)?;
    let rule = GaussLegendre::new(quadrature_order)?;
    let d = t + 1;
    let far = (2.0 * t as f64 + 1.0).sqrt() + TAIL_MARGIN;
    let composite = |a: f64, b: f64| {
        let mut acc = DMatrix::zeros(d, d);
        if b > a {
            for (lo, hi) in panels(a, b, 1.0) {
                acc += ideal_integral(lo, hi, d, &rule);
            }
        }
        acc
    };
    let kraus = loss_kraus_table(d, eta);
    let low = composite((-far).min(lower - 1.0), lower);
    let high = composite(upper, far.max(upper + 1.0));
    Ok((finish_operator(&low, theta, &kraus), finish_operator(&high, theta, &kraus)))
}

fn check_interval(a: f64, b: f64) -> Result<()> {
    if !(a < b) || !a.is_finite() || !b.is_finite() {
        return invalid(format!("bin requires finite a < b, got [{a}, {b})"));
    }
    Ok(())
}

/// One histogram bin with its operator.
#[derive(Debug, Clone)]
pub struct BinOperator {
    pub low: f64,
    pub high: f64,
    pub count: u64,
    pub operator: MeasurementOperator,
}

#[derive(Debug, Clone)]
pub struct PhaseBinOperators {
    pub theta: f64,
    pub bins: Vec<BinOperator>,
}

#[derive(Debug, Clone)]
pub struct BinOperatorSet {
    pub mode: BinMode,
    pub efficiency: EfficiencyModel,
    pub truncation: usize,
    pub phases: Vec<PhaseBinOperators>,
}

impl BinOperatorSet {
    pub fn len(&self) -> usize {
        self.phases.iter().map(|p| p.bins.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn operators(&self) -> impl Iterator<Item = &BinOperator> {
        self.phases.iter().flat_map(|p| p.bins.iter())
    }

    /// Bin counts become multiplicities of the likelihood terms.
    pub fn likelihood_model(&self) -> Result<LikelihoodModel> {
        LikelihoodModel::from_weighted(self.truncation + 1, self.operators().map(|b| (&b.operator, b.count)))
    }
}

/// One operator per nonempty bin per phase.
pub fn build_bin_operator_set(histograms: &[PhaseHistogram], mode: BinMode, t: usize, eta: f64) -> Result<BinOperatorSet> {
    build_bin_operator_set_with_order(histograms, mode, t, eta, default_quadrature_order(t))
}

pub fn build_bin_operator_set_with_order(
    histograms: &[PhaseHistogram],
    mode: BinMode,
    t: usize,
    eta: f64,
    quadrature_order: usize,
) -> Result<BinOperatorSet> {
    check_eta(eta)?;
    let d = t + 1;
    let rule = GaussLegendre::new(quadrature_order)?;
    let kraus = loss_kraus_table(d, eta);
    let mut builder = PointPovmBuilder::new(t, eta)?;
    // ideal integrals depend only on the edges, which coincide across
    // phases when bins are anchored to a common lattice
    let mut ideal_cache: HashMap<(u64, u64), DMatrix<f64>> = HashMap::new();

    let mut phases = Vec::with_capacity(histograms.len());
    for h in histograms {
        let mut bins = Vec::new();
        for (low, high, count) in h.bins() {
            if count == 0 {
                continue;
            }
            let operator = match mode {
                BinMode::Center => {
                    let p = builder.build(0.5 * (low + high), h.theta);
                    HermitianOperator::from_matrix_hermitized(&(p.into_matrix() * C64::new(high - low, 0.0)))
                }
                BinMode::Integral => {
                    let ideal = ideal_cache
                        .entry((low.to_bits(), high.to_bits()))
                        .or_insert_with(|| ideal_integral(low, high, d, &rule));
                    finish_operator(ideal, h.theta, &kraus)
                }
            };
            bins.push(BinOperator { low, high, count, operator });
        }
        phases.push(PhaseBinOperators { theta: h.theta, bins });
    }
    Ok(BinOperatorSet { mode, efficiency: EfficiencyModel { eta }, truncation: t, phases })
}
