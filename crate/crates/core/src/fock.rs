//! Truncated Fock-space numerics.
//!
//! All matrices live in the span of `|0⟩..|t⟩` (dimension `t + 1`). The
//! quadrature convention has vacuum variance 1/2, so that
//! `n̂ = (X² + P² − 1) / 2` and `ψ₀(x) = π^(−1/4) e^(−x²/2)`.
//!
//! Phase evolution is `U(θ) = exp(−i n̂ θ)`; rotating an operator maps
//! `O ↦ U(θ)† O U(θ)`, i.e. entry `(m, n)` picks up `e^(i(m−n)θ)`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{invalid, Result, TomoError};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;

/// Tolerance on `max|M − M†|` for Hermitian inputs.
pub const HERMITIAN_TOL: f64 = 1e-12;
/// Tolerance on `|Tr ρ − 1|`.
pub const TRACE_TOL: f64 = 1e-10;
/// Smallest eigenvalue accepted for a density matrix.
pub const PSD_TOL: f64 = 1e-10;
/// Smallest eigenvalue accepted by [`matrix_sqrt`] before clipping to zero.
pub const SQRT_CLIP_TOL: f64 = 1e-8;

/// Photon-number truncation `t`; the Hilbert space has dimension `t + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct HilbertDim {
    t: usize,
}

impl HilbertDim {
    pub fn new(t: usize) -> Self {
        Self { t }
    }

    pub fn from_dim(dim: usize) -> Result<Self> {
        if dim == 0 {
            return invalid("Hilbert space dimension must be at least 1");
        }
        Ok(Self { t: dim - 1 })
    }

    pub fn truncation(self) -> usize {
        self.t
    }

    pub fn dim(self) -> usize {
        self.t + 1
    }
}

/// `ψ₀(x) .. ψ_t(x)` at a single quadrature value.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureWavefunctionTable {
    pub x: f64,
    pub values: Vec<f64>,
}

impl QuadratureWavefunctionTable {
    pub fn get(&self, n: usize) -> f64 {
        self.values[n]
    }
}

/// Harmonic-oscillator eigenfunctions `⟨x|n⟩` for `n = 0..=t`.
pub fn wavefunctions(x: f64, t: usize) -> Result<QuadratureWavefunctionTable> {
    if !x.is_finite() {
        return invalid(format!("quadrature value must be finite, got {x}"));
    }
    let mut values = vec![0.0; t + 1];
    fill_wavefunctions(x, &mut values);
    Ok(QuadratureWavefunctionTable { x, values })
}

/// Allocation-free variant of [`wavefunctions`]; fills `out[n] = ψ_n(x)`.
pub(crate) fn fill_wavefunctions(x: f64, out: &mut [f64]) {
    if out.is_empty() {
        return;
    }
    out[0] = PI.powf(-0.25) * (-0.5 * x * x).exp();
    if out.len() > 1 {
        out[1] = std::f64::consts::SQRT_2 * x * out[0];
    }
    for n in 1..out.len().saturating_sub(1) {
        let nf = n as f64;
        out[n + 1] = (std::f64::consts::SQRT_2 * x * out[n] - nf.sqrt() * out[n - 1]) / (nf + 1.0).sqrt();
    }
}

/// Hermitian matrix in the truncated number basis (POVM elements, `R`, `√ρ`).
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianOperator(CMatrix);

/// A POVM element: density-valued for point operators, probability-valued
/// for bin operators.
pub type MeasurementOperator = HermitianOperator;

impl HermitianOperator {
    /// Validates squareness and Hermiticity to [`HERMITIAN_TOL`].
    pub fn new(m: CMatrix) -> Result<Self> {
        check_square(&m)?;
        let dev = hermitian_deviation(&m);
        if dev > HERMITIAN_TOL {
            return Err(TomoError::NotHermitian(dev));
        }
        Ok(Self(hermitize(&m)))
    }

    /// Symmetrizes `(M + M†)/2` without checking the deviation.
    pub fn from_matrix_hermitized(m: &CMatrix) -> Self {
        Self(hermitize(m))
    }

    pub fn identity(dim: usize) -> Self {
        Self(CMatrix::identity(dim, dim))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> CMatrix {
        self.0
    }

    /// `Re Tr(self · other)` for Hermitian `other`.
    pub fn trace_with(&self, other: &CMatrix) -> f64 {
        trace_product(&self.0, other)
    }

    pub fn eigenvalues(&self) -> DVector<f64> {
        hermitian_eigen(&self.0).0
    }
}

/// Density matrix: Hermitian, trace one, positive semidefinite.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix(CMatrix);

impl DensityMatrix {
    /// Validates all density-matrix invariants.
    pub fn new(m: CMatrix) -> Result<Self> {
        check_square(&m)?;
        let dev = hermitian_deviation(&m);
        if dev > HERMITIAN_TOL {
            return Err(TomoError::NotHermitian(dev));
        }
        let rho = Self(hermitize(&m));
        rho.check_invariants()?;
        Ok(rho)
    }

    /// Hermitizes and rescales to unit trace. Used for matrices that are a
    /// density matrix up to roundoff (channel outputs, iterates).
    pub fn from_matrix_normalized(m: &CMatrix) -> Self {
        let mut h = hermitize(m);
        let tr = h.trace().re;
        h /= C64::new(tr, 0.0);
        Self(h)
    }

    /// `|ψ⟩⟨ψ|` for a normalized or unnormalized amplitude vector.
    pub fn from_pure(amplitudes: &[C64]) -> Result<Self> {
        let norm2: f64 = amplitudes.iter().map(|c| c.norm_sqr()).sum();
        if amplitudes.is_empty() || !(norm2 > 0.0) || !norm2.is_finite() {
            return invalid("pure-state amplitudes must be nonzero and finite");
        }
        let v = DVector::from_iterator(amplitudes.len(), amplitudes.iter().map(|c| c / norm2.sqrt()));
        Ok(Self(&v * v.adjoint()))
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self(CMatrix::identity(dim, dim) / C64::new(dim as f64, 0.0))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn truncation(&self) -> usize {
        self.dim() - 1
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> CMatrix {
        self.0
    }

    pub fn trace(&self) -> f64 {
        self.0.trace().re
    }

    /// Population `⟨n|ρ|n⟩`.
    pub fn population(&self, n: usize) -> f64 {
        self.0[(n, n)].re
    }

    pub fn mean_photon(&self) -> f64 {
        (0..self.dim()).map(|n| n as f64 * self.population(n)).sum()
    }

    /// `Tr(ρ O)` for Hermitian `O`.
    pub fn expectation(&self, op: &CMatrix) -> f64 {
        trace_product(&self.0, op)
    }

    pub fn as_operator(&self) -> HermitianOperator {
        HermitianOperator(self.0.clone())
    }

    /// Hermiticity, unit trace and eigenvalues ≥ −[`PSD_TOL`].
    pub fn check_invariants(&self) -> Result<()> {
        let dev = hermitian_deviation(&self.0);
        if dev > HERMITIAN_TOL {
            return Err(TomoError::NotHermitian(dev));
        }
        let tr = self.trace();
        if (tr - 1.0).abs() > TRACE_TOL {
            return Err(TomoError::BadTrace(tr));
        }
        let min = hermitian_eigen(&self.0).0.min();
        if min < -PSD_TOL {
            return Err(TomoError::NotPsd(min));
        }
        Ok(())
    }
}

fn check_square(m: &CMatrix) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(TomoError::DimensionMismatch(m.nrows(), m.ncols()));
    }
    if m.nrows() == 0 {
        return invalid("matrix must be non-empty");
    }
    Ok(())
}

pub fn hermitian_deviation(m: &CMatrix) -> f64 {
    let d = m.nrows();
    let mut dev: f64 = 0.0;
    for i in 0..d {
        for j in i..d {
            dev = dev.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    dev
}

pub fn hermitize(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()) * C64::new(0.5, 0.0)
}

/// `Re Tr(A B)`, exact for Hermitian `A`, `B`.
pub fn trace_product(a: &CMatrix, b: &CMatrix) -> f64 {
    let d = a.nrows();
    let mut acc = 0.0;
    for i in 0..d {
        for j in 0..d {
            let x = a[(i, j)];
            let y = b[(j, i)];
            acc += x.re * y.re - x.im * y.im;
        }
    }
    acc
}

/// Eigen-decomposition of a Hermitian matrix: `(eigenvalues, eigenvectors)`
/// with eigenvectors as columns.
pub fn hermitian_eigen(m: &CMatrix) -> (DVector<f64>, CMatrix) {
    let eig = nalgebra::SymmetricEigen::new(hermitize(m));
    (eig.eigenvalues, eig.eigenvectors)
}

/// Largest eigenvalue of a Hermitian matrix.
pub fn max_eigenvalue(m: &CMatrix) -> f64 {
    hermitian_eigen(m).0.max()
}

/// `V diag(f(λ)) V†`.
pub(crate) fn spectral_map(vals: &DVector<f64>, vecs: &CMatrix, f: impl Fn(f64) -> f64) -> CMatrix {
    let d = vals.len();
    let mut scaled = vecs.clone();
    for j in 0..d {
        let s = f(vals[j]);
        for i in 0..d {
            scaled[(i, j)] *= s;
        }
    }
    scaled * vecs.adjoint()
}

/// Principal square root of a PSD Hermitian operator.
///
/// Eigenvalues in `[−1e−8, 0)` are clipped to zero; anything more negative
/// is a domain error.
pub fn matrix_sqrt(m: &HermitianOperator) -> Result<HermitianOperator> {
    let (vals, vecs) = hermitian_eigen(m.matrix());
    let min = vals.min();
    if min < -SQRT_CLIP_TOL {
        return Err(TomoError::NotPsd(min));
    }
    Ok(HermitianOperator(hermitize(&spectral_map(&vals, &vecs, |l| l.max(0.0).sqrt()))))
}

pub(crate) fn psd_sqrt_clipped(m: &CMatrix) -> CMatrix {
    let (vals, vecs) = hermitian_eigen(m);
    hermitize(&spectral_map(&vals, &vecs, |l| l.max(0.0).sqrt()))
}

/// Uhlmann fidelity `Tr √(√ρ σ √ρ)`.
pub fn fidelity(rho: &DensityMatrix, rho_true: &DensityMatrix) -> Result<f64> {
    if rho.dim() != rho_true.dim() {
        return Err(TomoError::DimensionMismatch(rho.dim(), rho_true.dim()));
    }
    let s = psd_sqrt_clipped(rho.matrix());
    let inner = &s * rho_true.matrix() * &s;
    let (vals, _) = hermitian_eigen(&inner);
    Ok(vals.iter().map(|&l| if l < -PSD_TOL { 0.0 } else { l.max(0.0).sqrt() }).sum())
}

/// Entry-wise phase factor `e^(i(m−n)θ)` applied to a matrix.
pub fn rotate_matrix(m: &CMatrix, theta: f64) -> CMatrix {
    let d = m.nrows();
    let phases: Vec<C64> = (0..d).map(|n| C64::from_polar(1.0, n as f64 * theta)).collect();
    CMatrix::from_fn(d, d, |i, j| m[(i, j)] * phases[i] * phases[j].conj())
}

/// `U(θ)† op U(θ)` with `U(θ) = exp(−i n̂ θ)`.
pub fn rotate_operator(op: &HermitianOperator, theta: f64) -> Result<HermitianOperator> {
    if !theta.is_finite() {
        return invalid(format!("phase must be finite, got {theta}"));
    }
    Ok(HermitianOperator(rotate_matrix(op.matrix(), theta)))
}

/// Annihilation operator `a` truncated to `dim`.
pub fn annihilation(dim: usize) -> CMatrix {
    let mut a = CMatrix::zeros(dim, dim);
    for n in 1..dim {
        a[(n - 1, n)] = C64::new((n as f64).sqrt(), 0.0);
    }
    a
}

pub fn number_operator(dim: usize) -> CMatrix {
    CMatrix::from_fn(dim, dim, |i, j| if i == j { C64::new(i as f64, 0.0) } else { C64::new(0.0, 0.0) })
}

/// `X = (a + a†)/√2`.
pub fn quadrature_x(dim: usize) -> CMatrix {
    let a = annihilation(dim);
    (&a + a.adjoint()) * C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0)
}

/// `P = (a − a†)/(i√2)`.
pub fn quadrature_p(dim: usize) -> CMatrix {
    let a = annihilation(dim);
    (&a - a.adjoint()) * C64::new(0.0, -std::f64::consts::FRAC_1_SQRT_2)
}

/// Unitary `exp(−i n̂ θ)`.
pub fn phase_unitary(dim: usize, theta: f64) -> CMatrix {
    CMatrix::from_fn(dim, dim, |i, j| if i == j { C64::from_polar(1.0, -(i as f64) * theta) } else { C64::new(0.0, 0.0) })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    fn diag(vals: &[f64]) -> CMatrix {
        CMatrix::from_diagonal(&DVector::from_iterator(vals.len(), vals.iter().map(|&v| c(v))))
    }

    fn random_psd(d: usize, seed: u64) -> CMatrix {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let b = CMatrix::from_fn(d, d, |_, _| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
        &b * b.adjoint()
    }

    #[test]
    fn vacuum_wavefunction_at_origin() {
        let w = wavefunctions(0.0, 3).unwrap();
        assert!((w.get(0) - 0.7511255444649425).abs() < 1e-12);
        assert_eq!(w.get(1), 0.0);
    }

    #[test]
    fn second_wavefunction_matches_hermite_polynomial() {
        let x: f64 = 1.0;
        let direct = PI.powf(-0.25) * (2.0 * x * x - 1.0) / 2f64.sqrt() * (-x * x / 2.0).exp();
        let w = wavefunctions(x, 2).unwrap();
        assert!(((w.get(2) - direct) / direct).abs() < 1e-10);
    }

    #[test]
    fn wavefunctions_reject_nan() {
        assert!(wavefunctions(f64::NAN, 4).is_err());
        assert!(wavefunctions(f64::INFINITY, 4).is_err());
    }

    #[test]
    fn wavefunctions_finite_far_out() {
        for t in [0usize, 5, 15, 40] {
            let xmax = (2.0 * t as f64 + 1.0).sqrt() + 10.0;
            for x in [-xmax, -0.5 * xmax, 0.3, xmax] {
                assert!(wavefunctions(x, t).unwrap().values.iter().all(|v| v.is_finite()));
            }
        }
    }

    #[test]
    fn sqrt_of_identity_and_diagonal() {
        let id = HermitianOperator::identity(4);
        let s = matrix_sqrt(&id).unwrap();
        assert!((s.matrix() - id.matrix()).norm() < 1e-12);

        let m = HermitianOperator::new(diag(&[4.0, 9.0])).unwrap();
        let s = matrix_sqrt(&m).unwrap();
        assert!((s.matrix() - diag(&[2.0, 3.0])).norm() < 1e-12);
    }

    #[test]
    fn sqrt_of_random_psd_squares_back() {
        let m = random_psd(5, 7);
        let s = matrix_sqrt(&HermitianOperator::from_matrix_hermitized(&m)).unwrap();
        let err = (s.matrix() * s.matrix() - &m).camax();
        assert!(err <= 1e-8, "err = {err}");
        assert!(s.eigenvalues().min() >= -1e-10);
        assert!(hermitian_deviation(s.matrix()) <= 1e-12);
    }

    #[test]
    fn sqrt_rejects_indefinite() {
        let m = HermitianOperator::new(diag(&[1.0, -1e-3])).unwrap();
        assert!(matches!(matrix_sqrt(&m), Err(TomoError::NotPsd(_))));
        // tiny negatives are clipped
        let m = HermitianOperator::new(diag(&[1.0, -1e-9])).unwrap();
        assert!(matrix_sqrt(&m).is_ok());
    }

    #[test]
    fn fidelity_special_cases() {
        let zero = DensityMatrix::new(diag(&[1.0, 0.0])).unwrap();
        let one = DensityMatrix::new(diag(&[0.0, 1.0])).unwrap();
        let mixed = DensityMatrix::new(diag(&[0.5, 0.5])).unwrap();
        assert!((fidelity(&zero, &zero).unwrap() - 1.0).abs() < 1e-9);
        assert!(fidelity(&zero, &one).unwrap().abs() < 1e-9);
        assert!((fidelity(&zero, &mixed).unwrap() - 0.5f64.sqrt()).abs() < 1e-9);
        let big = DensityMatrix::maximally_mixed(3);
        assert!(matches!(fidelity(&zero, &big), Err(TomoError::DimensionMismatch(2, 3))));
    }

    #[test]
    fn fidelity_of_random_state_with_itself() {
        let rho = DensityMatrix::from_matrix_normalized(&random_psd(6, 11));
        assert!((fidelity(&rho, &rho).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn density_matrix_validation() {
        assert!(matches!(DensityMatrix::new(diag(&[0.5, 0.4])), Err(TomoError::BadTrace(_))));
        assert!(matches!(DensityMatrix::new(diag(&[1.5, -0.5])), Err(TomoError::NotPsd(_))));
        let mut m = diag(&[0.5, 0.5]);
        m[(0, 1)] = C64::new(0.0, 0.1);
        assert!(matches!(DensityMatrix::new(m), Err(TomoError::NotHermitian(_))));
        assert!(DensityMatrix::new(CMatrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn rotation_identity_cases() {
        let op = HermitianOperator::from_matrix_hermitized(&random_psd(5, 3));
        let same = rotate_operator(&op, 0.0).unwrap();
        assert!((same.matrix() - op.matrix()).camax() < 1e-15);

        let d = HermitianOperator::new(diag(&[1.0, 2.0, 3.0])).unwrap();
        let r = rotate_operator(&d, 1.234).unwrap();
        assert!((r.matrix() - d.matrix()).camax() < 1e-15);
    }

    #[test]
    fn rotation_takes_x_to_p() {
        let dim = 8;
        let x = HermitianOperator::from_matrix_hermitized(&quadrature_x(dim));
        let rotated = rotate_operator(&x, std::f64::consts::FRAC_PI_2).unwrap();
        assert!((rotated.matrix() - quadrature_p(dim)).camax() < 1e-12);
    }

    #[test]
    fn rotation_matches_unitary_conjugation() {
        let dim = 5;
        let op = random_psd(dim, 5);
        let u = phase_unitary(dim, 0.7);
        let direct = u.adjoint() * &op * &u;
        assert!((rotate_matrix(&op, 0.7) - direct).camax() < 1e-12);
    }

    #[test]
    fn number_operator_from_quadratures() {
        // n = (X² + P² − 1)/2 holds away from the truncation edge
        let dim = 10;
        let x = quadrature_x(dim);
        let p = quadrature_p(dim);
        let n = (&x * &x + &p * &p - CMatrix::identity(dim, dim)) * c(0.5);
        for i in 0..dim - 1 {
            for j in 0..dim - 1 {
                assert!((n[(i, j)] - number_operator(dim)[(i, j)]).norm() < 1e-12);
            }
        }
    }
}
