//! Maximum-likelihood density-matrix reconstruction.
//!
//! The log-likelihood of a model `{(Π_i, f_i)}` is `Σ f_i ln Tr(Π_i ρ)`.
//! [`reconstruct`] starts from the maximally mixed state, runs RρR
//! iterations `ρ ← RρR / Tr(RρR)` with `R = Σ f_i Π_i / Tr(Π_i ρ)`, then
//! switches to regularized gradient ascent (RGA) over
//!
//! ```text
//! ρ(A) = (√ρ + A)(√ρ + A)† / Tr[(√ρ + A)(√ρ + A)†]
//! ```
//!
//! where `A` is any complex matrix with `Tr(AA†) ≤ u`. Each RGA step
//! maximizes a quadratic model of `L(ρ(A))` inside that ball: the linear
//! term is the exact first-order change `Tr(R δρ(A))` and the curvature is
//! the Gauss–Newton form `−Σ f_i Tr(Π_i δρ)² / Tr(Π_i ρ)²` projected onto a
//! Krylov subspace spanned from the gradient. Steps that lower `L` are
//! rejected and `u` is halved; accepted steps double it.
//!
//! Iteration halts when `λ_max(R) − N`, an upper bound on
//! `L(ρ_ML) − L(ρ)` by concavity, drops to `stop_gap`.
//!
//! Measurement operators are stored as rows of real coordinates so that
//! `Tr(Π_i ρ)` for every `i` is one matrix-vector product.

use std::borrow::Borrow;
use std::path::Path;
use std::time::Instant;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result, TomoError};
use crate::fock::{hermitize, max_eigenvalue, psd_sqrt_clipped, trace_product, CMatrix, DensityMatrix, HermitianOperator, C64};

pub const DEFAULT_STOP_GAP: f64 = 0.2;
pub const PROB_FLOOR: f64 = 1e-12;
/// Trust radii below this signal a stalled ascent.
pub const STAGNATION_RADIUS: f64 = 1e-18;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MleConfig {
    /// RρR iterations before switching to RGA; `None` uses `⌈(t+1)²/4⌉`.
    pub rpr_iterations: Option<usize>,
    pub stop_gap: f64,
    /// Initial bound `u` on `Tr(AA†)`.
    pub trust_radius_init: f64,
    pub trust_grow: f64,
    pub trust_shrink: f64,
    /// Cap on RρR + RGA iterations (rejected RGA steps count).
    pub max_iterations: usize,
    pub prob_floor: f64,
    /// Krylov dimension for the curvature model.
    pub subspace_dim: usize,
}

impl Default for MleConfig {
    fn default() -> Self {
        Self {
            rpr_iterations: None,
            stop_gap: DEFAULT_STOP_GAP,
            trust_radius_init: 1e-4,
            trust_grow: 2.0,
            trust_shrink: 0.5,
            max_iterations: 5000,
            prob_floor: PROB_FLOOR,
            subspace_dim: 8,
        }
    }
}

impl MleConfig {
    pub fn rpr_iterations_for(&self, dim: usize) -> usize {
        self.rpr_iterations.unwrap_or_else(|| (dim * dim).div_ceil(4))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.stop_gap > 0.0) {
            return invalid(format!("stop_gap must be positive, got {}", self.stop_gap));
        }
        if !(self.trust_radius_init > 0.0) || !(self.trust_grow >= 1.0) || !(self.trust_shrink > 0.0 && self.trust_shrink < 1.0) {
            return invalid("trust radius must start positive, grow by >= 1 and shrink by a factor in (0, 1)");
        }
        if !(self.prob_floor > 0.0) {
            return invalid("probability floor must be positive");
        }
        if self.subspace_dim == 0 {
            return invalid("subspace_dim must be at least 1");
        }
        Ok(())
    }
}

/// Real coordinates of a Hermitian matrix: diagonal entries, then
/// `√2 Re` and `√2 Im` of each upper off-diagonal entry, so that
/// `Tr(AB) = ⟨pack A, pack B⟩`.
pub(crate) fn pack_hermitian(m: &CMatrix, out: &mut [f64]) {
    let d = m.nrows();
    let s = std::f64::consts::SQRT_2;
    let mut k = d;
    for i in 0..d {
        out[i] = m[(i, i)].re;
        for j in i + 1..d {
            out[k] = s * m[(i, j)].re;
            out[k + 1] = s * m[(i, j)].im;
            k += 2;
        }
    }
}

pub(crate) fn unpack_hermitian(v: &[f64], d: usize) -> CMatrix {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut m = CMatrix::zeros(d, d);
    let mut k = d;
    for i in 0..d {
        m[(i, i)] = C64::new(v[i], 0.0);
        for j in i + 1..d {
            let z = C64::new(s * v[k], s * v[k + 1]);
            m[(i, j)] = z;
            m[(j, i)] = z.conj();
            k += 2;
        }
    }
    m
}

/// Operators `Π_i` with multiplicities `f_i`; `N = Σ f_i`.
#[derive(Debug, Clone)]
pub struct LikelihoodModel {
    dim: usize,
    packed: DMatrix<f64>,
    counts: DVector<f64>,
    total: f64,
}

impl LikelihoodModel {
    pub fn new(operators: &[HermitianOperator], counts: &[u64]) -> Result<Self> {
        if operators.len() != counts.len() {
            return Err(TomoError::DimensionMismatch(operators.len(), counts.len()));
        }
        let dim = operators.first().map(HermitianOperator::dim).ok_or_else(|| TomoError::InvalidInput("empty likelihood model".into()))?;
        Self::from_weighted(dim, operators.iter().zip(counts.iter().copied()))
    }

    pub fn from_weighted<I, O>(dim: usize, items: I) -> Result<Self>
    where
        I: IntoIterator<Item = (O, u64)>,
        O: Borrow<HermitianOperator>,
    {
        let width = dim * dim;
        let mut rows = Vec::new();
        let mut counts = Vec::new();
        for (op, f) in items {
            let op = op.borrow();
            if op.dim() != dim {
                return Err(TomoError::DimensionMismatch(op.dim(), dim));
            }
            if f == 0 {
                return invalid("likelihood multiplicities must be at least 1");
            }
            let start = rows.len();
            rows.resize(start + width, 0.0);
            pack_hermitian(op.matrix(), &mut rows[start..]);
            counts.push(f as f64);
        }
        if counts.is_empty() {
            return invalid("empty likelihood model");
        }
        let n = counts.len();
        let total = counts.iter().sum();
        Ok(Self { dim, packed: DMatrix::from_row_slice(n, width, &rows), counts: DVector::from_vec(counts), total })
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `N = Σ f_i`.
    pub fn total_counts(&self) -> f64 {
        self.total
    }

    pub fn counts(&self) -> &DVector<f64> {
        &self.counts
    }

    pub fn operator(&self, i: usize) -> HermitianOperator {
        let row: Vec<f64> = self.packed.row(i).iter().copied().collect();
        HermitianOperator::from_matrix_hermitized(&unpack_hermitian(&row, self.dim))
    }

    /// `Tr(Π_i ρ)` for every operator.
    pub fn probabilities(&self, rho: &CMatrix) -> DVector<f64> {
        let mut v = vec![0.0; self.dim * self.dim];
        pack_hermitian(rho, &mut v);
        &self.packed * DVector::from_vec(v)
    }

    /// `Σ w_i Π_i`.
    pub fn weighted_operator(&self, weights: &DVector<f64>) -> CMatrix {
        let v = self.packed.tr_mul(weights);
        unpack_hermitian(v.as_slice(), self.dim)
    }

    fn log_likelihood_of(&self, probs: &DVector<f64>, floor: f64) -> f64 {
        probs.iter().zip(self.counts.iter()).map(|(&p, &f)| f * p.max(floor).ln()).sum()
    }

    fn r_of(&self, probs: &DVector<f64>, floor: f64) -> CMatrix {
        let w = DVector::from_iterator(self.len(), probs.iter().zip(self.counts.iter()).map(|(&p, &f)| f / p.max(floor)));
        self.weighted_operator(&w)
    }

    fn check_dim(&self, rho: &DensityMatrix) -> Result<()> {
        if rho.dim() != self.dim {
            return Err(TomoError::DimensionMismatch(rho.dim(), self.dim));
        }
        Ok(())
    }
}

/// `Σ f_i ln max(Tr(Π_i ρ), 1e−12)`.
pub fn log_likelihood(model: &LikelihoodModel, rho: &DensityMatrix) -> f64 {
    model.log_likelihood_of(&model.probabilities(rho.matrix()), PROB_FLOOR)
}

/// `R = Σ f_i Π_i / Tr(Π_i ρ)`.
pub fn r_operator(model: &LikelihoodModel, rho: &DensityMatrix) -> HermitianOperator {
    HermitianOperator::from_matrix_hermitized(&model.r_of(&model.probabilities(rho.matrix()), PROB_FLOOR))
}

/// `λ_max(R) − N`, an upper bound on `L(ρ_ML) − L(ρ)`.
pub fn stopping_gap(model: &LikelihoodModel, rho: &DensityMatrix) -> f64 {
    max_eigenvalue(r_operator(model, rho).matrix()) - model.total_counts()
}

/// One RρR update, damped if the plain update lowers `L`.
pub fn rpr_step(model: &LikelihoodModel, rho: &DensityMatrix) -> Result<DensityMatrix> {
    model.check_dim(rho)?;
    let config = MleConfig::default();
    let mut engine = Engine::new(model, &config, rho.matrix().clone());
    engine.rpr_step();
    Ok(DensityMatrix::from_matrix_normalized(&engine.point.rho))
}

/// `ρ(A) = (S + A)(S + A)† / Tr[...]` with `S = √ρ`.
pub fn step_density(rho: &DensityMatrix, a: &CMatrix) -> DensityMatrix {
    let s = psd_sqrt_clipped(rho.matrix());
    DensityMatrix::from_matrix_normalized(&apply_step(&s, a))
}

fn apply_step(s: &CMatrix, a: &CMatrix) -> CMatrix {
    let b = s + a;
    hermitize(&(&b * b.adjoint()))
}

/// First-order change `δρ(A) = SA† + AS − ρ Tr(SA† + AS)` of `ρ(A)`.
pub fn first_order_change(rho: &DensityMatrix, a: &CMatrix) -> CMatrix {
    let s = psd_sqrt_clipped(rho.matrix());
    first_order_with(rho.matrix(), &s, a)
}

fn first_order_with(rho: &CMatrix, s: &CMatrix, a: &CMatrix) -> CMatrix {
    let sym = hermitize(&(s * a.adjoint() + a * s)) ;
    let tr = sym.trace();
    sym - rho * tr
}

/// Gradient `G = 2(R − Tr(Rρ)) √ρ` of `A ↦ L(ρ(A))` at `A = 0` in the
/// real inner product `Re Tr(X†Y)`.
pub fn likelihood_gradient(model: &LikelihoodModel, rho: &DensityMatrix) -> CMatrix {
    let s = psd_sqrt_clipped(rho.matrix());
    let r = model.r_of(&model.probabilities(rho.matrix()), PROB_FLOOR);
    gradient_with(rho.matrix(), &s, &r)
}

fn gradient_with(rho: &CMatrix, s: &CMatrix, m: &CMatrix) -> CMatrix {
    let c = trace_product(m, rho);
    let d = m.nrows();
    (m - CMatrix::identity(d, d) * C64::new(c, 0.0)) * s * C64::new(2.0, 0.0)
}

fn inner(a: &CMatrix, b: &CMatrix) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.re * y.re + x.im * y.im).sum()
}

#[derive(Debug, Clone)]
pub struct RgaStep {
    pub rho: DensityMatrix,
    pub accepted: bool,
    pub new_radius: f64,
}

/// One trust-region step from `rho` with radius `u` on `Tr(AA†)`.
pub fn rga_step(model: &LikelihoodModel, rho: &DensityMatrix, u: f64, config: &MleConfig) -> Result<RgaStep> {
    model.check_dim(rho)?;
    let mut engine = Engine::new(model, config, rho.matrix().clone());
    let (accepted, new_radius) = engine.rga_step(u)?;
    Ok(RgaStep { rho: DensityMatrix::from_matrix_normalized(&engine.point.rho), accepted, new_radius })
}

#[derive(Debug, Clone)]
pub struct ReconstructionResult {
    pub rho_hat: DensityMatrix,
    pub final_log_likelihood: f64,
    pub iterations_rpr: usize,
    pub iterations_rga: usize,
    pub rejected_steps: usize,
    pub final_gap_bound: f64,
    pub wall_time_s: f64,
    pub converged: bool,
    /// `L` at the start and after every accepted update.
    pub loglik_history: Vec<f64>,
    /// Stopping gap at the same iterates as `loglik_history`.
    pub gap_history: Vec<f64>,
}

impl ReconstructionResult {
    pub fn metadata(&self) -> ReconstructionMetadata {
        ReconstructionMetadata {
            dim: self.rho_hat.dim(),
            final_log_likelihood: self.final_log_likelihood,
            iterations_rpr: self.iterations_rpr,
            iterations_rga: self.iterations_rga,
            rejected_steps: self.rejected_steps,
            final_gap_bound: self.final_gap_bound,
            wall_time_s: self.wall_time_s,
            converged: self.converged,
        }
    }

    /// `<stem>.csv` with the real block then the imaginary block, and
    /// `<stem>.json` with the run metadata.
    pub fn write(&self, dir: impl AsRef<Path>, stem: &str) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        write_density_csv(&self.rho_hat, dir.join(format!("{stem}.csv")))?;
        std::fs::write(dir.join(format!("{stem}.json")), serde_json::to_string_pretty(&self.metadata())?)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionMetadata {
    pub dim: usize,
    pub final_log_likelihood: f64,
    pub iterations_rpr: usize,
    pub iterations_rga: usize,
    pub rejected_steps: usize,
    pub final_gap_bound: f64,
    pub wall_time_s: f64,
    pub converged: bool,
}

/// `2d` header-less rows of `d` values: `Re ρ` then `Im ρ`.
pub fn write_density_csv(rho: &DensityMatrix, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    let d = rho.dim();
    for part in [|z: C64| z.re, |z: C64| z.im] {
        for i in 0..d {
            w.write_record((0..d).map(|j| format!("{:.16e}", part(rho.matrix()[(i, j)]))))?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_density_csv(path: impl AsRef<Path>) -> Result<DensityMatrix> {
    let mut r = csv::ReaderBuilder::new().has_headers(false).from_path(path)?;
    let rows: Vec<Vec<f64>> = r
        .records()
        .map(|rec| {
            let rec = rec?;
            rec.iter().map(|s| s.trim().parse::<f64>().map_err(|e| TomoError::InvalidInput(e.to_string()))).collect()
        })
        .collect::<Result<_>>()?;
    let d = rows.len() / 2;
    if d == 0 || rows.len() != 2 * d || rows.iter().any(|r| r.len() != d) {
        return invalid("density CSV must hold two square blocks");
    }
    DensityMatrix::new(CMatrix::from_fn(d, d, |i, j| C64::new(rows[i][j], rows[d + i][j])))
}

/// RρR warm-up followed by trust-region RGA, from `I/(t+1)`.
pub fn reconstruct(model: &LikelihoodModel, config: &MleConfig) -> Result<ReconstructionResult> {
    config.validate()?;
    let start = Instant::now();
    let dim = model.dim();
    let mut engine = Engine::new(model, config, DensityMatrix::maximally_mixed(dim).into_matrix());
    let mut loglik_history = vec![engine.point.loglik];
    let mut gap_history = vec![engine.gap];

    let rpr_budget = config.rpr_iterations_for(dim);
    let mut iterations = 0;
    let mut iterations_rpr = 0;
    let mut iterations_rga = 0;
    let mut rejected_steps = 0;

    while iterations_rpr < rpr_budget && engine.gap > config.stop_gap && iterations < config.max_iterations {
        engine.rpr_step();
        iterations_rpr += 1;
        iterations += 1;
        loglik_history.push(engine.point.loglik);
        gap_history.push(engine.gap);
    }

    let mut u = config.trust_radius_init;
    while engine.gap > config.stop_gap && iterations < config.max_iterations {
        iterations += 1;
        match engine.rga_step(u) {
            Ok((accepted, new_u)) => {
                iterations_rga += 1;
                u = new_u;
                if accepted {
                    loglik_history.push(engine.point.loglik);
                    gap_history.push(engine.gap);
                } else {
                    rejected_steps += 1;
                }
            }
            Err(TomoError::Stagnation(_)) => {
                engine.rpr_step();
                iterations_rpr += 1;
                u = config.trust_radius_init;
                loglik_history.push(engine.point.loglik);
                gap_history.push(engine.gap);
            }
            Err(e) => return Err(e),
        }
    }

    let converged = engine.gap <= config.stop_gap;
    Ok(ReconstructionResult {
        rho_hat: DensityMatrix::from_matrix_normalized(&engine.point.rho),
        final_log_likelihood: engine.point.loglik,
        iterations_rpr,
        iterations_rga,
        rejected_steps,
        final_gap_bound: engine.gap,
        wall_time_s: start.elapsed().as_secs_f64(),
        converged,
        loglik_history,
        gap_history,
    })
}

struct Point {
    rho: CMatrix,
    probs: DVector<f64>,
    loglik: f64,
}

/// Krylov model of the Gauss–Newton curvature at the current iterate,
/// reused across rejected steps.
struct Krylov {
    sqrt_rho: CMatrix,
    basis: Vec<CMatrix>,
    projected: DMatrix<f64>,
    gradient_norm: f64,
}

struct Engine<'a> {
    model: &'a LikelihoodModel,
    config: &'a MleConfig,
    point: Point,
    r: CMatrix,
    gap: f64,
    krylov: Option<Krylov>,
}

impl<'a> Engine<'a> {
    fn new(model: &'a LikelihoodModel, config: &'a MleConfig, rho: CMatrix) -> Self {
        let point = Self::evaluate(model, config, rho);
        let r = model.r_of(&point.probs, config.prob_floor);
        let gap = max_eigenvalue(&r) - model.total;
        Self { model, config, point, r, gap, krylov: None }
    }

    fn evaluate(model: &LikelihoodModel, config: &MleConfig, rho: CMatrix) -> Point {
        let probs = model.probabilities(&rho);
        let loglik = model.log_likelihood_of(&probs, config.prob_floor);
        Point { rho, probs, loglik }
    }

    fn set_point(&mut self, point: Point) {
        self.r = self.model.r_of(&point.probs, self.config.prob_floor);
        self.gap = max_eigenvalue(&self.r) - self.model.total;
        self.point = point;
        self.krylov = None;
    }

    fn rpr_step(&mut self) {
        let rho = &self.point.rho;
        let rrr = hermitize(&(&self.r * rho * &self.r));
        let tr = rrr.trace().re;
        if !(tr > 0.0) || !tr.is_finite() {
            return;
        }
        let target = rrr / C64::new(tr, 0.0);
        let candidate = Self::evaluate(self.model, self.config, target.clone());
        if candidate.loglik >= self.point.loglik {
            self.set_point(candidate);
            return;
        }
        let mut eps = 0.5;
        while eps > 1e-12 {
            let mixed = rho * C64::new(1.0 - eps, 0.0) + &target * C64::new(eps, 0.0);
            let candidate = Self::evaluate(self.model, self.config, mixed);
            if candidate.loglik >= self.point.loglik {
                self.set_point(candidate);
                return;
            }
            eps *= 0.5;
        }
    }

    /// `B v` with `B` the Gauss–Newton curvature operator (positive
    /// semidefinite; the model uses `−½⟨v, Bv⟩`).
    fn curvature_apply(&self, s: &CMatrix, v: &CMatrix) -> CMatrix {
        let drho = first_order_with(&self.point.rho, s, v);
        let jac = self.model.probabilities(&drho);
        let floor = self.config.prob_floor;
        let w = DVector::from_iterator(
            self.model.len(),
            jac.iter().zip(self.point.probs.iter()).zip(self.model.counts.iter()).map(|((&j, &p), &f)| {
                let p = p.max(floor);
                f * j / (p * p)
            }),
        );
        let m = self.model.weighted_operator(&w);
        gradient_with(&self.point.rho, s, &m)
    }

    fn build_krylov(&self) -> Krylov {
        let s = psd_sqrt_clipped(&self.point.rho);
        let g = gradient_with(&self.point.rho, &s, &self.r);
        let gnorm = inner(&g, &g).sqrt();
        let mut basis: Vec<CMatrix> = Vec::new();
        let mut images: Vec<CMatrix> = Vec::new();
        if gnorm > 0.0 && gnorm.is_finite() {
            basis.push(&g / C64::new(gnorm, 0.0));
            for j in 0..self.config.subspace_dim {
                let bq = self.curvature_apply(&s, &basis[j]);
                let scale = inner(&bq, &bq).sqrt();
                let mut w = bq.clone();
                images.push(bq);
                if j + 1 == self.config.subspace_dim {
                    break;
                }
                for _ in 0..2 {
                    for q in &basis {
                        let c = inner(q, &w);
                        w -= q * C64::new(c, 0.0);
                    }
                }
                let beta = inner(&w, &w).sqrt();
                if !(beta > 1e-10 * scale.max(1e-300)) {
                    break;
                }
                basis.push(w / C64::new(beta, 0.0));
            }
        }
        let k = images.len();
        let mut projected = DMatrix::from_fn(k, k, |i, j| inner(&basis[i], &images[j]));
        projected = (&projected + projected.transpose()) * 0.5;
        basis.truncate(k);
        Krylov { sqrt_rho: s, basis, projected, gradient_norm: if k > 0 { gnorm } else { 0.0 } }
    }

    fn rga_step(&mut self, u: f64) -> Result<(bool, f64)> {
        if !(u >= STAGNATION_RADIUS) {
            return Err(TomoError::Stagnation(u));
        }
        if self.krylov.is_none() {
            self.krylov = Some(self.build_krylov());
        }
        let kr = self.krylov.as_ref().expect("krylov model");
        let d = self.model.dim;
        let mut step = CMatrix::zeros(d, d);
        if kr.gradient_norm > 0.0 {
            let mut g = DVector::zeros(kr.basis.len());
            g[0] = kr.gradient_norm;
            let y = solve_trust_subproblem(&kr.projected, &g, u.sqrt());
            for (q, &c) in kr.basis.iter().zip(y.iter()) {
                step += q * C64::new(c, 0.0);
            }
        }
        let raw = apply_step(&kr.sqrt_rho, &step);
        let tr = raw.trace().re;
        if !(tr > 0.0) || !tr.is_finite() {
            return Ok((false, u * self.config.trust_shrink));
        }
        let candidate = Self::evaluate(self.model, self.config, raw / C64::new(tr, 0.0));
        if candidate.loglik >= self.point.loglik {
            self.set_point(candidate);
            Ok((true, u * self.config.trust_grow))
        } else {
            Ok((false, u * self.config.trust_shrink))
        }
    }
}

/// Maximizes `gᵀy − ½ yᵀTy` over `‖y‖ ≤ radius` for symmetric PSD `T`.
pub(crate) fn solve_trust_subproblem(t: &DMatrix<f64>, g: &DVector<f64>, radius: f64) -> DVector<f64> {
    let eig = SymmetricEigen::new(t.clone());
    let vals = eig.eigenvalues;
    let vecs = eig.eigenvectors;
    let gh = vecs.transpose() * g;
    let gnorm = g.norm();
    let lmin = vals.min();
    let lmax = vals.max().max(0.0);
    let norm_at = |lam: f64| -> f64 { gh.iter().zip(vals.iter()).map(|(&c, &l)| (c / (l + lam)).powi(2)).sum::<f64>().sqrt() };
    let coeffs = |lam: f64| DVector::from_iterator(gh.len(), gh.iter().zip(vals.iter()).map(|(&c, &l)| c / (l + lam)));

    if lmin > 1e-14 * lmax.max(1e-300) && norm_at(0.0) <= radius {
        return &vecs * coeffs(0.0);
    }
    let mut lo = (-lmin).max(0.0);
    let mut hi = lo + gnorm / radius + lmin.abs() + f64::MIN_POSITIVE;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if norm_at(mid) > radius {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut y = &vecs * coeffs(hi);
    let n = y.norm();
    if n > radius {
        y *= radius / n;
    }
    y
}
