//! Simulated homodyne data: a uniform phase schedule and rejection-sampled
//! quadratures drawn from the state's predicted marginals.
//!
//! Randomness is reproducible under parallelism. A dataset seed keys a
//! ChaCha8 generator and phase `j` draws from stream `j` of that key, so
//! every phase has an independent substream. Experiment repetitions derive
//! their dataset seed from the master seed with [`derive_seed`].

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result, TomoError};
use crate::fock::{fill_wavefunctions, DensityMatrix};
use crate::states::{loss_channel_matrix, StateSpec};

pub const ENVELOPE_GRID_POINTS: usize = 4001;
pub const ENVELOPE_SAFETY: f64 = 1.1;
const FAILURE_PROPOSALS: u64 = 10_000_000;
const FAILURE_RATE: f64 = 1e-4;

/// Half-width of the quadrature window `√(2t+1) + 6` used for sampling.
pub fn sampling_half_width(t: usize) -> f64 {
    (2.0 * t as f64 + 1.0).sqrt() + 6.0
}

/// SplitMix64 finalizer over `(master, a, b)`.
pub fn derive_seed(master: u64, a: u64, b: u64) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    mix(mix(mix(master) ^ a) ^ b.rotate_left(32))
}

/// Generator for phase `phase_index` of the dataset keyed by `seed`.
pub fn phase_rng(seed: u64, phase_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(phase_index);
    rng
}

/// `m` phases `jπ/m`, each measured `per_phase` times.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseSchedule {
    pub m: usize,
    pub per_phase: usize,
}

impl PhaseSchedule {
    /// Splits `total` samples evenly over `m` phases.
    pub fn new(m: usize, total: usize) -> Result<Self> {
        if m == 0 || total == 0 {
            return invalid("phase schedule needs at least one phase and one sample");
        }
        if !total.is_multiple_of(m) {
            return invalid(format!("{total} samples do not divide evenly over {m} phases"));
        }
        Ok(Self { m, per_phase: total / m })
    }

    pub fn total(&self) -> usize {
        self.m * self.per_phase
    }

    pub fn phase(&self, j: usize) -> f64 {
        j as f64 * PI / self.m as f64
    }

    pub fn phases(&self) -> Vec<f64> {
        (0..self.m).map(|j| self.phase(j)).collect()
    }

    pub fn is_informationally_complete(&self, t: usize) -> bool {
        self.m > t
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSample {
    pub theta: f64,
    pub x: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureDataset {
    pub samples: Vec<QuadratureSample>,
    pub rng_seed: Option<u64>,
    pub spec: Option<StateSpec>,
    pub eta: Option<f64>,
}

impl QuadratureDataset {
    pub fn from_samples(samples: Vec<QuadratureSample>) -> Self {
        Self { samples, rng_seed: None, spec: None, eta: None }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Samples grouped by phase, in order of first appearance.
    pub fn by_phase(&self) -> Vec<(f64, Vec<f64>)> {
        let mut groups: Vec<(f64, Vec<f64>)> = Vec::new();
        for s in &self.samples {
            match groups.iter_mut().find(|(th, _)| th.to_bits() == s.theta.to_bits()) {
                Some((_, xs)) => xs.push(s.x),
                None => groups.push((s.theta, vec![s.x])),
            }
        }
        groups
    }

    /// CSV with header `theta,x` and 17 significant digits.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["theta", "x"])?;
        for s in &self.samples {
            w.write_record([format!("{:.16e}", s.theta), format!("{:.16e}", s.x)])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let samples = r.deserialize::<QuadratureSample>().collect::<std::result::Result<Vec<_>, _>>()?;
        if let Some(bad) = samples.iter().find(|s| !s.theta.is_finite() || !s.x.is_finite()) {
            return invalid(format!("non-finite sample ({}, {})", bad.theta, bad.x));
        }
        Ok(Self::from_samples(samples))
    }
}

/// Marginal quadrature density `p(x) = Tr(Π_η(x|θ) ρ)` at a fixed phase.
///
/// Evaluated through the loss dual: `p(x) = ψ(x)ᵀ K ψ(x)` where `K` is
/// the real part of `U(θ) L_η(ρ) U(θ)†`.
#[derive(Debug, Clone)]
pub struct QuadratureDensity {
    kernel: DMatrix<f64>,
    theta: f64,
}

impl QuadratureDensity {
    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn truncation(&self) -> usize {
        self.kernel.nrows() - 1
    }

    pub fn half_width(&self) -> f64 {
        sampling_half_width(self.truncation())
    }

    pub fn density(&self, x: f64) -> f64 {
        let mut buf = vec![0.0; self.kernel.nrows()];
        self.density_with(x, &mut buf)
    }

    fn density_with(&self, x: f64, psi: &mut [f64]) -> f64 {
        fill_wavefunctions(x, psi);
        let d = psi.len();
        let mut acc = 0.0;
        for j in 0..d {
            let mut col = 0.0;
            for i in 0..d {
                col += self.kernel[(i, j)] * psi[i];
            }
            acc += col * psi[j];
        }
        if acc < 0.0 {
            0.0
        } else {
            acc
        }
    }
}

pub fn predicted_density(rho: &DensityMatrix, theta: f64, eta: f64) -> Result<QuadratureDensity> {
    if !theta.is_finite() {
        return invalid("phase must be finite");
    }
    let lossy = loss_channel_matrix(rho.matrix(), eta)?;
    let d = rho.dim();
    let kernel = DMatrix::from_fn(d, d, |m, n| {
        let phase = num_complex::Complex64::from_polar(1.0, -((m as f64) - (n as f64)) * theta);
        (lossy[(m, n)] * phase).re
    });
    Ok(QuadratureDensity { kernel, theta })
}

/// Rejection sampling with a uniform proposal on `[−X_max, X_max]` and an
/// envelope of 1.1 × the density maximum on a 4001-point grid.
pub fn sample_phase<R: Rng + ?Sized>(density: &QuadratureDensity, count: usize, rng: &mut R) -> Result<Vec<f64>> {
    if count == 0 {
        return invalid("sample count must be at least 1");
    }
    let half = density.half_width();
    let mut psi = vec![0.0; density.kernel.nrows()];
    let step = 2.0 * half / (ENVELOPE_GRID_POINTS - 1) as f64;
    let peak = (0..ENVELOPE_GRID_POINTS)
        .map(|k| density.density_with(-half + k as f64 * step, &mut psi))
        .fold(0.0, f64::max);
    if !(peak > 0.0) || !peak.is_finite() {
        return Err(TomoError::SamplerFailure { rate: 0.0, proposals: 0 });
    }
    let envelope = ENVELOPE_SAFETY * peak;

    let mut out = Vec::with_capacity(count);
    let mut proposals: u64 = 0;
    while out.len() < count {
        let x = -half + 2.0 * half * rng.random::<f64>();
        let u: f64 = rng.random();
        proposals += 1;
        if u * envelope <= density.density_with(x, &mut psi) {
            out.push(x);
        }
        if proposals >= FAILURE_PROPOSALS && proposals.is_multiple_of(FAILURE_PROPOSALS) {
            let rate = out.len() as f64 / proposals as f64;
            if rate < FAILURE_RATE {
                return Err(TomoError::SamplerFailure { rate, proposals });
            }
        }
    }
    Ok(out)
}

/// Samples the lossy state `spec` at every scheduled phase.
///
/// Transmission loss is applied to the state; detector efficiency `eta` is
/// folded into the sampling density.
pub fn generate_dataset(spec: &StateSpec, schedule: &PhaseSchedule, eta: f64, seed: u64) -> Result<QuadratureDataset> {
    let prepared = spec.prepare()?;
    generate_from_state(&prepared.rho_true, schedule, eta, seed).map(|mut ds| {
        ds.spec = Some(spec.clone());
        ds
    })
}

/// As [`generate_dataset`] for an already-prepared state.
pub fn generate_from_state(rho: &DensityMatrix, schedule: &PhaseSchedule, eta: f64, seed: u64) -> Result<QuadratureDataset> {
    if !schedule.is_informationally_complete(rho.truncation()) {
        return invalid(format!(
            "{} phases cannot determine a state truncated at t = {} (need at least t + 1)",
            schedule.m,
            rho.truncation()
        ));
    }
    let per_phase: Vec<Vec<f64>> = (0..schedule.m)
        .into_par_iter()
        .map(|j| {
            let density = predicted_density(rho, schedule.phase(j), eta)?;
            sample_phase(&density, schedule.per_phase, &mut phase_rng(seed, j as u64))
        })
        .collect::<Result<_>>()?;
    let samples = per_phase
        .into_iter()
        .enumerate()
        .flat_map(|(j, xs)| {
            let theta = schedule.phase(j);
            xs.into_iter().map(move |x| QuadratureSample { theta, x })
        })
        .collect();
    Ok(QuadratureDataset { samples, rng_seed: Some(seed), spec: None, eta: Some(eta) })
}
