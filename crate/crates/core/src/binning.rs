//! Equal-width quadrature histograms and bin-width rules.

use std::f64::consts::PI;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result, TomoError};
use crate::sampler::QuadratureDataset;

/// Fractional widening of the last bin so that it contains the maximum.
pub const LAST_BIN_EPSILON: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhotonNumberSource {
    /// Use the Hilbert-space truncation `t`.
    Truncation,
    /// Use the quadrature-based mean photon estimate.
    EstimatedMean,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WidthStrategy {
    Fixed { width: f64 },
    Scott,
    Leonhardt {
        #[serde(default = "default_photon_source")]
        n_source: PhotonNumberSource,
    },
}

fn default_photon_source() -> PhotonNumberSource {
    PhotonNumberSource::EstimatedMean
}

impl fmt::Display for WidthStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WidthStrategy::Fixed { width } => write!(f, "fixed:{width}"),
            WidthStrategy::Scott => write!(f, "scott"),
            WidthStrategy::Leonhardt { n_source: PhotonNumberSource::Truncation } => write!(f, "leonhardt:t"),
            WidthStrategy::Leonhardt { n_source: PhotonNumberSource::EstimatedMean } => write!(f, "leonhardt:mean"),
        }
    }
}

impl FromStr for WidthStrategy {
    type Err = TomoError;

    /// Accepts `fixed:<h>`, `scott`, `leonhardt:t` and `leonhardt:mean`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "scott" => return Ok(WidthStrategy::Scott),
            "leonhardt" | "leonhardt:mean" => {
                return Ok(WidthStrategy::Leonhardt { n_source: PhotonNumberSource::EstimatedMean })
            }
            "leonhardt:t" => return Ok(WidthStrategy::Leonhardt { n_source: PhotonNumberSource::Truncation }),
            _ => {}
        }
        if let Some(h) = s.strip_prefix("fixed:") {
            let width: f64 = h.parse().map_err(|_| TomoError::InvalidInput(format!("bad fixed width '{h}'")))?;
            let strategy = WidthStrategy::Fixed { width };
            strategy.validate()?;
            return Ok(strategy);
        }
        invalid(format!("unknown width strategy '{s}'"))
    }
}

impl WidthStrategy {
    pub fn validate(&self) -> Result<()> {
        if let WidthStrategy::Fixed { width } = *self {
            if !(width > 0.0 && width.is_finite()) {
                return invalid(format!("fixed bin width must be positive, got {width}"));
            }
        }
        Ok(())
    }
}

/// Where the first bin edge of each phase sits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinAnchor {
    /// First edge at the phase's smallest sample.
    #[default]
    SampleMin,
    /// Edges on the lattice `(k + ½)h`, so one bin is centred on zero.
    Centered,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseHistogram {
    pub theta: f64,
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub n_samples: u64,
}

impl PhaseHistogram {
    pub fn num_bins(&self) -> usize {
        self.counts.len()
    }

    /// Nominal width `h` (the last bin is wider by `1e−9·h`).
    pub fn width(&self) -> f64 {
        (self.edges[1] - self.edges[0]).abs()
    }

    pub fn bins(&self) -> impl Iterator<Item = (f64, f64, u64)> + '_ {
        self.edges.windows(2).zip(&self.counts).map(|(e, &c)| (e[0], e[1], c))
    }

    /// Number of samples strictly below each edge.
    pub fn cumulative_counts(&self) -> Vec<u64> {
        let mut acc = 0;
        let mut out = vec![0];
        for &c in &self.counts {
            acc += c;
            out.push(acc);
        }
        out
    }

    /// Bins `[e_k, e_{k+1})` of width `h`, first edge placed by `anchor`.
    pub fn from_samples(theta: f64, samples: &[f64], width: f64, anchor: BinAnchor) -> Result<Self> {
        if samples.is_empty() {
            return invalid("cannot histogram an empty phase");
        }
        if !(width > 0.0 && width.is_finite()) {
            return invalid(format!("bin width must be positive, got {width}"));
        }
        let min = samples.iter().copied().fold(f64::INFINITY, f64::min);
        let max = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let first = match anchor {
            BinAnchor::SampleMin => min,
            BinAnchor::Centered => ((min / width + 0.5).floor() - 0.5) * width,
        };
        let nbins = (((max - first) / width).ceil() as usize).max(1);
        let mut edges: Vec<f64> = (0..=nbins).map(|k| first + k as f64 * width).collect();
        // the max sample may sit on or just past the nominal last edge
        if edges[nbins] <= max {
            edges[nbins] = max.max(edges[nbins]);
        }
        edges[nbins] += LAST_BIN_EPSILON * width;

        let mut counts = vec![0u64; nbins];
        for &x in samples {
            let mut k = (((x - first) / width).floor().max(0.0) as usize).min(nbins - 1);
            while k > 0 && x < edges[k] {
                k -= 1;
            }
            while k + 1 < nbins && x >= edges[k + 1] {
                k += 1;
            }
            counts[k] += 1;
        }
        Ok(Self { theta, edges, counts, n_samples: samples.len() as u64 })
    }
}

/// Scott's rule `h = 3.5 σ̂ s^(−1/3)` with the unbiased standard deviation.
pub fn scott_width(samples: &[f64]) -> Result<f64> {
    let s = samples.len();
    if s < 2 {
        return invalid(format!("Scott's rule needs at least 2 samples, got {s}"));
    }
    let mean = samples.iter().sum::<f64>() / s as f64;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (s - 1) as f64;
    let sd = var.sqrt();
    if !(sd > 0.0) {
        return Err(TomoError::DegenerateWidth);
    }
    Ok(3.5 * sd * (s as f64).powf(-1.0 / 3.0))
}

/// Half the quadrature scale `q_n = π/√(2n+1)`.
pub fn leonhardt_width(n: f64) -> Result<f64> {
    if !(n >= 0.0) || !n.is_finite() {
        return invalid(format!("photon number must be non-negative, got {n}"));
    }
    Ok(PI / (2.0 * (2.0 * n + 1.0).sqrt()))
}

/// `(1/N) Σ x_i² − 1/2`; valid for phases spread uniformly over `[0, π)`.
pub fn estimate_mean_photon(dataset: &QuadratureDataset) -> Result<f64> {
    if dataset.is_empty() {
        return invalid("cannot estimate the photon number of an empty dataset");
    }
    let sum: f64 = dataset.samples.iter().map(|s| s.x * s.x).sum();
    Ok(sum / dataset.len() as f64 - 0.5)
}

/// Per-phase histograms for a dataset.
///
/// Scott widths are computed per phase; fixed and Leonhardt widths are one
/// global value. A negative photon estimate is clamped to zero for the
/// Leonhardt rule.
pub fn build_histograms(dataset: &QuadratureDataset, strategy: &WidthStrategy, truncation: usize) -> Result<Vec<PhaseHistogram>> {
    build_histograms_anchored(dataset, strategy, truncation, BinAnchor::default())
}

pub fn build_histograms_anchored(
    dataset: &QuadratureDataset,
    strategy: &WidthStrategy,
    truncation: usize,
    anchor: BinAnchor,
) -> Result<Vec<PhaseHistogram>> {
    strategy.validate()?;
    let global = match *strategy {
        WidthStrategy::Fixed { width } => Some(width),
        WidthStrategy::Scott => None,
        WidthStrategy::Leonhardt { n_source: PhotonNumberSource::Truncation } => Some(leonhardt_width(truncation as f64)?),
        WidthStrategy::Leonhardt { n_source: PhotonNumberSource::EstimatedMean } => {
            Some(leonhardt_width(estimate_mean_photon(dataset)?.max(0.0))?)
        }
    };
    dataset
        .by_phase()
        .into_iter()
        .map(|(theta, xs)| {
            let h = match global {
                Some(h) => h,
                None => scott_width(&xs)?,
            };
            PhaseHistogram::from_samples(theta, &xs, h, anchor)
        })
        .collect()
}

pub fn mean_width(histograms: &[PhaseHistogram]) -> f64 {
    histograms.iter().map(PhaseHistogram::width).sum::<f64>() / histograms.len().max(1) as f64
}

/// CSV `theta,edge_low,edge_high,count`, one row per bin.
pub fn write_histograms_csv(histograms: &[PhaseHistogram], path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["theta", "edge_low", "edge_high", "count"])?;
    for h in histograms {
        for (lo, hi, c) in h.bins() {
            w.write_record([format!("{:.16e}", h.theta), format!("{lo:.16e}"), format!("{hi:.16e}"), c.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampler::QuadratureSample;
    use proptest::prelude::*;

    #[test]
    fn hand_counted_histogram() {
        let xs: Vec<f64> = (0..10).map(|k| k as f64 / 10.0).collect();
        let h = PhaseHistogram::from_samples(0.0, &xs, 0.25, BinAnchor::SampleMin).unwrap();
        assert_eq!(h.counts, vec![3, 2, 3, 2]);
        assert_eq!(h.n_samples, 10);
        assert!(h.edges[4] > 0.9);
    }

    #[test]
    fn single_sample_gives_one_bin() {
        let h = PhaseHistogram::from_samples(0.3, &[1.7], 0.5, BinAnchor::SampleMin).unwrap();
        assert_eq!(h.counts, vec![1]);
        let h = PhaseHistogram::from_samples(0.3, &[1.7], 0.5, BinAnchor::Centered).unwrap();
        assert_eq!(h.counts, vec![1]);
    }

    #[test]
    fn max_on_edge_lands_in_last_bin() {
        let h = PhaseHistogram::from_samples(0.0, &[0.0, 0.5, 1.0], 0.5, BinAnchor::SampleMin).unwrap();
        assert_eq!(h.counts, vec![1, 2]);
    }

    #[test]
    fn centered_anchor_puts_a_bin_around_zero() {
        let h = PhaseHistogram::from_samples(0.0, &[-0.9, -0.1, 0.05, 0.7], 0.4, BinAnchor::Centered).unwrap();
        assert!(h.edges.iter().any(|&e| (e + 0.2).abs() < 1e-12));
        assert!(h.edges.iter().any(|&e| (e - 0.2).abs() < 1e-12));
        assert_eq!(h.counts.iter().sum::<u64>(), 4);
    }

    #[test]
    fn scott_rule() {
        // σ̂ = 1 exactly for ±1 alternating with an even count s: var = s/(s−1)
        let s = 1000;
        let xs: Vec<f64> = (0..s).map(|k| if k % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let scale = ((s - 1) as f64 / s as f64).sqrt();
        let xs: Vec<f64> = xs.iter().map(|x| x * scale).collect();
        assert!((scott_width(&xs).unwrap() - 0.35).abs() < 1e-12);
        assert!(matches!(scott_width(&[2.0, 2.0, 2.0]), Err(TomoError::DegenerateWidth)));
        assert!(scott_width(&[1.0]).is_err());
    }

    #[test]
    fn leonhardt_values() {
        assert!((leonhardt_width(0.0).unwrap() - PI / 2.0).abs() < 1e-15);
        assert!((leonhardt_width(10.0).unwrap() - 0.3428).abs() < 1e-4);
        assert!(leonhardt_width(-0.1).is_err());
        assert!(leonhardt_width(f64::NAN).is_err());
    }

    #[test]
    fn mean_photon_estimator() {
        let zeros = QuadratureDataset::from_samples(vec![QuadratureSample { theta: 0.0, x: 0.0 }; 5]);
        assert_eq!(estimate_mean_photon(&zeros).unwrap(), -0.5);
        assert!(estimate_mean_photon(&QuadratureDataset::from_samples(vec![])).is_err());
    }

    #[test]
    fn strategy_parsing() {
        assert_eq!("scott".parse::<WidthStrategy>().unwrap(), WidthStrategy::Scott);
        assert_eq!("fixed:0.34".parse::<WidthStrategy>().unwrap(), WidthStrategy::Fixed { width: 0.34 });
        assert_eq!(
            "leonhardt:t".parse::<WidthStrategy>().unwrap(),
            WidthStrategy::Leonhardt { n_source: PhotonNumberSource::Truncation }
        );
        assert!("fixed:-1".parse::<WidthStrategy>().is_err());
        assert!("sturges".parse::<WidthStrategy>().is_err());
        for s in ["fixed:0.5", "scott", "leonhardt:t", "leonhardt:mean"] {
            assert_eq!(s.parse::<WidthStrategy>().unwrap().to_string(), s);
        }
    }

    #[test]
    fn leonhardt_truncation_source_is_global() {
        let samples = (0..40).map(|k| QuadratureSample { theta: (k % 2) as f64, x: (k as f64 * 0.37).sin() * 2.0 }).collect();
        let ds = QuadratureDataset::from_samples(samples);
        let hs = build_histograms(&ds, &WidthStrategy::Leonhardt { n_source: PhotonNumberSource::Truncation }, 10).unwrap();
        assert_eq!(hs.len(), 2);
        for h in &hs {
            assert!((h.width() - leonhardt_width(10.0).unwrap()).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn histogram_conserves_samples_and_matches_empirical_cdf(
            xs in prop::collection::vec(-8.0f64..8.0, 1..300),
            width in 0.01f64..3.0,
            centered in any::<bool>(),
        ) {
            let anchor = if centered { BinAnchor::Centered } else { BinAnchor::SampleMin };
            let h = PhaseHistogram::from_samples(0.0, &xs, width, anchor).unwrap();
            prop_assert_eq!(h.counts.iter().sum::<u64>(), xs.len() as u64);
            let min = xs.iter().copied().fold(f64::INFINITY, f64::min);
            let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(h.edges[0] <= min);
            prop_assert!(*h.edges.last().unwrap() > max);
            for w in h.edges.windows(2).take(h.num_bins() - 1) {
                prop_assert!(((w[1] - w[0]) - width).abs() <= 1e-12 * width.max(w[0].abs()).max(1.0) * 16.0);
            }
            let cdf = h.cumulative_counts();
            for (k, &e) in h.edges.iter().enumerate() {
                let exact = xs.iter().filter(|&&x| x < e).count() as u64;
                prop_assert_eq!(cdf[k], exact);
            }
        }

        #[test]
        fn scott_scaling(
            xs in prop::collection::vec(-5.0f64..5.0, 3..200),
            scale in 0.1f64..10.0,
        ) {
            prop_assume!(scott_width(&xs).is_ok());
            let h = scott_width(&xs).unwrap();
            let scaled: Vec<f64> = xs.iter().map(|x| x * scale).collect();
            prop_assert!((scott_width(&scaled).unwrap() - scale * h).abs() <= 1e-9 * scale * h);
            // eight copies: σ̂ changes by the (s−1) factor only
            let s = xs.len() as f64;
            let rep: Vec<f64> = xs.iter().cycle().take(8 * xs.len()).copied().collect();
            let var_ratio = ((s - 1.0) * 8.0 / (8.0 * s - 1.0)).sqrt();
            let expected = h * var_ratio * 0.5;
            let got = scott_width(&rep).unwrap();
            prop_assert!((got - expected).abs() <= 1e-9 * expected, "{} vs {}", got, expected);
        }

        #[test]
        fn leonhardt_is_decreasing(a in 0.0f64..50.0, b in 0.0f64..50.0) {
            prop_assume!(a < b);
            prop_assert!(leonhardt_width(a).unwrap() > leonhardt_width(b).unwrap());
        }
    }
}
