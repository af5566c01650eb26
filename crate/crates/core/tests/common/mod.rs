//! Test-side reference implementations, written independently of the
//! library code paths they check.
#![allow(dead_code)]

use nalgebra::DMatrix;
use num_complex::Complex64;

pub type Mat = DMatrix<Complex64>;

/// `ψ_n(x)` from physicists' Hermite polynomials and explicit factorials.
pub fn hermite_functions(x: f64, t: usize) -> Vec<f64> {
    let mut h = vec![0.0; t + 1];
    h[0] = 1.0;
    if t >= 1 {
        h[1] = 2.0 * x;
    }
    for n in 1..t {
        h[n + 1] = 2.0 * x * h[n] - 2.0 * n as f64 * h[n - 1];
    }
    let gauss = (-x * x / 2.0).exp();
    let mut norm = std::f64::consts::PI.sqrt();
    (0..=t)
        .map(|n| {
            if n > 0 {
                norm *= 2.0 * n as f64;
            }
            h[n] * gauss / norm.sqrt()
        })
        .collect()
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Kraus operators of a pure-loss channel with transmissivity `tau`.
pub fn loss_kraus(dim: usize, tau: f64) -> Vec<Mat> {
    (0..dim)
        .map(|k| {
            let mut e = Mat::zeros(dim, dim);
            for n in k..dim {
                let amp = (binomial(n, k) * tau.powi((n - k) as i32) * (1.0 - tau).powi(k as i32)).sqrt();
                e[(n - k, n)] = Complex64::new(amp, 0.0);
            }
            e
        })
        .collect()
}

pub fn apply_kraus(rho: &Mat, tau: f64) -> Mat {
    loss_kraus(rho.nrows(), tau).iter().map(|e| e * rho * e.adjoint()).fold(Mat::zeros(rho.nrows(), rho.nrows()), |a, b| a + b)
}

pub fn dual_kraus(op: &Mat, eta: f64) -> Mat {
    loss_kraus(op.nrows(), eta).iter().map(|e| e.adjoint() * op * e).fold(Mat::zeros(op.nrows(), op.nrows()), |a, b| a + b)
}

/// `U = exp(−i n̂ θ)`.
pub fn phase_shift(dim: usize, theta: f64) -> Mat {
    Mat::from_fn(dim, dim, |i, j| if i == j { Complex64::from_polar(1.0, -(i as f64) * theta) } else { Complex64::new(0.0, 0.0) })
}

/// Rotated ideal projector `U† |x⟩⟨x| U` before any loss.
pub fn ideal_point(x: f64, theta: f64, t: usize) -> Mat {
    let psi = hermite_functions(x, t);
    let p = Mat::from_fn(t + 1, t + 1, |i, j| Complex64::new(psi[i] * psi[j], 0.0));
    let u = phase_shift(t + 1, theta);
    u.adjoint() * p * u
}

/// Homodyne density of `rho` at phase `theta` seen through efficiency `eta`.
pub struct DensityOracle {
    rotated: Mat,
}

impl DensityOracle {
    pub fn new(rho: &Mat, theta: f64, eta: f64) -> Self {
        let u = phase_shift(rho.nrows(), theta);
        Self { rotated: &u * apply_kraus(rho, eta) * u.adjoint() }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let t = self.rotated.nrows() - 1;
        let psi = hermite_functions(x, t);
        let mut p = 0.0;
        for i in 0..=t {
            for j in 0..=t {
                p += (self.rotated[(i, j)] * psi[i] * psi[j]).re;
            }
        }
        p
    }
}

/// Cumulative distribution on a uniform grid by the trapezoid rule.
pub struct GridCdf {
    xs: Vec<f64>,
    cdf: Vec<f64>,
}

impl GridCdf {
    pub fn new(f: impl Fn(f64) -> f64, lo: f64, hi: f64, points: usize) -> Self {
        let h = (hi - lo) / (points - 1) as f64;
        let xs: Vec<f64> = (0..points).map(|i| lo + h * i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
        let mut cdf = vec![0.0; points];
        for i in 1..points {
            cdf[i] = cdf[i - 1] + 0.5 * h * (ys[i] + ys[i - 1]);
        }
        let total = cdf[points - 1];
        cdf.iter_mut().for_each(|c| *c /= total);
        Self { xs, cdf }
    }

    pub fn eval(&self, x: f64) -> f64 {
        if x <= self.xs[0] {
            return 0.0;
        }
        let last = self.xs.len() - 1;
        if x >= self.xs[last] {
            return 1.0;
        }
        let h = self.xs[1] - self.xs[0];
        let i = (((x - self.xs[0]) / h) as usize).min(last - 1);
        let w = (x - self.xs[i]) / h;
        self.cdf[i] * (1.0 - w) + self.cdf[i + 1] * w
    }
}

/// Kolmogorov–Smirnov statistic `D` of `samples` against `cdf`.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut xs = samples.to_vec();
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

/// Asymptotic p-value with the Stephens small-sample correction.
pub fn ks_p_value(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..200 {
        let term = (-2.0 * (k * k) as f64 * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Adaptive Simpson quadrature to absolute tolerance `tol`.
pub fn adaptive_simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn step(f: &impl Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
            return left + right + (left + right - whole) / 15.0;
        }
        step(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + step(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    step(f, a, b, fa, fm, fb, (b - a) / 6.0 * (fa + 4.0 * fm + fb), tol, 40)
}

/// `∫_a^b Π_η(x|θ) dx` entry by entry with adaptive quadrature.
pub fn integrated_operator(a: f64, b: f64, theta: f64, t: usize, eta: f64, tol: f64) -> Mat {
    let d = t + 1;
    let mut ideal = Mat::zeros(d, d);
    for i in 0..d {
        for j in i..d {
            let v = adaptive_simpson(&|x: f64| {
                let psi = hermite_functions(x, t);
                psi[i] * psi[j]
            }, a, b, tol);
            ideal[(i, j)] = Complex64::new(v, 0.0);
            ideal[(j, i)] = Complex64::new(v, 0.0);
        }
    }
    let u = phase_shift(d, theta);
    dual_kraus(&(u.adjoint() * ideal * u), eta)
}

pub fn max_abs_diff(a: &Mat, b: &Mat) -> f64 {
    (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
