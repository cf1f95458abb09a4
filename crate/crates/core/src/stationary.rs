//! Stationary processes `x = H w` driven by white input, covariance
//! estimation and tap fitting from a covariance.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{GspError, Result};
use crate::filters::FilterTaps;
use crate::graph::ShiftOperator;
use crate::linalg;

/// Largest graph for which `H H^T` is formed densely.
pub const COVARIANCE_CAP: usize = 1024;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InputLaw {
    Gaussian,
    /// Nonzero with probability `p`, random sign, scaled to unit variance.
    SignedBernoulli {
        p: f64,
    },
}

#[derive(Clone, Debug)]
pub struct StationaryModel {
    pub s: ShiftOperator,
    pub taps: FilterTaps,
    pub law: InputLaw,
}

impl StationaryModel {
    pub fn new(s: ShiftOperator, taps: FilterTaps, law: InputLaw) -> Result<Self> {
        if taps.len() > s.n() {
            return Err(GspError::InvalidArgument(format!(
                "{} taps exceed the graph size {}",
                taps.len(),
                s.n()
            )));
        }
        if let InputLaw::SignedBernoulli { p } = law {
            if !(p > 0.0 && p <= 1.0) {
                return Err(GspError::InvalidArgument(format!(
                    "Bernoulli probability {p} not in (0, 1]"
                )));
            }
        }
        Ok(StationaryModel { s, taps, law })
    }

    pub fn filter_matrix(&self) -> DMatrix<f64> {
        self.taps.matrix(&self.s)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CovarianceEstimate {
    pub c: DMatrix<f64>,
    /// Sample count; `None` for the exact model covariance.
    pub samples: Option<usize>,
}

fn draw(law: InputLaw, rng: &mut impl Rng) -> f64 {
    match law {
        InputLaw::Gaussian => StandardNormal.sample(rng),
        InputLaw::SignedBernoulli { p } => {
            if rng.random::<f64>() < p {
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                sign / p.sqrt()
            } else {
                0.0
            }
        }
    }
}

/// `R` columns `x_r = H w_r`. Column `r` draws from stream `r` of the seed,
/// so the output does not depend on thread scheduling.
pub fn generate(model: &StationaryModel, r: usize, seed: u64) -> Result<DMatrix<f64>> {
    if r == 0 {
        return Err(GspError::InvalidArgument("need at least one sample".into()));
    }
    let n = model.s.n();
    let h = model.filter_matrix();
    let cols: Vec<DVector<f64>> = (0..r)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            let w = DVector::from_fn(n, |_, _| draw(model.law, &mut rng));
            &h * w
        })
        .collect();
    Ok(DMatrix::from_columns(&cols))
}

/// `C = H H^T`.
pub fn model_covariance(model: &StationaryModel) -> Result<CovarianceEstimate> {
    let n = model.s.n();
    if n > COVARIANCE_CAP {
        return Err(GspError::SizeCap {
            n,
            cap: COVARIANCE_CAP,
        });
    }
    let h = model.filter_matrix();
    Ok(CovarianceEstimate {
        c: &h * h.transpose(),
        samples: None,
    })
}

/// `(1/R) sum_r x_r x_r^T`, optionally about the sample mean. No samples
/// give an `N x N` zero matrix.
pub fn estimate_covariance(samples: &DMatrix<f64>, subtract_mean: bool) -> CovarianceEstimate {
    let (n, r) = samples.shape();
    if r == 0 {
        return CovarianceEstimate {
            c: DMatrix::zeros(n, n),
            samples: Some(0),
        };
    }
    let centered;
    let x = if subtract_mean {
        let mean = samples.column_mean();
        centered = DMatrix::from_fn(n, r, |i, j| samples[(i, j)] - mean[i]);
        &centered
    } else {
        samples
    };
    let c = x * x.transpose() / r as f64;
    CovarianceEstimate {
        c: (&c + c.transpose()) * 0.5,
        samples: Some(r),
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions {
    pub max_iters: usize,
    /// Stop when the relative objective decrease falls below this.
    pub tol: f64,
    /// Random restarts on top of the moment initialisation.
    pub restarts: usize,
    pub seed: u64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            max_iters: 2000,
            tol: 1e-14,
            restarts: 5,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct FitResult {
    /// Sign fixed so the largest-magnitude tap is positive.
    pub h: Vec<f64>,
    /// `||C - H H^T||_F^2`.
    pub residual: f64,
    /// Objective per accepted step of the winning start.
    pub trace: Vec<f64>,
    pub converged: bool,
}

fn filter_from(powers: &[DMatrix<f64>], h: &[f64]) -> DMatrix<f64> {
    let n = powers[0].nrows();
    powers
        .iter()
        .zip(h)
        .fold(DMatrix::zeros(n, n), |acc, (p, &c)| acc + p * c)
}

/// `F(h) = ||C - H(h) H(h)^T||_F^2`.
pub fn fit_objective(c: &DMatrix<f64>, s: &ShiftOperator, h: &[f64]) -> f64 {
    let hm = filter_from(&s.dense_powers(h.len().max(1) - 1), h);
    (c - &hm * hm.transpose()).norm_squared()
}

/// `dF/dh_l = -2 tr[E^T (S^l H^T + H (S^l)^T)]` with `E = C - H H^T`.
pub fn fit_gradient(c: &DMatrix<f64>, s: &ShiftOperator, h: &[f64]) -> Vec<f64> {
    let powers = s.dense_powers(h.len().max(1) - 1);
    gradient(c, &powers, h)
}

fn gradient(c: &DMatrix<f64>, powers: &[DMatrix<f64>], h: &[f64]) -> Vec<f64> {
    let hm = filter_from(powers, h);
    let e = c - &hm * hm.transpose();
    powers[..h.len()]
        .iter()
        .map(|p| {
            let d = p * hm.transpose() + &hm * p.transpose();
            -2.0 * e.dot(&d)
        })
        .collect()
}

/// Residual `vec(C - H H^T)` and its Jacobian in `h`.
fn residual_jacobian(
    c: &DMatrix<f64>,
    powers: &[DMatrix<f64>],
    h: &[f64],
) -> (DVector<f64>, DMatrix<f64>) {
    let hm = filter_from(powers, h);
    let e = c - &hm * hm.transpose();
    let n2 = e.len();
    let mut j = DMatrix::zeros(n2, h.len());
    for (l, p) in powers[..h.len()].iter().enumerate() {
        let d = p * hm.transpose() + &hm * p.transpose();
        j.set_column(l, &DVector::from_iterator(n2, d.iter().map(|v| -v)));
    }
    (DVector::from_column_slice(e.as_slice()), j)
}

/// Moment start: least-squares taps for the PSD square root of `C`.
fn moment_start(c: &DMatrix<f64>, powers: &[DMatrix<f64>], l: usize) -> Vec<f64> {
    let root = linalg::psd_sqrt(c);
    let a = DMatrix::from_columns(
        &powers[..l]
            .iter()
            .map(|p| DVector::from_column_slice(p.as_slice()))
            .collect::<Vec<_>>(),
    );
    linalg::lstsq_min_norm(&a, &DVector::from_column_slice(root.as_slice()), 1e-12)
        .0
        .iter()
        .copied()
        .collect()
}

/// Damped Gauss-Newton descent with backtracking from one start.
fn descend(
    c: &DMatrix<f64>,
    powers: &[DMatrix<f64>],
    mut h: Vec<f64>,
    opts: &FitOptions,
) -> (Vec<f64>, f64, Vec<f64>, bool) {
    let l = h.len();
    let (mut r, mut j) = residual_jacobian(c, powers, &h);
    let mut f = r.norm_squared();
    let mut trace = vec![f];
    let mut mu = 1e-3;
    let floor = c.norm_squared().max(f64::MIN_POSITIVE);
    for _ in 0..opts.max_iters {
        if f <= 1e-30 * floor {
            return (h, f, trace, true);
        }
        let jt = j.transpose();
        let g = &jt * &r;
        let jtj = &jt * &j;
        let mut accepted = false;
        for _ in 0..60 {
            let damp =
                jtj.clone() + DMatrix::identity(l, l) * (mu * jtj.diagonal().max().max(1e-300));
            let Some(ch) = damp.cholesky() else {
                mu *= 10.0;
                continue;
            };
            let step = ch.solve(&(-&g));
            let cand: Vec<f64> = h.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            let fc = residual_jacobian(c, powers, &cand).0.norm_squared();
            if fc < f {
                let rel = (f - fc) / f;
                h = cand;
                (r, j) = residual_jacobian(c, powers, &h);
                f = fc;
                trace.push(f);
                mu = (mu * 0.3).max(1e-15);
                accepted = true;
                if rel <= opts.tol {
                    return (h, f, trace, true);
                }
                break;
            }
            mu *= 4.0;
        }
        if !accepted {
            // no decrease at any damping: stationary to working precision
            return (h, f, trace, true);
        }
    }
    (h, f, trace, false)
}

/// Fits `L` taps to a covariance by minimising `||C - H H^T||_F^2` from a
/// moment start plus seeded random restarts. Starts run in parallel.
pub fn fit_taps_from_covariance(
    c: &DMatrix<f64>,
    s: &ShiftOperator,
    l: usize,
    opts: &FitOptions,
) -> Result<FitResult> {
    let n = s.n();
    if l == 0 || l > n {
        return Err(GspError::InvalidArgument(format!(
            "need 1 <= L <= N, got L = {l}, N = {n}"
        )));
    }
    if c.shape() != (n, n) {
        return Err(GspError::DimensionMismatch {
            expected: n,
            got: c.nrows(),
        });
    }
    let powers = s.dense_powers(l - 1);
    let scale = (c.trace().abs() / n as f64).sqrt().max(1e-12);
    let mut starts = vec![moment_start(c, &powers, l)];
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    for _ in 0..opts.restarts {
        starts.push(
            (0..l)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    scale * z
                })
                .collect::<Vec<f64>>(),
        );
    }
    let runs: Vec<(Vec<f64>, f64, Vec<f64>, bool)> = starts
        .into_par_iter()
        .map(|h0| descend(c, &powers, h0, opts))
        .collect();
    let (mut h, residual, trace, converged) = runs
        .into_iter()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("at least one start");
    let imax = (0..l)
        .max_by(|&a, &b| h[a].abs().total_cmp(&h[b].abs()))
        .unwrap_or(0);
    if h[imax] < 0.0 {
        h.iter_mut().for_each(|v| *v = -*v);
    }
    Ok(FitResult {
        h,
        residual,
        trace,
        converged,
    })
}
