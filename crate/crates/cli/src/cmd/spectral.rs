use std::path::PathBuf;

use dgsp::filters::ideal_lowpass;
use dgsp::graph::adjacency_shift;
use dgsp::spectral::{
    eigen_gft_basis, gft, igft, learn_dgft, spectral_dispersion, DgftOptions, OrthoBasis,
};
use dgsp::synth::{normal_vec, rng};
use dgsp::{DMatrix, DVector, Digraph, ShiftOperator};
use serde::{Deserialize, Serialize};

use super::{at_least, nonempty, nonneg};
use crate::config::{config_err, CliError, GraphSpec, InModule};
use crate::output::{fmt, Output};
use crate::{run_fields, Experiment};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GftConfig {
    pub graph: GraphSpec,
    /// `node,value` CSV; without one the ramp `x_i = i + 1` is used.
    pub signal: Option<PathBuf>,
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
}

impl Default for GftConfig {
    fn default() -> Self {
        GftConfig {
            graph: GraphSpec::DirectedCycle { n: 8 },
            signal: None,
            seed: None,
            out_dir: None,
        }
    }
}

run_fields!(GftConfig, DgftConfig, DenoiseConfig);

impl Experiment for GftConfig {
    fn stochastic(&self) -> bool {
        self.graph.needs_seed()
    }

    fn inputs(&self) -> Vec<PathBuf> {
        self.graph
            .input()
            .into_iter()
            .chain(self.signal.as_deref())
            .map(Into::into)
            .collect()
    }

    fn run(&self, seed: u64, out: &mut Output) -> Result<(), CliError> {
        let s = self.graph.shift(seed).in_module("graph")?;
        let x = match &self.signal {
            Some(p) => dgsp::io::load_signal(p).in_module("io")?,
            None => DVector::from_fn(s.n(), |i, _| (i + 1) as f64),
        };
        let basis = eigen_gft_basis(&s).in_module("spectral")?;
        let xt = gft(&basis, &x).in_module("spectral")?;
        let back = igft(&basis, &xt).in_module("spectral")?;
        let roundtrip = back
            .iter()
            .zip(x.iter())
            .map(|(z, v)| (z - v).norm_sqr())
            .sum::<f64>()
            .sqrt()
            / x.norm().max(f64::MIN_POSITIVE);
        let spectrum: Vec<Vec<String>> = (0..basis.n())
            .map(|k| {
                vec![
                    k.to_string(),
                    fmt(basis.lambda[k].re),
                    fmt(basis.lambda[k].im),
                    fmt(basis.variation[k]),
                ]
            })
            .collect();
        out.csv(
            "spectrum.csv",
            &["k", "lambda_re", "lambda_im", "variation"],
            &spectrum,
        )?;
        let coeffs: Vec<Vec<String>> = xt
            .iter()
            .enumerate()
            .map(|(k, z)| vec![k.to_string(), fmt(z.re), fmt(z.im)])
            .collect();
        out.csv("gft.csv", &["k", "re", "im"], &coeffs)?;
        let metrics = vec![
            vec!["nodes".into(), s.n().to_string()],
            vec!["eigenvector_condition".into(), fmt(basis.vcond)],
            vec!["roundtrip_relative_error".into(), fmt(roundtrip)],
        ];
        out.csv("metrics.csv", &["metric", "value"], &metrics)
    }
}

/// Options of the learned basis, shared by the commands that learn one.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DgftParams {
    pub max_iters: usize,
    pub tol: f64,
    pub restarts: usize,
    pub step: Option<f64>,
}

impl Default for DgftParams {
    fn default() -> Self {
        let d = DgftOptions::default();
        DgftParams {
            max_iters: d.max_iters,
            tol: d.tol,
            restarts: d.restarts,
            step: d.step,
        }
    }
}

impl DgftParams {
    pub fn options(&self, seed: u64) -> DgftOptions {
        DgftOptions {
            max_iters: self.max_iters,
            step: self.step,
            tol: self.tol,
            seed,
            restarts: self.restarts,
        }
    }

    fn validate(&self) -> Result<(), CliError> {
        at_least("dgft.max_iters", self.max_iters, 1)?;
        nonneg("dgft.tol", self.tol)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DgftConfig {
    pub graph: GraphSpec,
    pub dgft: DgftParams,
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
}

impl Default for DgftConfig {
    fn default() -> Self {
        DgftConfig {
            graph: GraphSpec::SouthNorthGrid { rows: 4, cols: 4 },
            dgft: DgftParams::default(),
            seed: None,
            out_dir: None,
        }
    }
}

pub fn orthogonality_error(u: &DMatrix<f64>) -> f64 {
    (u.transpose() * u - DMatrix::identity(u.ncols(), u.ncols())).norm()
}

impl Experiment for DgftConfig {
    fn stochastic(&self) -> bool {
        true
    }

    fn inputs(&self) -> Vec<PathBuf> {
        self.graph.input().into_iter().map(Into::into).collect()
    }

    fn validate(&self) -> Result<(), CliError> {
        self.dgft.validate()
    }

    fn run(&self, seed: u64, out: &mut Output) -> Result<(), CliError> {
        let s = self.graph.shift(seed).in_module("graph")?;
        let b = learn_dgft(&s, &self.dgft.options(seed)).in_module("spectral")?;
        let csv = out.reserve("basis.csv")?;
        let meta = out.reserve("basis.json")?;
        b.save(csv, meta).in_module("io")?;
        let trace: Vec<Vec<String>> = b
            .trace
            .iter()
            .enumerate()
            .map(|(i, v)| vec![i.to_string(), fmt(*v)])
            .collect();
        out.csv("trace.csv", &["iteration", "dispersion"], &trace)?;
        let freqs: Vec<Vec<String>> = b
            .frequencies
            .iter()
            .enumerate()
            .map(|(k, f)| vec![k.to_string(), fmt(*f)])
            .collect();
        out.csv("frequencies.csv", &["k", "frequency"], &freqs)?;
        let monotone = b.trace.windows(2).all(|w| w[1] <= w[0]);
        let metrics = vec![
            vec!["orthogonality_error".into(), fmt(orthogonality_error(&b.u))],
            vec!["first_frequency".into(), fmt(b.frequencies[0])],
            vec!["objective".into(), fmt(b.objective)],
            vec!["iterations".into(), b.iterations.to_string()],
            vec!["converged".into(), b.converged.to_string()],
            vec!["monotone_trace".into(), monotone.to_string()],
        ];
        out.csv("metrics.csv", &["metric", "value"], &metrics)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DenoiseConfig {
    pub graph: GraphSpec,
    /// Bandwidth of the synthetic signal in the learned basis.
    pub bandwidth: usize,
    /// Noise standard deviation relative to the signal's RMS value.
    pub noise: f64,
    pub trials: usize,
    /// Bandwidths to try; empty means `1..=N`.
    pub k_grid: Vec<usize>,
    /// Also denoise with the basis learned on the undirected graph.
    pub compare_undirected: bool,
    pub dgft: DgftParams,
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
}

impl Default for DenoiseConfig {
    fn default() -> Self {
        DenoiseConfig {
            graph: GraphSpec::SouthNorthGrid { rows: 4, cols: 4 },
            bandwidth: 3,
            noise: 0.3,
            trials: 100,
            k_grid: Vec::new(),
            compare_undirected: true,
            dgft: DgftParams::default(),
            seed: None,
            out_dir: None,
        }
    }
}

fn relative_error(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).norm() / b.norm()
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Relative error of every noisy copy of `x`, one row per bandwidth.
pub fn denoise_errors(
    basis: &OrthoBasis,
    x: &DVector<f64>,
    noisy: &[DVector<f64>],
    ks: &[usize],
) -> dgsp::Result<Vec<Vec<f64>>> {
    ks.iter()
        .map(|&k| {
            noisy
                .iter()
                .map(|y| ideal_lowpass(basis, k, y).map(|xh| relative_error(&xh, x)))
                .collect()
        })
        .collect()
}

impl Experiment for DenoiseConfig {
    fn stochastic(&self) -> bool {
        true
    }

    fn inputs(&self) -> Vec<PathBuf> {
        self.graph.input().into_iter().map(Into::into).collect()
    }

    fn validate(&self) -> Result<(), CliError> {
        at_least("bandwidth", self.bandwidth, 1)?;
        at_least("trials", self.trials, 1)?;
        nonneg("noise", self.noise)?;
        if self.k_grid.contains(&0) {
            return Err(config_err("k_grid entries must be >= 1"));
        }
        self.dgft.validate()
    }

    fn run(&self, seed: u64, out: &mut Output) -> Result<(), CliError> {
        let s = self.graph.shift(seed).in_module("graph")?;
        let n = s.n();
        if self.bandwidth > n || self.k_grid.iter().any(|&k| k > n) {
            return Err(config_err(format!(
                "bandwidths must not exceed the graph size {n}"
            )));
        }
        let ks: Vec<usize> = if self.k_grid.is_empty() {
            (1..=n).collect()
        } else {
            self.k_grid.clone()
        };
        nonempty("k_grid", &ks)?;
        let basis = learn_dgft(&s, &self.dgft.options(seed)).in_module("spectral")?;
        let mut r = rng(seed + 1);
        let c = normal_vec(&mut r, self.bandwidth);
        let x = basis.u.columns(0, self.bandwidth) * c;
        let sigma = self.noise * x.norm() / (n as f64).sqrt();
        let noisy: Vec<DVector<f64>> = (0..self.trials)
            .map(|_| &x + normal_vec(&mut r, n) * sigma)
            .collect();

        let mut variants: Vec<(&str, OrthoBasis, ShiftOperator)> =
            vec![("directed", basis, s.clone())];
        if self.compare_undirected {
            let sym = adjacency_shift(&Digraph::from_shift(&s).symmetrized());
            let b = learn_dgft(&sym, &self.dgft.options(seed)).in_module("spectral")?;
            variants.push(("undirected", b, sym));
        }
        let mut rows = Vec::new();
        let mut spectrum = Vec::new();
        let mut summary = Vec::new();
        for (name, b, shift) in &variants {
            let errs = denoise_errors(b, &x, &noisy, &ks).in_module("filters")?;
            for (&k, mut e) in ks.iter().zip(errs) {
                let mean = e.iter().sum::<f64>() / e.len() as f64;
                rows.push(vec![
                    name.to_string(),
                    k.to_string(),
                    fmt(mean),
                    fmt(median(&mut e)),
                ]);
            }
            let pair = denoise_errors(b, &x, &noisy, &[self.bandwidth, n]).in_module("filters")?;
            let wins = pair[0].iter().zip(&pair[1]).filter(|(a, f)| a < f).count();
            let coeffs = b.analyze(&x).in_module("spectral")?;
            for k in 0..n {
                spectrum.push(vec![
                    name.to_string(),
                    k.to_string(),
                    fmt(b.frequencies[k]),
                    fmt(coeffs[k] * coeffs[k]),
                ]);
            }
            let disp = spectral_dispersion(shift, &b.u).in_module("spectral")?;
            summary.push(vec![
                name.to_string(),
                fmt(disp),
                b.converged.to_string(),
                fmt(wins as f64 / self.trials as f64),
            ]);
        }
        out.csv(
            "metrics.csv",
            &["variant", "k", "mean_error", "median_error"],
            &rows,
        )?;
        out.csv(
            "spectrum.csv",
            &["variant", "k", "frequency", "energy"],
            &spectrum,
        )?;
        out.csv(
            "bases.csv",
            &[
                "variant",
                "dispersion",
                "converged",
                "bandwidth_beats_full_rate",
            ],
            &summary,
        )?;
        out.signal("signal.csv", &x)
    }
}
