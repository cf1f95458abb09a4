use std::path::PathBuf;

use dgsp::filters::FilterTaps;
use dgsp::stationary::{
    estimate_covariance, fit_taps_from_covariance, generate, model_covariance, FitOptions,
    FitResult, InputLaw, StationaryModel,
};
use dgsp::DMatrix;
use serde::{Deserialize, Serialize};

use super::{at_least, nonempty};
use crate::config::{CliError, GraphSpec, InModule};
use crate::output::{fmt, Output};
use crate::{run_fields, Experiment};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StationaryConfig {
    pub graph: GraphSpec,
    pub taps: Vec<f64>,
    pub law: InputLaw,
    pub samples: usize,
    /// Fit taps of the true length to the exact and the sample covariance.
    pub fit: bool,
    pub fit_restarts: usize,
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
}

impl Default for StationaryConfig {
    fn default() -> Self {
        StationaryConfig {
            graph: GraphSpec::DirectedEr {
                n: 10,
                p: 0.3,
                seed: None,
            },
            taps: vec![1.0, 0.5, 0.2],
            law: InputLaw::Gaussian,
            samples: 100_000,
            fit: true,
            fit_restarts: FitOptions::default().restarts,
            seed: None,
            out_dir: None,
        }
    }
}

run_fields!(StationaryConfig);

fn rel(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}

/// Distance between tap vectors, minimised over a global sign.
pub fn tap_error_up_to_sign(a: &[f64], b: &[f64]) -> f64 {
    let d = |s: f64| {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - s * y).powi(2))
            .sum::<f64>()
            .sqrt()
    };
    d(1.0).min(d(-1.0))
}

impl Experiment for StationaryConfig {
    fn stochastic(&self) -> bool {
        true
    }

    fn inputs(&self) -> Vec<PathBuf> {
        self.graph.input().into_iter().map(Into::into).collect()
    }

    fn validate(&self) -> Result<(), CliError> {
        nonempty("taps", &self.taps)?;
        at_least("samples", self.samples, 1)?;
        at_least("fit_restarts", self.fit_restarts, 1)
    }

    fn run(&self, seed: u64, out: &mut Output) -> Result<(), CliError> {
        let s = self.graph.shift(seed).in_module("graph")?;
        let taps = FilterTaps::new(self.taps.clone()).in_module("filters")?;
        let model = StationaryModel::new(s, taps, self.law).in_module("stationary")?;
        let exact = model_covariance(&model).in_module("stationary")?.c;
        let x = generate(&model, self.samples, seed + 1).in_module("stationary")?;
        let est = estimate_covariance(&x, false).c;
        let mut metrics = vec![
            vec!["samples".into(), self.samples.to_string()],
            vec!["covariance_relative_error".into(), fmt(rel(&est, &exact))],
        ];
        if self.fit {
            let opts = FitOptions {
                restarts: self.fit_restarts,
                seed,
                ..Default::default()
            };
            let l = self.taps.len();
            let fits: Vec<(&str, FitResult, f64)> = [("exact", &exact), ("sample", &est)]
                .into_iter()
                .map(|(name, c)| {
                    fit_taps_from_covariance(c, &model.s, l, &opts)
                        .map(|r| (name, r, c.norm_squared()))
                })
                .collect::<dgsp::Result<_>>()
                .in_module("stationary")?;
            let mut rows = Vec::new();
            for (i, h) in self.taps.iter().enumerate() {
                rows.push(vec![
                    i.to_string(),
                    fmt(*h),
                    fmt(fits[0].1.h[i]),
                    fmt(fits[1].1.h[i]),
                ]);
            }
            out.csv("taps.csv", &["l", "true", "fit_exact", "fit_sample"], &rows)?;
            for (name, r, scale) in &fits {
                metrics.push(vec![
                    format!("{name}_tap_error"),
                    fmt(tap_error_up_to_sign(&r.h, &self.taps)),
                ]);
                metrics.push(vec![
                    format!("{name}_relative_residual"),
                    fmt(r.residual / scale),
                ]);
                metrics.push(vec![format!("{name}_converged"), r.converged.to_string()]);
            }
        }
        out.csv("metrics.csv", &["metric", "value"], &metrics)
    }
}
