use std::path::PathBuf;

use dgsp::filters::{apply_polynomial, apply_spectral_eigen, FilterTaps};
use dgsp::spectral::eigen_gft_basis;
use dgsp::synth::{normal_vec, rng};
use dgsp::{Complex64, GspError};
use serde::{Deserialize, Serialize};

use super::nonempty;
use crate::config::{CliError, GraphSpec, InModule};
use crate::output::{fmt, Output};
use crate::{run_fields, Experiment};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    pub graph: GraphSpec,
    pub taps: Vec<f64>,
    /// `node,value` CSV; without one a seeded Gaussian signal is used.
    pub signal: Option<PathBuf>,
    /// Also run the eigen-domain filter with response `p(lambda)` and
    /// report its distance to the polynomial output.
    pub compare_spectral: bool,
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            graph: GraphSpec::DirectedEr {
                n: 8,
                p: 0.4,
                seed: None,
            },
            taps: vec![1.0, 0.5, 0.25],
            signal: None,
            compare_spectral: true,
            seed: None,
            out_dir: None,
        }
    }
}

run_fields!(FilterConfig);

impl Experiment for FilterConfig {
    fn stochastic(&self) -> bool {
        self.graph.needs_seed() || self.signal.is_none()
    }

    fn inputs(&self) -> Vec<PathBuf> {
        self.graph
            .input()
            .into_iter()
            .chain(self.signal.as_deref())
            .map(Into::into)
            .collect()
    }

    fn validate(&self) -> Result<(), CliError> {
        nonempty("taps", &self.taps)
    }

    fn run(&self, seed: u64, out: &mut Output) -> Result<(), CliError> {
        let s = self.graph.shift(seed).in_module("graph")?;
        let taps = FilterTaps::new(self.taps.clone()).in_module("filters")?;
        let x = match &self.signal {
            Some(p) => dgsp::io::load_signal(p).in_module("io")?,
            None => normal_vec(&mut rng(seed + 1), s.n()),
        };
        let y = apply_polynomial(&s, &taps, &x).in_module("filters")?;
        out.signal("output.csv", &y)?;
        let mut metrics = vec![
            vec!["input_norm".into(), fmt(x.norm())],
            vec!["output_norm".into(), fmt(y.norm())],
        ];
        let shifted = apply_polynomial(&s, &taps, &s.apply(&x)).in_module("filters")?;
        let invariance = (shifted - s.apply(&y)).norm() / y.norm().max(f64::MIN_POSITIVE);
        metrics.push(vec!["shift_invariance_gap".into(), fmt(invariance)]);
        if self.compare_spectral {
            match eigen_gft_basis(&s) {
                Ok(basis) => {
                    let g: Vec<Complex64> =
                        basis.lambda.iter().map(|&l| taps.response_at(l)).collect();
                    let ys = apply_spectral_eigen(&basis, &g, &x).in_module("filters")?;
                    let gap = (ys.real() - &y).norm() / y.norm().max(f64::MIN_POSITIVE);
                    metrics.push(vec!["spectral_relative_gap".into(), fmt(gap)]);
                    metrics.push(vec![
                        "spectral_output_complex".into(),
                        ys.is_complex().to_string(),
                    ]);
                    metrics.push(vec!["eigenvector_condition".into(), fmt(basis.vcond)]);
                }
                Err(e @ GspError::NotDiagonalizable { .. }) => {
                    metrics.push(vec![
                        "spectral_relative_gap".into(),
                        format!("skipped: {e}"),
                    ]);
                }
                Err(e) => return Err(e).in_module("spectral"),
            }
        }
        out.csv("metrics.csv", &["metric", "value"], &metrics)
    }
}
