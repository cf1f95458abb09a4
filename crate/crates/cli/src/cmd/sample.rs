use std::path::PathBuf;

use dgsp::sampling::{greedy_select, reconstruct, recoverability, BandlimitedModel};
use dgsp::spectral::{eigen_gft_basis, learn_dgft};
use dgsp::synth::piecewise_constant;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::at_least;
use super::spectral::DgftParams;
use crate::config::{config_err, CliError, GraphSpec, InModule};
use crate::output::{fmt, Output};
use crate::{run_fields, Experiment};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BasisKind {
    /// Learned orthonormal basis; works on any digraph.
    Dgft,
    /// Eigenvectors of the shift; needs a diagonalisable shift.
    Eigen,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleConfig {
    pub graph: GraphSpec,
    pub basis: BasisKind,
    pub clusters: usize,
    pub classes: usize,
    pub samples: usize,
    /// Bandwidths to try; empty means `1..=samples`.
    pub k_grid: Vec<usize>,
    pub dgft: DgftParams,
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
}

impl Default for SampleConfig {
    fn default() -> Self {
        SampleConfig {
            graph: GraphSpec::SouthNorthGrid { rows: 5, cols: 5 },
            basis: BasisKind::Dgft,
            clusters: 5,
            classes: 2,
            samples: 10,
            k_grid: Vec::new(),
            dgft: DgftParams::default(),
            seed: None,
            out_dir: None,
        }
    }
}

run_fields!(SampleConfig);

impl Experiment for SampleConfig {
    fn stochastic(&self) -> bool {
        true
    }

    fn inputs(&self) -> Vec<PathBuf> {
        self.graph.input().into_iter().map(Into::into).collect()
    }

    fn validate(&self) -> Result<(), CliError> {
        at_least("samples", self.samples, 1)?;
        at_least("classes", self.classes, 1)?;
        if self.k_grid.iter().any(|&k| k == 0 || k > self.samples) {
            return Err(config_err("k_grid entries must lie in 1..=samples"));
        }
        Ok(())
    }

    fn run(&self, seed: u64, out: &mut Output) -> Result<(), CliError> {
        let s = self.graph.shift(seed).in_module("graph")?;
        let n = s.n();
        if self.samples > n {
            return Err(config_err(format!(
                "cannot take {} samples of {n} nodes",
                self.samples
            )));
        }
        let (x, labels) =
            piecewise_constant(n, self.clusters, self.classes, seed).in_module("synth")?;
        let ks: Vec<usize> = if self.k_grid.is_empty() {
            (1..=self.samples).collect()
        } else {
            self.k_grid.clone()
        };
        let models: Vec<BandlimitedModel> = match self.basis {
            BasisKind::Dgft => {
                let b = learn_dgft(&s, &self.dgft.options(seed)).in_module("spectral")?;
                ks.iter()
                    .map(|&k| BandlimitedModel::from_ortho(&b, k))
                    .collect::<dgsp::Result<_>>()
            }
            BasisKind::Eigen => {
                let b = eigen_gft_basis(&s).in_module("spectral")?;
                ks.iter()
                    .map(|&k| BandlimitedModel::from_eigen(&b, k))
                    .collect::<dgsp::Result<_>>()
            }
        }
        .in_module("sampling")?;
        let top = (self.classes - 1) as f64;
        let mut rows = Vec::new();
        let mut sets = Vec::new();
        for (&k, model) in ks.iter().zip(&models) {
            let ms = greedy_select(model, self.samples).in_module("sampling")?;
            let rec = recoverability(model, &ms).in_module("sampling")?;
            let xbar = dgsp::sampling::sample(&x, &ms).in_module("sampling")?;
            let (xh, _) = reconstruct(model, &ms, &xbar).in_module("sampling")?;
            let hits = (0..n)
                .filter(|&i| xh[i].round().clamp(0.0, top) as usize == labels[i])
                .count();
            rows.push(vec![
                k.to_string(),
                self.samples.to_string(),
                rec.rank.to_string(),
                fmt(rec.sigma_min),
                fmt((&xh - &x).norm() / x.norm().max(f64::MIN_POSITIVE)),
                fmt(hits as f64 / n as f64),
            ]);
            sets.push(json!({"k": k, "nodes": ms.indices()}));
        }
        out.csv(
            "metrics.csv",
            &[
                "k",
                "samples",
                "rank",
                "sigma_min",
                "relative_error",
                "accuracy",
            ],
            &rows,
        )?;
        out.json("sampling_sets.json", &sets)?;
        out.signal("signal.csv", &x)
    }
}
