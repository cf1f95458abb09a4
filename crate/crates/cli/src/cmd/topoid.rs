use std::path::PathBuf;

use dgsp::graph::adjacency_shift;
use dgsp::io::load_dense_csv;
use dgsp::synth::{directed_er, planted_sem, planted_svarm, scaled_random_shift};
use dgsp::topoid::{
    edge_set, infer_cgp, infer_commute, infer_sem, infer_svarm, sem_null_threshold, simulate_cgp,
    simulate_sem, simulate_var, support_auc, support_f1, svarm_null_threshold, CdOptions,
    CgpOptions, CommuteOptions, TimeSeries,
};
use dgsp::DMatrix;
use serde::{Deserialize, Serialize};

use super::{log_grid, nonneg};
use crate::config::{config_err, CliError, InModule};
use crate::output::{fmt, Output};
use crate::{run_fields, Experiment};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Sem,
    Svarm,
    Cgp,
    Commute,
}

/// Without `data` each method runs on its planted benchmark; the `Option`
/// fields then fall back to that benchmark's values.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TopoidConfig {
    pub method: Method,
    pub n: Option<usize>,
    pub p: Option<f64>,
    pub steps: Option<usize>,
    pub noise: Option<f64>,
    pub lags: Option<usize>,
    /// SEM and SVARM: multiples of the null threshold. CGP: the commutator
    /// slack `alpha`. Commute: absolute tolerances `eps`. Empty means the
    /// method's default grid.
    pub alpha_grid: Vec<f64>,
    /// CGP lasso weight on the filter coefficients.
    pub beta: f64,
    /// Commute: restrict the shift to nonnegative weights.
    pub nonneg: bool,
    /// Magnitude above which an estimated entry counts as an edge.
    pub edge_tol: Option<f64>,
    /// Dense CSV, nodes by time steps; for `commute` the filter matrix.
    pub data: Option<PathBuf>,
    /// Dense CSV of exogenous inputs matching `data` (SEM only).
    pub inputs: Option<PathBuf>,
    /// Dense CSV of the true shift, used for scoring.
    pub truth: Option<PathBuf>,
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
}

impl Default for TopoidConfig {
    fn default() -> Self {
        TopoidConfig {
            method: Method::Sem,
            n: None,
            p: None,
            steps: None,
            noise: None,
            lags: None,
            alpha_grid: Vec::new(),
            beta: 1e-3,
            nonneg: true,
            edge_tol: None,
            data: None,
            inputs: None,
            truth: None,
            seed: None,
            out_dir: None,
        }
    }
}

run_fields!(TopoidConfig);

/// Estimate for one grid value.
struct Fit {
    alpha: f64,
    s: DMatrix<f64>,
}

impl TopoidConfig {
    fn lags(&self) -> usize {
        self.lags.unwrap_or(match self.method {
            Method::Svarm => 2,
            _ => 1,
        })
    }

    fn edge_tol(&self) -> f64 {
        self.edge_tol.unwrap_or(match self.method {
            Method::Sem | Method::Svarm => 0.0,
            Method::Cgp | Method::Commute => 1e-6,
        })
    }

    fn grid(&self) -> Vec<f64> {
        if !self.alpha_grid.is_empty() {
            return self.alpha_grid.clone();
        }
        match self.method {
            Method::Sem | Method::Svarm => log_grid(1e-3, 1.0, 25),
            Method::Cgp => vec![0.03, 0.1, 0.2, 0.3, 0.5],
            Method::Commute => vec![1e-8],
        }
    }

    /// Planted benchmark: observations (or the filter for `commute`),
    /// optional inputs and the true shift.
    fn planted(
        &self,
        seed: u64,
    ) -> dgsp::Result<(DMatrix<f64>, Option<DMatrix<f64>>, DMatrix<f64>)> {
        match self.method {
            Method::Sem => {
                let (s, omega) = planted_sem(self.n.unwrap_or(10), self.p.unwrap_or(0.2), seed)?;
                let ts = simulate_sem(
                    &s,
                    &omega,
                    self.steps.unwrap_or(500),
                    self.noise.unwrap_or(0.1),
                    seed,
                )?;
                Ok((ts.x, ts.u, s))
            }
            Method::Svarm => {
                let mats = planted_svarm(self.n.unwrap_or(10), self.p.unwrap_or(0.15), 0.8, seed)?;
                let ts = simulate_var(
                    &mats,
                    self.steps.unwrap_or(1000),
                    self.noise.unwrap_or(1.0),
                    seed,
                )?;
                Ok((ts.x, None, mats[0].clone()))
            }
            Method::Cgp => {
                let s = adjacency_shift(&directed_er(
                    self.n.unwrap_or(8),
                    self.p.unwrap_or(0.2),
                    seed,
                )?)
                .to_dense();
                let ts = simulate_cgp(
                    &s,
                    &[vec![0.0, 0.3]],
                    self.steps.unwrap_or(2000),
                    self.noise.unwrap_or(1.0),
                    seed,
                )?;
                Ok((ts.x, None, s))
            }
            Method::Commute => {
                let n = self.n.unwrap_or(8);
                let s = scaled_random_shift(n, self.p.unwrap_or(0.4), 1.0, seed)?.to_dense();
                let h = DMatrix::identity(n, n) * 0.5 + &s * 0.8 + &s * &s * 0.3;
                Ok((h, None, s))
            }
        }
    }

    fn fits(&self, data: DMatrix<f64>, inputs: Option<DMatrix<f64>>) -> dgsp::Result<Vec<Fit>> {
        let grid = self.grid();
        let cd = CdOptions::default();
        match self.method {
            Method::Sem => {
                let ts = TimeSeries::new(data, inputs)?;
                let top = (0..ts.n())
                    .map(|i| sem_null_threshold(&ts, i))
                    .collect::<dgsp::Result<Vec<f64>>>()?
                    .into_iter()
                    .fold(0.0, f64::max);
                grid.iter()
                    .map(|&c| {
                        Ok(Fit {
                            alpha: c,
                            s: infer_sem(&ts, c * top, &cd)?.matrix(),
                        })
                    })
                    .collect()
            }
            Method::Svarm => {
                let ts = TimeSeries::new(data, None)?;
                let l = self.lags();
                let top = svarm_null_threshold(&ts, l)?;
                grid.iter()
                    .map(|&c| {
                        Ok(Fit {
                            alpha: c,
                            s: infer_svarm(&ts, l, c * top, &cd)?.matrix(0),
                        })
                    })
                    .collect()
            }
            Method::Cgp => {
                let ts = TimeSeries::new(data, None)?;
                grid.iter()
                    .map(|&a| {
                        let est =
                            infer_cgp(&ts, self.lags(), a, self.beta, &CgpOptions::default())?;
                        Ok(Fit {
                            alpha: a,
                            s: est.shift(),
                        })
                    })
                    .collect()
            }
            Method::Commute => {
                let n = data.nrows();
                let mass = |j: usize| {
                    (0..n)
                        .filter(|&i| i != j)
                        .map(|i| data[(i, j)].abs())
                        .sum::<f64>()
                };
                let col = (0..n)
                    .max_by(|&a, &b| mass(a).total_cmp(&mass(b)))
                    .unwrap_or(0);
                let opts = CommuteOptions {
                    nonneg: self.nonneg,
                    norm_col: col,
                    ..Default::default()
                };
                grid.iter()
                    .map(|&eps| {
                        Ok(Fit {
                            alpha: eps,
                            s: infer_commute(&data, eps, &opts)?.s,
                        })
                    })
                    .collect()
            }
        }
    }
}

impl Experiment for TopoidConfig {
    fn stochastic(&self) -> bool {
        self.data.is_none()
    }

    fn inputs(&self) -> Vec<PathBuf> {
        [&self.data, &self.inputs, &self.truth]
            .into_iter()
            .flatten()
            .cloned()
            .collect()
    }

    fn validate(&self) -> Result<(), CliError> {
        nonneg("beta", self.beta)?;
        for &a in &self.alpha_grid {
            nonneg("alpha_grid entry", a)?;
        }
        if self.inputs.is_some() && self.method != Method::Sem {
            return Err(config_err("inputs are only used by the sem method"));
        }
        if self.data.is_some() && self.method == Method::Sem && self.inputs.is_none() {
            return Err(config_err("the sem method needs inputs alongside data"));
        }
        Ok(())
    }

    fn run(&self, seed: u64, out: &mut Output) -> Result<(), CliError> {
        let (data, inputs, truth) = match &self.data {
            Some(path) => {
                let x = load_dense_csv(path).in_module("io")?;
                let u = self
                    .inputs
                    .as_ref()
                    .map(load_dense_csv)
                    .transpose()
                    .in_module("io")?;
                let t = self
                    .truth
                    .as_ref()
                    .map(load_dense_csv)
                    .transpose()
                    .in_module("io")?;
                (x, u, t)
            }
            None => {
                let (x, u, t) = self.planted(seed).in_module("synth")?;
                (x, u, Some(t))
            }
        };
        if let Some(t) = &truth {
            if t.nrows() != data.nrows() || t.ncols() != data.nrows() {
                return Err(config_err(format!("truth must be {0}x{0}", data.nrows())));
            }
        }
        let fits = self.fits(data, inputs).in_module("topoid")?;
        let tol = self.edge_tol();
        let truth_edges = truth.as_ref().map(|t| edge_set(t, 0.0));
        let mut rows = Vec::new();
        let mut best: Option<(f64, usize)> = None;
        for (k, f) in fits.iter().enumerate() {
            let edges = edge_set(&f.s, tol);
            let mut row = vec![fmt(f.alpha), edges.len().to_string()];
            if let (Some(t), Some(te)) = (&truth, &truth_edges) {
                let f1 = support_f1(&edges, te);
                row.push(fmt(f1));
                row.push(fmt(support_auc(&f.s, t)));
                if best.is_none_or(|(b, _)| f1 > b) {
                    best = Some((f1, k));
                }
            }
            rows.push(row);
        }
        let header: &[&str] = if truth.is_some() {
            &["alpha", "edges", "f1", "auc"]
        } else {
            &["alpha", "edges"]
        };
        out.csv("metrics.csv", header, &rows)?;
        let k = best.map_or(0, |(_, k)| k);
        out.matrix("estimate.csv", &fits[k].s)?;
        if let Some(t) = &truth {
            out.matrix("truth.csv", t)?;
            let summary = vec![
                vec!["best_alpha".into(), fmt(fits[k].alpha)],
                vec!["best_f1".into(), fmt(best.map_or(f64::NAN, |b| b.0))],
                vec![
                    "true_edges".into(),
                    truth_edges.map_or(0, |e| e.len()).to_string(),
                ],
            ];
            out.csv("summary.csv", &["metric", "value"], &summary)?;
        }
        Ok(())
    }
}
