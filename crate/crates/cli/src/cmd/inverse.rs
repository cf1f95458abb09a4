use std::path::PathBuf;

use dgsp::filters::FilterTaps;
use dgsp::graph::adjacency_shift;
use dgsp::inverse::{
    blind_deconvolve, blind_null_thresholds, deconvolve_sparse, support_of, BlindOptions,
    DeconProblem, LassoOptions, LiftedOperator,
};
use dgsp::synth::{directed_er, normal_vec, rng, sparse_signal};
use dgsp::ShiftOperator;
use serde::{Deserialize, Serialize};

use super::{at_least, nonempty, nonneg, positive};
use crate::config::{config_err, CliError, GraphSpec, InModule};
use crate::output::{fmt, Output};
use crate::{run_fields, Experiment};

/// Result of one regularisation weight on one trial.
#[derive(Clone, Debug)]
pub struct AlphaOutcome {
    pub exact_support: bool,
    pub relative_error: f64,
    pub objective: f64,
}

/// One sparse-source trial: ER graph and input drawn from `seed`, then
/// solved for every `alpha_rel * 2 ||H^T y||_inf` in the grid.
#[allow(clippy::too_many_arguments)]
pub fn deconvolution_trial(
    n: usize,
    p: f64,
    taps: &FilterTaps,
    sparsity: usize,
    noise: f64,
    alpha_grid: &[f64],
    threshold: f64,
    seed: u64,
) -> dgsp::Result<Vec<AlphaOutcome>> {
    let s = adjacency_shift(&directed_er(n, p, seed)?);
    let h = taps.matrix(&s);
    let mut r = rng(seed + 500);
    let (x, support) = sparse_signal(&mut r, n, sparsity);
    let mut y = &h * &x;
    if noise > 0.0 {
        y += normal_vec(&mut r, n) * noise;
    }
    let amax = 2.0 * (h.transpose() * &y).amax();
    alpha_grid
        .iter()
        .map(|&c| {
            let prob = DeconProblem {
                s: s.clone(),
                taps: taps.clone(),
                ms: None,
                ybar: y.clone(),
                alpha: c * amax,
            };
            let res = deconvolve_sparse(&prob, &LassoOptions::default())?;
            Ok(AlphaOutcome {
                exact_support: support_of(&res.x, threshold) == support,
                relative_error: (&res.x - &x).norm() / x.norm(),
                objective: res.objective,
            })
        })
        .collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeconvolveConfig {
    pub n: usize,
    pub p: f64,
    pub taps: Vec<f64>,
    pub trials: usize,
    pub sparsity: usize,
    pub noise: f64,
    /// Weights relative to the smallest one that zeroes the solution.
    pub alpha_grid: Vec<f64>,
    /// Support is `|x_i| >= threshold * max |x|`.
    pub support_threshold: f64,
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
}

pub const DEFAULT_ALPHA_GRID: [f64; 8] = [1e-6, 1e-4, 1e-3, 1e-2, 0.05, 0.1, 0.2, 0.4];

impl Default for DeconvolveConfig {
    fn default() -> Self {
        DeconvolveConfig {
            n: 10,
            p: 0.3,
            taps: vec![1.0, 0.5, 0.25],
            trials: 20,
            sparsity: 2,
            noise: 0.0,
            alpha_grid: DEFAULT_ALPHA_GRID.to_vec(),
            support_threshold: 1e-2,
            seed: None,
            out_dir: None,
        }
    }
}

run_fields!(DeconvolveConfig, BlindConfig);

impl Experiment for DeconvolveConfig {
    fn stochastic(&self) -> bool {
        true
    }

    fn validate(&self) -> Result<(), CliError> {
        at_least("n", self.n, 1)?;
        at_least("trials", self.trials, 1)?;
        nonempty("taps", &self.taps)?;
        nonempty("alpha_grid", &self.alpha_grid)?;
        nonneg("noise", self.noise)?;
        positive("support_threshold", self.support_threshold)?;
        if self.sparsity == 0 || self.sparsity > self.n {
            return Err(config_err(format!("sparsity must lie in 1..={}", self.n)));
        }
        for &a in &self.alpha_grid {
            positive("alpha_grid entry", a)?;
        }
        Ok(())
    }

    fn run(&self, seed: u64, out: &mut Output) -> Result<(), CliError> {
        let taps = FilterTaps::new(self.taps.clone()).in_module("filters")?;
        let mut trials = Vec::with_capacity(self.trials);
        for t in 0..self.trials as u64 {
            trials.push(
                deconvolution_trial(
                    self.n,
                    self.p,
                    &taps,
                    self.sparsity,
                    self.noise,
                    &self.alpha_grid,
                    self.support_threshold,
                    seed + t,
                )
                .in_module("inverse")?,
            );
        }
        let count = trials.len() as f64;
        let rows: Vec<Vec<String>> = self
            .alpha_grid
            .iter()
            .enumerate()
            .map(|(a, c)| {
                let exact = trials.iter().filter(|t| t[a].exact_support).count() as f64;
                let err = trials.iter().map(|t| t[a].relative_error).sum::<f64>();
                let obj = trials.iter().map(|t| t[a].objective).sum::<f64>();
                vec![
                    fmt(*c),
                    fmt(exact / count),
                    fmt(err / count),
                    fmt(obj / count),
                ]
            })
            .collect();
        out.csv(
            "metrics.csv",
            &[
                "alpha_rel",
                "exact_support_rate",
                "mean_relative_error",
                "mean_objective",
            ],
            &rows,
        )?;
        let best = trials
            .iter()
            .filter(|t| t.iter().any(|o| o.exact_support))
            .count();
        let summary = vec![
            vec!["trials".into(), self.trials.to_string()],
            vec!["grid_best_exact_support".into(), best.to_string()],
        ];
        out.csv("summary.csv", &["metric", "value"], &summary)
    }
}

/// Outcome of one blind trial.
#[derive(Clone, Debug)]
pub struct BlindOutcome {
    /// `||x h^T - x0 h0^T||_F / ||x0 h0^T||_F`.
    pub relative_error: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Sparse `x` and Gaussian taps drawn from `seed`, full observation, no
/// row-sparsity weight and `alpha2 = factor * t2`.
pub fn blind_trial(
    s: &ShiftOperator,
    l: usize,
    sparsity: usize,
    factor: f64,
    opts: &BlindOptions,
    seed: u64,
) -> dgsp::Result<BlindOutcome> {
    let mut r = rng(seed);
    let (x, _) = sparse_signal(&mut r, s.n(), sparsity);
    let h = normal_vec(&mut r, l);
    let z = &x * h.transpose();
    let op = LiftedOperator::new(s, l, None)?;
    let y = op.apply(&z);
    let (_, t2) = blind_null_thresholds(&op, &y);
    let res = blind_deconvolve(s, &y, l, None, 0.0, factor * t2, opts)?;
    Ok(BlindOutcome {
        relative_error: (&res.x * res.h.transpose() - &z).norm() / z.norm(),
        iterations: res.iterations,
        converged: res.converged,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BlindConfig {
    pub graph: GraphSpec,
    pub taps: usize,
    pub sparsity: usize,
    pub trials: usize,
    /// Nuclear weight relative to the one that zeroes the solution.
    pub alpha2_factor: f64,
    pub success_tol: f64,
    /// Also run on ER digraphs with the cycle's edge density.
    pub compare_random: bool,
    pub solver: BlindOptions,
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
}

impl Default for BlindConfig {
    fn default() -> Self {
        BlindConfig {
            graph: GraphSpec::DirectedCycle { n: 16 },
            taps: 3,
            sparsity: 2,
            trials: 10,
            alpha2_factor: 0.02,
            success_tol: 1e-2,
            compare_random: true,
            solver: BlindOptions::default(),
            seed: None,
            out_dir: None,
        }
    }
}

impl Experiment for BlindConfig {
    fn stochastic(&self) -> bool {
        true
    }

    fn inputs(&self) -> Vec<PathBuf> {
        self.graph.input().into_iter().map(Into::into).collect()
    }

    fn validate(&self) -> Result<(), CliError> {
        at_least("taps", self.taps, 1)?;
        at_least("sparsity", self.sparsity, 1)?;
        at_least("trials", self.trials, 1)?;
        positive("alpha2_factor", self.alpha2_factor)?;
        positive("success_tol", self.success_tol)?;
        at_least("solver.max_iters", self.solver.max_iters, 1)?;
        positive("solver.rho", self.solver.rho)
    }

    fn run(&self, seed: u64, out: &mut Output) -> Result<(), CliError> {
        let s = self.graph.shift(seed).in_module("graph")?;
        let n = s.n();
        if self.sparsity > n || self.taps > n {
            return Err(config_err(format!(
                "sparsity and taps must not exceed the graph size {n}"
            )));
        }
        let density = s.triplets().iter().filter(|(i, j, _)| i != j).count() as f64
            / (n * (n - 1)).max(1) as f64;
        let mut rows = Vec::new();
        let mut summary = Vec::new();
        let mut variants = vec!["configured"];
        if self.compare_random {
            variants.push("random");
        }
        for variant in variants {
            let mut ok = 0;
            for t in 0..self.trials as u64 {
                let shift = if variant == "random" {
                    adjacency_shift(&directed_er(n, density, seed + 1000 + t).in_module("synth")?)
                } else {
                    s.clone()
                };
                let o = blind_trial(
                    &shift,
                    self.taps,
                    self.sparsity,
                    self.alpha2_factor,
                    &self.solver,
                    seed + t,
                )
                .in_module("inverse")?;
                let success = o.relative_error <= self.success_tol;
                ok += success as usize;
                rows.push(vec![
                    variant.to_string(),
                    t.to_string(),
                    fmt(o.relative_error),
                    success.to_string(),
                    o.iterations.to_string(),
                    o.converged.to_string(),
                ]);
            }
            summary.push(vec![
                variant.to_string(),
                ok.to_string(),
                fmt(ok as f64 / self.trials as f64),
            ]);
        }
        out.csv(
            "trials.csv",
            &[
                "graph",
                "trial",
                "relative_error",
                "success",
                "iterations",
                "converged",
            ],
            &rows,
        )?;
        out.csv(
            "metrics.csv",
            &["graph", "successes", "success_rate"],
            &summary,
        )
    }
}
