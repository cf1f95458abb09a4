use std::path::PathBuf;

use dgsp::filters::FilterTaps;
use dgsp::graph::{adjacency_shift, directed_cycle};
use dgsp::synth::{
    chorded_cycle, diffusion_dataset, diffusion_taps, directed_er, piecewise_constant,
    source_localization, south_north_grid,
};
use dgsp::{DMatrix, Digraph};
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{at_least, nonneg};
use crate::config::{config_err, CliError, InModule};
use crate::output::{fmt, Output};
use crate::{run_fields, Experiment};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SynthKind {
    DirectedCycle,
    DirectedEr,
    SouthNorthGrid,
    /// Class-valued bands on the south-north grid.
    PiecewiseConstant,
    /// Sparse inputs on a directed ER graph, diffused by geometric taps.
    DiffusionDataset,
    /// Two-class diffused deltas on a chorded cycle.
    SourceLocalization,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub kind: SynthKind,
    pub n: usize,
    pub p: f64,
    pub rows: usize,
    pub cols: usize,
    pub clusters: usize,
    pub classes: usize,
    pub taps: usize,
    pub decay: f64,
    pub signals: usize,
    pub sparsity: usize,
    pub noise: f64,
    pub chords: usize,
    /// Defaults to `[0, n / 2]`.
    pub sources: Option<[usize; 2]>,
    pub max_steps: usize,
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            kind: SynthKind::DirectedEr,
            n: 10,
            p: 0.3,
            rows: 4,
            cols: 4,
            clusters: 4,
            classes: 2,
            taps: 3,
            decay: 0.5,
            signals: 20,
            sparsity: 2,
            noise: 0.0,
            chords: 10,
            sources: None,
            max_steps: 4,
            seed: None,
            out_dir: None,
        }
    }
}

run_fields!(SynthConfig);

fn graph_rows(g: &Digraph) -> Vec<Vec<String>> {
    vec![
        vec!["nodes".into(), g.n().to_string()],
        vec!["edges".into(), g.edges().len().to_string()],
    ]
}

impl Experiment for SynthConfig {
    fn stochastic(&self) -> bool {
        !matches!(
            self.kind,
            SynthKind::DirectedCycle | SynthKind::SouthNorthGrid
        )
    }

    fn validate(&self) -> Result<(), CliError> {
        nonneg("noise", self.noise)?;
        if !(0.0..=1.0).contains(&self.p) {
            return Err(config_err(format!("p must lie in [0, 1], got {}", self.p)));
        }
        match self.kind {
            SynthKind::DiffusionDataset => {
                at_least("taps", self.taps, 1)?;
                at_least("signals", self.signals, 1)?;
            }
            SynthKind::SourceLocalization => at_least("signals", self.signals, 1)?,
            _ => {}
        }
        Ok(())
    }

    fn run(&self, seed: u64, out: &mut Output) -> Result<(), CliError> {
        let m = "synth";
        let truth;
        let g = match self.kind {
            SynthKind::DirectedCycle => {
                truth = json!({"kind": "directed-cycle", "n": self.n});
                directed_cycle(self.n).in_module(m)?
            }
            SynthKind::DirectedEr => {
                truth = json!({"kind": "directed-er", "n": self.n, "p": self.p, "seed": seed});
                directed_er(self.n, self.p, seed).in_module(m)?
            }
            SynthKind::SouthNorthGrid => {
                truth = json!({"kind": "south-north-grid", "rows": self.rows, "cols": self.cols});
                south_north_grid(self.rows, self.cols).in_module(m)?
            }
            SynthKind::PiecewiseConstant => {
                let g = south_north_grid(self.rows, self.cols).in_module(m)?;
                let (x, labels) =
                    piecewise_constant(g.n(), self.clusters, self.classes, seed).in_module(m)?;
                out.signal("signal.csv", &x)?;
                truth = json!({
                    "kind": "piecewise-constant", "rows": self.rows, "cols": self.cols,
                    "clusters": self.clusters, "classes": self.classes, "seed": seed, "labels": labels,
                });
                g
            }
            SynthKind::DiffusionDataset => {
                let g = directed_er(self.n, self.p, seed).in_module(m)?;
                let taps = diffusion_taps(self.taps, self.decay);
                let d =
                    diffusion_dataset(g, taps, self.signals, self.sparsity, self.noise, seed + 1)
                        .in_module(m)?;
                out.matrix("inputs.csv", &d.inputs)?;
                out.matrix("outputs.csv", &d.outputs)?;
                truth = json!({
                    "kind": "diffusion-dataset", "n": self.n, "p": self.p, "seed": seed,
                    "taps": d.taps, "supports": d.supports, "noise": d.noise,
                });
                d.graph
            }
            SynthKind::SourceLocalization => {
                let g = chorded_cycle(self.n, self.chords, seed).in_module(m)?;
                let d = source_localization(
                    g,
                    self.sources.unwrap_or([0, self.n / 2]),
                    self.signals,
                    self.max_steps,
                    self.noise,
                    seed + 1,
                )
                .in_module(m)?;
                let rows = d.signals.len();
                let sig = DMatrix::from_fn(rows, self.n, |r, c| d.signals[r][c]);
                out.matrix("signals.csv", &sig)?;
                let labels: Vec<Vec<String>> = d
                    .labels
                    .iter()
                    .enumerate()
                    .map(|(i, l)| vec![i.to_string(), l.to_string()])
                    .collect();
                out.csv("labels.csv", &["example", "label"], &labels)?;
                truth = json!({
                    "kind": "source-localization", "n": self.n, "chords": self.chords, "seed": seed,
                    "sources": d.sources, "max_steps": self.max_steps, "noise": self.noise,
                });
                d.graph
            }
        };
        out.shift("graph.mtx", &adjacency_shift(&g))?;
        out.json("truth.json", &truth)?;
        out.csv("summary.csv", &["quantity", "value"], &graph_rows(&g))?;
        if let SynthKind::DiffusionDataset = self.kind {
            let t: FilterTaps =
                serde_json::from_value(truth["taps"].clone()).expect("taps roundtrip");
            let rows: Vec<Vec<String>> = t
                .h()
                .iter()
                .enumerate()
                .map(|(l, h)| vec![l.to_string(), fmt(*h)])
                .collect();
            out.csv("taps.csv", &["l", "h"], &rows)?;
        }
        Ok(())
    }
}
