use std::path::PathBuf;

use dgsp::gnn::{train, Activation, GnnModel, LabeledSet, TrainOptions};
use dgsp::graph::adjacency_shift;
use dgsp::synth::source_localization;
use serde::{Deserialize, Serialize};

use super::{at_least, nonempty, nonneg};
use crate::config::{config_err, CliError, GraphSpec, InModule};
use crate::output::{fmt, Output};
use crate::{run_fields, Experiment};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GnnConfig {
    pub graph: GraphSpec,
    /// The two source nodes; class `c` starts at `sources[c]`.
    pub sources: [usize; 2],
    pub examples: usize,
    /// The first `train_examples` train, the rest validate.
    pub train_examples: usize,
    pub max_steps: usize,
    pub noise: f64,
    pub activations: Vec<Activation>,
    pub taps: usize,
    pub train: TrainOptions,
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
}

impl Default for GnnConfig {
    fn default() -> Self {
        GnnConfig {
            graph: GraphSpec::ChordedCycle {
                n: 20,
                chords: 10,
                seed: None,
            },
            sources: [0, 10],
            examples: 300,
            train_examples: 200,
            max_steps: 4,
            noise: 0.05,
            activations: vec![Activation::Relu, Activation::Relu],
            taps: 3,
            train: TrainOptions::default(),
            seed: None,
            out_dir: None,
        }
    }
}

run_fields!(GnnConfig);

impl Experiment for GnnConfig {
    fn stochastic(&self) -> bool {
        true
    }

    fn inputs(&self) -> Vec<PathBuf> {
        self.graph.input().into_iter().map(Into::into).collect()
    }

    fn validate(&self) -> Result<(), CliError> {
        at_least("examples", self.examples, 1)?;
        at_least("train_examples", self.train_examples, 1)?;
        at_least("taps", self.taps, 1)?;
        at_least("train.batch", self.train.batch, 1)?;
        nonempty("activations", &self.activations)?;
        nonneg("noise", self.noise)?;
        nonneg("train.lr", self.train.lr)?;
        if self.train_examples > self.examples {
            return Err(config_err("train_examples must not exceed examples"));
        }
        Ok(())
    }

    fn run(&self, seed: u64, out: &mut Output) -> Result<(), CliError> {
        let g = self.graph.digraph(seed).in_module("graph")?;
        let s = adjacency_shift(&g);
        let d = source_localization(
            g,
            self.sources,
            self.examples,
            self.max_steps,
            self.noise,
            seed,
        )
        .in_module("synth")?;
        let (train_set, val) = LabeledSet::from(&d)
            .split(self.train_examples)
            .in_module("gnn")?;
        let model = GnnModel::init(s, &self.activations, self.taps, 2, seed).in_module("gnn")?;
        let rep = train(&model, &train_set, val.as_ref(), &self.train).in_module("gnn")?;
        out.json("model.json", rep.model.params())?;
        let curve: Vec<Vec<String>> = rep
            .loss_curve
            .iter()
            .enumerate()
            .map(|(e, l)| vec![e.to_string(), fmt(*l)])
            .collect();
        out.csv("loss.csv", &["epoch", "mean_loss"], &curve)?;
        let metrics = vec![
            vec!["train_accuracy".into(), fmt(rep.train_accuracy)],
            vec![
                "validation_accuracy".into(),
                rep.validation_accuracy.map_or_else(String::new, fmt),
            ],
            vec!["epochs".into(), (rep.loss_curve.len() - 1).to_string()],
            vec![
                "diverged_at".into(),
                rep.diverged_at.map_or_else(String::new, |e| e.to_string()),
            ],
        ];
        out.csv("metrics.csv", &["metric", "value"], &metrics)
    }
}
