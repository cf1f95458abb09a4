//! Single-channel graph neural network with polynomial-filter layers.
//!
//! Layer `l` computes `zhat = sum_k h_k S^k z_prev` and `z = sigma(zhat)`.
//! The readout maps the last node features to class scores, `W z + b`, and
//! training minimises mean cross-entropy by mini-batch SGD.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{GspError, Result};
use crate::filters::{apply_polynomial, FilterTaps};
use crate::graph::{GraphSignal, ShiftOperator};
use crate::synth::{normal_mat, normal_vec, rng, SourceDataset};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    /// Median over the node itself and its in-neighbours. Even-size sets
    /// take the lower median.
    Median,
    Identity,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub taps: FilterTaps,
    pub activation: Activation,
}

/// Affine map from the `N` final node features to `C` class scores.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Readout {
    /// `C x N`, row-major.
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

impl Readout {
    pub fn new(weights: DMatrix<f64>, bias: DVector<f64>) -> Result<Self> {
        if weights.nrows() != bias.len() {
            return Err(GspError::DimensionMismatch {
                expected: weights.nrows(),
                got: bias.len(),
            });
        }
        if weights.nrows() == 0 {
            return Err(GspError::InvalidSize(
                "readout needs at least one class".into(),
            ));
        }
        Ok(Readout {
            weights: weights
                .row_iter()
                .map(|r| r.iter().copied().collect())
                .collect(),
            bias: bias.iter().copied().collect(),
        })
    }

    /// Identity map on `n` features with zero bias.
    pub fn identity(n: usize) -> Self {
        Readout::new(DMatrix::identity(n, n), DVector::zeros(n)).expect("square identity")
    }

    pub fn classes(&self) -> usize {
        self.bias.len()
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        let c = self.weights.len();
        let n = self.weights.first().map_or(0, Vec::len);
        DMatrix::from_fn(c, n, |i, j| self.weights[i][j])
    }

    pub fn bias_vec(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.bias)
    }
}

/// Learnable parameters; this is what a model JSON file holds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GnnParams {
    pub layers: Vec<LayerSpec>,
    pub readout: Readout,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GnnModel {
    s: ShiftOperator,
    st: ShiftOperator,
    neighborhoods: Vec<Vec<usize>>,
    params: GnnParams,
}

impl GnnModel {
    pub fn new(s: ShiftOperator, layers: Vec<LayerSpec>, readout: Readout) -> Result<Self> {
        let n = s.n();
        if layers.is_empty() {
            return Err(GspError::InvalidSize("need at least one layer".into()));
        }
        for (i, row) in readout.weights.iter().enumerate() {
            if row.len() != n {
                return Err(GspError::InvalidArgument(format!(
                    "readout row {i} has {} weights for {n} nodes",
                    row.len()
                )));
            }
        }
        if readout.weights.len() != readout.bias.len() {
            return Err(GspError::DimensionMismatch {
                expected: readout.weights.len(),
                got: readout.bias.len(),
            });
        }
        let neighborhoods = (0..n)
            .map(|i| {
                let mut v = s.in_neighbors(i);
                v.push(i);
                v.sort_unstable();
                v
            })
            .collect();
        Ok(GnnModel {
            st: s.transpose(),
            s,
            neighborhoods,
            params: GnnParams { layers, readout },
        })
    }

    pub fn from_params(s: ShiftOperator, params: GnnParams) -> Result<Self> {
        GnnModel::new(s, params.layers, params.readout)
    }

    /// Seeded random initialisation: taps `[1, 0, ...] + 0.1 N(0, 1)` and
    /// readout weights `N(0, 1/N)`, zero bias.
    pub fn init(
        s: ShiftOperator,
        activations: &[Activation],
        taps_len: usize,
        classes: usize,
        seed: u64,
    ) -> Result<Self> {
        if taps_len == 0 || classes == 0 {
            return Err(GspError::InvalidSize(
                "taps length and class count must be >= 1".into(),
            ));
        }
        let n = s.n();
        let mut r = rng(seed);
        let mut layers = Vec::with_capacity(activations.len());
        for &activation in activations {
            let mut h: Vec<f64> = normal_vec(&mut r, taps_len)
                .iter()
                .map(|v| 0.1 * v)
                .collect();
            h[0] += 1.0;
            layers.push(LayerSpec {
                taps: FilterTaps::new(h)?,
                activation,
            });
        }
        let w = normal_mat(&mut r, classes, n) / (n as f64).sqrt();
        GnnModel::new(s, layers, Readout::new(w, DVector::zeros(classes))?)
    }

    pub fn shift(&self) -> &ShiftOperator {
        &self.s
    }

    pub fn params(&self) -> &GnnParams {
        &self.params
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.params.layers
    }

    pub fn readout(&self) -> &Readout {
        &self.params.readout
    }

    pub fn n(&self) -> usize {
        self.s.n()
    }

    pub fn classes(&self) -> usize {
        self.params.readout.classes()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.params)?)
    }

    pub fn from_json(s: ShiftOperator, json: &str) -> Result<Self> {
        GnnModel::from_params(s, serde_json::from_str(json)?)
    }

    fn step(&mut self, g: &Gradients, lr: f64) {
        for (layer, gh) in self.params.layers.iter_mut().zip(&g.taps) {
            let h: Vec<f64> = layer
                .taps
                .h()
                .iter()
                .zip(gh)
                .map(|(h, d)| h - lr * d)
                .collect();
            layer.taps = FilterTaps::new(h).expect("same length");
        }
        let ro = &mut self.params.readout;
        for (i, row) in ro.weights.iter_mut().enumerate() {
            for (j, w) in row.iter_mut().enumerate() {
                *w -= lr * g.readout_weights[(i, j)];
            }
        }
        for (b, d) in ro.bias.iter_mut().zip(g.readout_bias.iter()) {
            *b -= lr * d;
        }
    }

    fn activate(&self, act: Activation, zhat: &DVector<f64>) -> (DVector<f64>, Option<Vec<usize>>) {
        match act {
            Activation::Identity => (zhat.clone(), None),
            Activation::Relu => (zhat.map(|v| v.max(0.0)), None),
            Activation::Median => {
                let sel: Vec<usize> = self
                    .neighborhoods
                    .iter()
                    .map(|nb| lower_median(zhat, nb))
                    .collect();
                (DVector::from_fn(zhat.len(), |i, _| zhat[sel[i]]), Some(sel))
            }
        }
    }
}

/// Index in `nb` whose value is the lower median; ties by node index.
fn lower_median(v: &DVector<f64>, nb: &[usize]) -> usize {
    let mut idx = nb.to_vec();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]).then(a.cmp(&b)));
    idx[(idx.len() - 1) / 2]
}

#[derive(Clone, Debug, PartialEq)]
pub struct ForwardPass {
    pub scores: DVector<f64>,
    /// `z^(0) = x, z^(1), ..., z^(L)`.
    pub features: Vec<DVector<f64>>,
    /// Pre-activations `zhat^(1), ..., zhat^(L)`.
    pub pre: Vec<DVector<f64>>,
    /// Selected node per output node for median layers.
    median_sel: Vec<Option<Vec<usize>>>,
}

pub fn forward(model: &GnnModel, x: &GraphSignal) -> Result<ForwardPass> {
    if x.len() != model.n() {
        return Err(GspError::DimensionMismatch {
            expected: model.n(),
            got: x.len(),
        });
    }
    let mut features = vec![x.clone()];
    let mut pre = Vec::with_capacity(model.layers().len());
    let mut median_sel = Vec::with_capacity(model.layers().len());
    for layer in model.layers() {
        let zhat = apply_polynomial(&model.s, &layer.taps, features.last().expect("nonempty"))?;
        let (z, sel) = model.activate(layer.activation, &zhat);
        pre.push(zhat);
        features.push(z);
        median_sel.push(sel);
    }
    let ro = model.readout();
    let scores = ro.matrix() * features.last().expect("nonempty") + ro.bias_vec();
    Ok(ForwardPass {
        scores,
        features,
        pre,
        median_sel,
    })
}

pub fn softmax(scores: &DVector<f64>) -> DVector<f64> {
    let m = scores.max();
    let e = scores.map(|v| (v - m).exp());
    let total = e.sum();
    e / total
}

/// `-log softmax(scores)[label]`, computed stably.
pub fn cross_entropy(scores: &DVector<f64>, label: usize) -> f64 {
    let m = scores.max();
    let lse = m + scores.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    lse - scores[label]
}

#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub taps: Vec<Vec<f64>>,
    pub readout_weights: DMatrix<f64>,
    pub readout_bias: DVector<f64>,
    pub loss: f64,
}

impl Gradients {
    fn zeros_like(model: &GnnModel) -> Self {
        Gradients {
            taps: model
                .layers()
                .iter()
                .map(|l| vec![0.0; l.taps.len()])
                .collect(),
            readout_weights: DMatrix::zeros(model.classes(), model.n()),
            readout_bias: DVector::zeros(model.classes()),
            loss: 0.0,
        }
    }

    fn add(mut self, o: &Gradients) -> Self {
        for (a, b) in self.taps.iter_mut().zip(&o.taps) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        self.readout_weights += &o.readout_weights;
        self.readout_bias += &o.readout_bias;
        self.loss += o.loss;
        self
    }

    fn scale(mut self, f: f64) -> Self {
        for t in self.taps.iter_mut().flatten() {
            *t *= f;
        }
        self.readout_weights *= f;
        self.readout_bias *= f;
        self.loss *= f;
        self
    }

    /// All entries in a fixed order: taps layer by layer, readout weights
    /// row-major, bias.
    pub fn flatten(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.taps.iter().flatten().copied().collect();
        for i in 0..self.readout_weights.nrows() {
            v.extend(self.readout_weights.row(i).iter());
        }
        v.extend(self.readout_bias.iter());
        v
    }
}

fn check_label(model: &GnnModel, label: usize) -> Result<()> {
    if label >= model.classes() {
        return Err(GspError::InvalidArgument(format!(
            "label {label} out of range for {} classes",
            model.classes()
        )));
    }
    Ok(())
}

/// Cross-entropy gradients of one example by reverse mode.
pub fn gradients(model: &GnnModel, x: &GraphSignal, label: usize) -> Result<Gradients> {
    check_label(model, label)?;
    let fp = forward(model, x)?;
    let mut dscores = softmax(&fp.scores);
    dscores[label] -= 1.0;
    let zl = fp.features.last().expect("nonempty");
    let mut g = Gradients::zeros_like(model);
    g.loss = cross_entropy(&fp.scores, label);
    g.readout_weights = &dscores * zl.transpose();
    g.readout_bias = dscores.clone();
    let mut dz = model.readout().matrix().transpose() * &dscores;
    for (l, layer) in model.layers().iter().enumerate().rev() {
        let zhat = &fp.pre[l];
        let dzhat = match layer.activation {
            Activation::Identity => dz,
            Activation::Relu => {
                DVector::from_fn(dz.len(), |i, _| if zhat[i] > 0.0 { dz[i] } else { 0.0 })
            }
            Activation::Median => {
                let sel = fp.median_sel[l].as_ref().expect("median layer");
                let mut d = DVector::zeros(dz.len());
                for (i, &j) in sel.iter().enumerate() {
                    d[j] += dz[i];
                }
                d
            }
        };
        // d/dh_k = <dzhat, S^k z_prev>
        let mut cur = fp.features[l].clone();
        for k in 0..layer.taps.len() {
            if k > 0 {
                cur = model.s.apply(&cur);
            }
            g.taps[l][k] = dzhat.dot(&cur);
        }
        if l > 0 {
            // dz_prev = sum_k h_k (S^T)^k dzhat
            dz = apply_polynomial(&model.st, &layer.taps, &dzhat)?;
        } else {
            dz = dzhat;
        }
    }
    Ok(g)
}

/// Pairwise sum in index order; the tree shape depends only on the length.
fn pairwise_sum(items: &[Gradients]) -> Gradients {
    match items.len() {
        1 => items[0].clone(),
        n => {
            let (a, b) = items.split_at(n / 2);
            pairwise_sum(a).add(&pairwise_sum(b))
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledSet {
    pub signals: Vec<GraphSignal>,
    pub labels: Vec<usize>,
}

impl LabeledSet {
    pub fn new(signals: Vec<GraphSignal>, labels: Vec<usize>) -> Result<Self> {
        if signals.len() != labels.len() {
            return Err(GspError::DimensionMismatch {
                expected: signals.len(),
                got: labels.len(),
            });
        }
        if signals.is_empty() {
            return Err(GspError::InvalidSize("dataset is empty".into()));
        }
        Ok(LabeledSet { signals, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// First `train` examples and the rest.
    pub fn split(&self, train: usize) -> Result<(LabeledSet, Option<LabeledSet>)> {
        if train == 0 || train > self.len() {
            return Err(GspError::InvalidArgument(format!(
                "train size {train} outside 1..={}",
                self.len()
            )));
        }
        let head = LabeledSet::new(
            self.signals[..train].to_vec(),
            self.labels[..train].to_vec(),
        )?;
        let tail = (train < self.len()).then(|| LabeledSet {
            signals: self.signals[train..].to_vec(),
            labels: self.labels[train..].to_vec(),
        });
        Ok((head, tail))
    }
}

impl From<&SourceDataset> for LabeledSet {
    fn from(d: &SourceDataset) -> Self {
        LabeledSet {
            signals: d
                .signals
                .iter()
                .map(|s| DVector::from_column_slice(s))
                .collect(),
            labels: d.labels.clone(),
        }
    }
}

/// Mean loss and gradients over the listed examples, computed in parallel.
fn batch_gradients(model: &GnnModel, data: &LabeledSet, idx: &[usize]) -> Result<Gradients> {
    let per: Vec<Gradients> = idx
        .par_iter()
        .map(|&i| gradients(model, &data.signals[i], data.labels[i]))
        .collect::<Result<_>>()?;
    Ok(pairwise_sum(&per).scale(1.0 / idx.len() as f64))
}

pub fn mean_loss(model: &GnnModel, data: &LabeledSet) -> Result<f64> {
    let losses: Vec<f64> = (0..data.len())
        .into_par_iter()
        .map(|i| {
            check_label(model, data.labels[i])?;
            Ok(cross_entropy(
                &forward(model, &data.signals[i])?.scores,
                data.labels[i],
            ))
        })
        .collect::<Result<_>>()?;
    Ok(losses.iter().sum::<f64>() / data.len() as f64)
}

/// Class with the largest score; ties go to the lowest index.
pub fn predict(model: &GnnModel, x: &GraphSignal) -> Result<usize> {
    let s = forward(model, x)?.scores;
    Ok(s.iter()
        .enumerate()
        .fold(0, |best, (i, &v)| if v > s[best] { i } else { best }))
}

pub fn accuracy(model: &GnnModel, data: &LabeledSet) -> Result<f64> {
    let hits: Vec<bool> = (0..data.len())
        .into_par_iter()
        .map(|i| Ok(predict(model, &data.signals[i])? == data.labels[i]))
        .collect::<Result<_>>()?;
    Ok(hits.iter().filter(|&&h| h).count() as f64 / data.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainOptions {
    pub epochs: usize,
    pub lr: f64,
    pub batch: usize,
    pub seed: u64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            epochs: 200,
            lr: 0.05,
            batch: 16,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainReport {
    pub model: GnnModel,
    /// Mean training loss before training and after each completed epoch.
    pub loss_curve: Vec<f64>,
    pub train_accuracy: f64,
    pub validation_accuracy: Option<f64>,
    /// Epoch (1-based) in which the loss became non-finite, if any. The
    /// returned model is the last one with a finite loss.
    pub diverged_at: Option<usize>,
}

pub fn train(
    model: &GnnModel,
    data: &LabeledSet,
    validation: Option<&LabeledSet>,
    opts: &TrainOptions,
) -> Result<TrainReport> {
    if data.is_empty() {
        return Err(GspError::InvalidSize("dataset is empty".into()));
    }
    if opts.batch == 0 {
        return Err(GspError::InvalidArgument("batch size must be >= 1".into()));
    }
    if !opts.lr.is_finite() || opts.lr < 0.0 {
        return Err(GspError::InvalidArgument(format!(
            "learning rate {} must be finite and >= 0",
            opts.lr
        )));
    }
    for &l in data
        .labels
        .iter()
        .chain(validation.iter().flat_map(|v| v.labels.iter()))
    {
        check_label(model, l)?;
    }
    let mut r = rng(opts.seed);
    let mut current = model.clone();
    let mut loss_curve = vec![mean_loss(&current, data)?];
    let mut diverged_at = None;
    let mut order: Vec<usize> = (0..data.len()).collect();
    'epochs: for epoch in 1..=opts.epochs {
        let start = current.clone();
        order.shuffle(&mut r);
        for chunk in order.chunks(opts.batch) {
            let g = batch_gradients(&current, data, chunk)?;
            if !g.loss.is_finite() || g.flatten().iter().any(|v| !v.is_finite()) {
                current = start;
                diverged_at = Some(epoch);
                break 'epochs;
            }
            current.step(&g, opts.lr);
        }
        let loss = mean_loss(&current, data)?;
        if !loss.is_finite() {
            current = start;
            diverged_at = Some(epoch);
            break;
        }
        loss_curve.push(loss);
    }
    Ok(TrainReport {
        train_accuracy: accuracy(&current, data)?,
        validation_accuracy: validation.map(|v| accuracy(&current, v)).transpose()?,
        model: current,
        loss_curve,
        diverged_at,
    })
}
