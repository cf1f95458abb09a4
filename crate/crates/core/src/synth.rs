//! Seeded synthetic graphs, signals and datasets.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{GspError, Result};
use crate::filters::{apply_polynomial, FilterTaps};
use crate::graph::{adjacency_shift, Digraph, Edge, GraphSignal, ShiftOperator};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal_vec(rng: &mut impl Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| StandardNormal.sample(rng))
}

pub fn normal_mat(rng: &mut impl Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| StandardNormal.sample(rng))
}

fn check_prob(p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(GspError::InvalidArgument(format!(
            "edge probability {p} not in [0, 1]"
        )));
    }
    Ok(())
}

/// Directed Erdos-Renyi graph: each ordered pair `i != j` is an edge with
/// probability `p`, unit weight.
pub fn directed_er(n: usize, p: f64, seed: u64) -> Result<Digraph> {
    weighted_er(n, p, (1.0, 1.0), seed)
}

/// Directed Erdos-Renyi graph with weights uniform on `[lo, hi]`.
pub fn weighted_er(n: usize, p: f64, (lo, hi): (f64, f64), seed: u64) -> Result<Digraph> {
    if n == 0 {
        return Err(GspError::InvalidSize(
            "graph needs at least one node".into(),
        ));
    }
    check_prob(p)?;
    if lo.is_nan() || hi.is_nan() || lo > hi {
        return Err(GspError::InvalidArgument(format!(
            "empty weight range [{lo}, {hi}]"
        )));
    }
    let mut rng = rng(seed);
    let mut edges = Vec::new();
    for src in 0..n {
        for dst in 0..n {
            if src == dst {
                continue;
            }
            let keep = rng.random::<f64>() < p;
            let w = if lo == hi {
                lo
            } else {
                rng.random_range(lo..=hi)
            };
            if keep {
                edges.push(Edge {
                    src,
                    dst,
                    weight: w,
                });
            }
        }
    }
    Digraph::new(n, edges)
}

/// Planar `rows x cols` grid, node `r * cols + c` with row 0 southmost.
/// Vertical edges point north and horizontal edges point east.
pub fn south_north_grid(rows: usize, cols: usize) -> Result<Digraph> {
    if rows == 0 || cols == 0 || rows * cols < 2 {
        return Err(GspError::InvalidSize(format!(
            "grid {rows}x{cols} too small"
        )));
    }
    let id = |r: usize, c: usize| r * cols + c;
    let mut pairs = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            if r + 1 < rows {
                pairs.push((id(r, c), id(r + 1, c)));
            }
            if c + 1 < cols {
                pairs.push((id(r, c), id(r, c + 1)));
            }
        }
    }
    Digraph::from_unweighted(rows * cols, &pairs)
}

/// Signal constant on `clusters` contiguous index blocks, the value on each
/// block being its class label. Labels are drawn so neighbouring blocks
/// differ when more than one class is available.
pub fn piecewise_constant(
    n: usize,
    clusters: usize,
    classes: usize,
    seed: u64,
) -> Result<(GraphSignal, Vec<usize>)> {
    if clusters == 0 || clusters > n || classes == 0 {
        return Err(GspError::InvalidArgument(format!(
            "need 1 <= clusters <= n and classes >= 1, got clusters = {clusters}, n = {n}, classes = {classes}"
        )));
    }
    let mut rng = rng(seed);
    let mut block_label = Vec::with_capacity(clusters);
    for b in 0..clusters {
        let mut lab = rng.random_range(0..classes);
        if classes > 1 && b > 0 && lab == block_label[b - 1] {
            lab = (lab + 1) % classes;
        }
        block_label.push(lab);
    }
    let labels: Vec<usize> = (0..n).map(|i| block_label[i * clusters / n]).collect();
    let x = DVector::from_fn(n, |i, _| labels[i] as f64);
    Ok((x, labels))
}

/// `k`-sparse vector with standard normal amplitudes bounded away from zero.
pub fn sparse_signal(rng: &mut impl Rng, n: usize, k: usize) -> (GraphSignal, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let mut support: Vec<usize> = idx[..k.min(n)].to_vec();
    support.sort_unstable();
    let mut x = DVector::zeros(n);
    for &i in &support {
        let mag = 0.5 + rng.random::<f64>();
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        x[i] = sign * mag;
    }
    (x, support)
}

/// Sparse inputs diffused by a known polynomial filter.
#[derive(Clone, Debug)]
pub struct DiffusionDataset {
    pub graph: Digraph,
    pub taps: FilterTaps,
    /// Column `r` is input `r`.
    pub inputs: DMatrix<f64>,
    /// `H inputs + noise`.
    pub outputs: DMatrix<f64>,
    pub supports: Vec<Vec<usize>>,
    pub noise: f64,
    pub seed: u64,
}

/// Geometric diffusion taps `h_l = decay^l`, `l < L`.
pub fn diffusion_taps(l: usize, decay: f64) -> FilterTaps {
    FilterTaps::new((0..l).map(|k| decay.powi(k as i32)).collect()).expect("l >= 1")
}

pub fn diffusion_dataset(
    graph: Digraph,
    taps: FilterTaps,
    signals: usize,
    sparsity: usize,
    noise: f64,
    seed: u64,
) -> Result<DiffusionDataset> {
    let n = graph.n();
    let s = adjacency_shift(&graph);
    let mut rng = rng(seed);
    let mut inputs = DMatrix::zeros(n, signals);
    let mut outputs = DMatrix::zeros(n, signals);
    let mut supports = Vec::with_capacity(signals);
    for r in 0..signals {
        let (x, sup) = sparse_signal(&mut rng, n, sparsity);
        let y = apply_polynomial(&s, &taps, &x)? + normal_vec(&mut rng, n) * noise;
        inputs.set_column(r, &x);
        outputs.set_column(r, &y);
        supports.push(sup);
    }
    Ok(DiffusionDataset {
        graph,
        taps,
        inputs,
        outputs,
        supports,
        noise,
        seed,
    })
}

/// Two-class source localisation: class `c` is a delta at `sources[c]`
/// with random amplitude, diffused `t ~ U{1..=max_steps}` steps through the
/// shift, plus Gaussian noise.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SourceDataset {
    pub graph: Digraph,
    pub sources: [usize; 2],
    pub signals: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
}

pub fn source_localization(
    graph: Digraph,
    sources: [usize; 2],
    count: usize,
    max_steps: usize,
    noise: f64,
    seed: u64,
) -> Result<SourceDataset> {
    let n = graph.n();
    if sources.iter().any(|&s| s >= n) || sources[0] == sources[1] {
        return Err(GspError::InvalidArgument(
            "sources must be two distinct nodes".into(),
        ));
    }
    let s = adjacency_shift(&graph);
    let mut rng = rng(seed);
    let mut signals = Vec::with_capacity(count);
    let mut labels = Vec::with_capacity(count);
    for _ in 0..count {
        let c = rng.random_range(0..2usize);
        let amp = 0.5 + rng.random::<f64>();
        let steps = rng.random_range(1..=max_steps.max(1));
        let mut x = DVector::zeros(n);
        x[sources[c]] = amp;
        let mut acc = x.clone();
        for _ in 0..steps {
            x = s.apply(&x);
            acc += &x;
        }
        acc += normal_vec(&mut rng, n) * noise;
        signals.push(acc.iter().copied().collect());
        labels.push(c);
    }
    Ok(SourceDataset {
        graph,
        sources,
        signals,
        labels,
    })
}

/// Strongly connected digraph for the source-localisation benchmark:
/// a directed cycle plus seeded random chords.
pub fn chorded_cycle(n: usize, chords: usize, seed: u64) -> Result<Digraph> {
    if n < 3 {
        return Err(GspError::InvalidSize(format!("need n >= 3, got {n}")));
    }
    let mut rng = rng(seed);
    let mut pairs: Vec<(usize, usize)> = (0..n).map(|i| (i, (i + 1) % n)).collect();
    let mut tries = 0;
    while pairs.len() < n + chords && tries < 100 * (chords + 1) {
        tries += 1;
        let a = rng.random_range(0..n);
        let b = rng.random_range(0..n);
        if a != b && !pairs.contains(&(a, b)) {
            pairs.push((a, b));
        }
    }
    Digraph::from_unweighted(n, &pairs)
}

/// Random shift with the sparsity of a directed ER graph, weights uniform on
/// `[0.2, 1]`, rescaled to spectral norm `target_norm`.
pub fn scaled_random_shift(n: usize, p: f64, target_norm: f64, seed: u64) -> Result<ShiftOperator> {
    let g = weighted_er(n, p, (0.2, 1.0), seed)?;
    let s = adjacency_shift(&g);
    let norm = crate::linalg::spectral_norm(&s.to_dense());
    if norm == 0.0 {
        return Ok(s);
    }
    Ok(s.scaled(target_norm / norm))
}

/// Planted SEM benchmark: edges only from lower to higher node index, each
/// present with probability `p`, weights of random sign and magnitude in
/// `[0.4, 0.8]`, rescaled to spectral norm at most 0.8. Input gains are
/// uniform on `[0.5, 1.5]`.
pub fn planted_sem(n: usize, p: f64, seed: u64) -> Result<(DMatrix<f64>, Vec<f64>)> {
    if n == 0 {
        return Err(GspError::InvalidSize(
            "graph needs at least one node".into(),
        ));
    }
    check_prob(p)?;
    let mut rng = rng(seed);
    let mut s = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..i {
            if rng.random::<f64>() < p {
                let mag = rng.random_range(0.4..=0.8);
                s[(i, j)] = if rng.random::<bool>() { mag } else { -mag };
            }
        }
    }
    let norm = crate::linalg::spectral_norm(&s);
    if norm > 0.8 {
        s *= 0.8 / norm;
    }
    let omega = (0..n).map(|_| rng.random_range(0.5..=1.5)).collect();
    Ok((s, omega))
}

/// Planted two-lag VAR with a common off-diagonal support drawn as a
/// directed ER graph. Lag-one weights have magnitude in `[0.3, 0.6]`, lag-two
/// in `[0.15, 0.3]`, both with random signs; self loops get `0.3` and `-0.1`.
/// The pair is rescaled (lag `l` by `c^l`) so the companion spectral radius
/// is at most `radius`.
pub fn planted_svarm(n: usize, p: f64, radius: f64, seed: u64) -> Result<Vec<DMatrix<f64>>> {
    let g = directed_er(n, p, seed)?;
    let mut rng = rng(seed.wrapping_add(1));
    let mut s1 = DMatrix::from_diagonal_element(n, n, 0.3);
    let mut s2 = DMatrix::from_diagonal_element(n, n, -0.1);
    for e in g.edges() {
        let sign = |r: &mut ChaCha8Rng| if r.random::<bool>() { 1.0 } else { -1.0 };
        s1[(e.dst, e.src)] = sign(&mut rng) * rng.random_range(0.3..=0.6);
        s2[(e.dst, e.src)] = sign(&mut rng) * rng.random_range(0.15..=0.3);
    }
    let rho = crate::linalg::spectral_radius(&crate::topoid::companion(&[s1.clone(), s2.clone()]));
    if rho > radius {
        let c = radius / rho;
        s1 *= c;
        s2 *= c * c;
    }
    Ok(vec![s1, s2])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn er_is_deterministic() {
        let a = directed_er(10, 0.3, 7).unwrap();
        let b = directed_er(10, 0.3, 7).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, directed_er(10, 0.3, 8).unwrap());
    }

    #[test]
    fn grid_orientation_is_consistent() {
        let g = south_north_grid(4, 4).unwrap();
        assert_eq!(g.edges().len(), 2 * 4 * 3);
        for e in g.edges() {
            let (r0, c0) = (e.src / 4, e.src % 4);
            let (r1, c1) = (e.dst / 4, e.dst % 4);
            assert!((r1 == r0 + 1 && c1 == c0) || (r1 == r0 && c1 == c0 + 1));
        }
    }

    #[test]
    fn piecewise_blocks() {
        let (x, labels) = piecewise_constant(12, 3, 2, 1).unwrap();
        assert_eq!(labels.len(), 12);
        for b in 0..3 {
            let block = &labels[b * 4..(b + 1) * 4];
            assert!(block.iter().all(|&l| l == block[0]));
        }
        assert_ne!(labels[3], labels[4]);
        assert_eq!(x[0], labels[0] as f64);
    }

    #[test]
    fn sparse_signal_support() {
        let mut r = rng(3);
        let (x, sup) = sparse_signal(&mut r, 10, 2);
        assert_eq!(sup.len(), 2);
        assert_eq!(x.iter().filter(|v| **v != 0.0).count(), 2);
        assert!(sup.iter().all(|&i| x[i].abs() >= 0.5));
    }

    #[test]
    fn diffusion_outputs_reproduce_from_filter() {
        let g = directed_er(8, 0.3, 2).unwrap();
        let d = diffusion_dataset(g.clone(), diffusion_taps(3, 0.5), 4, 2, 0.0, 9).unwrap();
        let s = adjacency_shift(&g);
        for r in 0..4 {
            let y = apply_polynomial(&s, &d.taps, &d.inputs.column(r).into_owned()).unwrap();
            assert_eq!(y, d.outputs.column(r).into_owned());
        }
    }
}
