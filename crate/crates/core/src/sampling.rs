//! Selection sampling and reconstruction of bandlimited graph signals.

use nalgebra::DVector;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{GspError, Result};
use crate::graph::{check_len, GraphSignal};
use crate::linalg::{self, CMatrix, CVector};
use crate::spectral::{EigenBasis, OrthoBasis};

/// Singular values below `RCOND * sigma_max` count as zero.
pub const RCOND: f64 = 1e-10;

/// Ordered, duplicate-free node indices. Serialises as a JSON array.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SamplingSet {
    indices: Vec<usize>,
}

impl SamplingSet {
    pub fn new(indices: Vec<usize>, n: usize) -> Result<Self> {
        if indices.is_empty() || indices.len() > n {
            return Err(GspError::InvalidArgument(format!(
                "sampling set size must be in 1..={n}, got {}",
                indices.len()
            )));
        }
        let mut seen = vec![false; n];
        for &i in &indices {
            if i >= n {
                return Err(GspError::InvalidArgument(format!(
                    "node {i} out of range for n = {n}"
                )));
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(GspError::InvalidArgument(format!("node {i} listed twice")));
            }
        }
        Ok(SamplingSet { indices })
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Checks an externally loaded set against the graph size.
    pub fn validate(&self, n: usize) -> Result<()> {
        SamplingSet::new(self.indices.clone(), n).map(|_| ())
    }
}

/// `x = V_K x~_K`: the span of `K` basis columns.
#[derive(Clone, Debug)]
pub struct BandlimitedModel {
    vk: CMatrix,
}

impl BandlimitedModel {
    pub fn new(vk: CMatrix) -> Result<Self> {
        let k = vk.ncols();
        if k == 0 || k > vk.nrows() {
            return Err(GspError::InvalidArgument(format!(
                "bandwidth {k} out of range"
            )));
        }
        let rank = linalg::rank_from_singular_values(&linalg::singular_values_c(&vk), RCOND);
        if rank < k {
            return Err(GspError::InvalidArgument(format!(
                "basis columns are linearly dependent (rank {rank} < {k})"
            )));
        }
        Ok(BandlimitedModel { vk })
    }

    /// First `k` columns of the eigenvector basis.
    pub fn from_eigen(basis: &EigenBasis, k: usize) -> Result<Self> {
        if k == 0 || k > basis.n() {
            return Err(GspError::InvalidArgument(format!(
                "bandwidth {k} out of range"
            )));
        }
        BandlimitedModel::new(basis.leading(k))
    }

    /// First `k` columns of a learned orthonormal basis.
    pub fn from_ortho(basis: &OrthoBasis, k: usize) -> Result<Self> {
        if k == 0 || k > basis.n() {
            return Err(GspError::InvalidArgument(format!(
                "bandwidth {k} out of range"
            )));
        }
        BandlimitedModel::new(linalg::to_complex(&basis.u.columns(0, k).into_owned()))
    }

    pub fn vk(&self) -> &CMatrix {
        &self.vk
    }

    pub fn n(&self) -> usize {
        self.vk.nrows()
    }

    pub fn k(&self) -> usize {
        self.vk.ncols()
    }

    /// `C_M V_K`.
    pub fn rows(&self, ms: &SamplingSet) -> Result<CMatrix> {
        ms.validate(self.n())?;
        Ok(self.vk.select_rows(ms.indices()))
    }
}

/// `x_bar = C_M x`.
pub fn sample(x: &GraphSignal, ms: &SamplingSet) -> Result<DVector<f64>> {
    ms.validate(x.len())?;
    Ok(x.select_rows(ms.indices()))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Recoverability {
    pub rank: usize,
    /// Smallest singular value of `C_M V_K`, zero when `M < K`.
    pub sigma_min: f64,
}

fn sigma_min_of(rows: &CMatrix, k: usize) -> f64 {
    let s = linalg::singular_values_c(rows);
    if s.len() < k {
        0.0
    } else {
        s[k - 1]
    }
}

pub fn recoverability(model: &BandlimitedModel, ms: &SamplingSet) -> Result<Recoverability> {
    let rows = model.rows(ms)?;
    let s = linalg::singular_values_c(&rows);
    Ok(Recoverability {
        rank: linalg::rank_from_singular_values(&s, RCOND),
        sigma_min: sigma_min_of(&rows, model.k()),
    })
}

/// Pseudoinverse reconstruction. Returns the complex signal estimate and the
/// frequency coefficients `x~_K = (C V_K)^+ x_bar`.
pub fn reconstruct_complex(
    model: &BandlimitedModel,
    ms: &SamplingSet,
    xbar: &CVector,
) -> Result<(CVector, CVector)> {
    check_len(ms.len(), xbar.len())?;
    let rows = model.rows(ms)?;
    let (pinv, rank) = linalg::pinv_c(&rows, RCOND);
    if rank < model.k() {
        return Err(GspError::Unrecoverable {
            rank,
            bandwidth: model.k(),
        });
    }
    let coeffs = pinv * xbar;
    Ok((&model.vk * &coeffs, coeffs))
}

/// Real-signal reconstruction; the estimate is the real part of `V_K x~_K`.
pub fn reconstruct(
    model: &BandlimitedModel,
    ms: &SamplingSet,
    xbar: &DVector<f64>,
) -> Result<(GraphSignal, CVector)> {
    let (x, coeffs) = reconstruct_complex(model, ms, &linalg::to_complex_vec(xbar))?;
    Ok((x.map(|z| z.re), coeffs))
}

/// Greedy forward selection maximising `sigma_min(C_M V_K)`. The first node
/// has the largest basis-row norm; later nodes are the candidate giving the
/// largest `sigma_min` of the grown matrix, ties to the lowest index.
pub fn greedy_select(model: &BandlimitedModel, m: usize) -> Result<SamplingSet> {
    let n = model.n();
    let k = model.k();
    if m > n {
        return Err(GspError::InvalidArgument(format!(
            "cannot select {m} of {n} nodes"
        )));
    }
    if m < k {
        return Err(GspError::InvalidArgument(format!(
            "need M >= K, got M = {m}, K = {k}"
        )));
    }
    let mut chosen: Vec<usize> = Vec::with_capacity(m);
    let mut taken = vec![false; n];
    while chosen.len() < m {
        let t = chosen.len() + 1;
        let scores: Vec<(usize, f64)> = (0..n)
            .into_par_iter()
            .filter(|&i| !taken[i])
            .map(|i| {
                let mut idx = chosen.clone();
                idx.push(i);
                let rows = model.vk.select_rows(&idx);
                let s = linalg::singular_values_c(&rows);
                (i, s[t.min(k) - 1])
            })
            .collect();
        let mut best = scores[0];
        for &(i, v) in &scores[1..] {
            if v > best.1 + 1e-12 * best.1.max(1.0) {
                best = (i, v);
            }
        }
        taken[best.0] = true;
        chosen.push(best.0);
    }
    SamplingSet::new(chosen, n)
}

/// Draws node values from a model: `x = Re(V_K c)` for the given coefficients.
pub fn synthesize(model: &BandlimitedModel, coeffs: &[Complex64]) -> Result<GraphSignal> {
    check_len(model.k(), coeffs.len())?;
    Ok((&model.vk * CVector::from_column_slice(coeffs)).map(|z| z.re))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{adjacency_shift, directed_cycle};
    use crate::spectral::eigen_gft_basis;
    use nalgebra::DMatrix;

    fn dft_model(n: usize, k: usize) -> BandlimitedModel {
        let b = eigen_gft_basis(&adjacency_shift(&directed_cycle(n).unwrap())).unwrap();
        BandlimitedModel::from_eigen(&b, k).unwrap()
    }

    #[test]
    fn sample_matches_selection_matrix() {
        let x = DVector::from_vec(vec![3.0, -1.0, 4.0, 1.5, 9.0]);
        let ms = SamplingSet::new(vec![4, 0, 2], 5).unwrap();
        let mut c = DMatrix::zeros(3, 5);
        for (r, &i) in ms.indices().iter().enumerate() {
            c[(r, i)] = 1.0;
        }
        assert_eq!(sample(&x, &ms).unwrap(), c * &x);
        let all = SamplingSet::new((0..5).collect(), 5).unwrap();
        assert_eq!(sample(&x, &all).unwrap(), x);
    }

    #[test]
    fn sampling_set_validation() {
        assert!(SamplingSet::new(vec![], 3).is_err());
        assert!(SamplingSet::new(vec![0, 0], 3).is_err());
        assert!(SamplingSet::new(vec![3], 3).is_err());
    }

    #[test]
    fn constant_model_extends_single_sample() {
        let vk = CMatrix::from_element(4, 1, Complex64::new(0.5, 0.0));
        let model = BandlimitedModel::new(vk).unwrap();
        let ms = SamplingSet::new(vec![2], 4).unwrap();
        let (x, _) = reconstruct(&model, &ms, &DVector::from_vec(vec![7.0])).unwrap();
        assert!(x.iter().all(|v| (v - 7.0).abs() < 1e-12));
        let g = greedy_select(&model, 2).unwrap();
        assert_eq!(g.indices(), &[0, 1]);
    }

    #[test]
    fn too_few_samples_unrecoverable() {
        let model = dft_model(8, 3);
        let ms = SamplingSet::new(vec![0, 4], 8).unwrap();
        let err = reconstruct(&model, &ms, &DVector::from_vec(vec![1.0, 2.0])).unwrap_err();
        assert!(matches!(
            err,
            GspError::Unrecoverable {
                rank: 2,
                bandwidth: 3
            }
        ));
    }

    #[test]
    fn uniform_dft_samples_are_perfectly_conditioned() {
        // columns of a DFT basis restricted to every other node of C_8 with K = 4
        let model = dft_model(8, 2);
        let lam_ok = model.k() == 2;
        assert!(lam_ok);
        let full = SamplingSet::new((0..8).collect(), 8).unwrap();
        let r = recoverability(&model, &full).unwrap();
        assert_eq!(r.rank, 2);
        assert!((r.sigma_min - 1.0).abs() < 1e-10);
    }

    #[test]
    fn degenerate_rows_report_low_rank() {
        // two columns that agree on nodes 0 and 1
        let vk = DMatrix::from_row_slice(4, 2, &[1.0, 1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 1.0]);
        let model = BandlimitedModel::new(linalg::to_complex(&vk)).unwrap();
        let ms = SamplingSet::new(vec![0, 1], 4).unwrap();
        assert_eq!(recoverability(&model, &ms).unwrap().rank, 1);
    }
}
