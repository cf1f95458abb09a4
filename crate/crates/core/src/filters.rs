//! Linear graph filters: polynomial (shift-invariant), spectral,
//! node-variant and edge-variant, plus Vandermonde tap design.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{GspError, Result};
use crate::graph::{check_len, shift_powers, GraphSignal, ShiftOperator};
use crate::linalg::{self, CVector};
use crate::spectral::{self, EigenBasis, OrthoBasis};

/// Relative imaginary residue below which an eigen-spectral output is real.
pub const COMPLEX_LEAKAGE: f64 = 1e-8;

/// Taps `h` of `H = sum_l h_l S^l`. Serialises as a bare JSON array.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct FilterTaps {
    h: Vec<f64>,
}

impl FilterTaps {
    pub fn new(h: Vec<f64>) -> Result<Self> {
        if h.is_empty() {
            return Err(GspError::InvalidArgument(
                "filter needs at least one tap".into(),
            ));
        }
        if h.iter().any(|v| !v.is_finite()) {
            return Err(GspError::InvalidArgument(
                "filter taps must be finite".into(),
            ));
        }
        Ok(FilterTaps { h })
    }

    pub fn h(&self) -> &[f64] {
        &self.h
    }

    pub fn len(&self) -> usize {
        self.h.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// `sum_l h_l z^l` by Horner's rule.
    pub fn response_at(&self, z: Complex64) -> Complex64 {
        self.h
            .iter()
            .rev()
            .fold(Complex64::new(0.0, 0.0), |acc, &c| acc * z + c)
    }

    /// Dense `sum_l h_l S^l`.
    pub fn matrix(&self, s: &ShiftOperator) -> DMatrix<f64> {
        let powers = s.dense_powers(self.h.len() - 1);
        let n = s.n();
        powers
            .iter()
            .zip(&self.h)
            .fold(DMatrix::zeros(n, n), |acc, (p, &c)| acc + p * c)
    }
}

impl TryFrom<Vec<f64>> for FilterTaps {
    type Error = GspError;
    fn try_from(h: Vec<f64>) -> Result<Self> {
        FilterTaps::new(h)
    }
}

impl From<FilterTaps> for Vec<f64> {
    fn from(t: FilterTaps) -> Self {
        t.h
    }
}

/// Per-node taps: column `l` holds the diagonal of the `l`-th weight.
#[derive(Clone, Debug, PartialEq)]
pub struct NodeVariantTaps {
    pub hmat: DMatrix<f64>,
}

/// Edge-variant taps. Term `l` applies `(Phi_l o S) S^l`; `identity` is the
/// separate coefficient on `x` itself.
#[derive(Clone, Debug)]
pub struct EdgeVariantTaps {
    pub identity: f64,
    pub phis: Vec<ShiftOperator>,
}

/// Output of an eigen-domain spectral filter.
#[derive(Clone, Debug, PartialEq)]
pub enum SpectralOutput {
    Real(GraphSignal),
    /// Imaginary residue exceeded the leakage threshold.
    Complex(CVector),
}

impl SpectralOutput {
    pub fn is_complex(&self) -> bool {
        matches!(self, SpectralOutput::Complex(_))
    }

    /// Real part, whatever the variant.
    pub fn real(&self) -> GraphSignal {
        match self {
            SpectralOutput::Real(y) => y.clone(),
            SpectralOutput::Complex(y) => y.map(|z| z.re),
        }
    }
}

/// `y = sum_l h_l S^l x`.
pub fn apply_polynomial(
    s: &ShiftOperator,
    taps: &FilterTaps,
    x: &GraphSignal,
) -> Result<GraphSignal> {
    check_len(s.n(), x.len())?;
    let mut y = DVector::zeros(x.len());
    let mut cur = x.clone();
    for (l, &c) in taps.h.iter().enumerate() {
        if l > 0 {
            cur = s.apply(&cur);
        }
        y.axpy(c, &cur, 1.0);
    }
    Ok(y)
}

/// `y = V diag(g) V^{-1} x`. The result is realified when its imaginary
/// part is below `1e-8 ||y||`.
pub fn apply_spectral_eigen(
    basis: &EigenBasis,
    g: &[Complex64],
    x: &GraphSignal,
) -> Result<SpectralOutput> {
    check_len(basis.n(), g.len())?;
    let xt = spectral::gft(basis, x)?;
    let yt = CVector::from_fn(g.len(), |k, _| g[k] * xt[k]);
    let y = spectral::igft(basis, &yt)?;
    let imag = y.iter().map(|z| z.im * z.im).sum::<f64>().sqrt();
    if imag <= COMPLEX_LEAKAGE * y.norm() {
        Ok(SpectralOutput::Real(y.map(|z| z.re)))
    } else {
        Ok(SpectralOutput::Complex(y))
    }
}

/// `y = U diag(g) U^T x`.
pub fn apply_spectral_ortho(basis: &OrthoBasis, g: &[f64], x: &GraphSignal) -> Result<GraphSignal> {
    check_len(basis.n(), g.len())?;
    let mut c = basis.analyze(x)?;
    for (ck, gk) in c.iter_mut().zip(g) {
        *ck *= gk;
    }
    basis.synthesize(&c)
}

/// Taps fitted to a desired response.
#[derive(Clone, Debug)]
pub struct TapDesign {
    pub taps: FilterTaps,
    /// `|| Psi h - g ||_2` over the complex system.
    pub residual: f64,
    /// Vandermonde system had rank below `L`; minimum-norm solution returned.
    pub rank_deficient: bool,
}

/// Real taps `h` (length `L`) minimising `|| [lambda_k^l] h - g ||`. The
/// complex system is stacked into real and imaginary rows and solved by
/// minimum-norm least squares.
pub fn design_taps(lambda: &[Complex64], gdesired: &[Complex64], l: usize) -> Result<TapDesign> {
    let n = lambda.len();
    check_len(n, gdesired.len())?;
    if l == 0 || l > n {
        return Err(GspError::InvalidArgument(format!(
            "need 1 <= L <= N, got L = {l}, N = {n}"
        )));
    }
    let mut a = DMatrix::zeros(2 * n, l);
    let mut b = DVector::zeros(2 * n);
    for k in 0..n {
        let mut p = Complex64::new(1.0, 0.0);
        for j in 0..l {
            a[(k, j)] = p.re;
            a[(n + k, j)] = p.im;
            p *= lambda[k];
        }
        b[k] = gdesired[k].re;
        b[n + k] = gdesired[k].im;
    }
    let (h, rank) = linalg::lstsq_min_norm(&a, &b, 1e-12);
    let residual = (&a * &h - &b).norm();
    Ok(TapDesign {
        taps: FilterTaps::new(h.iter().copied().collect())?,
        residual,
        rank_deficient: rank < l,
    })
}

/// `y = sum_l diag(h_l) S^l x`.
pub fn apply_node_variant(
    s: &ShiftOperator,
    taps: &NodeVariantTaps,
    x: &GraphSignal,
) -> Result<GraphSignal> {
    let n = s.n();
    check_len(n, x.len())?;
    check_len(n, taps.hmat.nrows())?;
    let l = taps.hmat.ncols();
    if l == 0 {
        return Err(GspError::InvalidArgument(
            "node-variant filter needs at least one tap".into(),
        ));
    }
    let powers = shift_powers(s, x, l - 1)?;
    let mut y = DVector::zeros(n);
    for (j, p) in powers.iter().enumerate() {
        y += taps.hmat.column(j).component_mul(p);
    }
    Ok(y)
}

/// `Phi o S`, rejecting weights placed off the support of `S`.
fn hadamard_on_support(phi: &ShiftOperator, s: &ShiftOperator) -> Result<ShiftOperator> {
    check_len(s.n(), phi.n())?;
    let mut trips = Vec::new();
    for (r, c, w) in phi.triplets() {
        let sv = s.get(r, c);
        if sv == 0.0 {
            return Err(GspError::InvalidArgument(format!(
                "edge-variant weight at ({r}, {c}) lies outside the support of S"
            )));
        }
        trips.push((r, c, w * sv));
    }
    ShiftOperator::from_triplets(s.n(), &trips)
}

/// `y = c x + sum_{l=0}^{L-1} (Phi_l o S) S^l x`.
pub fn apply_edge_variant(
    s: &ShiftOperator,
    taps: &EdgeVariantTaps,
    x: &GraphSignal,
) -> Result<GraphSignal> {
    check_len(s.n(), x.len())?;
    let mut y = x * taps.identity;
    let mut cur = x.clone();
    for (l, phi) in taps.phis.iter().enumerate() {
        if l > 0 {
            cur = s.apply(&cur);
        }
        y += hadamard_on_support(phi, s)?.apply(&cur);
    }
    Ok(y)
}

/// Keeps the first `k` DGFT components of `y`.
pub fn ideal_lowpass(basis: &OrthoBasis, k: usize, y: &GraphSignal) -> Result<GraphSignal> {
    let n = basis.n();
    if k == 0 || k > n {
        return Err(GspError::InvalidArgument(format!(
            "need 1 <= K <= N, got K = {k}, N = {n}"
        )));
    }
    let g: Vec<f64> = (0..n).map(|i| if i < k { 1.0 } else { 0.0 }).collect();
    apply_spectral_ortho(basis, &g, y)
}
