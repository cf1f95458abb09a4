//! Variation measures and graph Fourier bases for digraphs.
//!
//! Two bases are provided. [`EigenBasis`] diagonalises the shift operator
//! (complex, generally non-orthogonal) and orders frequencies by the
//! normalised total variation `TV1`. [`OrthoBasis`] is a learned real
//! orthonormal basis whose frequencies are directed variations `DV(u_k)`,
//! spread as evenly as possible by minimising the spectral dispersion over
//! the Stiefel manifold.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{GspError, Result};
use crate::graph::{check_len, GraphSignal, ShiftOperator};
use crate::linalg::{self, CMatrix, CVector};

/// Eigenvector condition number above which the shift is treated as defective.
pub const MAX_VCOND: f64 = 1e12;

/// `sum_{i<j} A_ij (x_i - x_j)^2`, i.e. `x^T (D - A) x`, for symmetric `A`.
pub fn tv_quadratic(a: &ShiftOperator, x: &GraphSignal) -> Result<f64> {
    check_len(a.n(), x.len())?;
    if !a.is_symmetric(1e-12) {
        return Err(GspError::NotSymmetric);
    }
    Ok(a.triplets()
        .iter()
        .filter(|&&(r, c, _)| r < c)
        .map(|&(r, c, w)| w * (x[r] - x[c]).powi(2))
        .sum())
}

/// Largest eigenvalue modulus of `S`.
pub fn spectral_radius(s: &ShiftOperator) -> f64 {
    linalg::spectral_radius(&s.to_dense())
}

/// `|| x - S x / |lambda_max| ||_1`.
pub fn tv_l1(s: &ShiftOperator, x: &GraphSignal) -> Result<f64> {
    check_len(s.n(), x.len())?;
    let rho = spectral_radius(s);
    if rho <= f64::EPSILON * s.frobenius_norm().max(1.0) {
        return Err(GspError::ZeroSpectralRadius);
    }
    let sx = s.apply(x);
    Ok(x.iter()
        .zip(sx.iter())
        .map(|(a, b)| (a - b / rho).abs())
        .sum())
}

/// `sum_{i != j} A_ji [x_i - x_j]_+^2`: an edge `i -> j` contributes only
/// when the signal decreases along it.
pub fn directed_variation(a: &ShiftOperator, x: &GraphSignal) -> Result<f64> {
    check_len(a.n(), x.len())?;
    Ok(dv_unchecked(&a.triplets(), x))
}

fn dv_unchecked(entries: &[(usize, usize, f64)], x: &DVector<f64>) -> f64 {
    entries
        .iter()
        .filter(|t| t.0 != t.1)
        .map(|&(j, i, w)| {
            let d = (x[i] - x[j]).max(0.0);
            w * d * d
        })
        .sum()
}

/// Gradient `2 sum A_ji [x_i - x_j]_+ (e_i - e_j)`.
fn dv_grad(entries: &[(usize, usize, f64)], x: &DVector<f64>) -> DVector<f64> {
    let mut g = DVector::zeros(x.len());
    for &(j, i, w) in entries {
        if i == j {
            continue;
        }
        let d = (x[i] - x[j]).max(0.0);
        if d > 0.0 {
            g[i] += 2.0 * w * d;
            g[j] -= 2.0 * w * d;
        }
    }
    g
}

pub fn directed_variation_grad(a: &ShiftOperator, x: &GraphSignal) -> Result<GraphSignal> {
    check_len(a.n(), x.len())?;
    Ok(dv_grad(&a.triplets(), x))
}

/// Eigendecomposition `S = V diag(lambda) V^{-1}` with columns ordered by
/// ascending `TV1` of the unit eigenvectors.
#[derive(Clone, Debug)]
pub struct EigenBasis {
    pub v: CMatrix,
    pub lambda: Vec<Complex64>,
    /// Condition number of `V`.
    pub vcond: f64,
    /// `TV1` of each column, the sort key.
    pub variation: Vec<f64>,
}

impl EigenBasis {
    pub fn n(&self) -> usize {
        self.lambda.len()
    }

    /// First `k` eigenvectors.
    pub fn leading(&self, k: usize) -> CMatrix {
        self.v.columns(0, k).into_owned()
    }
}

fn phase(z: Complex64) -> f64 {
    if z.im.abs() <= 1e-12 * z.norm().max(1.0) {
        if z.re >= 0.0 {
            0.0
        } else {
            std::f64::consts::PI
        }
    } else {
        z.im.atan2(z.re)
    }
}

fn approx_eq(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

/// Sort indices by key with tolerance-grouped ties resolved by later keys.
/// Groups are formed against the first element of a run, so the result is
/// a total order.
fn grouped_order(keys: &[[f64; 3]], tol: f64) -> Vec<usize> {
    fn sort_level(idx: &mut [usize], keys: &[[f64; 3]], level: usize, tol: f64) {
        if level == 3 || idx.len() < 2 {
            return;
        }
        idx.sort_by(|&a, &b| keys[a][level].total_cmp(&keys[b][level]).then(a.cmp(&b)));
        let mut start = 0;
        while start < idx.len() {
            let head = keys[idx[start]][level];
            let mut end = start + 1;
            while end < idx.len() && approx_eq(keys[idx[end]][level], head, tol) {
                end += 1;
            }
            sort_level(&mut idx[start..end], keys, level + 1, tol);
            start = end;
        }
    }
    let mut idx: Vec<usize> = (0..keys.len()).collect();
    sort_level(&mut idx, keys, 0, tol);
    idx
}

fn normalize_column(v: &mut CVector) {
    let nrm = v.norm();
    if nrm == 0.0 {
        return;
    }
    *v /= Complex64::new(nrm, 0.0);
    let vmax = v.iter().fold(0.0f64, |m, z| m.max(z.norm()));
    if let Some(first) = v.iter().find(|z| z.norm() > 1e-10 * vmax).copied() {
        let rot = first.conj() / first.norm();
        *v *= rot;
    }
}

fn tv_l1_complex(s: &DMatrix<f64>, rho: f64, v: &CVector) -> f64 {
    let sc = linalg::to_complex(s);
    let sv = sc * v;
    let scale = if rho > 0.0 { 1.0 / rho } else { 0.0 };
    v.iter()
        .zip(sv.iter())
        .map(|(a, b)| (a - b * scale).norm())
        .sum()
}

/// General (non-symmetric) eigendecomposition of `S`, the basis of the
/// eigenvector GFT `x~ = V^{-1} x`.
///
/// Eigenvectors are unit-norm with their first nonzero entry real positive.
/// Columns are sorted by `TV1` (ascending), ties broken by `|lambda|` then
/// by the phase of `lambda`. A defective or badly conditioned `S`
/// (`vcond > 1e12`) is rejected.
pub fn eigen_gft_basis(s: &ShiftOperator) -> Result<EigenBasis> {
    let n = s.n();
    let m = s.to_dense();
    let fro = m.norm();
    let (mut vecs, mut lams): (Vec<CVector>, Vec<Complex64>) = if s.is_symmetric(1e-14) {
        let eig = m.clone().symmetric_eigen();
        (
            eig.eigenvectors
                .column_iter()
                .map(|c| linalg::to_complex_vec(&c.into_owned()))
                .collect(),
            eig.eigenvalues
                .iter()
                .map(|&l| Complex64::new(l, 0.0))
                .collect(),
        )
    } else {
        general_eigenpairs(&m)
    };
    for v in vecs.iter_mut() {
        normalize_column(v);
    }
    let v = CMatrix::from_columns(&vecs);

    // Residual check catches defective matrices whose repeated eigenvalue
    // lacks a full eigenspace.
    let lam_diag = CMatrix::from_diagonal(&CVector::from_vec(lams.clone()));
    let resid = (linalg::to_complex(&m) * &v - &v * lam_diag).norm();
    let sv = linalg::singular_values_c(&v);
    let smin = sv.last().copied().unwrap_or(0.0);
    let vcond = if smin > 0.0 {
        sv[0] / smin
    } else {
        f64::INFINITY
    };
    if !vcond.is_finite() || vcond > MAX_VCOND || resid > 1e-8 * fro.max(f64::MIN_POSITIVE) {
        let vcond = if resid > 1e-8 * fro.max(f64::MIN_POSITIVE) {
            f64::INFINITY
        } else {
            vcond
        };
        return Err(GspError::NotDiagonalizable { vcond });
    }

    let rho = lams.iter().fold(0.0f64, |a, z| a.max(z.norm()));
    let rho = if rho <= f64::EPSILON * fro.max(1.0) {
        0.0
    } else {
        rho
    };
    let variation: Vec<f64> = vecs.iter().map(|v| tv_l1_complex(&m, rho, v)).collect();
    let keys: Vec<[f64; 3]> = (0..n)
        .map(|k| [variation[k], lams[k].norm(), phase(lams[k])])
        .collect();
    let order = grouped_order(&keys, 1e-9);

    let v = CMatrix::from_columns(
        &order
            .iter()
            .map(|&k| v.column(k).into_owned())
            .collect::<Vec<_>>(),
    );
    lams = order.iter().map(|&k| lams[k]).collect();
    let variation = order.iter().map(|&k| variation[k]).collect();
    vecs.clear();
    Ok(EigenBasis {
        v,
        lambda: lams,
        vcond,
        variation,
    })
}

/// Eigenpairs of a general real matrix: eigenvalues by the real Schur
/// method, eigenvectors as (numerical) null vectors of `S - lambda I`.
/// Eigenvalues closer than a cluster tolerance share one null-space
/// computation so a repeated eigenvalue yields independent vectors.
fn general_eigenpairs(m: &DMatrix<f64>) -> (Vec<CVector>, Vec<Complex64>) {
    let n = m.nrows();
    let eigs = linalg::eigenvalues(m);
    let tol = 1e-7 * m.norm().max(1.0);

    // Single-linkage clusters.
    let mut cluster = vec![usize::MAX; n];
    let mut next = 0;
    for i in 0..n {
        if cluster[i] != usize::MAX {
            continue;
        }
        cluster[i] = next;
        let mut stack = vec![i];
        while let Some(a) = stack.pop() {
            for b in 0..n {
                if cluster[b] == usize::MAX && (eigs[a] - eigs[b]).norm() <= tol {
                    cluster[b] = next;
                    stack.push(b);
                }
            }
        }
        next += 1;
    }

    let mc = linalg::to_complex(m);
    let mut vecs = Vec::with_capacity(n);
    let mut lams = Vec::with_capacity(n);
    for c in 0..next {
        let members: Vec<usize> = (0..n).filter(|&i| cluster[i] == c).collect();
        let mult = members.len();
        let center = members.iter().map(|&i| eigs[i]).sum::<Complex64>() / mult as f64;
        let shifted = &mc - CMatrix::from_diagonal_element(n, n, center);
        let svd = linalg::svd(&shifted, false, true);
        let vt = svd.v_t.expect("v_t requested");
        let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
        order.sort_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]));
        for (slot, &k) in order.iter().take(mult).enumerate() {
            let v: CVector = vt.row(k).transpose().map(|z| z.conj());
            let lam = if mult == 1 {
                // Rayleigh quotient refines the eigenvalue for this vector.
                (v.adjoint() * &mc * &v)[(0, 0)] / v.norm_squared()
            } else {
                eigs[members[slot]]
            };
            let lam = if mult == 1 { lam } else { center };
            vecs.push(v);
            lams.push(lam);
        }
    }
    (vecs, lams)
}

/// `x~ = V^{-1} x`, by a linear solve.
pub fn gft(basis: &EigenBasis, x: &GraphSignal) -> Result<CVector> {
    gft_complex(basis, &linalg::to_complex_vec(x))
}

pub fn gft_complex(basis: &EigenBasis, x: &CVector) -> Result<CVector> {
    check_len(basis.n(), x.len())?;
    basis
        .v
        .clone()
        .lu()
        .solve(x)
        .ok_or(GspError::NotDiagonalizable {
            vcond: f64::INFINITY,
        })
}

/// `x = V x~`.
pub fn igft(basis: &EigenBasis, xt: &CVector) -> Result<CVector> {
    check_len(basis.n(), xt.len())?;
    Ok(&basis.v * xt)
}

/// Learned orthonormal basis with frequencies `f_k = DV(u_k)`.
#[derive(Clone, Debug)]
pub struct OrthoBasis {
    pub u: DMatrix<f64>,
    pub frequencies: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub objective: f64,
    /// Dispersion after each accepted iterate, starting at the initial point.
    pub trace: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrthoBasisMeta {
    pub frequencies: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub objective: f64,
}

impl OrthoBasis {
    pub fn n(&self) -> usize {
        self.u.nrows()
    }

    /// `U^T x`.
    pub fn analyze(&self, x: &GraphSignal) -> Result<DVector<f64>> {
        check_len(self.n(), x.len())?;
        Ok(self.u.transpose() * x)
    }

    /// `U c`.
    pub fn synthesize(&self, c: &DVector<f64>) -> Result<GraphSignal> {
        check_len(self.n(), c.len())?;
        Ok(&self.u * c)
    }

    pub fn meta(&self) -> OrthoBasisMeta {
        OrthoBasisMeta {
            frequencies: self.frequencies.clone(),
            converged: self.converged,
            iterations: self.iterations,
            objective: self.objective,
        }
    }

    /// Writes `U` as CSV plus a JSON sidecar with frequencies and status.
    pub fn save(&self, csv_path: impl AsRef<Path>, json_path: impl AsRef<Path>) -> Result<()> {
        crate::io::save_dense_csv(csv_path, &self.u)?;
        crate::io::save_json(json_path, &self.meta())
    }

    pub fn load(csv_path: impl AsRef<Path>, json_path: impl AsRef<Path>) -> Result<Self> {
        let u = crate::io::load_dense_csv(csv_path)?;
        let meta: OrthoBasisMeta = crate::io::load_json(json_path)?;
        if u.nrows() != u.ncols() || meta.frequencies.len() != u.ncols() {
            return Err(GspError::InvalidArgument(
                "basis CSV and sidecar disagree on dimension".into(),
            ));
        }
        Ok(OrthoBasis {
            u,
            frequencies: meta.frequencies,
            converged: meta.converged,
            iterations: meta.iterations,
            objective: meta.objective,
            trace: vec![meta.objective],
        })
    }
}

fn project_out_mean(v: &mut DVector<f64>) {
    let mean = v.mean();
    v.add_scalar_mut(-mean);
}

fn max_weighted_degree(entries: &[(usize, usize, f64)], n: usize) -> f64 {
    let mut deg = vec![0.0; n];
    for &(r, c, w) in entries {
        if r != c {
            deg[r] += w.abs();
            deg[c] += w.abs();
        }
    }
    deg.into_iter().fold(0.0, f64::max)
}

fn ascend_dv(
    entries: &[(usize, usize, f64)],
    mut u: DVector<f64>,
    lip: f64,
) -> (DVector<f64>, f64) {
    let base = 1.0 / lip;
    let mut step = base;
    let mut val = dv_unchecked(entries, &u);
    for _ in 0..5000 {
        let g = dv_grad(entries, &u);
        let mut gt = &g - &u * g.dot(&u);
        project_out_mean(&mut gt);
        if gt.norm() <= 1e-13 * g.norm().max(1e-300) || g.norm() == 0.0 {
            break;
        }
        let mut accepted = None;
        while step >= 1e-14 * base {
            let mut cand = &u + &gt * step;
            project_out_mean(&mut cand);
            let nc = cand.norm();
            if nc > 0.0 {
                cand /= nc;
                let vc = dv_unchecked(entries, &cand);
                if vc > val {
                    accepted = Some((cand, vc));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((cand, vc)) = accepted else { break };
        let gain = vc - val;
        u = cand;
        val = vc;
        step *= 1.5;
        if gain <= 1e-15 * val {
            break;
        }
    }
    (u, val)
}

/// Unit vector maximising `DV` by projected gradient ascent on the sphere
/// from `restarts` seeded random starts. Restart `r` draws from stream `r`
/// of a ChaCha generator seeded with `seed`; the best value wins, ties going
/// to the lowest restart index.
///
/// Iterates are kept orthogonal to the constant vector; `DV` is invariant to
/// adding constants and 2-homogeneous, so any maximiser with positive value
/// already lies in that subspace.
pub fn max_dv_direction(a: &ShiftOperator, restarts: usize, seed: u64) -> (DVector<f64>, f64) {
    let n = a.n();
    if n == 1 {
        return (DVector::from_element(1, 1.0), 0.0);
    }
    let entries = a.triplets();
    let lip = (4.0 * max_weighted_degree(&entries, n)).max(f64::MIN_POSITIVE);
    let results: Vec<(DVector<f64>, f64)> = (0..restarts.max(1))
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(r as u64);
            let mut u;
            loop {
                u = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
                project_out_mean(&mut u);
                if u.norm() > 1e-6 {
                    break;
                }
            }
            u /= u.norm();
            ascend_dv(&entries, u, lip)
        })
        .collect();
    let mut best = 0;
    for (k, r) in results.iter().enumerate() {
        if r.1 > results[best].1 {
            best = k;
        }
    }
    results.into_iter().nth(best).expect("at least one restart")
}

/// Options for [`learn_dgft`].
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct DgftOptions {
    pub max_iters: usize,
    /// Nominal Riemannian step; `None` picks `1 / DV(u_N)^2`.
    pub step: Option<f64>,
    /// Relative objective decrease below which iteration stops.
    pub tol: f64,
    pub seed: u64,
    pub restarts: usize,
}

impl Default for DgftOptions {
    fn default() -> Self {
        DgftOptions {
            max_iters: 5000,
            step: None,
            tol: 1e-8,
            seed: 0,
            restarts: 20,
        }
    }
}

/// `sum_{i=1}^{N-1} [DV(u_{i+1}) - DV(u_i)]^2` over the columns of `u`.
pub fn spectral_dispersion(a: &ShiftOperator, u: &DMatrix<f64>) -> Result<f64> {
    check_len(a.n(), u.nrows())?;
    let entries = a.triplets();
    let d: Vec<f64> = u
        .column_iter()
        .map(|c| dv_unchecked(&entries, &c.into_owned()))
        .collect();
    Ok(dispersion(&d))
}

fn dispersion(d: &[f64]) -> f64 {
    d.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum()
}

struct DispersionProblem<'a> {
    entries: &'a [(usize, usize, f64)],
    q: &'a DMatrix<f64>,
    first: &'a DVector<f64>,
    last: &'a DVector<f64>,
}

impl DispersionProblem<'_> {
    fn columns(&self, w: &DMatrix<f64>) -> Vec<DVector<f64>> {
        let x = self.q * w;
        let mut cols = Vec::with_capacity(x.ncols() + 2);
        cols.push(self.first.clone());
        cols.extend(x.column_iter().map(|c| c.into_owned()));
        cols.push(self.last.clone());
        cols
    }

    fn value(&self, w: &DMatrix<f64>) -> f64 {
        let d: Vec<f64> = self
            .columns(w)
            .iter()
            .map(|c| dv_unchecked(self.entries, c))
            .collect();
        dispersion(&d)
    }

    /// Riemannian gradient on the orthogonal group.
    fn riemannian_grad(&self, w: &DMatrix<f64>) -> DMatrix<f64> {
        let cols = self.columns(w);
        let d: Vec<f64> = cols.iter().map(|c| dv_unchecked(self.entries, c)).collect();
        let n_cols = d.len();
        let m = w.ncols();
        let mut gx = DMatrix::zeros(self.q.nrows(), m);
        for j in 0..m {
            let k = j + 1;
            let mut df = 2.0 * (d[k] - d[k - 1]);
            if k + 1 < n_cols {
                df -= 2.0 * (d[k + 1] - d[k]);
            }
            gx.set_column(j, &(dv_grad(self.entries, &cols[k]) * df));
        }
        let gw = self.q.transpose() * gx;
        let wtg = w.transpose() * &gw;
        let sym = (&wtg + wtg.transpose()) * 0.5;
        &gw - w * sym
    }
}

fn laplacian_init(a: &DMatrix<f64>, q: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let m = q.ncols();
    let mut w = a + a.transpose();
    w.fill_diagonal(0.0);
    let deg = DVector::from_fn(n, |i, _| w.row(i).sum());
    let lap = DMatrix::from_diagonal(&deg) - &w;
    let eig = lap.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[a]
            .total_cmp(&eig.eigenvalues[b])
            .then(a.cmp(&b))
    });

    let mut cols: Vec<DVector<f64>> = Vec::with_capacity(m);
    let candidates = order
        .iter()
        .map(|&k| q.transpose() * eig.eigenvectors.column(k))
        .chain((0..m).map(|k| {
            let mut e = DVector::zeros(m);
            e[k] = 1.0;
            e
        }));
    for mut v in candidates {
        if cols.len() == m {
            break;
        }
        for _ in 0..2 {
            for c in &cols {
                let p = c.dot(&v);
                v.axpy(-p, c, 1.0);
            }
        }
        let nv = v.norm();
        if nv > 1e-8 {
            cols.push(v / nv);
        }
    }
    DMatrix::from_columns(&cols)
}

/// Learns an orthonormal DGFT by minimising the spectral dispersion with
/// `u_1 = 1/sqrt(N)` and `u_N` the maximiser of `DV` held fixed.
///
/// The free columns are `Q W` with `Q` an orthonormal basis of the
/// complement of `{u_1, u_N}` and `W` orthogonal, so the constraints hold
/// exactly. `W` follows Riemannian gradient descent with a QR retraction and
/// halving backtracking that accepts only strict decreases. The free columns
/// start from the Laplacian eigenvectors of `A + A^T`. After optimisation the
/// interior columns are sorted by ascending frequency.
pub fn learn_dgft(a: &ShiftOperator, opts: &DgftOptions) -> Result<OrthoBasis> {
    let n = a.n();
    if n < 2 {
        return Err(GspError::InvalidSize(format!("DGFT needs n >= 2, got {n}")));
    }
    if !a.is_nonnegative() {
        return Err(GspError::InvalidArgument(
            "DGFT requires a nonnegative adjacency".into(),
        ));
    }
    let entries = a.triplets();
    let first = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    let (last, dmax) = max_dv_direction(a, opts.restarts, opts.seed);

    let finish = |cols: Vec<DVector<f64>>, converged, iterations, trace: Vec<f64>| {
        let mut interior: Vec<(f64, DVector<f64>)> = cols[1..cols.len() - 1]
            .iter()
            .map(|c| (dv_unchecked(&entries, c), c.clone()))
            .collect();
        interior.sort_by(|x, y| x.0.total_cmp(&y.0));
        let mut ordered = vec![cols[0].clone()];
        ordered.extend(interior.into_iter().map(|x| x.1));
        ordered.push(cols[cols.len() - 1].clone());
        let frequencies: Vec<f64> = ordered.iter().map(|c| dv_unchecked(&entries, c)).collect();
        let objective = dispersion(&frequencies);
        OrthoBasis {
            u: DMatrix::from_columns(&ordered),
            frequencies,
            converged,
            iterations,
            objective,
            trace,
        }
    };

    if n == 2 {
        let f = dispersion(&[dv_unchecked(&entries, &first), dmax]);
        return Ok(finish(vec![first, last], true, 0, vec![f]));
    }

    let pinned = DMatrix::from_columns(&[first.clone(), last.clone()]);
    let q = linalg::orthonormal_complement(&pinned);
    let problem = DispersionProblem {
        entries: &entries,
        q: &q,
        first: &first,
        last: &last,
    };
    let mut w = laplacian_init(&a.to_dense(), &q);
    let mut f = problem.value(&w);
    let mut trace = vec![f];
    let nominal = opts
        .step
        .unwrap_or_else(|| 1.0 / (dmax * dmax).max(f64::MIN_POSITIVE));

    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iters {
        if f == 0.0 {
            converged = true;
            break;
        }
        let g = problem.riemannian_grad(&w);
        if g.norm() <= 1e-14 * f.sqrt().max(1.0) {
            converged = true;
            break;
        }
        let mut t = nominal;
        let mut accepted = None;
        for _ in 0..60 {
            let cand = linalg::qf(&(&w - &g * t));
            let fc = problem.value(&cand);
            if fc < f {
                accepted = Some((cand, fc));
                break;
            }
            t *= 0.5;
        }
        let Some((cand, fc)) = accepted else {
            converged = true;
            break;
        };
        iterations += 1;
        let rel = (f - fc) / f;
        w = cand;
        f = fc;
        trace.push(f);
        if rel < opts.tol {
            converged = true;
            break;
        }
    }
    Ok(finish(problem.columns(&w), converged, iterations, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{adjacency_shift, directed_cycle, Digraph};

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_vec(xs.to_vec())
    }

    fn triangle() -> ShiftOperator {
        let g =
            Digraph::from_unweighted(3, &[(0, 1), (1, 0), (1, 2), (2, 1), (0, 2), (2, 0)]).unwrap();
        adjacency_shift(&g)
    }

    #[test]
    fn tv_quadratic_cases() {
        let a = triangle();
        assert_eq!(tv_quadratic(&a, &v(&[3.0, 3.0, 3.0])).unwrap(), 0.0);
        // direct summation: pairs (0,1) and (0,2) contribute 1 each
        assert_eq!(tv_quadratic(&a, &v(&[1.0, 0.0, 0.0])).unwrap(), 2.0);
        let directed = adjacency_shift(&directed_cycle(3).unwrap());
        assert!(matches!(
            tv_quadratic(&directed, &v(&[1.0, 0.0, 0.0])),
            Err(GspError::NotSymmetric)
        ));
    }

    #[test]
    fn tv_quadratic_of_laplacian_eigenvector_is_eigenvalue() {
        let a = triangle().to_dense();
        let lap = DMatrix::from_diagonal(&DVector::from_fn(3, |i, _| a.row(i).sum())) - &a;
        let eig = lap.symmetric_eigen();
        let s = ShiftOperator::from_dense(a).unwrap();
        for k in 0..3 {
            let vk = eig.eigenvectors.column(k).into_owned();
            assert!((tv_quadratic(&s, &vk).unwrap() - eig.eigenvalues[k]).abs() < 1e-8);
        }
    }

    #[test]
    fn tv_l1_cases() {
        let s = adjacency_shift(&directed_cycle(4).unwrap());
        assert!(tv_l1(&s, &v(&[2.0; 4])).unwrap().abs() < 1e-12);
        let e1 = v(&[1.0, 0.0, 0.0, 0.0]);
        assert!((tv_l1(&s, &e1).unwrap() - 2.0).abs() < 1e-12);
        let x = v(&[0.3, -1.0, 2.0, 0.5]);
        let t1 = tv_l1(&s, &x).unwrap();
        assert!((tv_l1(&s, &(&x * 2.0)).unwrap() - 2.0 * t1).abs() < 1e-12);

        let nil = ShiftOperator::from_dense(DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]))
            .unwrap();
        assert!(matches!(
            tv_l1(&nil, &v(&[1.0, 0.0])),
            Err(GspError::ZeroSpectralRadius)
        ));
    }

    #[test]
    fn directed_variation_respects_flow() {
        let a = adjacency_shift(&Digraph::from_unweighted(2, &[(0, 1)]).unwrap());
        assert_eq!(directed_variation(&a, &v(&[1.0, 0.0])).unwrap(), 1.0);
        assert_eq!(directed_variation(&a, &v(&[0.0, 1.0])).unwrap(), 0.0);
        assert_eq!(directed_variation(&a, &v(&[5.0, 5.0])).unwrap(), 0.0);
        let sym = triangle();
        let x = v(&[0.2, -1.0, 0.7]);
        let dv = directed_variation(&sym, &x).unwrap();
        assert!((dv - tv_quadratic(&sym, &x).unwrap()).abs() < 1e-10);
    }

    #[test]
    fn dv_gradient_matches_finite_differences() {
        let g = Digraph::new(
            4,
            vec![
                crate::Edge {
                    src: 0,
                    dst: 1,
                    weight: 0.5,
                },
                crate::Edge {
                    src: 1,
                    dst: 2,
                    weight: 2.0,
                },
                crate::Edge {
                    src: 3,
                    dst: 0,
                    weight: 1.0,
                },
                crate::Edge {
                    src: 2,
                    dst: 3,
                    weight: 0.7,
                },
            ],
        )
        .unwrap();
        let a = adjacency_shift(&g);
        let x = v(&[0.9, 0.1, -0.4, 0.3]);
        let grad = directed_variation_grad(&a, &x).unwrap();
        for k in 0..4 {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[k] += 1e-6;
            xm[k] -= 1e-6;
            let fd = (directed_variation(&a, &xp).unwrap() - directed_variation(&a, &xm).unwrap())
                / 2e-6;
            assert!((fd - grad[k]).abs() < 1e-6);
        }
    }

    #[test]
    fn symmetric_eigenbasis_is_orthogonal() {
        let b = eigen_gft_basis(&triangle()).unwrap();
        let gram = b.v.adjoint() * &b.v;
        assert!((gram - CMatrix::identity(3, 3)).norm() < 1e-8);
        assert!(b.vcond <= 1.0 + 1e-6);
    }

    #[test]
    fn defective_shift_is_rejected() {
        let s = ShiftOperator::from_dense(DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]))
            .unwrap();
        assert!(matches!(
            eigen_gft_basis(&s),
            Err(GspError::NotDiagonalizable { .. })
        ));
    }

    #[test]
    fn gft_of_eigenvector_is_canonical() {
        let s = adjacency_shift(&directed_cycle(5).unwrap());
        let b = eigen_gft_basis(&s).unwrap();
        let vk: CVector = b.v.column(2).into_owned();
        let xt = gft_complex(&b, &vk).unwrap();
        for i in 0..5 {
            let e = if i == 2 { 1.0 } else { 0.0 };
            assert!((xt[i] - Complex64::new(e, 0.0)).norm() < 1e-10);
        }
    }

    #[test]
    fn max_dv_two_node_matches_grid() {
        let a = adjacency_shift(&Digraph::from_unweighted(2, &[(0, 1)]).unwrap());
        // grid oracle over the unit circle
        let mut best = 0.0f64;
        for k in 0..10_000 {
            let t = 2.0 * std::f64::consts::PI * k as f64 / 10_000.0;
            best = best.max(directed_variation(&a, &v(&[t.cos(), t.sin()])).unwrap());
        }
        let (u, val) = max_dv_direction(&a, 20, 1);
        assert!((val - best).abs() < 1e-6);
        assert!((val - 2.0).abs() < 1e-9);
        let s = 1.0 / 2f64.sqrt();
        assert!((u[0] - s).abs() < 1e-9 && (u[1] + s).abs() < 1e-9);
    }

    #[test]
    fn max_dv_zero_graph() {
        let (u, val) = max_dv_direction(&ShiftOperator::zeros(4), 3, 0);
        assert_eq!(val, 0.0);
        assert!((u.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn two_node_dgft_is_forced() {
        let a = adjacency_shift(&Digraph::from_unweighted(2, &[(0, 1)]).unwrap());
        let b = learn_dgft(&a, &DgftOptions::default()).unwrap();
        assert!((b.frequencies[0]).abs() < 1e-12);
        assert!((b.frequencies[1] - 2.0).abs() < 1e-9);
        assert!((b.objective - 4.0).abs() < 1e-8);
        assert!(b.converged);
    }

    #[test]
    fn dispersion_examples() {
        // N = 2: single term
        let a = adjacency_shift(&Digraph::from_unweighted(2, &[(0, 1)]).unwrap());
        let s = 1.0 / 2f64.sqrt();
        let u = DMatrix::from_row_slice(2, 2, &[s, s, s, -s]);
        assert!((spectral_dispersion(&a, &u).unwrap() - 4.0).abs() < 1e-12);
        // arithmetic progression attains span^2 / (N - 1)
        let d = [0.0, 1.0, 2.0, 3.0];
        assert!((dispersion(&d) - 9.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn grouped_order_breaks_ties() {
        let keys = vec![[1.0, 2.0, 0.5], [1.0 + 1e-12, 2.0, -0.5], [0.5, 9.0, 0.0]];
        assert_eq!(grouped_order(&keys, 1e-9), vec![2, 1, 0]);
    }
}
