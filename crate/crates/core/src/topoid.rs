//! Topology inference from nodal time series: structural equation models,
//! sparse vector autoregressions, causal graph processes and
//! commutativity-constrained shift recovery.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{GspError, Result};
use crate::inverse::{active_set_polish, weighted_lasso, LassoOptions};
use crate::linalg::{self, soft_threshold};
use crate::synth::{normal_vec, rng};

/// Nodal observations, one column per time step.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeSeries {
    /// `N x T` endogenous snapshots.
    pub x: DMatrix<f64>,
    /// Optional `N x T` exogenous inputs.
    pub u: Option<DMatrix<f64>>,
}

impl TimeSeries {
    pub fn new(x: DMatrix<f64>, u: Option<DMatrix<f64>>) -> Result<Self> {
        if x.ncols() == 0 || x.nrows() == 0 {
            return Err(GspError::InvalidSize(
                "time series needs at least one node and one step".into(),
            ));
        }
        if let Some(u) = &u {
            if u.shape() != x.shape() {
                return Err(GspError::InvalidArgument(format!(
                    "inputs are {}x{}, observations {}x{}",
                    u.nrows(),
                    u.ncols(),
                    x.nrows(),
                    x.ncols()
                )));
            }
        }
        Ok(TimeSeries { x, u })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn t(&self) -> usize {
        self.x.ncols()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct CdOptions {
    /// Full sweeps over the coordinates.
    pub max_sweeps: usize,
    /// Largest coordinate change (scaled by column norm) to stop at.
    pub tol: f64,
}

impl Default for CdOptions {
    fn default() -> Self {
        CdOptions {
            max_sweeps: 100_000,
            tol: 1e-12,
        }
    }
}

/// Cyclic coordinate descent for `||b - A x||^2 + alpha sum w_i |x_i|`
/// with `x_k >= 0` for `k` in `nonneg`, finished with the exact sign-fixed
/// solve when it satisfies optimality and the sign constraints.
fn cd_lasso(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    alpha: f64,
    w: &[f64],
    nonneg: &[usize],
    opts: &CdOptions,
) -> (DVector<f64>, bool) {
    let n = a.ncols();
    let gram = a.transpose() * a;
    let atb = a.transpose() * b;
    let mut x: DVector<f64> = DVector::zeros(n);
    // gx = gram * x, kept incrementally
    let mut gx: DVector<f64> = DVector::zeros(n);
    let scale = b.norm().max(f64::MIN_POSITIVE);
    let mut converged = false;
    for _ in 0..opts.max_sweeps {
        let mut delta: f64 = 0.0;
        for j in 0..n {
            let gjj = gram[(j, j)];
            if gjj == 0.0 {
                continue;
            }
            let rho = atb[j] - gx[j] + gjj * x[j];
            let mut new = soft_threshold(rho, alpha * w[j] / 2.0) / gjj;
            if nonneg.contains(&j) {
                new = new.max(0.0);
            }
            let d = new - x[j];
            if d != 0.0 {
                gx.axpy(d, &gram.column(j), 1.0);
                x[j] = new;
                delta = delta.max(d.abs() * gjj.sqrt());
            }
        }
        if delta <= opts.tol * scale {
            converged = true;
            break;
        }
    }
    if let Some(p) = active_set_polish(a, b, alpha, w, &x) {
        if nonneg.iter().all(|&k| p[k] >= 0.0) {
            x = p;
        }
    }
    (x, converged)
}

/// `x_t = S x_t + diag(omega) u_t + e_t` with `S_ii = 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SemEstimate {
    pub s: Vec<Vec<f64>>,
    pub omega: Vec<f64>,
    pub converged: bool,
}

impl SemEstimate {
    pub fn matrix(&self) -> DMatrix<f64> {
        let n = self.s.len();
        DMatrix::from_fn(n, n, |i, j| self.s[i][j])
    }
}

fn require_inputs(ts: &TimeSeries) -> Result<&DMatrix<f64>> {
    ts.u.as_ref().ok_or_else(|| {
        GspError::InvalidArgument(
            "SEM estimation needs exogenous inputs; use SVARM or CGP for series without inputs"
                .into(),
        )
    })
}

/// Regressors of row `i`: every other node, then `u_i` last.
fn sem_design(ts: &TimeSeries, u: &DMatrix<f64>, i: usize) -> DMatrix<f64> {
    let n = ts.n();
    let mut cols: Vec<DVector<f64>> = (0..n)
        .filter(|&j| j != i)
        .map(|j| ts.x.row(j).transpose())
        .collect();
    cols.push(u.row(i).transpose());
    DMatrix::from_columns(&cols)
}

/// Smallest `alpha` that zeroes every network coefficient of row `i`.
pub fn sem_null_threshold(ts: &TimeSeries, i: usize) -> Result<f64> {
    let u = require_inputs(ts)?;
    let a = sem_design(ts, u, i);
    let b = ts.x.row(i).transpose();
    let ui = a.column(a.ncols() - 1);
    let uu = ui.norm_squared();
    let w0 = if uu > 0.0 {
        (ui.dot(&b) / uu).max(0.0)
    } else {
        0.0
    };
    let r = &b - ui * w0;
    Ok(2.0 * (a.columns(0, a.ncols() - 1).transpose() * r).amax())
}

/// Row-by-row lasso for the SEM, `omega` unpenalised and kept nonnegative.
/// Rows run in parallel.
pub fn infer_sem(ts: &TimeSeries, alpha: f64, opts: &CdOptions) -> Result<SemEstimate> {
    let u = require_inputs(ts)?;
    if alpha < 0.0 {
        return Err(GspError::InvalidArgument(
            "alpha must be nonnegative".into(),
        ));
    }
    let n = ts.n();
    let rows: Vec<(Vec<f64>, f64, bool)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let a = sem_design(ts, u, i);
            let b = ts.x.row(i).transpose();
            let mut w = vec![1.0; n];
            w[n - 1] = 0.0;
            let (coef, conv) = cd_lasso(&a, &b, alpha, &w, &[n - 1], opts);
            let mut row = vec![0.0; n];
            let mut k = 0;
            for (j, slot) in row.iter_mut().enumerate() {
                if j != i {
                    *slot = coef[k];
                    k += 1;
                }
            }
            (row, coef[n - 1], conv)
        })
        .collect();
    Ok(SemEstimate {
        converged: rows.iter().all(|r| r.2),
        omega: rows.iter().map(|r| r.1).collect(),
        s: rows.into_iter().map(|r| r.0).collect(),
    })
}

/// `x_t = sum_l S^(l) x_{t-l} + e_t` with a common edge set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvarmEstimate {
    /// `smats[l]` is `S^(l+1)` as rows.
    pub smats: Vec<Vec<Vec<f64>>>,
    /// Edges `(i, j)`, `i != j`, nonzero at every lag.
    pub support: Vec<(usize, usize)>,
    pub converged: bool,
}

impl SvarmEstimate {
    pub fn matrix(&self, lag: usize) -> DMatrix<f64> {
        let m = &self.smats[lag];
        DMatrix::from_fn(m.len(), m.len(), |i, j| m[i][j])
    }
}

/// Lagged design: column `j * L + (l - 1)` holds `x_{j, t-l}` for `t = L..T`.
fn lag_design(x: &DMatrix<f64>, l: usize) -> DMatrix<f64> {
    let (n, t) = x.shape();
    let rows = t - l;
    DMatrix::from_fn(rows, n * l, |r, c| {
        let (j, lag) = (c / l, c % l + 1);
        x[(j, r + l - lag)]
    })
}

fn check_lags(ts: &TimeSeries, l: usize) -> Result<()> {
    if l == 0 {
        return Err(GspError::InvalidArgument("need at least one lag".into()));
    }
    if ts.t() <= l {
        return Err(GspError::InvalidArgument(format!(
            "need T > L, got T = {}, L = {l}",
            ts.t()
        )));
    }
    Ok(())
}

/// Exact minimiser of `s^T G s - 2 b^T s + alpha ||s||` (the group step).
fn group_step(g: &DMatrix<f64>, b: &DVector<f64>, alpha: f64) -> DVector<f64> {
    let k = b.len();
    if 2.0 * b.norm() <= alpha {
        return DVector::zeros(k);
    }
    let eig = g.clone().symmetric_eigen();
    let q = &eig.eigenvectors;
    let bp = q.transpose() * b * 2.0;
    let lam: Vec<f64> = eig.eigenvalues.iter().map(|v| v.max(0.0)).collect();
    // tau = ||s|| solves ||(2 G + alpha / tau)^-1 2 b|| = tau
    let norm_at = |tau: f64| -> f64 {
        bp.iter()
            .zip(&lam)
            .map(|(bk, lk)| (bk * tau / (2.0 * lk * tau + alpha)).powi(2))
            .sum::<f64>()
            .sqrt()
    };
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while norm_at(hi) > hi {
        hi *= 2.0;
        if hi > 1e300 {
            break;
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if norm_at(mid) > mid {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let tau = 0.5 * (lo + hi);
    let sp = DVector::from_fn(k, |i, _| bp[i] * tau / (2.0 * lam[i] * tau + alpha));
    q * sp
}

/// Largest `alpha` for which some network block of some row is nonzero.
pub fn svarm_null_threshold(ts: &TimeSeries, l: usize) -> Result<f64> {
    check_lags(ts, l)?;
    let a = lag_design(&ts.x, l);
    let n = ts.n();
    let mut best: f64 = 0.0;
    for i in 0..n {
        let b = ts.x.row(i).columns(l, ts.t() - l).transpose();
        let ai = a.columns(i * l, l);
        let (own, _) = linalg::lstsq_min_norm(&ai.into_owned(), &b, 1e-12);
        let r = &b - ai * own;
        for j in (0..n).filter(|&j| j != i) {
            best = best.max(2.0 * (a.columns(j * l, l).transpose() * &r).norm());
        }
    }
    Ok(best)
}

/// Group lasso per target row over lag blocks `s_ij`, self blocks
/// unpenalised, solved by exact block coordinate descent.
pub fn infer_svarm(
    ts: &TimeSeries,
    l: usize,
    alpha: f64,
    opts: &CdOptions,
) -> Result<SvarmEstimate> {
    check_lags(ts, l)?;
    if alpha < 0.0 {
        return Err(GspError::InvalidArgument(
            "alpha must be nonnegative".into(),
        ));
    }
    let n = ts.n();
    let a = lag_design(&ts.x, l);
    let gram = a.transpose() * &a;
    let blocks: Vec<DMatrix<f64>> = (0..n)
        .map(|j| gram.view((j * l, j * l), (l, l)).into_owned())
        .collect();
    let rows: Vec<(DVector<f64>, bool)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let b = ts.x.row(i).columns(l, ts.t() - l).transpose();
            let c = a.transpose() * &b;
            let mut s: DVector<f64> = DVector::zeros(n * l);
            let mut gs: DVector<f64> = DVector::zeros(n * l);
            let scale = c.norm().max(f64::MIN_POSITIVE);
            let mut converged = false;
            for _ in 0..opts.max_sweeps {
                let mut delta: f64 = 0.0;
                for j in 0..n {
                    let range = j * l..(j + 1) * l;
                    let cur = s.rows(j * l, l).into_owned();
                    let bj = c.rows(j * l, l) - gs.rows(j * l, l) + &blocks[j] * &cur;
                    let new = if j == i {
                        linalg::lstsq_min_norm(&blocks[j], &bj, 1e-12).0
                    } else {
                        group_step(&blocks[j], &bj, alpha)
                    };
                    let d = &new - &cur;
                    if d.amax() > 0.0 {
                        gs += gram.columns(j * l, l) * &d;
                        s.rows_range_mut(range).copy_from(&new);
                        delta = delta.max(d.norm());
                    }
                }
                if delta <= opts.tol * scale.sqrt().max(1.0) {
                    converged = true;
                    break;
                }
            }
            (s, converged)
        })
        .collect();
    let mut smats = vec![vec![vec![0.0; n]; n]; l];
    let mut support = Vec::new();
    for (i, (s, _)) in rows.iter().enumerate() {
        for j in 0..n {
            for lag in 0..l {
                smats[lag][i][j] = s[j * l + lag];
            }
            if j != i && (0..l).all(|lag| s[j * l + lag] != 0.0) {
                support.push((i, j));
            }
        }
    }
    Ok(SvarmEstimate {
        smats,
        support,
        converged: rows.iter().all(|r| r.1),
    })
}

/// Normalisation and sign options for the commutativity program.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct CommuteOptions {
    pub nonneg: bool,
    /// Column whose entries must sum to one.
    pub norm_col: usize,
    pub max_iters: usize,
    pub abs_tol: f64,
    pub rel_tol: f64,
}

impl Default for CommuteOptions {
    fn default() -> Self {
        CommuteOptions {
            nonneg: false,
            norm_col: 0,
            max_iters: 20_000,
            abs_tol: 1e-9,
            rel_tol: 1e-8,
        }
    }
}

#[derive(Clone, Debug)]
pub struct CommuteResult {
    pub s: DMatrix<f64>,
    /// `||H S - S H||_F`.
    pub residual: f64,
    pub iterations: usize,
    /// The splitting iteration met its residual tolerances.
    pub converged: bool,
    /// The returned matrix is an exact refit on a detected support rather
    /// than the last splitting iterate.
    pub polished: bool,
}

/// Iterations during which the penalty parameter is rebalanced; it is
/// frozen afterwards so the fixed-penalty convergence theory applies.
const ADAPT_ITERS: usize = 2000;

/// Over-relaxation factor of the splitting iteration.
const RELAX: f64 = 1.6;

/// Off-diagonal positions in column-major order.
fn offdiag(n: usize) -> Vec<(usize, usize)> {
    (0..n)
        .flat_map(|j| (0..n).filter(move |&i| i != j).map(move |i| (i, j)))
        .collect()
}

/// Weight of an entry: one, plus a small row-index tilt inside the
/// normalisation column so ties go to the lowest row.
fn tie_weights(pos: &[(usize, usize)], n: usize, col: usize) -> Vec<f64> {
    pos.iter()
        .map(|&(i, j)| {
            if j == col {
                1.0 + 1e-3 * i as f64 / n as f64
            } else {
                1.0
            }
        })
        .collect()
}

/// Euclidean projection of `q` onto `{w : sum_i d_i w_i^2 <= r^2}`. The
/// multiplier solves `1 / sqrt(mass(lam)) = 1 / r`, which is concave and
/// increasing in `lam`, so Newton from zero converges monotonically.
fn ellipsoid_projection(q: &DVector<f64>, d: &[f64], r: f64) -> DVector<f64> {
    let terms = |lam: f64| -> (f64, f64) {
        q.iter().zip(d).fold((0.0, 0.0), |(m, dm), (qi, di)| {
            let f = 1.0 / (1.0 + lam * di);
            let t = di * qi * qi * f * f;
            (m + t, dm - 2.0 * t * di * f)
        })
    };
    if terms(0.0).0 <= r * r {
        return q.clone();
    }
    if r == 0.0 {
        return DVector::from_fn(q.len(), |i, _| if d[i] > 0.0 { 0.0 } else { q[i] });
    }
    let mut lam = 0.0f64;
    for _ in 0..100 {
        let (mass, dmass) = terms(lam);
        let phi = 1.0 / mass.sqrt() - 1.0 / r;
        let dphi = -0.5 * dmass / (mass * mass.sqrt());
        if phi >= 0.0 || dphi <= 0.0 {
            break;
        }
        let next = lam - phi / dphi;
        if next <= lam * (1.0 + 1e-15) {
            break;
        }
        lam = next;
    }
    DVector::from_fn(q.len(), |i, _| q[i] / (1.0 + lam * d[i]))
}

/// Matrix `K` with `K vec_off(S) = vec(H S - S H)` over the off-diagonal
/// positions `pos`, and the indicator `a` of the normalisation column.
fn commute_system(
    h: &DMatrix<f64>,
    pos: &[(usize, usize)],
    col: usize,
) -> (DMatrix<f64>, DVector<f64>) {
    let n = h.nrows();
    let mut k = DMatrix::zeros(n * n, pos.len());
    for (c, &(i, j)) in pos.iter().enumerate() {
        let mut e = DMatrix::zeros(n, n);
        e[(i, j)] = 1.0;
        let d = commutator(h, &e);
        k.set_column(c, &DVector::from_column_slice(d.as_slice()));
    }
    let a = DVector::from_fn(pos.len(), |c, _| if pos[c].1 == col { 1.0 } else { 0.0 });
    (k, a)
}

/// Smallest `||H S - S H||_F` over zero-diagonal `S` whose column `col`
/// sums to one (sign unconstrained): the tolerance below which the
/// commutativity program is infeasible.
pub fn commute_floor(h: &DMatrix<f64>, col: usize) -> Result<f64> {
    let n = h.nrows();
    if h.ncols() != n || n < 2 || col >= n {
        return Err(GspError::InvalidArgument(
            "need a square H with at least two nodes and a valid column".into(),
        ));
    }
    let hnorm = h.norm();
    if hnorm == 0.0 {
        return Ok(0.0);
    }
    let (k, a) = commute_system(&(h / hnorm), &offdiag(n), col);
    // min s^T K^T K s subject to a^T s = 1 equals 1 / (a^T (K^T K)^+ a)
    let dec = linalg::svd(&k, false, true);
    let b = dec.v_t.expect("right singular vectors requested") * a;
    let smax = dec.singular_values.max();
    let inv_mass: f64 = b
        .iter()
        .enumerate()
        .map(|(i, bi)| {
            let si = dec
                .singular_values
                .get(i)
                .copied()
                .unwrap_or(0.0)
                .max(1e-14 * smax);
            bi * bi / (si * si)
        })
        .sum();
    Ok(hnorm / inv_mass.sqrt())
}

fn commutator(h: &DMatrix<f64>, s: &DMatrix<f64>) -> DMatrix<f64> {
    h * s - s * h
}

/// `min sum w_ij |S_ij|` over zero-diagonal `S` (optionally nonnegative)
/// with `sum_i S_{i,c} = 1` and `||H S - S H||_F <= eps`. ADMM on the
/// splitting `p = s`, `w = K s` with the affine constraint kept in the
/// `s`-step, then an exact solve on the detected support.
pub fn infer_commute(h: &DMatrix<f64>, eps: f64, opts: &CommuteOptions) -> Result<CommuteResult> {
    let n = h.nrows();
    if h.ncols() != n {
        return Err(GspError::InvalidArgument("H must be square".into()));
    }
    if n < 2 {
        return Err(GspError::InvalidSize("need at least two nodes".into()));
    }
    if opts.norm_col >= n {
        return Err(GspError::InvalidArgument(format!(
            "normalisation column {} out of range",
            opts.norm_col
        )));
    }
    if eps < 0.0 {
        return Err(GspError::InvalidArgument("eps must be nonnegative".into()));
    }
    let col = opts.norm_col;
    let pos = offdiag(n);
    let weights = tie_weights(&pos, n, col);
    let to_matrix = |s: &DVector<f64>| {
        let mut m = DMatrix::zeros(n, n);
        for (k, &(i, j)) in pos.iter().enumerate() {
            m[(i, j)] = s[k];
        }
        m
    };

    let hnorm = h.norm();
    let shifted = h - DMatrix::identity(n, n) * (h.trace() / n as f64);
    if shifted.norm() <= 1e-12 * hnorm.max(f64::MIN_POSITIVE) {
        // vacuous constraint: cheapest unit entry of the normalisation column
        let row = if col == 0 { 1 } else { 0 };
        let mut s = DMatrix::zeros(n, n);
        s[(row, col)] = 1.0;
        let residual = commutator(h, &s).norm();
        return Ok(CommuteResult {
            s,
            residual,
            iterations: 0,
            converged: true,
            polished: false,
        });
    }

    // scale so that ||H||_F = 1; the constraint radius scales with it
    let radius = eps / hnorm;
    let (k, a) = commute_system(&(h / hnorm), &pos, col);
    let m = pos.len();
    // in the right singular basis of K the constraint is an ellipsoid
    // sum_i sigma_i^2 w_i^2 <= radius^2 on w = V^T s, and V is orthogonal
    let dec = linalg::svd(&k, false, true);
    let vt = dec.v_t.expect("right singular vectors requested");
    let sig2: Vec<f64> = (0..m)
        .map(|i| dec.singular_values.get(i).map_or(0.0, |v| v * v))
        .collect();
    let v = vt.transpose();
    let a_sq = a.norm_squared();
    // minimiser of ||s - c||^2 subject to a^T s = 1
    let s_step = |c: &DVector<f64>| c - &a * ((a.dot(c) - 1.0) / a_sq);
    let prox = |x: &DVector<f64>, t: f64| {
        DVector::from_fn(m, |c, _| {
            let z = soft_threshold(x[c], t * weights[c]);
            if opts.nonneg {
                z.max(0.0)
            } else {
                z
            }
        })
    };
    let project = |q: &DVector<f64>| ellipsoid_projection(q, &sig2, radius);

    let mut rho = 1.0;
    let mut p: DVector<f64> = DVector::zeros(m);
    let mut w: DVector<f64> = DVector::zeros(m);
    let mut u: DVector<f64> = DVector::zeros(m);
    let mut z: DVector<f64> = DVector::zeros(m);
    let mut converged = false;
    let mut iterations = 0;
    let dim = ((2 * m) as f64).sqrt();
    while iterations < opts.max_iters {
        iterations += 1;
        let s = s_step(&((&p - &u + &v * (&w - &z)) * 0.5));
        let vts = &vt * &s;
        let s_rel = &s * RELAX + &p * (1.0 - RELAX);
        let vts_rel = &vts * RELAX + &w * (1.0 - RELAX);
        let p_old = std::mem::replace(&mut p, prox(&(&s_rel + &u), 1.0 / rho));
        let w_old = std::mem::replace(&mut w, project(&(&vts_rel + &z)));
        u += &s_rel - &p;
        z += &vts_rel - &w;
        let primal = ((&s - &p).norm_squared() + (&vts - &w).norm_squared()).sqrt();
        let dual = rho * (&(&p - &p_old) + &v * (&w - &w_old)).norm();
        let eps_p = opts.abs_tol * dim + opts.rel_tol * s.norm().max(p.norm());
        let eps_d = opts.abs_tol * dim + opts.rel_tol * rho * (&u + &v * &z).norm();
        if primal <= eps_p && dual <= eps_d {
            converged = true;
            break;
        }
        if iterations % 10 == 0 && iterations <= ADAPT_ITERS {
            if primal > 10.0 * dual {
                rho *= 2.0;
                u /= 2.0;
                z /= 2.0;
            } else if dual > 10.0 * primal {
                rho /= 2.0;
                u *= 2.0;
                z *= 2.0;
            }
        }
    }

    // exact refits on the supports of p at a ladder of thresholds; an LP
    // optimum sits on a vertex, so one of them usually matches it exactly
    let cost = |s: &DVector<f64>| {
        s.iter()
            .zip(&weights)
            .map(|(v, w)| w * v.abs())
            .sum::<f64>()
    };
    let feasible = |s: &DVector<f64>| {
        (&k * s).norm() <= radius + 1e-12
            && (a.dot(s) - 1.0).abs() <= 1e-10
            && (!opts.nonneg || s.iter().all(|v| *v >= 0.0))
    };
    let refit = |sup: &[usize]| -> (DVector<f64>, bool) {
        let mut sys = k.select_columns(sup).insert_row(n * n, 0.0);
        for (c, &idx) in sup.iter().enumerate() {
            sys[(n * n, c)] = a[idx];
        }
        let mut rhs = DVector::zeros(n * n + 1);
        rhs[n * n] = 1.0;
        let (sol, rank) = linalg::lstsq_min_norm(&sys, &rhs, 1e-12);
        let mut cand = DVector::zeros(m);
        for (c, &idx) in sup.iter().enumerate() {
            // round-off below zero is not a sign violation
            cand[idx] = if opts.nonneg && sol[c] < 0.0 && sol[c] > -1e-12 {
                0.0
            } else {
                sol[c]
            };
        }
        (cand, rank == sup.len())
    };
    let mut best = p.clone();
    let mut polished = false;
    let mut best_vertex = false;
    let mut best_cost = if feasible(&p) {
        cost(&p)
    } else {
        f64::INFINITY
    };
    let pmax = p.amax();
    let mut last: Option<Vec<usize>> = None;
    for t in [1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6] {
        let sup: Vec<usize> = (0..m).filter(|&c| p[c].abs() > t * pmax).collect();
        if sup.is_empty() || last.as_ref() == Some(&sup) {
            continue;
        }
        let (cand, vertex) = refit(&sup);
        if feasible(&cand) && cost(&cand) < best_cost {
            best_cost = cost(&cand);
            best = cand;
            best_vertex = vertex;
            polished = true;
        }
        last = Some(sup);
    }
    // a rank-deficient support is a face, not a vertex: drop entries,
    // weakest first, while the refit stays feasible and no more costly
    while best_cost.is_finite() && !best_vertex {
        let mut sup: Vec<usize> = (0..m).filter(|&c| best[c] != 0.0).collect();
        sup.sort_by(|&x, &y| best[x].abs().total_cmp(&best[y].abs()));
        let mut moved = false;
        for drop in 0..sup.len() {
            let mut trial = sup.clone();
            trial.remove(drop);
            trial.sort_unstable();
            if trial.is_empty() {
                continue;
            }
            let (cand, vertex) = refit(&trial);
            if feasible(&cand) && cost(&cand) <= best_cost * (1.0 + 1e-12) {
                best_cost = cost(&cand);
                best = cand;
                best_vertex = vertex;
                polished = true;
                moved = true;
                break;
            }
        }
        if !moved {
            break;
        }
    }
    let s = to_matrix(&best);
    let residual = commutator(h, &s).norm();
    let norm_err = (s.column(col).sum() - 1.0).abs();
    let tol = 1e-6 * hnorm.max(1.0);
    if residual > eps + tol || norm_err > 1e-6 {
        return Err(GspError::Infeasible {
            residual: (residual - eps).max(0.0) + norm_err,
        });
    }
    Ok(CommuteResult {
        s,
        residual,
        iterations,
        converged,
        polished,
    })
}

/// `x_t = sum_{l=1}^L H_l(S, hbar) x_{t-l} + e_t` with
/// `H_l = sum_{i=0}^{l} hbar[l-1][i] S^i`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CgpEstimate {
    pub s: Vec<Vec<f64>>,
    pub hbar: Vec<Vec<f64>>,
    /// Stage-one filter estimates `H_1..H_L` as rows.
    pub hmats: Vec<Vec<Vec<f64>>>,
    /// Normalisation column used in the shift recovery.
    pub norm_col: usize,
    /// Commutation tolerance used in the shift recovery.
    pub eps: f64,
    pub commute_residual: f64,
}

impl CgpEstimate {
    pub fn shift(&self) -> DMatrix<f64> {
        rows_to_matrix(&self.s)
    }

    pub fn filter(&self, l: usize) -> DMatrix<f64> {
        rows_to_matrix(&self.hmats[l])
    }
}

pub fn rows_to_matrix(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let n = rows.len();
    let c = rows.first().map_or(0, |r| r.len());
    DMatrix::from_fn(n, c, |i, j| rows[i][j])
}

pub fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct CgpOptions {
    /// Commutator penalty weight as a multiple of the data scale `||X||_F^2 / N`.
    pub mu: f64,
    /// Ridge weight as a multiple of the data scale.
    pub ridge: f64,
    pub max_iters: usize,
    pub commute: CommuteOptions,
    /// Use the column of `H_1` with the largest off-diagonal mass for the
    /// normalisation instead of `commute.norm_col`.
    pub auto_norm_col: bool,
}

impl Default for CgpOptions {
    fn default() -> Self {
        CgpOptions {
            mu: 0.1,
            ridge: 1e-6,
            max_iters: 2000,
            commute: CommuteOptions::default(),
            auto_norm_col: true,
        }
    }
}

/// Stage-one objective `||Y - [H_1..H_L] Z||^2 + ridge sum ||H_l||^2
/// + mu sum_{l<l'} ||H_l H_l' - H_l' H_l||^2`.
pub fn cgp_stage1_objective(ts: &TimeSeries, hs: &[DMatrix<f64>], ridge: f64, mu: f64) -> f64 {
    let (y, z) = var_data(ts, hs.len());
    let big = hcat(hs);
    let mut f =
        (y - big * z).norm_squared() + ridge * hs.iter().map(|h| h.norm_squared()).sum::<f64>();
    for a in 0..hs.len() {
        for b in a + 1..hs.len() {
            f += mu * commutator(&hs[a], &hs[b]).norm_squared();
        }
    }
    f
}

pub fn cgp_stage1_gradient(
    ts: &TimeSeries,
    hs: &[DMatrix<f64>],
    ridge: f64,
    mu: f64,
) -> Vec<DMatrix<f64>> {
    let (y, z) = var_data(ts, hs.len());
    stage1_grad(&y, &z, hs, ridge, mu)
}

fn var_data(ts: &TimeSeries, l: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let t = ts.t();
    let y = ts.x.columns(l, t - l).into_owned();
    let n = ts.n();
    let z = DMatrix::from_fn(n * l, t - l, |r, c| {
        let (lag, j) = (r / n + 1, r % n);
        ts.x[(j, c + l - lag)]
    });
    (y, z)
}

fn hcat(hs: &[DMatrix<f64>]) -> DMatrix<f64> {
    let n = hs[0].nrows();
    let mut out = DMatrix::zeros(n, n * hs.len());
    for (l, h) in hs.iter().enumerate() {
        out.view_mut((0, l * n), (n, n)).copy_from(h);
    }
    out
}

fn stage1_grad(
    y: &DMatrix<f64>,
    z: &DMatrix<f64>,
    hs: &[DMatrix<f64>],
    ridge: f64,
    mu: f64,
) -> Vec<DMatrix<f64>> {
    let n = y.nrows();
    let big = hcat(hs);
    let g = (&big * z - y) * z.transpose() * 2.0;
    let mut out: Vec<DMatrix<f64>> = (0..hs.len())
        .map(|l| g.columns(l * n, n).into_owned() + &hs[l] * (2.0 * ridge))
        .collect();
    for a in 0..hs.len() {
        for b in a + 1..hs.len() {
            let c = commutator(&hs[a], &hs[b]);
            out[a] += (&c * hs[b].transpose() - hs[b].transpose() * &c) * (2.0 * mu);
            out[b] += (hs[a].transpose() * &c - &c * hs[a].transpose()) * (2.0 * mu);
        }
    }
    out
}

fn split(big: &DMatrix<f64>, l: usize) -> Vec<DMatrix<f64>> {
    let n = big.nrows();
    (0..l).map(|k| big.columns(k * n, n).into_owned()).collect()
}

fn stage1(ts: &TimeSeries, l: usize, ridge: f64, mu: f64, max_iters: usize) -> Vec<DMatrix<f64>> {
    let (y, z) = var_data(ts, l);
    let nl = z.nrows();
    let zzt = &z * z.transpose() + DMatrix::identity(nl, nl) * ridge;
    let yzt = &y * z.transpose();
    let big = match zzt.clone().cholesky() {
        Some(ch) => ch.solve(&yzt.transpose()).transpose(),
        None => {
            yzt * linalg::pinv_c(&linalg::to_complex(&zzt), 1e-12)
                .0
                .map(|v| v.re)
        }
    };
    let mut hs = split(&big, l);
    if l == 1 || mu == 0.0 {
        return hs;
    }
    let obj = |hs: &[DMatrix<f64>]| {
        let big = hcat(hs);
        let mut f = (&y - big * &z).norm_squared()
            + ridge * hs.iter().map(|h| h.norm_squared()).sum::<f64>();
        for a in 0..hs.len() {
            for b in a + 1..hs.len() {
                f += mu * commutator(&hs[a], &hs[b]).norm_squared();
            }
        }
        f
    };
    let mut f = obj(&hs);
    let mut step = 1.0 / (2.0 * linalg::spectral_norm(&zzt).max(f64::MIN_POSITIVE));
    for _ in 0..max_iters {
        let g = stage1_grad(&y, &z, &hs, ridge, mu);
        let gn: f64 = g.iter().map(|m| m.norm_squared()).sum();
        if gn == 0.0 {
            break;
        }
        let mut accepted = false;
        for _ in 0..50 {
            let cand: Vec<DMatrix<f64>> = hs.iter().zip(&g).map(|(h, d)| h - d * step).collect();
            let fc = obj(&cand);
            if fc <= f - 0.5 * step * gn {
                let rel = (f - fc) / f.max(f64::MIN_POSITIVE);
                hs = cand;
                f = fc;
                step *= 1.5;
                accepted = true;
                if rel < 1e-12 {
                    return hs;
                }
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    hs
}

/// Three-stage CGP estimate: filters `H_l` by a commutator-penalised VAR
/// fit, a sparse shift from `H_1` by [`infer_commute`] with tolerance
/// `eps = (1 + alpha) commute_floor(H_1)`, then `hbar` by lasso with
/// weight `beta`.
pub fn infer_cgp(
    ts: &TimeSeries,
    l: usize,
    alpha: f64,
    beta: f64,
    opts: &CgpOptions,
) -> Result<CgpEstimate> {
    check_lags(ts, l)?;
    if alpha < 0.0 || beta < 0.0 {
        return Err(GspError::InvalidArgument(
            "alpha and beta must be nonnegative".into(),
        ));
    }
    let n = ts.n();
    let scale = ts.x.norm_squared() / n as f64;
    let hs = stage1(ts, l, opts.ridge * scale, opts.mu * scale, opts.max_iters);

    let h1 = &hs[0];
    let mut copts = opts.commute.clone();
    if opts.auto_norm_col {
        copts.norm_col = (0..n)
            .max_by(|&a, &b| {
                let mass = |j: usize| {
                    (0..n)
                        .filter(|&i| i != j)
                        .map(|i| h1[(i, j)].abs())
                        .sum::<f64>()
                };
                mass(a).total_cmp(&mass(b))
            })
            .unwrap_or(0);
    }
    let floor = commute_floor(h1, copts.norm_col).map_err(|e| e.in_stage("cgp shift recovery"))?;
    let eps = (1.0 + alpha) * floor;
    let com = infer_commute(h1, eps, &copts).map_err(|e| e.in_stage("cgp shift recovery"))?;

    let powers = {
        let mut p = vec![DMatrix::identity(n, n)];
        for i in 1..=l {
            let next = &com.s * &p[i - 1];
            p.push(next);
        }
        p
    };
    let mut hbar = Vec::with_capacity(l);
    for (li, h) in hs.iter().enumerate() {
        let lag = li + 1;
        let design = DMatrix::from_columns(
            &powers[..=lag]
                .iter()
                .map(|p| DVector::from_column_slice(p.as_slice()))
                .collect::<Vec<_>>(),
        );
        let target = DVector::from_column_slice(h.as_slice());
        let r = weighted_lasso(
            &design,
            &target,
            beta,
            &vec![1.0; lag + 1],
            &LassoOptions::default(),
        )
        .map_err(|e| e.in_stage("cgp coefficient fit"))?;
        hbar.push(r.x.iter().copied().collect());
    }
    Ok(CgpEstimate {
        s: matrix_to_rows(&com.s),
        hbar,
        hmats: hs.iter().map(matrix_to_rows).collect(),
        norm_col: copts.norm_col,
        eps,
        commute_residual: com.residual,
    })
}

/// `x_t = (I - S)^{-1} (diag(omega) u_t + e_t)`, `u_t` and `e_t / noise`
/// standard normal.
pub fn simulate_sem(
    s: &DMatrix<f64>,
    omega: &[f64],
    t: usize,
    noise: f64,
    seed: u64,
) -> Result<TimeSeries> {
    let n = s.nrows();
    if s.ncols() != n || omega.len() != n {
        return Err(GspError::DimensionMismatch {
            expected: n,
            got: omega.len(),
        });
    }
    let radius = linalg::spectral_radius(s);
    if radius >= 1.0 {
        return Err(GspError::Unstable { radius });
    }
    let inv = (DMatrix::identity(n, n) - s)
        .try_inverse()
        .ok_or(GspError::Unstable { radius })?;
    let mut r = rng(seed);
    let mut x = DMatrix::zeros(n, t);
    let mut u = DMatrix::zeros(n, t);
    for k in 0..t {
        let uk = normal_vec(&mut r, n);
        let ek = normal_vec(&mut r, n) * noise;
        let drive = DVector::from_fn(n, |i, _| omega[i] * uk[i]) + ek;
        x.set_column(k, &(&inv * drive));
        u.set_column(k, &uk);
    }
    TimeSeries::new(x, Some(u))
}

/// Block companion matrix of a VAR with lag matrices `mats`.
pub fn companion(mats: &[DMatrix<f64>]) -> DMatrix<f64> {
    let n = mats[0].nrows();
    let l = mats.len();
    let mut c = DMatrix::zeros(n * l, n * l);
    for (k, m) in mats.iter().enumerate() {
        c.view_mut((0, k * n), (n, n)).copy_from(m);
    }
    for k in 1..l {
        c.view_mut((k * n, (k - 1) * n), (n, n))
            .copy_from(&DMatrix::identity(n, n));
    }
    c
}

/// Burn-in steps discarded before recording a simulated VAR.
const BURN_IN: usize = 500;

/// `x_t = sum_l mats[l-1] x_{t-l} + e_t`, `e_t / noise` standard normal,
/// started at zero and run through a burn-in.
pub fn simulate_var(mats: &[DMatrix<f64>], t: usize, noise: f64, seed: u64) -> Result<TimeSeries> {
    if mats.is_empty() {
        return Err(GspError::InvalidArgument("need at least one lag".into()));
    }
    let n = mats[0].nrows();
    let radius = linalg::spectral_radius(&companion(mats));
    if radius >= 1.0 {
        return Err(GspError::Unstable { radius });
    }
    let l = mats.len();
    let mut r = rng(seed);
    let total = t + BURN_IN;
    let mut hist: Vec<DVector<f64>> = vec![DVector::zeros(n); l];
    let mut x = DMatrix::zeros(n, t);
    for k in 0..total {
        let mut next = normal_vec(&mut r, n) * noise;
        for (lag, m) in mats.iter().enumerate() {
            next += m * &hist[lag];
        }
        hist.rotate_right(1);
        hist[0] = next.clone();
        if k >= BURN_IN {
            x.set_column(k - BURN_IN, &next);
        }
    }
    TimeSeries::new(x, None)
}

/// Filters `H_l = sum_{i=0}^{l} hbar[l-1][i] S^i`.
pub fn cgp_filters(s: &DMatrix<f64>, hbar: &[Vec<f64>]) -> Result<Vec<DMatrix<f64>>> {
    let n = s.nrows();
    let mut powers = vec![DMatrix::identity(n, n)];
    let mut out = Vec::with_capacity(hbar.len());
    for (li, coeffs) in hbar.iter().enumerate() {
        let lag = li + 1;
        if coeffs.len() != lag + 1 {
            return Err(GspError::InvalidArgument(format!(
                "lag {lag} needs {} coefficients, got {}",
                lag + 1,
                coeffs.len()
            )));
        }
        while powers.len() <= lag {
            let next = s * powers.last().expect("nonempty");
            powers.push(next);
        }
        out.push(
            coeffs
                .iter()
                .zip(&powers)
                .fold(DMatrix::zeros(n, n), |acc, (c, p)| acc + p * *c),
        );
    }
    Ok(out)
}

pub fn simulate_cgp(
    s: &DMatrix<f64>,
    hbar: &[Vec<f64>],
    t: usize,
    noise: f64,
    seed: u64,
) -> Result<TimeSeries> {
    simulate_var(&cgp_filters(s, hbar)?, t, noise, seed)
}

/// Precision, recall and F1 of an estimated edge set.
pub fn support_f1(est: &[(usize, usize)], truth: &[(usize, usize)]) -> f64 {
    let tp = est.iter().filter(|e| truth.contains(e)).count() as f64;
    if est.is_empty() && truth.is_empty() {
        return 1.0;
    }
    if tp == 0.0 {
        return 0.0;
    }
    let p = tp / est.len() as f64;
    let r = tp / truth.len() as f64;
    2.0 * p * r / (p + r)
}

/// Off-diagonal nonzero positions `(i, j)` with `|m_ij| > tol`.
pub fn edge_set(m: &DMatrix<f64>, tol: f64) -> Vec<(usize, usize)> {
    let n = m.nrows();
    (0..n)
        .flat_map(|i| (0..m.ncols()).map(move |j| (i, j)))
        .filter(|&(i, j)| i != j && m[(i, j)].abs() > tol)
        .collect()
}

/// Area under the ROC curve of `|scores|` against the off-diagonal support
/// of `truth` (ties count one half).
pub fn support_auc(scores: &DMatrix<f64>, truth: &DMatrix<f64>) -> f64 {
    let n = truth.nrows();
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let v = scores[(i, j)].abs();
            if truth[(i, j)] != 0.0 {
                pos.push(v)
            } else {
                neg.push(v)
            }
        }
    }
    if pos.is_empty() || neg.is_empty() {
        return f64::NAN;
    }
    let mut wins = 0.0;
    for p in &pos {
        for q in &neg {
            wins += if p > q {
                1.0
            } else if p == q {
                0.5
            } else {
                0.0
            };
        }
    }
    wins / (pos.len() * neg.len()) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_network_sem() {
        let n = 4;
        let ts = simulate_sem(&DMatrix::zeros(n, n), &[1.0; 4], 50, 0.0, 1).unwrap();
        assert_eq!(ts.x, ts.u.clone().unwrap());
        let est = infer_sem(&ts, 0.1, &CdOptions::default()).unwrap();
        assert!(est.matrix().iter().all(|v| *v == 0.0));
        assert!(est.omega.iter().all(|w| (w - 1.0).abs() < 1e-10));
    }

    #[test]
    fn sem_requires_inputs() {
        let ts = TimeSeries::new(DMatrix::from_element(3, 5, 1.0), None).unwrap();
        assert!(infer_sem(&ts, 0.1, &CdOptions::default()).is_err());
    }

    #[test]
    fn unstable_models_are_rejected() {
        let s = DMatrix::from_row_slice(2, 2, &[0.0, 1.2, 1.0, 0.0]);
        assert!(matches!(
            simulate_sem(&s, &[1.0, 1.0], 10, 0.1, 0),
            Err(GspError::Unstable { .. })
        ));
        assert!(matches!(
            simulate_var(&[s], 10, 0.1, 0),
            Err(GspError::Unstable { .. })
        ));
    }

    #[test]
    fn zero_cgp_is_white_noise() {
        let s = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let ts = simulate_cgp(&s, &[vec![0.0, 0.0]], 20, 1.0, 4).unwrap();
        let mut r = rng(4);
        for _ in 0..BURN_IN {
            normal_vec(&mut r, 2);
        }
        assert_eq!(ts.x.column(0).into_owned(), normal_vec(&mut r, 2));
    }

    #[test]
    fn identity_commute_picks_lowest_row() {
        let res = infer_commute(&DMatrix::identity(4, 4), 0.0, &CommuteOptions::default()).unwrap();
        let mut want = DMatrix::zeros(4, 4);
        want[(1, 0)] = 1.0;
        assert_eq!(res.s, want);
        let res = infer_commute(
            &DMatrix::identity(4, 4),
            0.0,
            &CommuteOptions {
                norm_col: 2,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(res.s[(0, 2)], 1.0);
    }

    #[test]
    fn group_step_matches_scalar_soft_threshold() {
        let g = DMatrix::from_element(1, 1, 2.0);
        let b = DVector::from_vec(vec![3.0]);
        let s = group_step(&g, &b, 1.0);
        // minimiser of 2 s^2 - 6 s + |s|
        assert!((s[0] - 1.25).abs() < 1e-12);
        assert_eq!(group_step(&g, &DVector::from_vec(vec![0.4]), 1.0)[0], 0.0);
    }

    #[test]
    fn metrics() {
        assert_eq!(support_f1(&[(0, 1), (1, 2)], &[(0, 1), (1, 2)]), 1.0);
        assert!((support_f1(&[(0, 1)], &[(0, 1), (1, 2)]) - 2.0 / 3.0).abs() < 1e-15);
        let truth = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let scores = DMatrix::from_row_slice(2, 2, &[9.0, 0.5, 0.1, 9.0]);
        assert_eq!(support_auc(&scores, &truth), 1.0);
    }
}
