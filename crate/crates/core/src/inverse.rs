//! Filter-based inverse problems: sparse deconvolution, source
//! localisation, system identification and blind deconvolution.
//!
//! Losses are plain squared norms (no one-half factor), so every null
//! threshold carries a factor of two.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{GspError, Result};
use crate::filters::FilterTaps;
use crate::graph::{check_len, shift_powers, GraphSignal, ShiftOperator};
use crate::linalg::{self, soft_threshold};
use crate::sampling::SamplingSet;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct LassoOptions {
    pub max_iters: usize,
    /// Relative objective change below which iteration stops.
    pub tol: f64,
}

impl Default for LassoOptions {
    fn default() -> Self {
        LassoOptions {
            max_iters: 100_000,
            tol: 1e-10,
        }
    }
}

#[derive(Clone, Debug)]
pub struct LassoResult {
    pub x: DVector<f64>,
    pub objective: f64,
    /// Objective of the monotone iterate sequence, starting at `x = 0`.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

fn lasso_objective(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    alpha: f64,
    w: &[f64],
    x: &DVector<f64>,
) -> f64 {
    let r = a * x - b;
    r.norm_squared() + alpha * x.iter().zip(w).map(|(v, wi)| wi * v.abs()).sum::<f64>()
}

/// Worst violation of the lasso optimality conditions
/// `2 A^T (A x - b) + alpha w o g = 0`, `g` in the subdifferential of `|x|`.
pub fn lasso_kkt_residual(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    alpha: f64,
    weights: &[f64],
    x: &DVector<f64>,
) -> f64 {
    let g = (a.transpose() * (a * x - b)) * 2.0;
    g.iter()
        .zip(x.iter())
        .zip(weights)
        .map(|((gi, xi), wi)| {
            let t = alpha * wi;
            if *xi > 0.0 {
                (gi + t).abs()
            } else if *xi < 0.0 {
                (gi - t).abs()
            } else {
                (gi.abs() - t).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

/// Exact solve on a fixed support and sign pattern; kept only if it
/// satisfies the optimality conditions and lowers the objective.
pub(crate) fn active_set_polish(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    alpha: f64,
    w: &[f64],
    x: &DVector<f64>,
) -> Option<DVector<f64>> {
    let scale = x.amax();
    if scale == 0.0 {
        return None;
    }
    let support: Vec<usize> = (0..x.len())
        .filter(|&i| x[i].abs() > 1e-9 * scale)
        .collect();
    if support.is_empty() || support.len() > a.nrows() {
        return None;
    }
    let a_s = a.select_columns(&support);
    let gram = a_s.transpose() * &a_s;
    let rhs = a_s.transpose() * b
        - DVector::from_fn(support.len(), |k, _| {
            0.5 * alpha * w[support[k]] * x[support[k]].signum()
        });
    let xs = gram.cholesky()?.solve(&rhs);
    if support
        .iter()
        .enumerate()
        .any(|(k, &i)| xs[k].signum() != x[i].signum())
    {
        return None;
    }
    let mut out = DVector::zeros(x.len());
    for (k, &i) in support.iter().enumerate() {
        out[i] = xs[k];
    }
    let tol = 1e-9 * (a.transpose() * b).amax().max(alpha).max(1e-300);
    (lasso_kkt_residual(a, b, alpha, w, &out) <= tol).then_some(out)
}

/// `min_x ||b - A x||^2 + alpha sum_i w_i |x_i|` by monotone FISTA with step
/// `1 / (2 sigma_max(A)^2)`, followed by an exact active-set polish.
pub fn weighted_lasso(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    alpha: f64,
    weights: &[f64],
    opts: &LassoOptions,
) -> Result<LassoResult> {
    check_len(a.nrows(), b.len())?;
    check_len(a.ncols(), weights.len())?;
    if alpha < 0.0 || weights.iter().any(|w| *w < 0.0 || !w.is_finite()) {
        return Err(GspError::InvalidArgument(
            "penalty weights must be nonnegative".into(),
        ));
    }
    let n = a.ncols();
    let smax = linalg::spectral_norm(a);
    if smax == 0.0 {
        if alpha == 0.0 {
            return Err(GspError::IllPosed(
                "zero operator with no penalty: every x is optimal".into(),
            ));
        }
        let f = b.norm_squared();
        return Ok(LassoResult {
            x: DVector::zeros(n),
            objective: f,
            trace: vec![f],
            iterations: 0,
            converged: true,
        });
    }
    let lip = 2.0 * smax * smax;
    let at = a.transpose();
    let thresh: Vec<f64> = weights.iter().map(|w| alpha * w / lip).collect();

    let mut x = DVector::zeros(n);
    let mut y = x.clone();
    let mut t = 1.0f64;
    let mut f = lasso_objective(a, b, alpha, weights, &x);
    let mut trace = vec![f];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iters {
        iterations += 1;
        let grad = &at * (a * &y - b) * 2.0;
        let z = DVector::from_fn(n, |i, _| soft_threshold(y[i] - grad[i] / lip, thresh[i]));
        let fz = lasso_objective(a, b, alpha, weights, &z);
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let x_prev = x.clone();
        let f_prev = f;
        if fz <= f {
            x = z.clone();
            f = fz;
        }
        y = &x + (&z - &x) * (t / t_next) + (&x - &x_prev) * ((t - 1.0) / t_next);
        t = t_next;
        trace.push(f);
        // A rejected step leaves f unchanged, so progress is judged on the candidate.
        if (fz - f_prev).abs() <= opts.tol * f_prev.max(f64::MIN_POSITIVE) {
            converged = true;
            break;
        }
    }
    if let Some(p) = active_set_polish(a, b, alpha, weights, &x) {
        let fp = lasso_objective(a, b, alpha, weights, &p);
        if fp <= f {
            x = p;
            f = fp;
            trace.push(f);
        }
    }
    Ok(LassoResult {
        x,
        objective: f,
        trace,
        iterations,
        converged,
    })
}

/// Known-filter deconvolution problem `ybar = C H x + noise`.
#[derive(Clone, Debug)]
pub struct DeconProblem {
    pub s: ShiftOperator,
    pub taps: FilterTaps,
    /// Observed nodes; `None` observes every node.
    pub ms: Option<SamplingSet>,
    pub ybar: DVector<f64>,
    pub alpha: f64,
}

impl DeconProblem {
    /// `H_M = C H`.
    pub fn operator(&self) -> Result<DMatrix<f64>> {
        let h = self.taps.matrix(&self.s);
        match &self.ms {
            None => Ok(h),
            Some(ms) => {
                ms.validate(self.s.n())?;
                Ok(h.select_rows(ms.indices()))
            }
        }
    }
}

/// `min_x ||ybar - H_M x||^2 + alpha ||x||_1`.
pub fn deconvolve_sparse(p: &DeconProblem, opts: &LassoOptions) -> Result<LassoResult> {
    let hm = p.operator()?;
    check_len(hm.nrows(), p.ybar.len())?;
    weighted_lasso(&hm, &p.ybar, p.alpha, &vec![1.0; hm.ncols()], opts)
}

/// Nodes with `|x*_i| >= threshold * max |x*|`, empty when `x* = 0`.
pub fn localize_sources(
    p: &DeconProblem,
    threshold: f64,
    opts: &LassoOptions,
) -> Result<Vec<usize>> {
    let x = deconvolve_sparse(p, opts)?.x;
    Ok(support_of(&x, threshold))
}

pub fn support_of(x: &DVector<f64>, threshold: f64) -> Vec<usize> {
    let m = x.amax();
    if m == 0.0 {
        return Vec::new();
    }
    (0..x.len())
        .filter(|&i| x[i].abs() >= threshold * m)
        .collect()
}

/// Column `l` holds the stacked `C S^l x_r` over all inputs `r`.
pub fn system_design_matrix(
    s: &ShiftOperator,
    inputs: &DMatrix<f64>,
    ms: Option<&SamplingSet>,
    l: usize,
) -> Result<DMatrix<f64>> {
    check_len(s.n(), inputs.nrows())?;
    let rows: Vec<usize> = match ms {
        Some(ms) => {
            ms.validate(s.n())?;
            ms.indices().to_vec()
        }
        None => (0..s.n()).collect(),
    };
    let m = rows.len();
    let r = inputs.ncols();
    let mut d = DMatrix::zeros(m * r, l);
    for c in 0..r {
        let powers = shift_powers(s, &inputs.column(c).into_owned(), l.saturating_sub(1))?;
        for (k, p) in powers.iter().enumerate().take(l) {
            for (i, &row) in rows.iter().enumerate() {
                d[(c * m + i, k)] = p[row];
            }
        }
    }
    Ok(d)
}

/// Taps from known inputs and sampled outputs:
/// `min_h sum_r ||ybar_r - C H(h) x_r||^2 + alpha ||diag(omega) h||_1`.
pub fn identify_system(
    s: &ShiftOperator,
    inputs: &DMatrix<f64>,
    outputs: &DMatrix<f64>,
    ms: Option<&SamplingSet>,
    l: usize,
    omega: &[f64],
    alpha: f64,
    opts: &LassoOptions,
) -> Result<LassoResult> {
    if l == 0 {
        return Err(GspError::InvalidArgument("need at least one tap".into()));
    }
    check_len(l, omega.len())?;
    if omega.iter().any(|w| *w < 0.0) || omega.windows(2).any(|w| w[1] < w[0]) {
        return Err(GspError::InvalidArgument(
            "omega must be nonnegative and nondecreasing".into(),
        ));
    }
    check_len(inputs.ncols(), outputs.ncols())?;
    let m = ms.map_or(s.n(), |m| m.len());
    check_len(m, outputs.nrows())?;
    if alpha == 0.0 && m * inputs.ncols() < l {
        return Err(GspError::IllPosed(format!(
            "{} observations cannot determine {l} taps without regularisation",
            m * inputs.ncols()
        )));
    }
    let d = system_design_matrix(s, inputs, ms, l)?;
    let y = DVector::from_iterator(outputs.len(), outputs.iter().copied());
    weighted_lasso(&d, &y, alpha, omega, opts)
}

/// `A(Z) = sum_l S^l z_l`, optionally followed by row selection.
#[derive(Clone, Debug)]
pub struct LiftedOperator {
    /// `[C S^0, C S^1, ..., C S^{L-1}]`, acting on the column-major `vec(Z)`.
    m: DMatrix<f64>,
    n: usize,
    l: usize,
}

impl LiftedOperator {
    pub fn new(s: &ShiftOperator, l: usize, ms: Option<&SamplingSet>) -> Result<Self> {
        if l == 0 {
            return Err(GspError::InvalidArgument("need L >= 1".into()));
        }
        let n = s.n();
        let powers = s.dense_powers(l - 1);
        let rows: Vec<usize> = match ms {
            Some(ms) => {
                ms.validate(n)?;
                ms.indices().to_vec()
            }
            None => (0..n).collect(),
        };
        let mut m = DMatrix::zeros(rows.len(), n * l);
        for (k, p) in powers.iter().enumerate() {
            m.view_mut((0, k * n), (rows.len(), n))
                .copy_from(&p.select_rows(&rows));
        }
        Ok(LiftedOperator { m, n, l })
    }

    pub fn apply(&self, z: &DMatrix<f64>) -> DVector<f64> {
        &self.m * DVector::from_column_slice(z.as_slice())
    }

    pub fn adjoint(&self, y: &DVector<f64>) -> DMatrix<f64> {
        let v = self.m.transpose() * y;
        DMatrix::from_column_slice(self.n, self.l, v.as_slice())
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct BlindOptions {
    pub max_iters: usize,
    /// Initial splitting penalty.
    pub rho: f64,
    pub abs_tol: f64,
    pub rel_tol: f64,
    /// Refit `Z` by least squares on its detected row support before the
    /// rank-one factorisation, removing the shrinkage bias of the penalties.
    /// Skipped when the support has more unknowns than observations.
    pub refit: bool,
}

impl Default for BlindOptions {
    fn default() -> Self {
        BlindOptions {
            max_iters: 20_000,
            rho: 1.0,
            abs_tol: 1e-10,
            rel_tol: 1e-8,
            refit: true,
        }
    }
}

#[derive(Clone, Debug)]
pub struct BlindResult {
    /// Solution of the convex program.
    pub z: DMatrix<f64>,
    /// Row support of `z` used by the refit, when it ran.
    pub refit_rows: Option<Vec<usize>>,
    pub x: DVector<f64>,
    pub h: DVector<f64>,
    pub objective: f64,
    /// Best objective seen so far, per iteration.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

fn nuclear_norm(z: &DMatrix<f64>) -> f64 {
    linalg::singular_values(z).iter().sum()
}

fn row_norm_sum(z: &DMatrix<f64>) -> f64 {
    z.row_iter().map(|r| r.norm()).sum()
}

fn svt(z: &DMatrix<f64>, t: f64) -> DMatrix<f64> {
    let svd = linalg::svd(z, true, true);
    let u = svd.u.expect("u requested");
    let vt = svd.v_t.expect("v_t requested");
    let s = svd.singular_values.map(|v| (v - t).max(0.0));
    u * DMatrix::from_diagonal(&s) * vt
}

fn row_shrink(z: &DMatrix<f64>, t: f64) -> DMatrix<f64> {
    let mut out = z.clone();
    for mut row in out.row_iter_mut() {
        let nrm = row.norm();
        let k = if nrm > t { 1.0 - t / nrm } else { 0.0 };
        row *= k;
    }
    out
}

/// Objective `||y - A(Z)||^2 + alpha1 ||Z||_* + alpha2 ||Z||_{2,1}`.
pub fn blind_objective(
    op: &LiftedOperator,
    y: &DVector<f64>,
    alpha1: f64,
    alpha2: f64,
    z: &DMatrix<f64>,
) -> f64 {
    (y - op.apply(z)).norm_squared() + alpha1 * nuclear_norm(z) + alpha2 * row_norm_sum(z)
}

/// Penalties at or above which `Z* = 0`: `2 ||A*(y)||_2` for the nuclear
/// term and `2 max_i ||[A*(y)]_i||_2` for the row-sparsity term.
pub fn blind_null_thresholds(op: &LiftedOperator, y: &DVector<f64>) -> (f64, f64) {
    let g = op.adjoint(y);
    let spec = linalg::spectral_norm(&g);
    let row = g.row_iter().map(|r| r.norm()).fold(0.0, f64::max);
    (2.0 * spec, 2.0 * row)
}

/// Rank-one factors `x = sqrt(s) u`, `h = sqrt(s) v` of the leading singular
/// pair, signed so the largest-magnitude entry of `h` is positive.
pub fn rank_one_factors(z: &DMatrix<f64>) -> (DVector<f64>, DVector<f64>) {
    let svd = linalg::svd(z, true, true);
    let u = svd.u.expect("u requested");
    let vt = svd.v_t.expect("v_t requested");
    let k = svd.singular_values.imax();
    let s = svd.singular_values[k].sqrt();
    let mut x = u.column(k) * s;
    let mut h = vt.row(k).transpose() * s;
    let imax = h.iamax();
    if h[imax] < 0.0 {
        x.neg_mut();
        h.neg_mut();
    }
    (x, h)
}

fn support_rows(op: &LiftedOperator, z: &DMatrix<f64>) -> Option<Vec<usize>> {
    let scale = z.norm();
    if scale == 0.0 {
        return None;
    }
    let rows: Vec<usize> = (0..op.n)
        .filter(|&i| z.row(i).norm() > 1e-6 * scale)
        .collect();
    (rows.len() * op.l <= op.m.nrows()).then_some(rows)
}

/// Unconstrained least-squares `Z` on the given rows.
fn support_lstsq(op: &LiftedOperator, y: &DVector<f64>, rows: &[usize]) -> DMatrix<f64> {
    let cols: Vec<usize> = (0..op.l)
        .flat_map(|k| rows.iter().map(move |&i| k * op.n + i))
        .collect();
    let (sol, _) = linalg::lstsq_min_norm(&op.m.select_columns(&cols), y, 1e-12);
    let mut out = DMatrix::zeros(op.n, op.l);
    for (j, &c) in cols.iter().enumerate() {
        out[(c % op.n, c / op.n)] = sol[j];
    }
    out
}

const ALS_ITERS: usize = 500;
const ALS_STARTS: usize = 8;

/// Alternating least squares for `Z = x h^T` with `x` supported on `rows`,
/// started from tap vector `h`.
fn rank_one_als(
    op: &LiftedOperator,
    y: &DVector<f64>,
    rows: &[usize],
    mut h: DVector<f64>,
) -> DMatrix<f64> {
    let blocks: Vec<DMatrix<f64>> = (0..op.l)
        .map(|k| op.m.columns(k * op.n, op.n).select_columns(rows))
        .collect();
    let mut x = DVector::zeros(rows.len());
    let mut prev = f64::INFINITY;
    let floor = y.norm_squared().max(f64::MIN_POSITIVE);
    for _ in 0..ALS_ITERS {
        let mut bx = DMatrix::zeros(op.m.nrows(), rows.len());
        for (k, blk) in blocks.iter().enumerate() {
            bx += blk * h[k];
        }
        x = linalg::lstsq_min_norm(&bx, y, 1e-12).0;
        let bh = DMatrix::from_columns(&blocks.iter().map(|blk| blk * &x).collect::<Vec<_>>());
        h = linalg::lstsq_min_norm(&bh, y, 1e-12).0;
        let misfit = (&bh * &h - y).norm_squared();
        if prev - misfit <= 1e-14 * floor {
            break;
        }
        prev = misfit;
    }
    let mut out = DMatrix::zeros(op.n, op.l);
    for (j, &i) in rows.iter().enumerate() {
        out.set_row(i, &(h.transpose() * x[j]));
    }
    out
}

/// Best multi-start rank-one fit on `rows`. Starts are the taps of `z`, of
/// the unconstrained refit and a few fixed random directions. Fits whose
/// misfit ties the best are resolved by distance to `z`.
fn rank_one_fit(
    op: &LiftedOperator,
    y: &DVector<f64>,
    rows: &[usize],
    z: &DMatrix<f64>,
) -> (f64, DMatrix<f64>) {
    let mut starts = vec![
        rank_one_factors(z).1,
        rank_one_factors(&support_lstsq(op, y, rows)).1,
    ];
    let mut r = crate::synth::rng(0);
    starts.extend((0..ALS_STARTS).map(|_| crate::synth::normal_vec(&mut r, op.l)));
    let fits: Vec<(f64, DMatrix<f64>)> = starts
        .into_iter()
        .filter(|h| h.norm() > 0.0)
        .map(|h| {
            let c = rank_one_als(op, y, rows, h);
            ((op.apply(&c) - y).norm_squared(), c)
        })
        .collect();
    let low = fits.iter().map(|f| f.0).fold(f64::INFINITY, f64::min);
    let tie = low + 1e-10 * y.norm_squared();
    fits.into_iter()
        .filter(|f| f.0 <= tie)
        .min_by(|a, b| (&a.1 - z).norm().total_cmp(&(&b.1 - z).norm()))
        .unwrap_or_else(|| (f64::INFINITY, DMatrix::zeros(op.n, op.l)))
}

/// Rank-one least-squares `Z` on the row support of `z`. Rows are then
/// dropped, weakest first, while the fit does not get worse.
fn support_refit(
    op: &LiftedOperator,
    y: &DVector<f64>,
    z: &DMatrix<f64>,
) -> Option<(Vec<usize>, DMatrix<f64>)> {
    let mut rows = support_rows(op, z)?;
    let mut best = rank_one_fit(op, y, &rows, z);
    let slack = 1e-10 * y.norm_squared();
    let mut order = rows.clone();
    order.sort_by(|&a, &b| z.row(a).norm().total_cmp(&z.row(b).norm()));
    for i in order {
        if rows.len() == 1 {
            break;
        }
        let fewer: Vec<usize> = rows.iter().copied().filter(|&r| r != i).collect();
        let cand = rank_one_fit(op, y, &fewer, z);
        if cand.0 <= best.0 + slack {
            rows = fewer;
            best = cand;
        }
    }
    Some((rows, best.1))
}

/// Blind deconvolution by the lifted convex program
/// `min_Z ||y - A(Z)||^2 + alpha1 ||Z||_* + alpha2 ||Z||_{2,1}`.
///
/// Consensus ADMM with one copy of `Z` per term: the loss copy solves a
/// linear system, the nuclear copy applies singular-value thresholding, the
/// row-sparse copy applies row shrinkage. The penalty follows residual
/// balancing. The returned `Z` is the best-objective proximal copy seen.
pub fn blind_deconvolve(
    s: &ShiftOperator,
    y: &GraphSignal,
    l: usize,
    ms: Option<&SamplingSet>,
    alpha1: f64,
    alpha2: f64,
    opts: &BlindOptions,
) -> Result<BlindResult> {
    let op = LiftedOperator::new(s, l, ms)?;
    check_len(op.m.nrows(), y.len())?;
    if alpha1 < 0.0 || alpha2 < 0.0 {
        return Err(GspError::InvalidArgument(
            "penalties must be nonnegative".into(),
        ));
    }
    let n = s.n();
    let zero = DMatrix::zeros(n, l);
    let f0 = blind_objective(&op, y, alpha1, alpha2, &zero);
    let (t1, t2) = blind_null_thresholds(&op, y);
    if alpha1 >= t1 || alpha2 >= t2 {
        return Ok(BlindResult {
            z: zero,
            refit_rows: None,
            x: DVector::zeros(n),
            h: DVector::zeros(l),
            objective: f0,
            trace: vec![f0],
            iterations: 0,
            converged: true,
        });
    }

    let dim = n * l;
    let mtm2 = op.m.transpose() * &op.m * 2.0;
    let mty2 = op.m.transpose() * y * 2.0;
    let factor = |rho: f64| {
        (&mtm2 + DMatrix::identity(dim, dim) * (2.0 * rho))
            .cholesky()
            .expect("shifted Gram matrix is positive definite")
    };
    let mut rho = opts.rho;
    let mut chol = factor(rho);

    let mut z1 = zero.clone();
    let mut z2 = zero.clone();
    let mut u1 = zero.clone();
    let mut u2 = zero.clone();
    let mut best = (f0, zero.clone());
    let mut trace = vec![f0];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iters {
        iterations += 1;
        let rhs = &mty2 + DVector::from_column_slice((&z1 - &u1 + &z2 - &u2).as_slice()) * rho;
        let z = DMatrix::from_column_slice(n, l, chol.solve(&rhs).as_slice());
        let z1_old = std::mem::replace(&mut z1, svt(&(&z + &u1), alpha1 / rho));
        let z2_old = std::mem::replace(&mut z2, row_shrink(&(&z + &u2), alpha2 / rho));
        let r1 = &z - &z1;
        let r2 = &z - &z2;
        u1 += &r1;
        u2 += &r2;

        for cand in [&z1, &z2] {
            let f = blind_objective(&op, y, alpha1, alpha2, cand);
            if f < best.0 {
                best = (f, cand.clone());
            }
        }
        trace.push(best.0);

        let primal = (r1.norm_squared() + r2.norm_squared()).sqrt();
        let dual = rho * ((&z1 - &z1_old).norm_squared() + (&z2 - &z2_old).norm_squared()).sqrt();
        let scale = z.norm().max(z1.norm()).max(z2.norm());
        let eps_p = opts.abs_tol * (2.0 * dim as f64).sqrt() + opts.rel_tol * scale;
        let eps_d = opts.abs_tol * (2.0 * dim as f64).sqrt()
            + opts.rel_tol * rho * (u1.norm_squared() + u2.norm_squared()).sqrt();
        if primal <= eps_p && dual <= eps_d {
            converged = true;
            break;
        }
        if primal > 10.0 * dual {
            rho *= 2.0;
            u1 /= 2.0;
            u2 /= 2.0;
            chol = factor(rho);
        } else if dual > 10.0 * primal {
            rho /= 2.0;
            u1 *= 2.0;
            u2 *= 2.0;
            chol = factor(rho);
        }
    }
    let (objective, z) = best;
    let refit = if opts.refit {
        support_refit(&op, y, &z)
    } else {
        None
    };
    let (x, h) = match &refit {
        _ if z.norm() == 0.0 => (DVector::zeros(n), DVector::zeros(l)),
        Some((_, zr)) => rank_one_factors(zr),
        None => rank_one_factors(&z),
    };
    Ok(BlindResult {
        z,
        refit_rows: refit.map(|r| r.0),
        x,
        h,
        objective,
        trace,
        iterations,
        converged,
    })
}
