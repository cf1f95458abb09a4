//! Dense linear-algebra helpers shared by the solvers.

use nalgebra::{ComplexField, DMatrix, DVector, Dyn, Schur, SVD};
use num_complex::Complex64;

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

pub fn to_complex(m: &DMatrix<f64>) -> CMatrix {
    m.map(|v| Complex64::new(v, 0.0))
}

pub fn to_complex_vec(v: &DVector<f64>) -> CVector {
    v.map(|x| Complex64::new(x, 0.0))
}

const MAX_SWEEPS: usize = 20_000;

/// SVD with a bounded iteration count.
///
/// With a convergence tolerance of one machine epsilon nalgebra can report
/// convergence with wrong factors, so factors are always computed and checked
/// against `m`, walking a short ladder of tolerances and both orientations.
pub fn svd<T: ComplexField<RealField = f64>>(m: &DMatrix<T>, u: bool, v: bool) -> SVD<T, Dyn, Dyn> {
    let tol = 1e-10 * m.norm().max(f64::MIN_POSITIVE);
    let mut fallback = None;
    for eps in [4.0 * f64::EPSILON, 1e-14, 1e-13] {
        for flip in [false, true] {
            let attempt = if flip {
                m.adjoint()
                    .try_svd(true, true, eps, MAX_SWEEPS)
                    .map(|s| SVD {
                        u: s.v_t.map(|vt| vt.adjoint()),
                        v_t: s.u.map(|u| u.adjoint()),
                        singular_values: s.singular_values,
                    })
            } else {
                m.clone().try_svd(true, true, eps, MAX_SWEEPS)
            };
            if let Some(s) = attempt {
                if svd_residual(m, &s) <= tol {
                    return trim(s, u, v);
                }
                fallback.get_or_insert(s);
            }
        }
    }
    trim(fallback.expect("SVD failed to converge"), u, v)
}

fn svd_residual<T: ComplexField<RealField = f64>>(m: &DMatrix<T>, s: &SVD<T, Dyn, Dyn>) -> f64 {
    let (Some(u), Some(vt)) = (&s.u, &s.v_t) else {
        return f64::INFINITY;
    };
    let sig = DMatrix::from_diagonal(&s.singular_values.map(T::from_real));
    let rec = u * sig * vt;
    let ortho = (u.adjoint() * u - DMatrix::identity(u.ncols(), u.ncols())).norm()
        + (vt * vt.adjoint() - DMatrix::identity(vt.nrows(), vt.nrows())).norm();
    (rec - m).norm() + ortho * m.norm()
}

fn trim<T: ComplexField<RealField = f64>>(
    mut s: SVD<T, Dyn, Dyn>,
    u: bool,
    v: bool,
) -> SVD<T, Dyn, Dyn> {
    if !u {
        s.u = None;
    }
    if !v {
        s.v_t = None;
    }
    s
}

/// Singular values in descending order.
pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    if m.is_empty() {
        return Vec::new();
    }
    let mut s: Vec<f64> = svd(m, false, false)
        .singular_values
        .iter()
        .copied()
        .collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Singular values of a complex matrix in descending order.
pub fn singular_values_c(m: &CMatrix) -> Vec<f64> {
    if m.is_empty() {
        return Vec::new();
    }
    let mut s: Vec<f64> = svd(m, false, false)
        .singular_values
        .iter()
        .copied()
        .collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Eigenvalues of a real square matrix.
///
/// The Francis iteration can stall when many eigenvalues share a modulus
/// (permutation matrices are the classic case), so on non-convergence the
/// matrix is shifted by a multiple of the identity and the shift undone.
pub fn eigenvalues(m: &DMatrix<f64>) -> Vec<Complex64> {
    let n = m.nrows();
    if n == 0 {
        return Vec::new();
    }
    let scale = m.norm().max(1.0);
    for sig in [0.0, 0.3719, -0.6180, 1.1414, -1.7321] {
        let shifted = m + DMatrix::identity(n, n) * (sig * scale);
        if let Some(s) = Schur::try_new(shifted, f64::EPSILON, 5000) {
            return s
                .complex_eigenvalues()
                .iter()
                .map(|z| z - sig * scale)
                .collect();
        }
    }
    panic!("eigenvalue iteration failed to converge for every shift")
}

pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    singular_values(m).first().copied().unwrap_or(0.0)
}

/// Numerical rank with cutoff `rcond * sigma_max`.
pub fn rank_from_singular_values(s: &[f64], rcond: f64) -> usize {
    let smax = s.first().copied().unwrap_or(0.0);
    if smax == 0.0 {
        return 0;
    }
    s.iter().filter(|&&v| v > rcond * smax).count()
}

/// Moore-Penrose pseudoinverse via SVD, singular values below
/// `rcond * sigma_max` treated as zero. Returns the pseudoinverse and rank.
pub fn pinv_c(m: &CMatrix, rcond: f64) -> (CMatrix, usize) {
    let (rows, cols) = m.shape();
    if m.is_empty() {
        return (CMatrix::zeros(cols, rows), 0);
    }
    let svd = svd(m, true, true);
    let u = svd.u.expect("u requested");
    let vt = svd.v_t.expect("v_t requested");
    let smax = svd.singular_values.iter().fold(0.0f64, |a, &b| a.max(b));
    let mut out = CMatrix::zeros(cols, rows);
    let mut rank = 0;
    for k in 0..svd.singular_values.len() {
        let s = svd.singular_values[k];
        if smax == 0.0 || s <= rcond * smax {
            continue;
        }
        rank += 1;
        let inv = Complex64::new(1.0 / s, 0.0);
        // V[:, k] * inv * U[:, k]^H
        for i in 0..cols {
            let vik = vt[(k, i)].conj();
            for j in 0..rows {
                out[(i, j)] += vik * inv * u[(j, k)].conj();
            }
        }
    }
    (out, rank)
}

/// Minimum-norm least-squares solution of `a x = b`.
pub fn lstsq_min_norm(a: &DMatrix<f64>, b: &DVector<f64>, rcond: f64) -> (DVector<f64>, usize) {
    let (pinv, rank) = pinv_c(&to_complex(a), rcond);
    let x = pinv * to_complex_vec(b);
    (x.map(|z| z.re), rank)
}

/// Largest eigenvalue modulus of a real square matrix.
///
/// Eigenvalues of a Jordan block of size `k` are only computed to about
/// `eps^(1/k)`, so the estimate is capped by the Gelfand bound
/// `||M^p||^(1/p)` with `p >= n` a power of two. That bound is exactly zero
/// for nilpotent matrices.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    let est = eigenvalues(m).iter().fold(0.0f64, |a, z| a.max(z.norm()));
    est.min(gelfand_bound(m))
}

fn gelfand_bound(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let base = m.norm();
    if base == 0.0 {
        return 0.0;
    }
    let mut p = m / base;
    let mut log_scale = 0.0;
    let mut power = 1usize;
    while power < n {
        p = &p * &p;
        log_scale *= 2.0;
        power *= 2;
        let nrm = p.norm();
        if nrm == 0.0 {
            return 0.0;
        }
        p /= nrm;
        log_scale += nrm.ln();
    }
    base * (log_scale / power as f64).exp()
}

pub fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// Symmetric square root of a symmetric positive-semidefinite matrix
/// (negative eigenvalues clipped to zero).
pub fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let d = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&d) * eig.eigenvectors.transpose()
}

/// Orthonormal basis (as columns) for the orthogonal complement of the
/// orthonormal columns of `q`, built by Gram-Schmidt on the canonical basis.
pub fn orthonormal_complement(q: &DMatrix<f64>) -> DMatrix<f64> {
    let n = q.nrows();
    let want = n - q.ncols();
    let mut cols: Vec<DVector<f64>> = q.column_iter().map(|c| c.into_owned()).collect();
    let mut out = Vec::with_capacity(want);
    for k in 0..n {
        if out.len() == want {
            break;
        }
        let mut v = DVector::zeros(n);
        v[k] = 1.0;
        for _ in 0..2 {
            for c in &cols {
                let p = c.dot(&v);
                v.axpy(-p, c, 1.0);
            }
        }
        let nv = v.norm();
        if nv > 1e-8 {
            v /= nv;
            cols.push(v.clone());
            out.push(v);
        }
    }
    DMatrix::from_columns(&out)
}

/// Q factor of a thin QR with the diagonal of R made non-negative, so the
/// retraction is continuous and deterministic.
pub fn qf(m: &DMatrix<f64>) -> DMatrix<f64> {
    let qr = m.clone().qr();
    let r = qr.r();
    let mut q = qr.q();
    for k in 0..q.ncols().min(r.nrows()) {
        if r[(k, k)] < 0.0 {
            let mut col = q.column_mut(k);
            col *= -1.0;
        }
    }
    q
}
