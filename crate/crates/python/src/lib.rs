//! Python module `dgsp`. Signals are lists of floats and matrices are
//! lists of rows.

use dgsp::filters::{apply_polynomial, ideal_lowpass, FilterTaps};
use dgsp::gnn::{self, Activation, GnnModel, LabeledSet, TrainOptions};
use dgsp::graph::{adjacency_shift, directed_cycle, Digraph};
use dgsp::inverse::{self, BlindOptions, DeconProblem, LassoOptions};
use dgsp::sampling::{self, BandlimitedModel, SamplingSet};
use dgsp::spectral::{self, DgftOptions, EigenBasis, OrthoBasis};
use dgsp::stationary::{self, FitOptions, InputLaw, StationaryModel};
use dgsp::synth;
use dgsp::topoid::{self, CdOptions, TimeSeries};
use dgsp::{Complex64, DMatrix, DVector, GspError, ShiftOperator};
use pyo3::create_exception;
use pyo3::exceptions::{PyArithmeticError, PyIOError, PyValueError};
use pyo3::prelude::*;

create_exception!(
    dgsp,
    NumericalError,
    PyArithmeticError,
    "A numerical routine could not produce a result."
);

fn py_err(e: GspError) -> PyErr {
    if e.is_numerical() {
        NumericalError::new_err(e.to_string())
    } else if matches!(e, GspError::Io { .. }) {
        PyIOError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

trait IntoPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> IntoPy<T> for dgsp::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(py_err)
    }
}

fn vec(x: Vec<f64>) -> DVector<f64> {
    DVector::from_vec(x)
}

fn list(x: &DVector<f64>) -> Vec<f64> {
    x.iter().copied().collect()
}

fn matrix(rows: &[Vec<f64>]) -> PyResult<DMatrix<f64>> {
    let c = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != c) {
        return Err(PyValueError::new_err("matrix rows must have equal length"));
    }
    Ok(DMatrix::from_fn(rows.len(), c, |i, j| rows[i][j]))
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    topoid::matrix_to_rows(m)
}

/// Graph-shift operator; `S[i][j] != 0` means an edge `j -> i`.
#[pyclass(name = "Shift", module = "dgsp", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyShift {
    inner: ShiftOperator,
}

#[pymethods]
impl PyShift {
    #[new]
    fn new(dense: Vec<Vec<f64>>) -> PyResult<Self> {
        Ok(PyShift {
            inner: ShiftOperator::from_dense(matrix(&dense)?).py()?,
        })
    }

    #[staticmethod]
    fn directed_cycle(n: usize) -> PyResult<Self> {
        Ok(PyShift {
            inner: adjacency_shift(&directed_cycle(n).py()?),
        })
    }

    #[staticmethod]
    fn directed_er(n: usize, p: f64, seed: u64) -> PyResult<Self> {
        Ok(PyShift {
            inner: adjacency_shift(&synth::directed_er(n, p, seed).py()?),
        })
    }

    #[staticmethod]
    fn south_north_grid(rows: usize, cols: usize) -> PyResult<Self> {
        Ok(PyShift {
            inner: adjacency_shift(&synth::south_north_grid(rows, cols).py()?),
        })
    }

    #[staticmethod]
    fn chorded_cycle(n: usize, chords: usize, seed: u64) -> PyResult<Self> {
        Ok(PyShift {
            inner: adjacency_shift(&synth::chorded_cycle(n, chords, seed).py()?),
        })
    }

    /// Matrix Market coordinate file.
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(PyShift {
            inner: dgsp::io::load_shift(path).py()?,
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        dgsp::io::save_shift(path, &self.inner).py()
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    fn to_dense(&self) -> Vec<Vec<f64>> {
        rows(&self.inner.to_dense())
    }

    fn apply(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        if x.len() != self.inner.n() {
            return Err(PyValueError::new_err(format!(
                "signal has {} entries, graph has {} nodes",
                x.len(),
                self.inner.n()
            )));
        }
        Ok(list(&self.inner.apply(&vec(x))))
    }

    /// Unweighted adjacency of the graph with every edge made two-way.
    fn symmetrized(&self) -> Self {
        PyShift {
            inner: adjacency_shift(&Digraph::from_shift(&self.inner).symmetrized()),
        }
    }

    fn spectral_radius(&self) -> f64 {
        spectral::spectral_radius(&self.inner)
    }

    fn __repr__(&self) -> String {
        format!(
            "Shift(n={}, nnz={})",
            self.inner.n(),
            self.inner.triplets().len()
        )
    }
}

#[pyclass(name = "EigenBasis", module = "dgsp", frozen)]
pub struct PyEigenBasis {
    inner: EigenBasis,
}

#[pymethods]
impl PyEigenBasis {
    #[getter]
    fn eigenvalues(&self) -> Vec<Complex64> {
        self.inner.lambda.clone()
    }

    #[getter]
    fn condition(&self) -> f64 {
        self.inner.vcond
    }

    #[getter]
    fn variation(&self) -> Vec<f64> {
        self.inner.variation.clone()
    }

    fn gft(&self, x: Vec<f64>) -> PyResult<Vec<Complex64>> {
        Ok(spectral::gft(&self.inner, &vec(x))
            .py()?
            .iter()
            .copied()
            .collect())
    }

    fn igft(&self, xt: Vec<Complex64>) -> PyResult<Vec<Complex64>> {
        Ok(spectral::igft(&self.inner, &DVector::from_vec(xt))
            .py()?
            .iter()
            .copied()
            .collect())
    }
}

#[pyfunction]
fn eigen_gft(shift: &PyShift) -> PyResult<PyEigenBasis> {
    Ok(PyEigenBasis {
        inner: spectral::eigen_gft_basis(&shift.inner).py()?,
    })
}

#[pyclass(name = "OrthoBasis", module = "dgsp", frozen)]
pub struct PyOrthoBasis {
    inner: OrthoBasis,
}

#[pymethods]
impl PyOrthoBasis {
    /// Columns are the basis vectors.
    #[getter]
    fn u(&self) -> Vec<Vec<f64>> {
        rows(&self.inner.u)
    }

    #[getter]
    fn frequencies(&self) -> Vec<f64> {
        self.inner.frequencies.clone()
    }

    #[getter]
    fn objective(&self) -> f64 {
        self.inner.objective
    }

    #[getter]
    fn converged(&self) -> bool {
        self.inner.converged
    }

    #[getter]
    fn trace(&self) -> Vec<f64> {
        self.inner.trace.clone()
    }

    fn analyze(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok(list(&self.inner.analyze(&vec(x)).py()?))
    }

    fn synthesize(&self, c: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok(list(&self.inner.synthesize(&vec(c)).py()?))
    }

    /// Projection onto the first `k` basis vectors.
    fn lowpass(&self, k: usize, y: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok(list(&ideal_lowpass(&self.inner, k, &vec(y)).py()?))
    }
}

#[pyfunction]
#[pyo3(signature = (shift, seed, max_iters = 5000, restarts = 20, tol = 1e-8))]
fn learn_dgft(
    shift: &PyShift,
    seed: u64,
    max_iters: usize,
    restarts: usize,
    tol: f64,
) -> PyResult<PyOrthoBasis> {
    let opts = DgftOptions {
        max_iters,
        tol,
        seed,
        restarts,
        step: None,
    };
    Ok(PyOrthoBasis {
        inner: spectral::learn_dgft(&shift.inner, &opts).py()?,
    })
}

/// Polynomial graph filter `H = sum_l h[l] S^l`.
#[pyclass(name = "Filter", module = "dgsp", frozen)]
pub struct PyFilter {
    inner: FilterTaps,
}

#[pymethods]
impl PyFilter {
    #[new]
    fn new(taps: Vec<f64>) -> PyResult<Self> {
        Ok(PyFilter {
            inner: FilterTaps::new(taps).py()?,
        })
    }

    #[getter]
    fn taps(&self) -> Vec<f64> {
        self.inner.h().to_vec()
    }

    fn apply(&self, shift: &PyShift, x: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok(list(
            &apply_polynomial(&shift.inner, &self.inner, &vec(x)).py()?,
        ))
    }

    fn response(&self, z: Complex64) -> Complex64 {
        self.inner.response_at(z)
    }

    fn matrix(&self, shift: &PyShift) -> Vec<Vec<f64>> {
        rows(&self.inner.matrix(&shift.inner))
    }
}

/// Signals spanned by the first `k` vectors of a basis.
#[pyclass(name = "Bandlimited", module = "dgsp", frozen)]
pub struct PyBandlimited {
    inner: BandlimitedModel,
}

impl PyBandlimited {
    fn set(&self, nodes: Vec<usize>) -> PyResult<SamplingSet> {
        SamplingSet::new(nodes, self.inner.n()).py()
    }
}

#[pymethods]
impl PyBandlimited {
    #[staticmethod]
    fn from_dgft(basis: &PyOrthoBasis, k: usize) -> PyResult<Self> {
        Ok(PyBandlimited {
            inner: BandlimitedModel::from_ortho(&basis.inner, k).py()?,
        })
    }

    #[staticmethod]
    fn from_eigen(basis: &PyEigenBasis, k: usize) -> PyResult<Self> {
        Ok(PyBandlimited {
            inner: BandlimitedModel::from_eigen(&basis.inner, k).py()?,
        })
    }

    /// Greedy sampling set of size `m`.
    fn greedy(&self, m: usize) -> PyResult<Vec<usize>> {
        Ok(sampling::greedy_select(&self.inner, m)
            .py()?
            .indices()
            .to_vec())
    }

    /// `(rank, sigma_min)` of the sampled basis rows.
    fn recoverability(&self, nodes: Vec<usize>) -> PyResult<(usize, f64)> {
        let r = sampling::recoverability(&self.inner, &self.set(nodes)?).py()?;
        Ok((r.rank, r.sigma_min))
    }

    fn reconstruct(&self, nodes: Vec<usize>, values: Vec<f64>) -> PyResult<Vec<f64>> {
        let (x, _) = sampling::reconstruct(&self.inner, &self.set(nodes)?, &vec(values)).py()?;
        Ok(list(&x))
    }
}

/// Sparse input behind `y = H x`; returns `(x, objective)`.
#[pyfunction]
#[pyo3(signature = (shift, taps, y, alpha, observed = None))]
fn deconvolve(
    shift: &PyShift,
    taps: Vec<f64>,
    y: Vec<f64>,
    alpha: f64,
    observed: Option<Vec<usize>>,
) -> PyResult<(Vec<f64>, f64)> {
    let ms = observed
        .map(|o| SamplingSet::new(o, shift.inner.n()))
        .transpose()
        .py()?;
    let p = DeconProblem {
        s: shift.inner.clone(),
        taps: FilterTaps::new(taps).py()?,
        ms,
        ybar: vec(y),
        alpha,
    };
    let r = inverse::deconvolve_sparse(&p, &LassoOptions::default()).py()?;
    Ok((list(&r.x), r.objective))
}

/// Sparse input and unknown `l` taps from `y`; returns `(x, h, objective)`.
#[pyfunction]
fn blind_deconvolve(
    shift: &PyShift,
    y: Vec<f64>,
    l: usize,
    alpha1: f64,
    alpha2: f64,
) -> PyResult<(Vec<f64>, Vec<f64>, f64)> {
    let r = inverse::blind_deconvolve(
        &shift.inner,
        &vec(y),
        l,
        None,
        alpha1,
        alpha2,
        &BlindOptions::default(),
    )
    .py()?;
    Ok((list(&r.x), list(&r.h), r.objective))
}

fn law(kind: &str, p: f64) -> PyResult<InputLaw> {
    match kind {
        "gaussian" => Ok(InputLaw::Gaussian),
        "signed-bernoulli" => Ok(InputLaw::SignedBernoulli { p }),
        other => Err(PyValueError::new_err(format!(
            "unknown input law {other:?}"
        ))),
    }
}

/// `r` samples of `H w`, one per column.
#[pyfunction]
#[pyo3(signature = (shift, taps, r, seed, law = "gaussian", p = 0.5))]
fn generate_stationary(
    shift: &PyShift,
    taps: Vec<f64>,
    r: usize,
    seed: u64,
    law: &str,
    p: f64,
) -> PyResult<Vec<Vec<f64>>> {
    let m = StationaryModel::new(
        shift.inner.clone(),
        FilterTaps::new(taps).py()?,
        self::law(law, p)?,
    )
    .py()?;
    Ok(rows(&stationary::generate(&m, r, seed).py()?))
}

#[pyfunction]
#[pyo3(signature = (samples, subtract_mean = false))]
fn estimate_covariance(samples: Vec<Vec<f64>>, subtract_mean: bool) -> PyResult<Vec<Vec<f64>>> {
    Ok(rows(
        &stationary::estimate_covariance(&matrix(&samples)?, subtract_mean).c,
    ))
}

/// Taps of length `l` with `H H^T` closest to `cov`; returns `(h, residual)`.
#[pyfunction]
#[pyo3(signature = (cov, shift, l, seed = 0))]
fn fit_taps(cov: Vec<Vec<f64>>, shift: &PyShift, l: usize, seed: u64) -> PyResult<(Vec<f64>, f64)> {
    let r = stationary::fit_taps_from_covariance(
        &matrix(&cov)?,
        &shift.inner,
        l,
        &FitOptions {
            seed,
            ..Default::default()
        },
    )
    .py()?;
    Ok((r.h, r.residual))
}

/// SEM network estimate from observations and inputs, both nodes by steps.
#[pyfunction]
fn infer_sem(x: Vec<Vec<f64>>, u: Vec<Vec<f64>>, alpha: f64) -> PyResult<Vec<Vec<f64>>> {
    let ts = TimeSeries::new(matrix(&x)?, Some(matrix(&u)?)).py()?;
    Ok(topoid::infer_sem(&ts, alpha, &CdOptions::default()).py()?.s)
}

/// Lag matrices of the sparse VAR estimate.
#[pyfunction]
fn infer_svarm(x: Vec<Vec<f64>>, lags: usize, alpha: f64) -> PyResult<Vec<Vec<Vec<f64>>>> {
    let ts = TimeSeries::new(matrix(&x)?, None).py()?;
    Ok(topoid::infer_svarm(&ts, lags, alpha, &CdOptions::default())
        .py()?
        .smats)
}

/// `(x, u)` from `x_t = S x_t + diag(omega) u_t + e_t`.
#[pyfunction]
fn simulate_sem(
    s: Vec<Vec<f64>>,
    omega: Vec<f64>,
    steps: usize,
    noise: f64,
    seed: u64,
) -> PyResult<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let ts = topoid::simulate_sem(&matrix(&s)?, &omega, steps, noise, seed).py()?;
    Ok((rows(&ts.x), ts.u.as_ref().map(rows).unwrap_or_default()))
}

#[pyfunction]
fn support_f1(estimate: Vec<Vec<f64>>, truth: Vec<Vec<f64>>, tol: f64) -> PyResult<f64> {
    let e = topoid::edge_set(&matrix(&estimate)?, tol);
    let t = topoid::edge_set(&matrix(&truth)?, 0.0);
    Ok(topoid::support_f1(&e, &t))
}

fn activation(name: &str) -> PyResult<Activation> {
    match name {
        "relu" => Ok(Activation::Relu),
        "median" => Ok(Activation::Median),
        "identity" => Ok(Activation::Identity),
        other => Err(PyValueError::new_err(format!(
            "unknown activation {other:?}"
        ))),
    }
}

/// Graph neural network of polynomial-filter layers and a linear readout.
#[pyclass(name = "Gnn", module = "dgsp")]
pub struct PyGnn {
    inner: GnnModel,
}

#[pymethods]
impl PyGnn {
    #[new]
    #[pyo3(signature = (shift, activations, taps, classes, seed))]
    fn new(
        shift: &PyShift,
        activations: Vec<String>,
        taps: usize,
        classes: usize,
        seed: u64,
    ) -> PyResult<Self> {
        let acts = activations
            .iter()
            .map(|a| activation(a))
            .collect::<PyResult<Vec<_>>>()?;
        Ok(PyGnn {
            inner: GnnModel::init(shift.inner.clone(), &acts, taps, classes, seed).py()?,
        })
    }

    #[staticmethod]
    fn from_json(shift: &PyShift, json: &str) -> PyResult<Self> {
        Ok(PyGnn {
            inner: GnnModel::from_json(shift.inner.clone(), json).py()?,
        })
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().py()
    }

    fn scores(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok(list(&gnn::forward(&self.inner, &vec(x)).py()?.scores))
    }

    fn predict(&self, x: Vec<f64>) -> PyResult<usize> {
        gnn::predict(&self.inner, &vec(x)).py()
    }

    fn accuracy(&self, signals: Vec<Vec<f64>>, labels: Vec<usize>) -> PyResult<f64> {
        let data = LabeledSet::new(signals.into_iter().map(vec).collect(), labels).py()?;
        gnn::accuracy(&self.inner, &data).py()
    }

    /// Minibatch gradient descent in place; returns the loss curve.
    #[pyo3(signature = (signals, labels, epochs = 200, lr = 0.05, batch = 16, seed = 0))]
    fn train(
        &mut self,
        signals: Vec<Vec<f64>>,
        labels: Vec<usize>,
        epochs: usize,
        lr: f64,
        batch: usize,
        seed: u64,
    ) -> PyResult<Vec<f64>> {
        let data = LabeledSet::new(signals.into_iter().map(vec).collect(), labels).py()?;
        let rep = gnn::train(
            &self.inner,
            &data,
            None,
            &TrainOptions {
                epochs,
                lr,
                batch,
                seed,
            },
        )
        .py()?;
        self.inner = rep.model;
        Ok(rep.loss_curve)
    }
}

/// `(signals, labels)` of diffused deltas from two sources.
#[pyfunction]
fn source_localization(
    shift: &PyShift,
    sources: [usize; 2],
    count: usize,
    max_steps: usize,
    noise: f64,
    seed: u64,
) -> PyResult<(Vec<Vec<f64>>, Vec<usize>)> {
    let d = synth::source_localization(
        Digraph::from_shift(&shift.inner),
        sources,
        count,
        max_steps,
        noise,
        seed,
    )
    .py()?;
    Ok((d.signals, d.labels))
}

#[pymodule]
#[pyo3(name = "dgsp")]
fn dgsp_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("NumericalError", m.py().get_type::<NumericalError>())?;
    m.add_class::<PyShift>()?;
    m.add_class::<PyEigenBasis>()?;
    m.add_class::<PyOrthoBasis>()?;
    m.add_class::<PyFilter>()?;
    m.add_class::<PyBandlimited>()?;
    m.add_class::<PyGnn>()?;
    m.add_function(wrap_pyfunction!(eigen_gft, m)?)?;
    m.add_function(wrap_pyfunction!(learn_dgft, m)?)?;
    m.add_function(wrap_pyfunction!(deconvolve, m)?)?;
    m.add_function(wrap_pyfunction!(blind_deconvolve, m)?)?;
    m.add_function(wrap_pyfunction!(generate_stationary, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_covariance, m)?)?;
    m.add_function(wrap_pyfunction!(fit_taps, m)?)?;
    m.add_function(wrap_pyfunction!(infer_sem, m)?)?;
    m.add_function(wrap_pyfunction!(infer_svarm, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_sem, m)?)?;
    m.add_function(wrap_pyfunction!(support_f1, m)?)?;
    m.add_function(wrap_pyfunction!(source_localization, m)?)?;
    Ok(())
}
