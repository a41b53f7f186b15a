//! Python bindings. Heavy calls release the GIL; errors surface as
//! `ValueError` with the library's message.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use skfluct::bounds::{self, Regime};
use skfluct::coupled;
use skfluct::estimators::{self, DifferenceScheme, DisorderAverage, PairedComparison};
use skfluct::{InterpolationPoint, McPlan, QuadratureRule, SeedSpec, StreamTag};

fn err(e: skfluct::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn tag(name: &str) -> PyResult<StreamTag> {
    match name {
        "shared" => Ok(StreamTag::Shared),
        "prime" => Ok(StreamTag::Prime),
        "double_prime" => Ok(StreamTag::DoublePrime),
        other => Err(PyValueError::new_err(format!(
            "unknown stream tag {other:?}; expected shared, prime or double_prime"
        ))),
    }
}

fn rows(flat: &[f64], n: usize) -> Vec<Vec<f64>> {
    flat.chunks(n.max(1)).map(<[f64]>::to_vec).collect()
}

/// One Gaussian coupling matrix `g`.
#[pyclass(name = "Disorder", module = "skfluct_py", frozen)]
struct PyDisorder {
    inner: skfluct::DisorderRealization,
}

#[pymethods]
impl PyDisorder {
    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    /// `g` as a list of rows.
    fn matrix(&self) -> Vec<Vec<f64>> {
        rows(self.inner.couplings(), self.inner.n())
    }

    fn get(&self, i: usize, j: usize) -> PyResult<f64> {
        let n = self.inner.n();
        if i >= n || j >= n {
            return Err(PyValueError::new_err(format!(
                "index ({i}, {j}) out of range for n={n}"
            )));
        }
        Ok(self.inner.get(i, j))
    }

    /// `(master_seed, replica_index, stream_tag_code)`.
    #[getter]
    fn seed(&self) -> (u64, u64, u64) {
        let s = self.inner.seed();
        (s.master_seed, s.replica_index, s.stream_tag.code())
    }

    /// `H(s)` for a spin list of +-1 values.
    fn energy(&self, spins: Vec<i8>) -> PyResult<f64> {
        let c = skfluct::effective_couplings(&self.inner);
        let s = skfluct::SpinConfiguration::from_spins(&spins).map_err(err)?;
        skfluct::hamiltonian(&c, &s).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!("Disorder(n={}, seed={})", self.inner.n(), self.inner.seed())
    }
}

/// Shared disorder plus the two private ones of the interpolated pair.
#[pyclass(name = "CoupledDisorder", module = "skfluct_py", frozen)]
struct PyCoupled {
    inner: skfluct::CoupledDisorder,
}

#[pymethods]
impl PyCoupled {
    #[new]
    #[pyo3(signature = (n, master_seed, replica_index = 0))]
    fn new(n: usize, master_seed: u64, replica_index: u64) -> PyResult<Self> {
        Ok(Self {
            inner: skfluct::CoupledDisorder::sample(n, master_seed, replica_index).map_err(err)?,
        })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    fn __repr__(&self) -> String {
        format!("CoupledDisorder(n={}, seed={})", self.inner.n(), self.inner.g().seed())
    }
}

#[pyfunction]
#[pyo3(signature = (n, master_seed, replica_index = 0, stream = "shared"))]
fn sample_disorder(n: usize, master_seed: u64, replica_index: u64, stream: &str) -> PyResult<PyDisorder> {
    let seed = SeedSpec::new(master_seed, replica_index, tag(stream)?);
    Ok(PyDisorder {
        inner: skfluct::sample_disorder(n, seed).map_err(err)?,
    })
}

/// Exact Gibbs summary: `log_z`, `mean_energy` and the correlation matrix.
#[pyfunction]
fn gibbs_enumerate<'py>(py: Python<'py>, disorder: &PyDisorder, beta: f64) -> PyResult<Bound<'py, PyDict>> {
    let c = skfluct::effective_couplings(&disorder.inner);
    let s = py.detach(|| skfluct::gibbs_enumerate(&c, beta)).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("n", s.n)?;
    d.set_item("beta", s.beta)?;
    d.set_item("log_z", s.log_z)?;
    d.set_item("mean_energy", s.mean_energy)?;
    d.set_item("corr", rows(&s.corr, s.n))?;
    Ok(d)
}

#[pyfunction]
fn log_partition(py: Python<'_>, disorder: &PyDisorder, beta: f64) -> PyResult<f64> {
    let c = skfluct::effective_couplings(&disorder.inner);
    py.detach(|| skfluct::log_partition(&c, beta)).map_err(err)
}

#[pyfunction]
fn overlap(sigma: Vec<i8>, rho: Vec<i8>) -> PyResult<f64> {
    let s = skfluct::SpinConfiguration::from_spins(&sigma).map_err(err)?;
    let r = skfluct::SpinConfiguration::from_spins(&rho).map_err(err)?;
    skfluct::overlap(&s, &r).map_err(err)
}

/// Exact summary of the coupled pair measure at `(beta, t, lam)`.
#[pyfunction]
fn coupled_enumerate<'py>(
    py: Python<'py>,
    cd: &PyCoupled,
    beta: f64,
    t: f64,
    lam: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let p = InterpolationPoint::new(beta, t, lam).map_err(err)?;
    let s = py.detach(|| skfluct::coupled_enumerate(&cd.inner, p)).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("phi_hat", s.phi_hat)?;
    d.set_item("r2", s.r2)?;
    d.set_item("r2_cross", s.r2_cross)?;
    d.set_item("corr_sigma", rows(&s.corr_sigma, s.n))?;
    d.set_item("corr_rho", rows(&s.corr_rho, s.n))?;
    Ok(d)
}

#[pyfunction]
fn factorized_r2(py: Python<'_>, cd: &PyCoupled, beta: f64, t: f64) -> PyResult<f64> {
    py.detach(|| skfluct::factorized_r2(&cd.inner, beta, t)).map_err(err)
}

#[pyfunction]
fn overlap_mgf(py: Python<'_>, cd: &PyCoupled, beta: f64, x: f64) -> PyResult<f64> {
    py.detach(|| coupled::overlap_mgf(&cd.inner, beta, x)).map_err(err)
}

#[pyfunction]
fn beta_critical() -> f64 {
    bounds::beta_critical()
}

#[pyfunction]
fn lemma_bound(n: usize, beta: f64, t: f64) -> PyResult<f64> {
    bounds::lemma_bound(n, beta, t).map_err(err)
}

#[pyfunction]
fn rademacher_mgf_exact(n: usize, x: f64) -> PyResult<f64> {
    bounds::rademacher_mgf_exact(n, x).map_err(err)
}

#[pyfunction]
fn mgf_bound(x: f64) -> PyResult<f64> {
    bounds::mgf_bound(x).map_err(err)
}

#[pyfunction]
fn integral_split_closed_form(n: usize, beta: f64, delta: f64) -> PyResult<f64> {
    bounds::integral_split_closed_form(n, beta, delta).map_err(err)
}

/// `c((log n)^2 + 1)`, or `c((log n)^2 + n^(1 - alpha))` when `alpha` is given.
#[pyfunction]
#[pyo3(signature = (n, c = 1.0, alpha = None, d = 1.0))]
fn theorem_envelope(n: f64, c: f64, alpha: Option<f64>, d: f64) -> f64 {
    let regime = alpha.map_or(Regime::Critical, |alpha| Regime::Near { alpha, d });
    bounds::theorem_envelope(n, regime, c)
}

#[pyfunction]
fn near_critical_beta(n: usize, alpha: f64, d: f64) -> f64 {
    bounds::near_critical_beta(n, alpha, d)
}

fn plan(n: usize, samples: usize, seed: u64, threads: usize) -> McPlan {
    McPlan::new(n, samples, seed).with_threads(threads)
}

fn average<'py>(py: Python<'py>, a: &DisorderAverage) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("mean", a.mean)?;
    d.set_item("variance", a.variance)?;
    d.set_item("stderr_mean", a.stderr_mean)?;
    d.set_item("stderr_variance", a.stderr_variance)?;
    d.set_item("k", a.k)?;
    Ok(d)
}

fn paired<'py>(py: Python<'py>, c: &PairedComparison) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("lhs", average(py, &c.lhs)?)?;
    d.set_item("rhs", average(py, &c.rhs)?)?;
    d.set_item("difference", c.difference.mean)?;
    d.set_item("difference_stderr", c.difference.stderr)?;
    Ok(d)
}

/// Disorder statistics of `F_N(beta)`; `variance` estimates `Var F_N`.
#[pyfunction]
#[pyo3(signature = (n, samples, seed, beta, threads = 0))]
fn variance_direct<'py>(
    py: Python<'py>,
    n: usize,
    samples: usize,
    seed: u64,
    beta: f64,
    threads: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let a = py
        .detach(|| estimators::variance_direct(&plan(n, samples, seed, threads), beta))
        .map_err(err)?;
    average(py, &a)
}

/// Direct variance against the overlap-integral identity on shared realizations.
#[pyfunction]
#[pyo3(signature = (n, samples, seed, beta, nodes = 16, threads = 0))]
fn identity_check<'py>(
    py: Python<'py>,
    n: usize,
    samples: usize,
    seed: u64,
    beta: f64,
    nodes: usize,
    threads: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let c = py
        .detach(|| {
            let rule = QuadratureRule::gauss_legendre(nodes)?;
            estimators::identity_check(&plan(n, samples, seed, threads), beta, &rule)
        })
        .map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("direct", c.direct.variance)?;
    d.set_item("identity", c.identity.value)?;
    d.set_item("difference", c.difference)?;
    d.set_item("combined_stderr", c.combined_stderr)?;
    d.set_item("satisfied", c.satisfied())?;
    Ok(d)
}

#[pyfunction]
#[pyo3(signature = (n, samples, seed, beta, t, threads = 0))]
fn lemma_check<'py>(
    py: Python<'py>,
    n: usize,
    samples: usize,
    seed: u64,
    beta: f64,
    t: f64,
    threads: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let (_, r) = py
        .detach(|| estimators::lemma_check(&plan(n, samples, seed, threads), beta, t))
        .map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("estimate", r.value_estimated)?;
    d.set_item("bound", r.value_bound)?;
    d.set_item("stderr", r.stderr)?;
    d.set_item("satisfied", r.satisfied)?;
    Ok(d)
}

#[pyfunction]
#[pyo3(signature = (n, samples, seed, x, beta = None, threads = 0))]
fn annealed_overlap_mgf<'py>(
    py: Python<'py>,
    n: usize,
    samples: usize,
    seed: u64,
    x: f64,
    beta: Option<f64>,
    threads: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let beta = beta.unwrap_or_else(bounds::beta_critical);
    let a = py
        .detach(|| estimators::annealed_overlap_mgf(&plan(n, samples, seed, threads), beta, x))
        .map_err(err)?;
    average(py, &a)
}

#[pyfunction]
#[pyo3(signature = (n, samples, seed, beta, t, lam, threads = 0))]
#[allow(clippy::too_many_arguments)]
fn interpolation_check<'py>(
    py: Python<'py>,
    n: usize,
    samples: usize,
    seed: u64,
    beta: f64,
    t: f64,
    lam: f64,
    threads: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let c = py
        .detach(|| estimators::interpolation_check(&plan(n, samples, seed, threads), beta, t, lam))
        .map_err(err)?;
    paired(py, &c)
}

#[pyfunction]
#[pyo3(signature = (n, samples, seed, beta, t, lam, h = 1e-4, threads = 0))]
#[allow(clippy::too_many_arguments)]
fn derivative_check<'py>(
    py: Python<'py>,
    n: usize,
    samples: usize,
    seed: u64,
    beta: f64,
    t: f64,
    lam: f64,
    h: f64,
    threads: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let c = py
        .detach(|| {
            let p = InterpolationPoint::new(beta, t, lam)?;
            estimators::derivative_check(&plan(n, samples, seed, threads), p, h, DifferenceScheme::Central)
        })
        .map_err(err)?;
    paired(py, &c)
}

/// `E<R^2>_{t,0}` along `t_grid`, with paired step errors.
#[pyfunction]
#[pyo3(signature = (n, samples, seed, beta, t_grid, threads = 0))]
fn monotonicity_scan<'py>(
    py: Python<'py>,
    n: usize,
    samples: usize,
    seed: u64,
    beta: f64,
    t_grid: Vec<f64>,
    threads: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let s = py
        .detach(|| estimators::monotonicity_scan(&plan(n, samples, seed, threads), beta, &t_grid))
        .map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("t", s.t_grid.clone())?;
    d.set_item("means", s.values.iter().map(|v| v.mean).collect::<Vec<_>>())?;
    d.set_item("steps", s.steps.iter().map(|v| (v.mean, v.stderr)).collect::<Vec<_>>())?;
    d.set_item("satisfied", s.satisfied())?;
    Ok(d)
}

#[pymodule]
fn skfluct_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDisorder>()?;
    m.add_class::<PyCoupled>()?;
    m.add_function(wrap_pyfunction!(sample_disorder, m)?)?;
    m.add_function(wrap_pyfunction!(gibbs_enumerate, m)?)?;
    m.add_function(wrap_pyfunction!(log_partition, m)?)?;
    m.add_function(wrap_pyfunction!(overlap, m)?)?;
    m.add_function(wrap_pyfunction!(coupled_enumerate, m)?)?;
    m.add_function(wrap_pyfunction!(factorized_r2, m)?)?;
    m.add_function(wrap_pyfunction!(overlap_mgf, m)?)?;
    m.add_function(wrap_pyfunction!(beta_critical, m)?)?;
    m.add_function(wrap_pyfunction!(lemma_bound, m)?)?;
    m.add_function(wrap_pyfunction!(rademacher_mgf_exact, m)?)?;
    m.add_function(wrap_pyfunction!(mgf_bound, m)?)?;
    m.add_function(wrap_pyfunction!(integral_split_closed_form, m)?)?;
    m.add_function(wrap_pyfunction!(theorem_envelope, m)?)?;
    m.add_function(wrap_pyfunction!(near_critical_beta, m)?)?;
    m.add_function(wrap_pyfunction!(variance_direct, m)?)?;
    m.add_function(wrap_pyfunction!(identity_check, m)?)?;
    m.add_function(wrap_pyfunction!(lemma_check, m)?)?;
    m.add_function(wrap_pyfunction!(annealed_overlap_mgf, m)?)?;
    m.add_function(wrap_pyfunction!(interpolation_check, m)?)?;
    m.add_function(wrap_pyfunction!(derivative_check, m)?)?;
    m.add_function(wrap_pyfunction!(monotonicity_scan, m)?)?;
    Ok(())
}
