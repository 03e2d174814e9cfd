//! Python bindings for `lqteam`.
//!
//! Matrices cross the boundary as lists of rows, vectors as lists, and every
//! random computation takes an integer seed.

#![allow(clippy::too_many_arguments)]

use lqteam::bounds::{self, BoundConstants};
use lqteam::diagnostics;
use lqteam::io::{instance_from_text, instance_to_text};
use lqteam::pbp::{self, CellForm, PbpConfig};
use lqteam::rng::stream;
use lqteam::team::{self, matrix_to_rows};
use lqteam::{EstimateWithError, Error, LinearPolicy, NoiseFamily, NoiseModel, Policy, ZeroPolicy};
use pyo3::exceptions::{PyArithmeticError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn to_py(e: Error) -> PyErr {
    if e.is_numeric() {
        PyArithmeticError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

trait OrPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> OrPy<T> for lqteam::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(to_py)
    }
}

fn noise_model(family: &str, n: usize) -> PyResult<NoiseModel> {
    NoiseModel::new(family.parse::<NoiseFamily>().py()?, n).py()
}

fn estimate<'py>(py: Python<'py>, e: &EstimateWithError) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("value", e.value)?;
    d.set_item("stderr", e.stderr)?;
    d.set_item("samples", e.samples)?;
    Ok(d)
}

/// Static LQ team: `obs_dims` per player, cost matrix `Q` (m × m, SPD) and
/// mixing matrix `W` (ℓ × ℓ).
#[pyclass(name = "TeamSpec", module = "lqteam_py", frozen)]
struct PyTeamSpec {
    inner: team::TeamSpec,
}

#[pymethods]
impl PyTeamSpec {
    #[new]
    #[pyo3(signature = (obs_dims, q, w))]
    fn new(obs_dims: Vec<usize>, q: Vec<Vec<f64>>, w: Vec<Vec<f64>>) -> PyResult<Self> {
        Ok(Self { inner: team::TeamSpec::from_rows(obs_dims, &q, &w).py()? })
    }

    #[getter]
    fn m(&self) -> usize {
        self.inner.m()
    }

    #[getter]
    fn ell(&self) -> usize {
        self.inner.ell()
    }

    #[getter]
    fn obs_dims(&self) -> Vec<usize> {
        self.inner.obs_dims().to_vec()
    }

    #[getter(Q)]
    fn q(&self) -> Vec<Vec<f64>> {
        matrix_to_rows(self.inner.q())
    }

    #[getter(W)]
    fn w(&self) -> Vec<Vec<f64>> {
        matrix_to_rows(self.inner.w())
    }

    /// `(rank, smallest positive singular value)` of `W`.
    fn w_rank(&self) -> (usize, f64) {
        self.inner.w_rank()
    }

    fn expected_q(&self) -> f64 {
        self.inner.expected_q()
    }

    /// Gains of the best linear policy, one list per player.
    fn solve_linear(&self) -> PyResult<Vec<Vec<f64>>> {
        Ok(team::solve_linear(&self.inner).py()?.gains)
    }

    fn gaussian_cost(&self) -> PyResult<f64> {
        team::gaussian_cost(&self.inner).py()
    }

    /// Cost of `u` against the cross term `s`: `½‖Cᵀu + C⁻¹s‖²`.
    fn cost(&self, u: Vec<f64>, s: Vec<f64>) -> PyResult<f64> {
        if u.len() != self.inner.m() || s.len() != self.inner.m() {
            return Err(PyValueError::new_err(format!("u and s need length m = {}", self.inner.m())));
        }
        Ok(self.inner.cost_from_cross(&u, &s))
    }

    fn __repr__(&self) -> String {
        format!("TeamSpec(m={}, obs_dims={:?})", self.inner.m(), self.inner.obs_dims())
    }
}

/// One draw of the ensemble: the spec plus a Haar frame of size `n × ℓ`.
#[pyclass(name = "ProblemInstance", module = "lqteam_py", frozen)]
struct PyProblemInstance {
    inner: team::ProblemInstance,
}

enum PolicyArg {
    Linear(LinearPolicy),
    Zero,
}

impl PolicyArg {
    fn as_policy(&self) -> &dyn Policy {
        match self {
            PolicyArg::Linear(p) => p,
            PolicyArg::Zero => &ZeroPolicy,
        }
    }
}

impl PyProblemInstance {
    fn policy(&self, gains: Option<Vec<Vec<f64>>>, zero: bool) -> PyResult<PolicyArg> {
        let spec = self.inner.spec();
        Ok(match (gains, zero) {
            (Some(_), true) => return Err(PyValueError::new_err("give gains or zero=True, not both")),
            (Some(g), false) => {
                let p = LinearPolicy { gains: g };
                p.check(spec).py()?;
                PolicyArg::Linear(p)
            }
            (None, true) => PolicyArg::Zero,
            (None, false) => PolicyArg::Linear(team::solve_linear(spec).py()?),
        })
    }
}

#[pymethods]
impl PyProblemInstance {
    #[staticmethod]
    fn sample(spec: &PyTeamSpec, n: usize, seed: u64) -> PyResult<Self> {
        Ok(Self { inner: team::ProblemInstance::sample(&spec.inner, n, &mut stream(seed)).py()? })
    }

    #[staticmethod]
    fn from_text(text: &str) -> PyResult<Self> {
        Ok(Self { inner: instance_from_text(text).py()? })
    }

    fn to_text(&self) -> String {
        instance_to_text(&self.inner)
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn spec(&self) -> PyTeamSpec {
        PyTeamSpec { inner: self.inner.spec().clone() }
    }

    /// The frame `R` as `n` rows of length `ℓ`.
    #[getter]
    fn frame(&self) -> Vec<Vec<f64>> {
        matrix_to_rows(self.inner.frame().matrix())
    }

    fn cost(&self, u: Vec<f64>, xi: Vec<f64>) -> PyResult<f64> {
        self.inner.cost(&u, &xi).py()
    }

    /// Monte Carlo cost of a linear policy (the best one unless `gains` is
    /// given) or of the zero policy.
    #[pyo3(signature = (noise, samples, seed, gains=None, zero=false))]
    fn mc_cost<'py>(
        &self,
        py: Python<'py>,
        noise: &str,
        samples: usize,
        seed: u64,
        gains: Option<Vec<Vec<f64>>>,
        zero: bool,
    ) -> PyResult<Bound<'py, PyDict>> {
        let model = noise_model(noise, self.inner.n())?;
        let policy = self.policy(gains, zero)?;
        let est = py.detach(|| team::mc_cost(&self.inner, policy.as_policy(), &model, samples, &mut stream(seed))).py()?;
        estimate(py, &est)
    }

    /// Tail cost mass beyond each radius in `k_list`.
    #[pyo3(signature = (noise, k_list, samples, seed, gains=None, zero=false))]
    fn tail_mass<'py>(
        &self,
        py: Python<'py>,
        noise: &str,
        k_list: Vec<f64>,
        samples: usize,
        seed: u64,
        gains: Option<Vec<Vec<f64>>>,
        zero: bool,
    ) -> PyResult<Vec<Bound<'py, PyDict>>> {
        let model = noise_model(noise, self.inner.n())?;
        let policy = self.policy(gains, zero)?;
        let rows = py
            .detach(|| diagnostics::tail_mass(&self.inner, &model, policy.as_policy(), &k_list, samples, &mut stream(seed)))
            .py()?;
        rows.iter().map(|e| estimate(py, e)).collect()
    }

    /// Person-by-person approximation of the optimal policy.
    #[pyo3(signature = (noise, seed, bins=None, samples=None, max_iters=None, tol=None, form=None))]
    fn pbp_solve(
        &self,
        py: Python<'_>,
        noise: &str,
        seed: u64,
        bins: Option<usize>,
        samples: Option<usize>,
        max_iters: Option<usize>,
        tol: Option<f64>,
        form: Option<&str>,
    ) -> PyResult<PyPbpSolution> {
        let model = noise_model(noise, self.inner.n())?;
        let cfg = pbp_config(self.inner.spec(), bins, samples, max_iters, tol, form)?;
        let sol = py.detach(|| pbp::pbp_solve(&self.inner, &model, &cfg, &mut stream(seed))).py()?;
        Ok(PyPbpSolution { inner: sol })
    }
}

fn pbp_config(
    spec: &team::TeamSpec,
    bins: Option<usize>,
    samples: Option<usize>,
    max_iters: Option<usize>,
    tol: Option<f64>,
    form: Option<&str>,
) -> PyResult<PbpConfig> {
    let base = PbpConfig::for_spec(spec).py()?;
    let form = match form {
        None => base.form,
        Some("affine") => CellForm::Affine,
        Some("constant") => CellForm::Constant,
        Some(other) => return Err(PyValueError::new_err(format!("unknown cell form `{other}`"))),
    };
    let cfg = PbpConfig {
        bins: bins.unwrap_or(base.bins),
        samples: samples.unwrap_or(base.samples),
        max_iters: max_iters.unwrap_or(base.max_iters),
        tol: tol.unwrap_or(base.tol),
        form,
        ..base
    };
    cfg.validate().py()?;
    Ok(cfg)
}

#[pyclass(name = "PbpSolution", module = "lqteam_py", frozen)]
struct PyPbpSolution {
    inner: pbp::PbpSolution,
}

#[pymethods]
impl PyPbpSolution {
    /// In-sample cost as a `{value, stderr, samples}` dict.
    #[getter]
    fn cost<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        estimate(py, &self.inner.cost)
    }

    #[getter]
    fn history(&self) -> Vec<f64> {
        self.inner.history.clone()
    }

    #[getter]
    fn sweeps(&self) -> usize {
        self.inner.sweeps
    }

    #[getter]
    fn converged(&self) -> bool {
        self.inner.converged
    }

    /// Action of `player` on observation `obs`.
    fn act(&self, player: usize, obs: Vec<f64>) -> PyResult<f64> {
        let players = self.inner.policy.players();
        let table = players.get(player).ok_or_else(|| PyValueError::new_err(format!("no player {player}")))?;
        if obs.len() != table.dims() {
            return Err(PyValueError::new_err(format!("player {player} observes {} values", table.dims())));
        }
        Ok(self.inner.policy.act(player, &obs))
    }

    /// The tabulated policy in its text format.
    fn policy_text(&self) -> String {
        self.inner.policy.to_text()
    }
}

/// `τ_{ℓ,r}(t)`, the chance a standard Gaussian in `ℓ − r` dimensions has
/// norm above `√(3/4)·t`.
#[pyfunction]
fn tail_weight(l: usize, r: usize, t: f64) -> PyResult<f64> {
    bounds::tail_weight(l, r, t).py()
}

#[pyfunction]
fn envelope_budget(a: f64, b: f64, n: usize, l: usize) -> PyResult<f64> {
    bounds::envelope_budget(a, b, n, l).py()
}

fn constants(c: Option<f64>, c3: Option<f64>, c4: Option<f64>) -> PyResult<BoundConstants> {
    let d = BoundConstants::default();
    let out = BoundConstants { c: c.unwrap_or(d.c), c3: c3.unwrap_or(d.c3), c4: c4.unwrap_or(d.c4), illustrative: c.is_none(), ..d };
    out.validate().py()?;
    Ok(out)
}

/// Two-sided bound on the optimal cost from `J_G` and a truncated value.
#[pyfunction]
#[pyo3(signature = (jg, v_t, v_t_stderr, n, c=None, c3=None))]
fn fundamental_bounds<'py>(py: Python<'py>, jg: f64, v_t: f64, v_t_stderr: f64, n: usize, c: Option<f64>, c3: Option<f64>) -> PyResult<Bound<'py, PyDict>> {
    let consts = constants(c, c3, None)?;
    let v = EstimateWithError { value: v_t, stderr: v_t_stderr, samples: 0 };
    let b = bounds::fundamental_bounds(jg, &v, n, &consts).py()?;
    let d = PyDict::new(py);
    d.set_item("upper", b.upper)?;
    d.set_item("lower", b.lower)?;
    d.set_item("valid", b.valid)?;
    d.set_item("eps", b.eps)?;
    d.set_item("illustrative", consts.illustrative)?;
    Ok(d)
}

/// Truncated Gaussian value `v(t)` by PBP.
#[pyfunction]
#[pyo3(signature = (spec, t, seed, bins=None, samples=None))]
fn truncated_gaussian_value<'py>(
    py: Python<'py>,
    spec: &PyTeamSpec,
    t: f64,
    seed: u64,
    bins: Option<usize>,
    samples: Option<usize>,
) -> PyResult<Bound<'py, PyDict>> {
    let cfg = pbp_config(&spec.inner, bins, samples, None, None, None)?;
    let v = py.detach(|| pbp::truncated_gaussian_value(&spec.inner, t, &cfg, &mut stream(seed))).py()?;
    estimate(py, &v)
}

/// Kernel density ratio error and histogram total variation of an
/// `l`-dimensional Haar projection of `noise` in dimension `n`.
#[pyfunction]
fn density_report<'py>(py: Python<'py>, noise: &str, n: usize, l: usize, samples: usize, seed: u64) -> PyResult<Bound<'py, PyDict>> {
    let model = noise_model(noise, n)?;
    let r = py.detach(|| diagnostics::density_report(&model, l, samples, &mut stream(seed))).py()?;
    let d = PyDict::new(py);
    d.set_item("n", r.n)?;
    d.set_item("l", r.l)?;
    d.set_item("grid_sup_ratio_err", r.grid_sup_ratio_err)?;
    d.set_item("tv_estimate", r.tv_estimate)?;
    d.set_item("samples", r.samples)?;
    d.set_item("bandwidth", r.bandwidth)?;
    Ok(d)
}

/// Linear vs PBP cost for each `n`, one dict per row.
#[pyfunction]
#[pyo3(signature = (spec, noise, n_list, seed, bins=None, samples=None))]
fn gap_sweep<'py>(
    py: Python<'py>,
    spec: &PyTeamSpec,
    noise: &str,
    n_list: Vec<usize>,
    seed: u64,
    bins: Option<usize>,
    samples: Option<usize>,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let family = noise.parse::<NoiseFamily>().py()?;
    let cfg = pbp_config(&spec.inner, bins, samples, None, None, None)?;
    let rows = py
        .detach(|| diagnostics::gap_sweep(&spec.inner, family, &n_list, &cfg, &BoundConstants::default(), &mut stream(seed)))
        .py()?;
    rows.iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("n", r.n)?;
            d.set_item("J_linear", r.j_linear.value)?;
            d.set_item("J_pbp", r.j_pbp.map(|e| e.value))?;
            d.set_item("gap", r.gap)?;
            d.set_item("combined_se", r.combined_stderr())?;
            d.set_item("v_t", r.v_t.map(|e| e.value))?;
            d.set_item("bound_lower", r.bounds.map(|b| b.lower))?;
            d.set_item("error", r.error.clone())?;
            Ok(d)
        })
        .collect()
}

/// `count` draws of the standardized noise in dimension `n`, one list each.
#[pyfunction]
fn sample_noise(noise: &str, n: usize, count: usize, seed: u64) -> PyResult<Vec<Vec<f64>>> {
    let model = noise_model(noise, n)?;
    Ok(model.sample(count, &mut stream(seed)).chunks_exact(n).map(<[f64]>::to_vec).collect())
}

#[pyfunction]
fn log_density(noise: &str, x: Vec<f64>) -> PyResult<f64> {
    noise_model(noise, x.len())?.log_density(&x).py()
}

#[pyfunction]
fn noise_families() -> Vec<&'static str> {
    NoiseFamily::ALL.iter().map(|f| f.name()).collect()
}

#[pymodule]
fn lqteam_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyTeamSpec>()?;
    m.add_class::<PyProblemInstance>()?;
    m.add_class::<PyPbpSolution>()?;
    m.add_function(wrap_pyfunction!(tail_weight, m)?)?;
    m.add_function(wrap_pyfunction!(envelope_budget, m)?)?;
    m.add_function(wrap_pyfunction!(fundamental_bounds, m)?)?;
    m.add_function(wrap_pyfunction!(truncated_gaussian_value, m)?)?;
    m.add_function(wrap_pyfunction!(density_report, m)?)?;
    m.add_function(wrap_pyfunction!(gap_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(sample_noise, m)?)?;
    m.add_function(wrap_pyfunction!(log_density, m)?)?;
    m.add_function(wrap_pyfunction!(noise_families, m)?)?;
    Ok(())
}
