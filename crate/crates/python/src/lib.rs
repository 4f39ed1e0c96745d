//! Python bindings. Structured results come back as plain dicts and lists.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

use mpg_lab::covering::{self, Design};
use mpg_lab::eval::{self, EvalOptions};
use mpg_lab::game::{micro_g1, validate_game};
use mpg_lab::poa::{self, StageGame};
use mpg_lab::spi::{self, SpiConfig, StepSchedule};
use mpg_lab::{counterexample, io, policy, runner, Error, GameDefinition, JointPolicy};

fn err(e: Error) -> PyErr {
    match e {
        Error::Config(_) | Error::Parse(_) | Error::Shape(_) | Error::InvalidParameter(_) => PyValueError::new_err(e.to_string()),
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

fn to_py<T: Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

fn design(name: &str) -> PyResult<Design> {
    Design::parse(name).ok_or_else(|| PyValueError::new_err(format!("unknown design {name:?}; use ii, mc or us")))
}

fn opts(cap: Option<u64>) -> EvalOptions {
    EvalOptions {
        cap: cap.map_or(eval::DEFAULT_CAP, u128::from),
        monte_carlo: None,
    }
}

#[pyclass(name = "Game", frozen)]
struct PyGame {
    inner: GameDefinition,
}

#[pymethods]
impl PyGame {
    /// A named preset such as `desk-5x5-us` or `counterexample`.
    #[staticmethod]
    fn preset(name: &str) -> PyResult<Self> {
        let mut cfg = runner::ExperimentConfig::default();
        cfg.game.preset = Some(name.to_string());
        Ok(Self {
            inner: runner::build_game(&cfg).map_err(err)?.game,
        })
    }

    #[staticmethod]
    #[pyo3(signature = (grid_size, treasures, num_agents, horizon, design_name, coverage_radius=1, slip_prob=1.0/3.0))]
    fn covering(
        grid_size: usize,
        treasures: Vec<(usize, usize, f64)>,
        num_agents: usize,
        horizon: usize,
        design_name: &str,
        coverage_radius: usize,
        slip_prob: f64,
    ) -> PyResult<Self> {
        let cfg = covering::CoveringConfig {
            grid_size,
            treasures: treasures.into_iter().map(|(r, c, v)| covering::Treasure::new(r, c, v)).collect(),
            num_agents,
            horizon,
            coverage_radius,
            slip_prob,
            design: design(design_name)?,
            initial: Default::default(),
        };
        Ok(Self {
            inner: covering::build_covering_game(&cfg).map_err(err)?,
        })
    }

    #[staticmethod]
    fn counterexample() -> Self {
        Self {
            inner: counterexample::build_counterexample(),
        }
    }

    #[staticmethod]
    fn micro_g1() -> Self {
        Self { inner: micro_g1() }
    }

    /// Loads a tabular game JSON document.
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self {
            inner: io::load_tabular_game(path).map_err(err)?,
        })
    }

    #[pyo3(signature = (path, cap=None))]
    fn save(&self, path: &str, cap: Option<u64>) -> PyResult<()> {
        io::save_tabular_game(path, &self.inner, cap.map_or(eval::DEFAULT_CAP, u128::from)).map_err(err)
    }

    #[getter]
    fn num_agents(&self) -> usize {
        self.inner.num_agents()
    }

    #[getter]
    fn horizon(&self) -> usize {
        self.inner.horizon()
    }

    #[getter]
    fn num_states(&self) -> Vec<usize> {
        self.inner.spaces().iter().map(|s| s.num_states).collect()
    }

    #[getter]
    fn num_actions(&self) -> Vec<usize> {
        self.inner.spaces().iter().map(|s| s.num_actions).collect()
    }

    #[getter]
    fn has_potential(&self) -> bool {
        self.inner.has_potential()
    }

    /// Invariant violations as strings; empty when the game is well formed.
    fn validate(&self) -> Vec<String> {
        validate_game(&self.inner).iter().map(|v| v.to_string()).collect()
    }

    fn uniform_policy(&self) -> PyPolicy {
        PyPolicy {
            inner: policy::uniform_policy(&self.inner),
        }
    }

    fn reward(&self, agent: usize, stage: usize, states: Vec<usize>, actions: Vec<usize>) -> f64 {
        self.inner.reward(agent, stage, &states, &actions)
    }

    #[pyo3(signature = (policy, cap=None))]
    fn ne_gap(&self, py: Python<'_>, policy: &PyPolicy, cap: Option<u64>) -> PyResult<Py<PyAny>> {
        policy.inner.check_against(&self.inner).map_err(err)?;
        let r = py.detach(|| eval::ne_gap(&self.inner, &policy.inner, &opts(cap))).map_err(err)?;
        to_py(py, &r)
    }

    #[pyo3(signature = (cap=None))]
    fn optimal_welfare(&self, py: Python<'_>, cap: Option<u64>) -> PyResult<f64> {
        py.detach(|| poa::optimal_welfare(&self.inner, &opts(cap))).map_err(err)
    }

    #[pyo3(signature = (trials=100, seed=0, cap=None))]
    fn verify_potential(&self, py: Python<'_>, trials: usize, seed: u64, cap: Option<u64>) -> PyResult<Py<PyAny>> {
        let r = py.detach(|| eval::verify_potential(&self.inner, trials, seed, &opts(cap))).map_err(err)?;
        to_py(py, &r)
    }

    /// Markov smoothness certificate for `(lam, mu)`.
    #[pyo3(signature = (lam, mu, cap=None, pair_cap=None))]
    fn check_smoothness(&self, py: Python<'_>, lam: f64, mu: f64, cap: Option<u64>, pair_cap: Option<u64>) -> PyResult<Py<PyAny>> {
        let pc = pair_cap.map_or(poa::DEFAULT_PAIR_CAP, u128::from);
        let r = py
            .detach(|| poa::check_markov_smoothness(&self.inner, lam, mu, &opts(cap), pc))
            .map_err(err)?;
        to_py(py, &r)
    }

    #[pyo3(signature = (lam, cap=None, pair_cap=None))]
    fn min_mu(&self, py: Python<'_>, lam: f64, cap: Option<u64>, pair_cap: Option<u64>) -> PyResult<Py<PyAny>> {
        let pc = pair_cap.map_or(poa::DEFAULT_PAIR_CAP, u128::from);
        let r = py
            .detach(|| poa::min_mu_for_lambda_markov(&self.inner, lam, &opts(cap), pc))
            .map_err(err)?;
        to_py(py, &r)
    }
}

#[pyclass(name = "Policy", frozen)]
struct PyPolicy {
    inner: JointPolicy,
}

#[pymethods]
impl PyPolicy {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: io::policy_from_json(text).map_err(err)?,
        })
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(|e| PyRuntimeError::new_err(e.to_string()))
    }

    #[getter]
    fn num_agents(&self) -> usize {
        self.inner.num_agents()
    }

    /// Action probabilities of `agent` in local state `state` at stage `stage`.
    fn probs(&self, agent: usize, stage: usize, state: usize) -> PyResult<Vec<f64>> {
        let p = self
            .inner
            .agents()
            .get(agent)
            .ok_or_else(|| PyValueError::new_err("agent out of range"))?;
        if stage >= p.horizon() || state >= p.num_states() {
            return Err(PyValueError::new_err("stage or state out of range"));
        }
        Ok(p.row(stage, state).to_vec())
    }
}

/// Runs the learner from the uniform policy; returns `(policy, result dict)`.
#[pyfunction]
#[pyo3(signature = (game, t_g, t_j=800, t_k=50000, seed=0, exact_q=false, eta1=None, exact_eval_logging=true))]
#[allow(clippy::too_many_arguments)]
fn run_spi(
    py: Python<'_>,
    game: &PyGame,
    t_g: usize,
    t_j: usize,
    t_k: usize,
    seed: u64,
    exact_q: bool,
    eta1: Option<f64>,
    exact_eval_logging: bool,
) -> PyResult<(PyPolicy, Py<PyAny>)> {
    let cfg = SpiConfig {
        t_g,
        t_j,
        t_k,
        master_seed: seed,
        stepsize_override: eta1.map(|eta1| StepSchedule::InvSqrt { eta1 }),
        exact_eval_logging,
        per_agent_rollouts: false,
        use_exact_q: exact_q,
        eval: EvalOptions::default(),
    };
    let out = py.detach(|| spi::run(&game.inner, &cfg)).map_err(err)?;
    let summary = serde_json::json!({
        "logs": out.logs,
        "final_evaluation": out.final_evaluation,
        "best_iterate": out.best_iterate,
    });
    Ok((PyPolicy { inner: out.policy }, to_py(py, &summary)?))
}

#[pyfunction]
fn utility_f(m: usize) -> PyResult<f64> {
    covering::utility_f(m).map_err(err)
}

/// Nash equilibria and PoA of a two-player, two-strategy identical-interest game.
#[pyfunction]
fn analyze_2x2(py: Python<'_>, matrix: Vec<Vec<f64>>) -> PyResult<Py<PyAny>> {
    let stage = StageGame::from_matrix(&matrix).map_err(err)?;
    to_py(py, &poa::analyze_2x2(&stage).map_err(err)?)
}

#[pyfunction]
fn analyze_counterexample(py: Python<'_>) -> PyResult<Py<PyAny>> {
    to_py(py, &counterexample::analyze_counterexample(&EvalOptions::default()).map_err(err)?)
}

/// Runs an experiment from a TOML config document and returns the report JSON text.
#[pyfunction]
fn run_experiment(py: Python<'_>, config: &str) -> PyResult<String> {
    let cfg = runner::parse_config(config).map_err(err)?;
    let report = py.detach(|| runner::run_experiment(&cfg)).map_err(err)?;
    report.to_json().map_err(err)
}

#[pymodule]
fn mpg_lab_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGame>()?;
    m.add_class::<PyPolicy>()?;
    m.add_function(wrap_pyfunction!(run_spi, m)?)?;
    m.add_function(wrap_pyfunction!(utility_f, m)?)?;
    m.add_function(wrap_pyfunction!(analyze_2x2, m)?)?;
    m.add_function(wrap_pyfunction!(analyze_counterexample, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
