//! Python bindings: scenario fixtures, a steppable simulator, the signal
//! action sets, turning-ratio perturbation, training and evaluation.

use std::collections::BTreeMap;

use greenwave::experiment::ControllerSpec;
use greenwave::marl::{self, Checkpoint};
use greenwave::randomization::perturb_approach;
use greenwave::seeding::{self, tag};
use greenwave::signal::SignalProgram;
use greenwave::{fixtures, Decision, Env, MetricsReport, SimState};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

fn err(e: greenwave::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn metrics(r: &MetricsReport) -> BTreeMap<&'static str, Option<f64>> {
    BTreeMap::from([
        ("ATT", r.att),
        ("AWT", r.awt),
        ("AD", r.ad),
        ("VC", Some(r.vc)),
        ("completed", Some(r.completed as f64)),
        ("injected", Some(r.injected as f64)),
    ])
}

/// A scenario file held in memory.
#[pyclass(name = "Scenario", from_py_object)]
#[derive(Clone)]
struct PyScenario {
    inner: greenwave::Scenario,
}

#[pymethods]
impl PyScenario {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: greenwave::Scenario::from_json(text).map_err(err)?,
        })
    }

    /// Built-in scenario: corridor, saturated, off-peak, stepped or grid.
    #[staticmethod]
    #[pyo3(signature = (name, size = 2))]
    fn fixture(name: &str, size: usize) -> PyResult<Self> {
        let inner = match name {
            "corridor" => fixtures::corridor(size),
            "saturated" => fixtures::saturated_corridor(),
            "off-peak" => fixtures::off_peak_corridor(),
            "stepped" => fixtures::stepped_demand(),
            "grid" => fixtures::grid(&fixtures::GridParams::grid(size, size)),
            other => return Err(PyValueError::new_err(format!("unknown fixture `{other}`"))),
        };
        Ok(Self { inner })
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    /// Network lint messages; empty when the network is valid.
    fn validate(&self) -> Vec<String> {
        greenwave::validate_network(&self.inner.network)
            .violations
            .iter()
            .map(ToString::to_string)
            .collect()
    }

    /// Copy with every approach's (left, through, right) ratios scaled by
    /// (1 + shift, 1, 1 − shift) and renormalized.
    fn shifted(&self, shift: f64) -> Self {
        Self {
            inner: fixtures::shift_turning_ratios(&self.inner, shift),
        }
    }

    #[getter]
    fn num_intersections(&self) -> usize {
        self.inner.network.intersections.len()
    }

    #[getter]
    fn horizon_s(&self) -> u64 {
        self.inner.demand.horizon_s
    }

    /// Overrides training settings, e.g. `set_training("iterations", 5)`,
    /// with the value given as JSON.
    fn set_training(&mut self, key: &str, json_value: &str) -> PyResult<()> {
        let mut v = serde_json::to_value(&self.inner.training).expect("config serializes");
        let value: serde_json::Value =
            serde_json::from_str(json_value).map_err(|e| PyValueError::new_err(e.to_string()))?;
        v[key] = value;
        self.inner.training = serde_json::from_value(v).map_err(|e| PyValueError::new_err(format!("{key}: {e}")))?;
        Ok(())
    }

    fn set_randomization(&mut self, enabled: bool, delta: f64) {
        self.inner.randomization.enabled = enabled;
        self.inner.randomization.delta = delta;
    }
}

/// Step-by-step simulation under caller-chosen actions.
#[pyclass(name = "Simulator")]
struct PySimulator {
    env: Env,
    state: SimState,
}

#[pymethods]
impl PySimulator {
    #[new]
    #[pyo3(signature = (scenario, seed = 0))]
    fn new(scenario: &PyScenario, seed: u64) -> PyResult<Self> {
        let env = scenario.inner.compile().map_err(err)?;
        let state = env.reset(seed).map_err(err)?;
        Ok(Self { env, state })
    }

    /// Advances one second; returns the agents now owing a decision.
    fn step(&mut self) -> PyResult<Vec<usize>> {
        Ok(self.state.step().map_err(err)?.decisions)
    }

    /// Applies action-set entry `index` to `agent`'s upcoming phase.
    fn adjust(&mut self, agent: usize, index: usize) -> PyResult<()> {
        self.state.resolve(agent, Decision::Adjust(index), &self.env.actions).map_err(err)
    }

    /// Steps to the horizon keeping every program unchanged.
    fn run_fixed(&mut self) -> PyResult<()> {
        let zero = self.env.actions.zero_index();
        while self.state.clock() < self.env.horizon() {
            for agent in self.step()? {
                self.adjust(agent, zero)?;
            }
        }
        Ok(())
    }

    fn observe(&self, agent: usize, scope: &str) -> PyResult<Vec<f64>> {
        let scope = scope.parse().map_err(err)?;
        Ok(self.env.observer.observe(&self.state, agent, scope))
    }

    fn greens(&self, agent: usize) -> Vec<i64> {
        self.state.signal(agent).program.greens.clone()
    }

    fn queue_lengths(&self) -> Vec<usize> {
        self.state.queue_lengths()
    }

    /// `(injected, exited, in transit, queued)`.
    fn population(&self) -> (u64, u64, u64, u64) {
        self.state.population()
    }

    #[getter]
    fn clock(&self) -> u64 {
        self.state.clock()
    }

    #[getter]
    fn action_set(&self) -> Vec<i64> {
        self.env.actions.values.to_vec()
    }

    fn metrics(&self) -> BTreeMap<&'static str, Option<f64>> {
        metrics(&self.state.report())
    }
}

#[pyfunction]
fn exponential_action_set(base: i64) -> PyResult<Vec<i64>> {
    Ok(greenwave::exponential_action_set(base).map_err(err)?.values.to_vec())
}

#[pyfunction]
fn linear_action_set(steps: Vec<i64>) -> PyResult<Vec<i64>> {
    Ok(greenwave::linear_action_set(&steps).map_err(err)?.values.to_vec())
}

/// `clip(green + delta, g_min, g_max)`.
#[pyfunction]
fn adjust(green: i64, delta: i64, g_min: i64, g_max: i64) -> i64 {
    let program = SignalProgram {
        greens: vec![green],
        yellow: 0,
        all_red: 0,
        g_min,
        g_max,
    };
    program.apply_duration_adjustment(0, delta).greens[0]
}

/// Multiplicative noise of magnitude `delta` on one approach, renormalized.
#[pyfunction]
fn perturb(ratios: Vec<f64>, delta: f64, seed: u64) -> PyResult<Vec<f64>> {
    let mut rng = seeding::stream(seed, &[tag::RATIO_NOISE]);
    perturb_approach(&ratios, delta, &mut rng).map_err(err)
}

/// Trains with the scenario's settings; returns the checkpoint JSON and the
/// per-iteration `(mean_reward, eval_awt)` curve.
#[pyfunction]
fn train(py: Python<'_>, scenario: &PyScenario) -> PyResult<(String, Vec<(f64, f64)>)> {
    let s = scenario.inner.clone();
    py.detach(move || {
        let env = s.compile()?;
        let outcome = marl::train(&env, &s.training)?;
        let checkpoint = Checkpoint::new(&outcome.agents, s.training.scope, s.training.algo, &env.actions.values);
        let curve = outcome.curve.iter().map(|p| (p.mean_reward, p.eval_awt)).collect();
        Ok((checkpoint.to_json(), curve))
    })
    .map_err(err)
}

/// Metrics of one greedy, randomization-free episode. `controller` is
/// `fixtime`, `maxpressure` or checkpoint JSON.
#[pyfunction]
#[pyo3(signature = (scenario, controller, seed = 0))]
fn evaluate(py: Python<'_>, scenario: &PyScenario, controller: &str, seed: u64) -> PyResult<BTreeMap<&'static str, Option<f64>>> {
    let spec = match controller {
        "fixtime" => ControllerSpec::Fixtime,
        "maxpressure" => ControllerSpec::Maxpressure,
        json => ControllerSpec::Checkpoint {
            label: "rl".to_string(),
            checkpoint: serde_json::from_str(json).map_err(|e| PyValueError::new_err(format!("checkpoint: {e}")))?,
        },
    };
    let s = scenario.inner.clone();
    let report = py
        .detach(move || {
            let mut env = s.compile()?;
            env.randomization = env.randomization.with_enabled(false);
            let c = spec.build(&env)?;
            marl::evaluate(&env, c.as_ref(), seed)
        })
        .map_err(err)?;
    Ok(metrics(&report))
}

#[pymodule]
fn greenwave_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyScenario>()?;
    m.add_class::<PySimulator>()?;
    m.add_function(wrap_pyfunction!(exponential_action_set, m)?)?;
    m.add_function(wrap_pyfunction!(linear_action_set, m)?)?;
    m.add_function(wrap_pyfunction!(adjust, m)?)?;
    m.add_function(wrap_pyfunction!(perturb, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    Ok(())
}
