//! Python bindings: tail metrics, optimal transport, calendar-time
//! resampling, single simulations and combo evaluation.

use std::collections::BTreeMap;

use lobfactor_core::calibration::{self, PathPool, ReferenceSet};
use lobfactor_core::engine::{self, SimulationConfig};
use lobfactor_core::metrics::{self, PointCloud};
use lobfactor_core::orderbook;
use lobfactor_core::timegrid::{self, PathShape, TransactionPath};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn parse_config(config_json: Option<&str>, seed: Option<u64>) -> PyResult<SimulationConfig> {
    let mut config = match config_json {
        Some(text) => serde_json::from_str(text).map_err(value_err)?,
        None => SimulationConfig::default(),
    };
    if let Some(s) = seed {
        config.seed = s;
    }
    config.validate().map_err(value_err)?;
    Ok(config)
}

fn cloud(points: Vec<f64>, label: &str) -> PyResult<PointCloud> {
    PointCloud::one_dimensional(points, label).map_err(value_err)
}

/// Price rounded to the nearest tick, in integer ticks.
#[pyfunction]
#[pyo3(signature = (price, tick_size = 1e-4))]
fn align_to_tick(price: f64, tick_size: f64) -> PyResult<i64> {
    orderbook::align_to_tick(price, tick_size)
        .map(|t| t.0)
        .map_err(value_err)
}

#[pyfunction]
fn standardize(returns: Vec<f64>) -> PyResult<Vec<f64>> {
    metrics::standardize(&returns).map_err(value_err)
}

#[pyfunction]
fn default_k(n: usize) -> usize {
    metrics::default_k(n)
}

#[pyclass(get_all, frozen)]
struct TailStats {
    hill: f64,
    k_used: usize,
    n_samples: usize,
}

#[pymethods]
impl TailStats {
    fn __repr__(&self) -> String {
        format!(
            "TailStats(hill={}, k_used={}, n_samples={})",
            self.hill, self.k_used, self.n_samples
        )
    }
}

/// Hill tail index of absolute returns; `k` defaults to 5 % of the sample.
#[pyfunction]
#[pyo3(signature = (abs_returns, k = None))]
fn hill_index(abs_returns: Vec<f64>, k: Option<usize>) -> PyResult<TailStats> {
    let k = k.unwrap_or_else(|| metrics::default_k(abs_returns.len()));
    let t = metrics::hill_index(&abs_returns, k).map_err(value_err)?;
    Ok(TailStats {
        hill: t.hill,
        k_used: t.k_used,
        n_samples: t.n_samples,
    })
}

#[pyfunction]
fn tail_log_ratios(abs_returns: Vec<f64>, k: usize) -> PyResult<Vec<f64>> {
    metrics::tail_log_ratios(&abs_returns, k).map_err(value_err)
}

/// Squared-distance OT cost between two uniform 1-D point clouds.
#[pyfunction]
fn ot_distance(a: Vec<f64>, b: Vec<f64>) -> PyResult<f64> {
    metrics::ot_distance(&cloud(a, "a")?, &cloud(b, "b")?).map_err(value_err)
}

#[pyclass(get_all, frozen)]
struct MeanOt {
    mean: f64,
    std: f64,
    per_reference: Vec<f64>,
}

#[pyfunction]
fn mean_ot(synthetic: Vec<f64>, references: Vec<Vec<f64>>) -> PyResult<MeanOt> {
    let syn = cloud(synthetic, "synthetic")?;
    let refs = references
        .into_iter()
        .enumerate()
        .map(|(i, r)| cloud(r, &format!("ref_{i}")))
        .collect::<PyResult<Vec<_>>>()?;
    let m = metrics::mean_ot(&syn, &refs).map_err(value_err)?;
    Ok(MeanOt {
        mean: m.mean,
        std: m.std,
        per_reference: m.per_reference,
    })
}

/// Hill index predicted by adding the two component effects to the baseline.
#[pyfunction]
fn theoretical_hill(z0: f64, z1: f64, z2: f64) -> f64 {
    metrics::theoretical_hill(z0, z1, z2)
}

#[pyclass(get_all, frozen)]
struct StylizedFacts {
    kurtosis: f64,
    vol_volume_corr: f64,
    abs_autocorr: BTreeMap<usize, f64>,
}

#[pyfunction]
fn stylized_facts(returns: Vec<f64>, volumes: Vec<f64>) -> PyResult<StylizedFacts> {
    let s = metrics::stylized_facts(&returns, &volumes).map_err(value_err)?;
    Ok(StylizedFacts {
        kurtosis: s.kurtosis,
        vol_volume_corr: s.vol_volume_corr,
        abs_autocorr: s.abs_autocorr,
    })
}

/// Cumulative transaction fractions of a day of per-minute counts.
#[pyfunction]
fn scaled_path_from_counts(counts: Vec<u64>) -> PyResult<Vec<f64>> {
    timegrid::scaled_path_from_counts(&counts)
        .map(|p| p.fractions().to_vec())
        .map_err(value_err)
}

/// One-minute bar prices and volumes from per-trade mids and a path.
#[pyfunction]
fn resample_trades(
    trade_mids: Vec<f64>,
    trade_volumes: Vec<u64>,
    fractions: Vec<f64>,
    p0: f64,
) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let path = TransactionPath::new(fractions).map_err(value_err)?;
    let bars = timegrid::resample_trades(&trade_mids, &trade_volumes, &path, p0, "py")
        .map_err(value_err)?;
    Ok((bars.mid_prices, bars.volumes))
}

/// Inverse-CDF Pareto draw for a uniform `u` in (0, 1).
#[pyfunction]
fn sample_pareto(c_min: f64, beta: f64, u: f64) -> f64 {
    lobfactor_core::agents::sample_pareto(c_min, beta, u)
}

/// Default simulation configuration as JSON.
#[pyfunction]
fn default_config() -> String {
    serde_json::to_string_pretty(&SimulationConfig::default()).expect("config serializes")
}

#[pyclass(get_all, frozen)]
struct SimulationRun {
    seed: u64,
    n_trades: usize,
    trade_prices: Vec<f64>,
    trade_mid_prices: Vec<f64>,
    trade_volumes: Vec<u64>,
    trade_steps: Vec<u64>,
    mid_prices: Vec<f64>,
    optimists_rate: Vec<f64>,
    ticks_csv: String,
}

/// Runs one full simulation; `config_json` as produced by `default_config`.
#[pyfunction]
#[pyo3(signature = (config_json = None, seed = None))]
fn run_simulation(
    py: Python<'_>,
    config_json: Option<&str>,
    seed: Option<u64>,
) -> PyResult<SimulationRun> {
    let config = parse_config(config_json, seed)?;
    let out = py.detach(|| engine::run(&config)).map_err(value_err)?;
    let mut csv = Vec::new();
    out.write_ticks_csv(&mut csv).map_err(runtime_err)?;
    let tick = config.tick_size;
    Ok(SimulationRun {
        seed: config.seed,
        n_trades: out.trades.len(),
        trade_prices: out.trades.iter().map(|t| t.price.to_price(tick)).collect(),
        trade_mid_prices: out.trade_mid_prices(),
        trade_volumes: out.trades.iter().map(|t| t.volume).collect(),
        trade_steps: out.trades.iter().map(|t| t.step).collect(),
        mid_prices: out.mid_prices,
        optimists_rate: out.optimists_rate,
        ticks_csv: String::from_utf8(csv).map_err(runtime_err)?,
    })
}

/// Step-by-step access to a running simulation.
#[pyclass(unsendable)]
struct Simulation {
    inner: engine::Simulation,
}

#[pymethods]
impl Simulation {
    #[new]
    #[pyo3(signature = (config_json = None, seed = None))]
    fn new(config_json: Option<&str>, seed: Option<u64>) -> PyResult<Self> {
        let config = parse_config(config_json, seed)?;
        Ok(Self {
            inner: engine::Simulation::new(config).map_err(value_err)?,
        })
    }

    /// Advances one step; False once the run is complete.
    fn step(&mut self) -> bool {
        self.inner.step()
    }

    #[getter]
    fn current_step(&self) -> u64 {
        self.inner.current_step()
    }

    #[getter]
    fn n_optimists(&self) -> usize {
        self.inner.n_optimists()
    }

    #[getter]
    fn is_finished(&self) -> bool {
        self.inner.is_finished()
    }

    #[getter]
    fn best_bid(&self) -> Option<f64> {
        let tick = self.inner.config().tick_size;
        self.inner.book().best_bid().map(|t| t.to_price(tick))
    }

    #[getter]
    fn best_ask(&self) -> Option<f64> {
        let tick = self.inner.config().tick_size;
        self.inner.book().best_ask().map(|t| t.to_price(tick))
    }

    fn mid_price(&self) -> f64 {
        let c = self.inner.config();
        self.inner.book().mid_price(c.tick_size, c.p0)
    }

    /// Total cash (in integer ticks) and shares held across agents.
    fn totals(&self) -> (i128, u64) {
        let agents = self.inner.agents();
        (
            agents.iter().map(|a| a.state.cash).sum(),
            agents.iter().map(|a| a.state.shares).sum(),
        )
    }
}

#[pyclass(get_all, frozen)]
struct ComboMetrics {
    hill: f64,
    k_used: usize,
    n_returns: usize,
    mean_ot: f64,
    ot_std: f64,
    n_trials: usize,
    n_degenerate: usize,
    unstable: bool,
    kurtosis: Option<f64>,
}

/// Pooled Hill index and mean OT of `n_trials` seeded runs against
/// synthetic Student-t references.
#[pyfunction]
#[pyo3(signature = (
    config_json = None,
    n_trials = 20,
    base_seed = 0,
    reference_sets = calibration::REFERENCE_SETS,
    reference_samples = calibration::REFERENCE_SAMPLES,
    reference_seed = 20_240_101,
    path_pool_size = calibration::SYNTHETIC_PATH_POOL,
    path_seed = 7,
))]
#[allow(clippy::too_many_arguments)]
fn evaluate_combo(
    py: Python<'_>,
    config_json: Option<&str>,
    n_trials: usize,
    base_seed: u64,
    reference_sets: usize,
    reference_samples: usize,
    reference_seed: u64,
    path_pool_size: usize,
    path_seed: u64,
) -> PyResult<ComboMetrics> {
    let config = parse_config(config_json, None)?;
    let m = py
        .detach(|| {
            let refs = ReferenceSet::student_t(
                reference_sets,
                reference_samples,
                calibration::STUDENT_T_DOF,
                reference_seed,
            )?;
            let paths = PathPool::synthetic(path_pool_size, path_seed, PathShape::UShape)?;
            calibration::evaluate_combo(&config, n_trials, base_seed, &refs, &paths)
        })
        .map_err(runtime_err)?;
    Ok(ComboMetrics {
        hill: m.hill,
        k_used: m.k_used,
        n_returns: m.n_returns,
        mean_ot: m.mean_ot,
        ot_std: m.ot_std,
        n_trials: m.n_trials,
        n_degenerate: m.n_degenerate,
        unstable: m.unstable,
        kurtosis: m.stylized.map(|s| s.kurtosis),
    })
}

#[pymodule]
fn lobfactor(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_function(wrap_pyfunction!(align_to_tick, m)?)?;
    m.add_function(wrap_pyfunction!(standardize, m)?)?;
    m.add_function(wrap_pyfunction!(default_k, m)?)?;
    m.add_function(wrap_pyfunction!(hill_index, m)?)?;
    m.add_function(wrap_pyfunction!(tail_log_ratios, m)?)?;
    m.add_function(wrap_pyfunction!(ot_distance, m)?)?;
    m.add_function(wrap_pyfunction!(mean_ot, m)?)?;
    m.add_function(wrap_pyfunction!(theoretical_hill, m)?)?;
    m.add_function(wrap_pyfunction!(stylized_facts, m)?)?;
    m.add_function(wrap_pyfunction!(scaled_path_from_counts, m)?)?;
    m.add_function(wrap_pyfunction!(resample_trades, m)?)?;
    m.add_function(wrap_pyfunction!(sample_pareto, m)?)?;
    m.add_function(wrap_pyfunction!(default_config, m)?)?;
    m.add_function(wrap_pyfunction!(run_simulation, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_combo, m)?)?;
    m.add_class::<TailStats>()?;
    m.add_class::<MeanOt>()?;
    m.add_class::<StylizedFacts>()?;
    m.add_class::<SimulationRun>()?;
    m.add_class::<Simulation>()?;
    m.add_class::<ComboMetrics>()?;
    Ok(())
}
