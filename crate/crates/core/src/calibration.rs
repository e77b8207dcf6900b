//! Scenario matrix, parameter grid, multi-seed combo evaluation, grid-search
//! calibration and the result tables built from it.
//!
//! Random streams: trial `i` of a combo simulates with seed `base_seed + i`.
//! Its transaction path is picked by a ChaCha8 generator seeded with the same
//! value on stream [`PATH_STREAM`], so adding trials never perturbs earlier
//! ones and every combo sees the same seeds and paths.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StudentT};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::agents::CashDistribution;
use crate::engine::{daily_mood_change_rate, run, SimulationConfig, SimulationOutput};
use crate::error::{ConfigError, DataError, Error, MetricsError, Result};
use crate::metrics::{
    build_tail_cloud, default_k, hill_index, mean_and_std, mean_ot, pairwise_mean_ot, standardize,
    stylized_facts_segmented, subsample, theoretical_hill, MeanOt, PointCloud, StylizedFactReport,
};
use crate::timegrid::{
    assign_calendar_time, bar_trade_indices, log_returns, synthetic_reference_path, BarSeries,
    PathShape, TransactionPath,
};

pub const SCENARIO_COUNT: u8 = 8;
/// Number of synthetic reference clouds.
pub const REFERENCE_SETS: usize = 18;
/// Samples per synthetic reference set.
pub const REFERENCE_SAMPLES: usize = 30_000;
/// Degrees of freedom of the synthetic reference returns.
pub const STUDENT_T_DOF: f64 = 3.0;
/// Points kept from each ingested reference cloud.
pub const REFERENCE_CLOUD_SIZE: usize = 1_500;
/// Combos with more than this fraction of degenerate trials are unstable.
pub const UNSTABLE_FRACTION: f64 = 0.5;
/// Hill index used to break ties in mean OT.
pub const TARGET_HILL: f64 = 3.0;
/// Default number of synthetic transaction paths in a pool.
pub const SYNTHETIC_PATH_POOL: usize = 250;

pub const PATH_STREAM: u64 = 1;
pub const REFERENCE_STREAM: u64 = 1 << 32;
pub const SUBSAMPLE_STREAM: u64 = 2 << 32;
pub const PATH_POOL_STREAM: u64 = 3 << 32;

// (pareto_cash, chartist, mood) for scenarios 0..=7
const SCENARIO_TABLE: [(bool, bool, bool); 8] = [
    (false, false, false),
    (true, false, false),
    (false, true, false),
    (false, false, true),
    (true, true, false),
    (true, false, true),
    (false, true, true),
    (true, true, true),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub scenario_no: u8,
    pub pareto_cash: bool,
    pub chartist: bool,
    pub mood: bool,
}

impl ScenarioSpec {
    pub fn new(scenario_no: u8) -> Result<Self, ConfigError> {
        let &(pareto_cash, chartist, mood) =
            SCENARIO_TABLE.get(scenario_no as usize).ok_or_else(|| {
                ConfigError::invalid(format!("scenario {scenario_no} is not in 0..=7"))
            })?;
        Ok(Self {
            scenario_no,
            pareto_cash,
            chartist,
            mood,
        })
    }

    pub fn all() -> Vec<Self> {
        (0..SCENARIO_COUNT)
            .map(|n| Self::new(n).expect("in range"))
            .collect()
    }

    /// Parses `"all"` or a comma-separated list such as `"0,2"`.
    pub fn parse_list(text: &str) -> Result<Vec<Self>, ConfigError> {
        let text = text.trim();
        if text.eq_ignore_ascii_case("all") {
            return Ok(Self::all());
        }
        let mut out: Vec<Self> = Vec::new();
        for part in text.split(',') {
            let n: u8 = part
                .trim()
                .parse()
                .map_err(|_| ConfigError::invalid(format!("bad scenario number {part:?}")))?;
            let spec = Self::new(n)?;
            if !out.contains(&spec) {
                out.push(spec);
            }
        }
        if out.is_empty() {
            return Err(ConfigError::invalid("no scenarios selected"));
        }
        Ok(out)
    }
}

/// Candidate values searched per scenario. `lambda_m` holds actual values
/// (the table's ×10⁻³ column already scaled).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParameterGrid {
    pub uniform_cash: CashDistribution,
    pub pareto_cash: CashDistribution,
    pub lambda_c: Vec<f64>,
    pub lambda_m: Vec<f64>,
    pub nu: Vec<f64>,
    pub alpha: Vec<f64>,
}

impl Default for ParameterGrid {
    fn default() -> Self {
        Self {
            uniform_cash: CashDistribution::Uniform { c_max: 30_000.0 },
            pareto_cash: CashDistribution::Pareto {
                c_min: 5_000.0,
                beta: 1.5,
            },
            lambda_c: vec![0.0, 1.5, 1.75, 2.0, 2.25, 2.5],
            lambda_m: vec![0.0, 0.01e-3, 0.02e-3, 0.03e-3, 0.04e-3, 0.05e-3],
            nu: vec![0.3, 0.5, 0.7],
            alpha: vec![0.05, 0.1, 0.15, 0.2, 0.25, 0.3],
        }
    }
}

impl ParameterGrid {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !self.pareto_cash.is_pareto() || self.uniform_cash.is_pareto() {
            return Err(ConfigError::invalid(
                "grid.uniform_cash must be Uniform and grid.pareto_cash must be Pareto",
            ));
        }
        for (name, values) in [
            ("lambda_c", &self.lambda_c),
            ("lambda_m", &self.lambda_m),
            ("nu", &self.nu),
            ("alpha", &self.alpha),
        ] {
            if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(ConfigError::invalid(format!(
                    "grid.{name} values must be finite and non-negative"
                )));
            }
        }
        if self.alpha.is_empty() || self.alpha.iter().any(|a| *a <= 0.0) {
            return Err(ConfigError::invalid(
                "grid.alpha must be non-empty and positive",
            ));
        }
        if self.nu.iter().any(|v| *v > 1.0) {
            return Err(ConfigError::invalid("grid.nu values must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// The searched parameters of one grid point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComboParams {
    pub cash_dist: CashDistribution,
    pub lambda_c: f64,
    pub lambda_m: f64,
    pub nu: f64,
    pub alpha: f64,
}

impl ComboParams {
    /// `base` with the population parameters replaced by this combo.
    pub fn apply(&self, base: &SimulationConfig) -> SimulationConfig {
        let mut config = base.clone();
        let pop = &mut config.population;
        pop.cash_dist = self.cash_dist;
        pop.lambda_c = self.lambda_c;
        pop.lambda_m = self.lambda_m;
        pop.nu = self.nu;
        pop.alpha = self.alpha;
        config
    }
}

/// Cartesian product over the dimensions the scenario searches. Switched-off
/// components are pinned to Uniform cash, `lambda_c = 0`, `lambda_m = 0` and
/// `nu = 0`; switched-on ones use only the nonzero candidates. Order is
/// lexicographic in (cash, lambda_c, lambda_m, nu, alpha).
pub fn enumerate_combos(scenario: &ScenarioSpec, grid: &ParameterGrid) -> Vec<ComboParams> {
    let nonzero = |v: &[f64]| v.iter().copied().filter(|x| *x > 0.0).collect::<Vec<_>>();
    let cash = if scenario.pareto_cash {
        grid.pareto_cash
    } else {
        grid.uniform_cash
    };
    let lambda_c = if scenario.chartist {
        nonzero(&grid.lambda_c)
    } else {
        vec![0.0]
    };
    let (lambda_m, nu) = if scenario.mood {
        (nonzero(&grid.lambda_m), grid.nu.clone())
    } else {
        (vec![0.0], vec![0.0])
    };
    let mut out = Vec::new();
    for &lc in &lambda_c {
        for &lm in &lambda_m {
            for &v in &nu {
                for &a in &grid.alpha {
                    out.push(ComboParams {
                        cash_dist: cash,
                        lambda_c: lc,
                        lambda_m: lm,
                        nu: v,
                        alpha: a,
                    });
                }
            }
        }
    }
    out
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

fn hash_floats<'a>(hasher: &mut Sha256, values: impl IntoIterator<Item = &'a f64>) {
    for v in values {
        hasher.update(v.to_le_bytes());
    }
}

/// Per-minute transaction paths from which each trial draws one.
#[derive(Debug, Clone, PartialEq)]
pub struct PathPool {
    paths: Vec<TransactionPath>,
}

impl PathPool {
    pub fn new(paths: Vec<TransactionPath>) -> Result<Self, ConfigError> {
        if paths.is_empty() {
            return Err(ConfigError::invalid("transaction path pool is empty"));
        }
        Ok(Self { paths })
    }

    /// `size` synthetic paths drawn from `seed` on [`PATH_POOL_STREAM`].
    pub fn synthetic(size: usize, seed: u64, shape: PathShape) -> Result<Self, ConfigError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(PATH_POOL_STREAM);
        Self::new(
            (0..size)
                .map(|_| synthetic_reference_path(&mut rng, shape))
                .collect(),
        )
    }

    pub fn paths(&self) -> &[TransactionPath] {
        &self.paths
    }

    /// Path used by the trial with the given seed.
    pub fn for_trial(&self, trial_seed: u64) -> &TransactionPath {
        let mut rng = ChaCha8Rng::seed_from_u64(trial_seed);
        rng.set_stream(PATH_STREAM);
        &self.paths[rng.random_range(0..self.paths.len())]
    }

    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for p in &self.paths {
            hash_floats(&mut h, p.fractions());
        }
        hex(&h.finalize())
    }
}

/// Reference tail clouds and the Hill index of each underlying sample.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSet {
    pub clouds: Vec<PointCloud>,
    pub hills: Vec<f64>,
}

impl ReferenceSet {
    fn from_abs_returns(label: &str, abs: &[f64]) -> Result<(PointCloud, f64), MetricsError> {
        let k = default_k(abs.len());
        let hill = hill_index(abs, k)?.hill;
        Ok((build_tail_cloud(abs, k, label)?, hill))
    }

    /// `sets` clouds from standardized Student-t samples of size `samples`;
    /// set `m` uses stream `REFERENCE_STREAM + m` of `seed`.
    pub fn student_t(sets: usize, samples: usize, dof: f64, seed: u64) -> Result<Self, Error> {
        let dist = StudentT::new(dof)
            .map_err(|e| ConfigError::invalid(format!("Student-t degrees of freedom: {e}")))?;
        let built = (0..sets)
            .into_par_iter()
            .map(|m| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(REFERENCE_STREAM + m as u64);
                let xs: Vec<f64> = (0..samples).map(|_| dist.sample(&mut rng)).collect();
                let abs: Vec<f64> = standardize(&xs)?.iter().map(|x| x.abs()).collect();
                Self::from_abs_returns(&format!("student_t_{m}"), &abs)
            })
            .collect::<Result<Vec<_>, _>>()?;
        if built.is_empty() {
            return Err(MetricsError::NoReferences.into());
        }
        let (clouds, hills) = built.into_iter().unzip();
        Ok(Self { clouds, hills })
    }

    /// One cloud per dataset of bars: returns are pooled over days,
    /// standardized, and the tail cloud is cut down to `cloud_size` points by
    /// a draw fixed by `seed` and the dataset index.
    pub fn from_bars(
        datasets: &[(String, Vec<BarSeries>)],
        cloud_size: usize,
        seed: u64,
    ) -> Result<Self, Error> {
        if datasets.is_empty() {
            return Err(MetricsError::NoReferences.into());
        }
        let mut clouds = Vec::new();
        let mut hills = Vec::new();
        for (i, (label, days)) in datasets.iter().enumerate() {
            let returns: Vec<f64> = days.iter().flat_map(log_returns).collect();
            let abs: Vec<f64> = standardize(&returns)?.iter().map(|x| x.abs()).collect();
            let (cloud, hill) = Self::from_abs_returns(label, &abs)?;
            let cloud = if cloud.len() > cloud_size {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(SUBSAMPLE_STREAM + i as u64);
                subsample(&cloud, cloud_size, &mut rng)?
            } else {
                cloud
            };
            clouds.push(cloud);
            hills.push(hill);
        }
        Ok(Self { clouds, hills })
    }

    pub fn mean_hill(&self) -> f64 {
        mean_and_std(&self.hills).0
    }

    /// Mean OT between distinct reference clouds.
    pub fn pairwise(&self) -> Result<MeanOt, MetricsError> {
        pairwise_mean_ot(&self.clouds)
    }

    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for c in &self.clouds {
            h.update((c.dim as u64).to_le_bytes());
            h.update((c.points.len() as u64).to_le_bytes());
            hash_floats(&mut h, &c.points);
        }
        hex(&h.finalize())
    }
}

/// Bars and mood statistics of one non-degenerate trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    pub seed: u64,
    pub bars: BarSeries,
    pub returns: Vec<f64>,
    /// Executed volume of the minute each return ends in.
    pub volumes: Vec<f64>,
    pub trades: usize,
    pub mood_change_rate: f64,
}

/// Runs one trial; `None` when the simulation produced no trades.
pub fn run_trial(
    config: &SimulationConfig,
    seed: u64,
    paths: &PathPool,
) -> Result<Option<TrialOutcome>> {
    let mut config = config.clone();
    config.seed = seed;
    let out = run(&config)?;
    trial_outcome(&config, &out, paths)
}

fn trial_outcome(
    config: &SimulationConfig,
    out: &SimulationOutput,
    paths: &PathPool,
) -> Result<Option<TrialOutcome>> {
    if out.trades.is_empty() {
        return Ok(None);
    }
    let path = paths.for_trial(config.seed);
    let bars = assign_calendar_time(out, path, config.p0, format!("seed_{}", config.seed))?;
    let returns = log_returns(&bars);
    let volumes = bars.volumes[1..].to_vec();
    Ok(Some(TrialOutcome {
        seed: config.seed,
        returns,
        volumes,
        trades: out.trades.len(),
        mood_change_rate: daily_mood_change_rate(&out.optimists_rate)?,
        bars,
    }))
}

/// Pooled metrics of one parameter combination.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComboMetrics {
    pub hill: f64,
    pub k_used: usize,
    pub n_returns: usize,
    pub mean_ot: f64,
    pub ot_std: f64,
    pub per_reference_ot: Vec<f64>,
    pub n_trials: usize,
    pub n_degenerate: usize,
    pub unstable: bool,
    pub mean_trades: f64,
    pub mood_change_mean: f64,
    pub mood_change_std: f64,
    pub stylized: Option<StylizedFactReport>,
}

/// Pools the returns of `trials` (seeds `base_seed..base_seed + n_trials`),
/// standardizes them jointly and scores their tail against `refs`.
pub fn evaluate_combo(
    config: &SimulationConfig,
    n_trials: usize,
    base_seed: u64,
    refs: &ReferenceSet,
    paths: &PathPool,
) -> Result<ComboMetrics> {
    if n_trials == 0 {
        return Err(ConfigError::invalid("n_trials must be at least 1").into());
    }
    config.validate()?;
    let outcomes = (0..n_trials as u64)
        .into_par_iter()
        .map(|i| run_trial(config, base_seed + i, paths))
        .collect::<Result<Vec<_>>>()?;
    let live: Vec<TrialOutcome> = outcomes.into_iter().flatten().collect();
    let n_degenerate = n_trials - live.len();
    if live.is_empty() {
        return Err(Error::AllTrialsDegenerate(n_trials));
    }
    let pooled: Vec<f64> = live
        .iter()
        .flat_map(|t| t.returns.iter().copied())
        .collect();
    let abs: Vec<f64> = standardize(&pooled)?.iter().map(|x| x.abs()).collect();
    let k = default_k(abs.len());
    let tail = hill_index(&abs, k)?;
    let cloud = build_tail_cloud(&abs, k, "synthetic")?;
    let ot = mean_ot(&cloud, &refs.clouds)?;
    let segments: Vec<(&[f64], &[f64])> = live
        .iter()
        .map(|t| (t.returns.as_slice(), t.volumes.as_slice()))
        .collect();
    let moods: Vec<f64> = live.iter().map(|t| t.mood_change_rate).collect();
    let (mood_change_mean, mood_change_std) = mean_and_std(&moods);
    Ok(ComboMetrics {
        hill: tail.hill,
        k_used: tail.k_used,
        n_returns: tail.n_samples,
        mean_ot: ot.mean,
        ot_std: ot.std,
        per_reference_ot: ot.per_reference,
        n_trials,
        n_degenerate,
        unstable: n_degenerate as f64 > UNSTABLE_FRACTION * n_trials as f64,
        mean_trades: live.iter().map(|t| t.trades as f64).sum::<f64>() / live.len() as f64,
        mood_change_mean,
        mood_change_std,
        stylized: stylized_facts_segmented(&segments).ok(),
    })
}

/// Evaluation result of one combo, or why it could not be scored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComboOutcome {
    Evaluated(ComboMetrics),
    Failed { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComboRecord {
    pub scenario_no: u8,
    pub combo_index: usize,
    pub combo_hash: String,
    pub params: ComboParams,
    pub outcome: ComboOutcome,
}

impl ComboRecord {
    pub fn metrics(&self) -> Option<&ComboMetrics> {
        match &self.outcome {
            ComboOutcome::Evaluated(m) => Some(m),
            ComboOutcome::Failed { .. } => None,
        }
    }

    /// Scored, stable and with a finite mean OT.
    pub fn eligible(&self) -> bool {
        self.metrics()
            .is_some_and(|m| !m.unstable && m.mean_ot.is_finite())
    }
}

/// Minimum mean OT among eligible records; ties go to the Hill index closer
/// to 3, then to the lower combo index.
pub fn select_best(records: &[ComboRecord]) -> Option<&ComboRecord> {
    records.iter().filter(|r| r.eligible()).min_by(|a, b| {
        let (ma, mb) = (
            a.metrics().expect("eligible"),
            b.metrics().expect("eligible"),
        );
        ma.mean_ot
            .total_cmp(&mb.mean_ot)
            .then(
                (ma.hill - TARGET_HILL)
                    .abs()
                    .total_cmp(&(mb.hill - TARGET_HILL).abs()),
            )
            .then(a.combo_index.cmp(&b.combo_index))
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub scenario_no: u8,
    pub best: ComboRecord,
    pub n_trials: usize,
    pub per_combo_table: Vec<ComboRecord>,
}

impl CalibrationResult {
    pub fn best_params(&self) -> &ComboParams {
        &self.best.params
    }

    pub fn best_metrics(&self) -> &ComboMetrics {
        self.best.metrics().expect("best record is evaluated")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LedgerKey {
    pub scenario_no: u8,
    pub combo_hash: String,
    pub base_seed: u64,
    pub n_trials: usize,
}

#[derive(Serialize, Deserialize)]
struct LedgerLine {
    key: LedgerKey,
    record: ComboRecord,
}

/// Append-only JSON-lines record of finished combos.
#[derive(Debug)]
pub struct Ledger {
    path: PathBuf,
    entries: HashMap<LedgerKey, ComboRecord>,
    file: Mutex<File>,
}

impl Ledger {
    /// Opens `path`. With `resume`, existing entries are loaded (a truncated
    /// final line from an interrupted run is dropped); otherwise the file is
    /// started afresh.
    pub fn open(path: &Path, resume: bool) -> Result<Self, DataError> {
        let label = path.display().to_string();
        let io = |source| DataError::Io {
            path: label.clone(),
            source,
        };
        let mut entries = HashMap::new();
        let mut valid_len = 0u64;
        if resume && path.exists() {
            let reader = BufReader::new(File::open(path).map_err(io)?);
            let lines: Vec<String> = reader.lines().collect::<Result<_, _>>().map_err(io)?;
            let n = lines.len();
            for (i, line) in lines.iter().enumerate() {
                if line.trim().is_empty() {
                    valid_len += line.len() as u64 + 1;
                    continue;
                }
                match serde_json::from_str::<LedgerLine>(line) {
                    Ok(entry) => {
                        entries.insert(entry.key, entry.record);
                        valid_len += line.len() as u64 + 1;
                    }
                    Err(_) if i + 1 == n => break,
                    Err(e) => {
                        return Err(DataError::Malformed {
                            path: label.clone(),
                            row: i + 1,
                            column: e.column(),
                            message: e.to_string(),
                        })
                    }
                }
            }
        }
        let file = OpenOptions::new()
            .create(true)
            .write(true)
            .truncate(false)
            .open(path)
            .map_err(io)?;
        file.set_len(valid_len).map_err(io)?;
        let mut file = file;
        std::io::Seek::seek(&mut file, std::io::SeekFrom::End(0)).map_err(io)?;
        Ok(Self {
            path: path.to_path_buf(),
            entries,
            file: Mutex::new(file),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, key: &LedgerKey) -> Option<&ComboRecord> {
        self.entries.get(key)
    }

    pub fn append(&self, key: &LedgerKey, record: &ComboRecord) -> Result<(), DataError> {
        let line = serde_json::to_string(&LedgerLine {
            key: key.clone(),
            record: record.clone(),
        })
        .map_err(|source| DataError::Json {
            path: self.path.display().to_string(),
            source,
        })?;
        let mut file = self.file.lock().expect("ledger lock");
        writeln!(file, "{line}")
            .and_then(|_| file.flush())
            .map_err(|source| DataError::Io {
                path: self.path.display().to_string(),
                source,
            })
    }
}

/// Everything shared by the combos of one experiment.
pub struct Evaluator<'a> {
    pub base: &'a SimulationConfig,
    pub n_trials: usize,
    pub base_seed: u64,
    pub refs: &'a ReferenceSet,
    pub paths: &'a PathPool,
    pub ledger: Option<&'a Ledger>,
    context_digest: String,
}

impl<'a> Evaluator<'a> {
    pub fn new(
        base: &'a SimulationConfig,
        n_trials: usize,
        base_seed: u64,
        refs: &'a ReferenceSet,
        paths: &'a PathPool,
        ledger: Option<&'a Ledger>,
    ) -> Result<Self, ConfigError> {
        if n_trials == 0 {
            return Err(ConfigError::invalid("n_trials must be at least 1"));
        }
        base.validate()?;
        let context_digest = sha256_hex(format!("{}:{}", refs.digest(), paths.digest()).as_bytes());
        Ok(Self {
            base,
            n_trials,
            base_seed,
            refs,
            paths,
            ledger,
            context_digest,
        })
    }

    /// Hash of the resolved combo config (seed excluded) together with the
    /// reference clouds and path pool it is scored against.
    pub fn combo_hash(&self, params: &ComboParams) -> String {
        let mut config = params.apply(self.base);
        config.seed = 0;
        let json = serde_json::to_string(&config).expect("config serializes");
        sha256_hex(format!("{json}|{}", self.context_digest).as_bytes())
    }

    fn evaluate_record(
        &self,
        scenario_no: u8,
        combo_index: usize,
        params: ComboParams,
    ) -> Result<ComboRecord> {
        let combo_hash = self.combo_hash(&params);
        let key = LedgerKey {
            scenario_no,
            combo_hash: combo_hash.clone(),
            base_seed: self.base_seed,
            n_trials: self.n_trials,
        };
        if let Some(found) = self.ledger.and_then(|l| l.get(&key)) {
            let mut record = found.clone();
            record.combo_index = combo_index;
            return Ok(record);
        }
        let config = params.apply(self.base);
        let outcome = match evaluate_combo(
            &config,
            self.n_trials,
            self.base_seed,
            self.refs,
            self.paths,
        ) {
            Ok(m) => ComboOutcome::Evaluated(m),
            Err(e @ (Error::AllTrialsDegenerate(_) | Error::Metrics(_) | Error::Timegrid(_))) => {
                ComboOutcome::Failed {
                    reason: e.to_string(),
                }
            }
            Err(e) => return Err(e),
        };
        let record = ComboRecord {
            scenario_no,
            combo_index,
            combo_hash,
            params,
            outcome,
        };
        if let Some(ledger) = self.ledger {
            ledger.append(&key, &record)?;
        }
        Ok(record)
    }

    /// Scores every combo of `scenario` (ledger hits are reused).
    pub fn evaluate_all(
        &self,
        scenario: &ScenarioSpec,
        grid: &ParameterGrid,
    ) -> Result<Vec<ComboRecord>> {
        enumerate_combos(scenario, grid)
            .into_par_iter()
            .enumerate()
            .map(|(i, p)| self.evaluate_record(scenario.scenario_no, i, p))
            .collect()
    }

    pub fn calibrate(
        &self,
        scenario: &ScenarioSpec,
        grid: &ParameterGrid,
    ) -> Result<CalibrationResult> {
        let per_combo_table = self.evaluate_all(scenario, grid)?;
        let best = select_best(&per_combo_table)
            .cloned()
            .ok_or(Error::NoStableCombination(scenario.scenario_no))?;
        Ok(CalibrationResult {
            scenario_no: scenario.scenario_no,
            best,
            n_trials: self.n_trials,
            per_combo_table,
        })
    }

    /// Calibrates each scenario and assembles the summary tables.
    pub fn experiment_suite(
        &self,
        scenarios: &[ScenarioSpec],
        grid: &ParameterGrid,
    ) -> Result<ExperimentReport> {
        let results = scenarios
            .iter()
            .map(|s| self.calibrate(s, grid))
            .collect::<Result<Vec<_>>>()?;
        let pairwise = self.refs.pairwise().ok();
        let reference = ReferenceRow {
            hill: self.refs.mean_hill(),
            mean_ot: pairwise.as_ref().map(|p| p.mean),
            ot_std: pairwise.as_ref().map(|p| p.std),
            n_sets: self.refs.clouds.len(),
        };
        let hill_of = |n: u8| {
            results
                .iter()
                .find(|r| r.scenario_no == n)
                .map(|r| r.best_metrics().hill)
        };
        let synergy = match (hill_of(0), hill_of(1), hill_of(2), hill_of(4)) {
            (Some(z0), Some(z1), Some(z2), Some(z4)) => Some(Synergy::new(z0, z1, z2, z4)),
            _ => None,
        };
        Ok(ExperimentReport {
            table2: results.iter().map(Table2Row::from_result).collect(),
            table4: results.iter().map(Table4Row::from_result).collect(),
            reference,
            synergy,
            results,
        })
    }

    /// Hill index against `lambda_c` for scenarios 2 and 4 and the additive
    /// prediction built from scenarios 0, 1 and 2, each aggregated over the
    /// remaining searched parameters.
    pub fn sweep_lambda_c(&self, grid: &ParameterGrid) -> Result<Vec<SweepRow>> {
        let spec = |n| ScenarioSpec::new(n).expect("in range");
        let s0 = self.evaluate_all(&spec(0), grid)?;
        let s1 = self.evaluate_all(&spec(1), grid)?;
        let s2 = self.evaluate_all(&spec(2), grid)?;
        let s4 = self.evaluate_all(&spec(4), grid)?;
        let by_alpha = |records: &[ComboRecord], alpha: f64| {
            records
                .iter()
                .find(|r| r.params.alpha == alpha)
                .and_then(|r| r.metrics())
                .map(|m| m.hill)
        };
        let mut rows = Vec::new();
        for lc in grid.lambda_c.iter().copied().filter(|x| *x > 0.0) {
            let at = |records: &[ComboRecord]| -> Vec<ComboRecord> {
                records
                    .iter()
                    .filter(|r| r.params.lambda_c == lc)
                    .cloned()
                    .collect()
            };
            let (r2, r4) = (at(&s2), at(&s4));
            let hills = |records: &[ComboRecord]| -> Vec<f64> {
                records
                    .iter()
                    .filter_map(|r| r.metrics())
                    .map(|m| m.hill)
                    .collect()
            };
            let theory: Vec<f64> = grid
                .alpha
                .iter()
                .filter_map(|&a| {
                    Some(theoretical_hill(
                        by_alpha(&s0, a)?,
                        by_alpha(&s1, a)?,
                        by_alpha(&r2, a)?,
                    ))
                })
                .collect();
            for (series, values) in [
                (SweepSeries::Scenario2, hills(&r2)),
                (SweepSeries::Scenario4, hills(&r4)),
                (SweepSeries::Theoretical, theory),
            ] {
                let (mean, std) = if values.is_empty() {
                    (f64::NAN, f64::NAN)
                } else {
                    mean_and_std(&values)
                };
                rows.push(SweepRow {
                    lambda_c: lc,
                    series,
                    hill_mean: mean,
                    hill_std: std,
                    n_combos: values.len(),
                });
            }
        }
        Ok(rows)
    }
}

/// Observed Hill index of scenario 4 against the additive prediction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Synergy {
    pub z0: f64,
    pub z1: f64,
    pub z2: f64,
    pub theoretical: f64,
    pub observed: f64,
    /// Observed lower than the additive prediction.
    pub synergistic: bool,
}

impl Synergy {
    pub fn new(z0: f64, z1: f64, z2: f64, observed: f64) -> Self {
        let theoretical = theoretical_hill(z0, z1, z2);
        Self {
            z0,
            z1,
            z2,
            theoretical,
            observed,
            synergistic: observed < theoretical,
        }
    }
}

fn cash_label(cash: &CashDistribution) -> &'static str {
    if cash.is_pareto() {
        "Pareto"
    } else {
        "U"
    }
}

/// Selected parameters and tail metrics of one scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table2Row {
    pub scenario_no: u8,
    pub cash: String,
    pub lambda_c: f64,
    /// `lambda_m` in units of 10⁻³.
    pub lambda_m_e3: f64,
    pub nu: f64,
    pub alpha: f64,
    pub hill: f64,
    pub mean_ot: f64,
    pub ot_std: f64,
    pub n_trials: usize,
    pub n_degenerate: usize,
    pub mood_change_mean: f64,
    pub mood_change_std: f64,
    pub n_combos: usize,
}

impl Table2Row {
    pub const HEADER: [&'static str; 14] = [
        "scenario",
        "cash",
        "lambda_c",
        "lambda_m_e3",
        "nu",
        "alpha",
        "hill",
        "mean_ot",
        "ot_std",
        "n_trials",
        "n_degenerate",
        "mood_change_mean",
        "mood_change_std",
        "n_combos",
    ];

    pub fn from_result(r: &CalibrationResult) -> Self {
        let p = r.best_params();
        let m = r.best_metrics();
        Self {
            scenario_no: r.scenario_no,
            cash: cash_label(&p.cash_dist).to_string(),
            lambda_c: p.lambda_c,
            lambda_m_e3: p.lambda_m * 1e3,
            nu: p.nu,
            alpha: p.alpha,
            hill: m.hill,
            mean_ot: m.mean_ot,
            ot_std: m.ot_std,
            n_trials: m.n_trials,
            n_degenerate: m.n_degenerate,
            mood_change_mean: m.mood_change_mean,
            mood_change_std: m.mood_change_std,
            n_combos: r.per_combo_table.len(),
        }
    }

    pub fn record(&self) -> Vec<String> {
        vec![
            self.scenario_no.to_string(),
            self.cash.clone(),
            self.lambda_c.to_string(),
            self.lambda_m_e3.to_string(),
            self.nu.to_string(),
            self.alpha.to_string(),
            self.hill.to_string(),
            self.mean_ot.to_string(),
            self.ot_std.to_string(),
            self.n_trials.to_string(),
            self.n_degenerate.to_string(),
            self.mood_change_mean.to_string(),
            self.mood_change_std.to_string(),
            self.n_combos.to_string(),
        ]
    }
}

/// Stylized facts of a scenario's selected combo; NaN where undefined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table4Row {
    pub scenario_no: u8,
    pub kurtosis: f64,
    pub hill: f64,
    pub vol_volume_corr: f64,
    pub gamma_1: f64,
    pub gamma_10: f64,
    pub gamma_20: f64,
    pub gamma_30: f64,
}

impl Table4Row {
    pub const HEADER: [&'static str; 8] = [
        "scenario", "kurtosis", "hill", "rho", "gamma_1", "gamma_10", "gamma_20", "gamma_30",
    ];

    pub fn from_result(r: &CalibrationResult) -> Self {
        let m = r.best_metrics();
        let sf = m.stylized.as_ref();
        let gamma = |lag: usize| {
            sf.and_then(|s| s.abs_autocorr.get(&lag).copied())
                .unwrap_or(f64::NAN)
        };
        Self {
            scenario_no: r.scenario_no,
            kurtosis: sf.map_or(f64::NAN, |s| s.kurtosis),
            hill: m.hill,
            vol_volume_corr: sf.map_or(f64::NAN, |s| s.vol_volume_corr),
            gamma_1: gamma(1),
            gamma_10: gamma(10),
            gamma_20: gamma(20),
            gamma_30: gamma(30),
        }
    }

    pub fn record(&self) -> Vec<String> {
        [
            self.kurtosis,
            self.hill,
            self.vol_volume_corr,
            self.gamma_1,
            self.gamma_10,
            self.gamma_20,
            self.gamma_30,
        ]
        .iter()
        .fold(vec![self.scenario_no.to_string()], |mut acc, v| {
            acc.push(v.to_string());
            acc
        })
    }
}

/// Statistics of the reference clouds themselves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceRow {
    pub hill: f64,
    /// Mean OT over distinct reference pairs; absent with one reference.
    pub mean_ot: Option<f64>,
    pub ot_std: Option<f64>,
    pub n_sets: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub table2: Vec<Table2Row>,
    pub table4: Vec<Table4Row>,
    pub reference: ReferenceRow,
    pub synergy: Option<Synergy>,
    pub results: Vec<CalibrationResult>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepSeries {
    Scenario2,
    Scenario4,
    Theoretical,
}

impl SweepSeries {
    pub fn label(self) -> &'static str {
        match self {
            SweepSeries::Scenario2 => "scenario_2",
            SweepSeries::Scenario4 => "scenario_4",
            SweepSeries::Theoretical => "theoretical",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub lambda_c: f64,
    pub series: SweepSeries,
    pub hill_mean: f64,
    pub hill_std: f64,
    pub n_combos: usize,
}

/// One minute of a trial's return and optimists-rate series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MoodReturnPoint {
    pub minute: usize,
    pub log_return: f64,
    /// Optimists' share at the step of the minute's closing trade.
    pub optimists_rate: f64,
}

/// Per-minute returns of one trial next to the optimists' share at the
/// trade each bar was sampled from.
pub fn mood_return_series(
    config: &SimulationConfig,
    paths: &PathPool,
) -> Result<Vec<MoodReturnPoint>> {
    let out = run(config)?;
    if out.trades.is_empty() {
        return Err(Error::AllTrialsDegenerate(1));
    }
    let path = paths.for_trial(config.seed);
    let bars = assign_calendar_time(&out, path, config.p0, "fig")?;
    let returns = log_returns(&bars);
    let indices = bar_trade_indices(path, out.trades.len());
    let initial = out.optimists_rate.first().copied().unwrap_or(f64::NAN);
    Ok(returns
        .iter()
        .enumerate()
        .map(|(i, &r)| {
            let idx = indices[i + 1];
            let rate = if idx == 0 {
                initial
            } else {
                out.optimists_rate[out.trades[idx - 1].step as usize - 1]
            };
            MoodReturnPoint {
                minute: i + 1,
                log_return: r,
                optimists_rate: rate,
            }
        })
        .collect())
}
