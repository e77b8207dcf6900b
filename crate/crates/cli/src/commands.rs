use std::path::{Path, PathBuf};

use lobfactor_core::calibration::{
    mood_return_series, ComboRecord, Evaluator, ExperimentReport, Ledger, PathPool, ReferenceRow,
    ReferenceSet, ScenarioSpec, SweepRow, Synergy, Table2Row, Table4Row,
};
use lobfactor_core::engine::run;
use lobfactor_core::error::Error;
use lobfactor_core::metrics::{
    build_tail_cloud, default_k, hill_index, mean_ot, standardize, stylized_facts_segmented,
    StylizedFactReport,
};
use lobfactor_core::timegrid::{
    assign_calendar_time, log_returns, read_bars_file, read_count_paths_file, read_volumes_file,
    write_bars_file, write_volumes_csv, BarSeries,
};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::manifest::{RunManifest, SeedRange};
use crate::CliError;

pub const TICKS_FILE: &str = "ticks.csv";
pub const BARS_FILE: &str = "bars.csv";
pub const VOLUMES_FILE: &str = "volumes.csv";
pub const METRICS_JSON: &str = "metrics.json";
pub const METRICS_CSV: &str = "metrics.csv";
pub const RESULTS_FILE: &str = "results.csv";
pub const LEDGER_FILE: &str = "ledger.jsonl";
pub const TABLE2_FILE: &str = "table2.csv";
pub const TABLE4_FILE: &str = "table4.csv";
pub const REPORT_FILE: &str = "experiment.json";
pub const SWEEP_FILE: &str = "fig5_lambda_c.csv";

pub const RESULTS_HEADER: [&str; 27] = [
    "scenario",
    "combo_index",
    "combo_hash",
    "cash",
    "lambda_c",
    "lambda_m_e3",
    "nu",
    "alpha",
    "status",
    "hill",
    "k_used",
    "n_returns",
    "mean_ot",
    "ot_std",
    "n_trials",
    "n_degenerate",
    "unstable",
    "mean_trades",
    "mood_change_mean",
    "mood_change_std",
    "kurtosis",
    "rho",
    "gamma_1",
    "gamma_10",
    "gamma_20",
    "gamma_30",
    "reason",
];

pub const METRICS_HEADER: [&str; 8] = [
    "path",
    "n_days",
    "n_returns",
    "k_used",
    "hill",
    "mean_ot",
    "ot_std",
    "kurtosis",
];

pub const SWEEP_HEADER: [&str; 5] = ["lambda_c", "series", "hill_mean", "hill_std", "n_combos"];
pub const MOOD_HEADER: [&str; 3] = ["minute", "log_return", "optimists_rate"];

/// Runs `f` on a pool of `workers` threads, or the global pool when `None`.
pub fn with_workers<T: Send>(
    workers: Option<usize>,
    f: impl FnOnce() -> T + Send,
) -> Result<T, CliError> {
    match workers {
        None => Ok(f()),
        Some(0) => Err(CliError::Config("--workers must be positive".into())),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::Runtime(e.to_string()))?;
            Ok(pool.install(f))
        }
    }
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::output(dir, e))
}

fn write_csv<I, R>(path: &Path, header: &[&str], rows: I) -> Result<(), CliError>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let err = |e: csv::Error| CliError::output(path, e);
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    w.write_record(header).map_err(err)?;
    for row in rows {
        w.write_record(row).map_err(err)?;
    }
    w.flush().map_err(|e| CliError::output(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::output(path, e))?;
    std::fs::write(path, text + "\n").map_err(|e| CliError::output(path, e))
}

/// Count-file paths when given, else the configured synthetic pool.
fn path_pool(
    config: &RunConfig,
    files: &[PathBuf],
    manifest: &mut RunManifest,
) -> Result<PathPool, CliError> {
    if files.is_empty() {
        let s = &config.experiment;
        return Ok(PathPool::synthetic(
            s.path_pool_size,
            s.path_seed,
            s.path_shape,
        )?);
    }
    let mut paths = Vec::new();
    for f in files {
        paths.extend(read_count_paths_file(f)?);
        manifest.add_input(f)?;
    }
    PathPool::new(paths).map_err(|e| CliError::Data(e.to_string()))
}

fn reference_set(
    config: &RunConfig,
    files: &[PathBuf],
    manifest: &mut RunManifest,
) -> Result<ReferenceSet, CliError> {
    let s = &config.experiment;
    if files.is_empty() {
        return Ok(ReferenceSet::student_t(
            s.reference_sets,
            s.reference_samples,
            s.reference_dof,
            s.reference_seed,
        )?);
    }
    let mut datasets = Vec::new();
    for f in files {
        datasets.push((f.display().to_string(), read_bars_file(f)?));
        manifest.add_input(f)?;
    }
    Ok(ReferenceSet::from_bars(
        &datasets,
        s.reference_cloud_size,
        s.reference_seed,
    )?)
}

#[derive(Debug, Clone)]
pub struct SimulateOutputs {
    pub manifest: RunManifest,
    pub n_trades: usize,
}

/// One trial: event-time ticks, one-minute bars and volumes, and a manifest.
pub fn cmd_simulate(
    config: &RunConfig,
    paths: &[PathBuf],
    out: &Path,
    command: &str,
) -> Result<SimulateOutputs, CliError> {
    create_dir(out)?;
    let seed = config.base_seed();
    let mut manifest = RunManifest::new(
        command,
        config,
        SeedRange {
            first: seed,
            last: seed,
        },
    );
    let pool = path_pool(config, paths, &mut manifest)?;
    let sim = run(&config.simulation)?;

    let ticks = out.join(TICKS_FILE);
    sim.write_ticks_file(&ticks)
        .map_err(|e| CliError::output(&ticks, e))?;
    manifest.add_output(&ticks);
    if sim.trades.is_empty() {
        manifest.write(out)?;
        return Err(CliError::Degenerate(format!(
            "seed {seed} produced no trades"
        )));
    }

    let bars = assign_calendar_time(
        &sim,
        pool.for_trial(seed),
        config.simulation.p0,
        format!("seed_{seed}"),
    )
    .map_err(Error::from)?;
    let bars_path = out.join(BARS_FILE);
    write_bars_file(std::slice::from_ref(&bars), &bars_path)
        .map_err(|e| CliError::output(&bars_path, e))?;
    manifest.add_output(&bars_path);
    let volumes_path = out.join(VOLUMES_FILE);
    let file =
        std::fs::File::create(&volumes_path).map_err(|e| CliError::output(&volumes_path, e))?;
    write_volumes_csv(std::slice::from_ref(&bars), std::io::BufWriter::new(file))
        .map_err(|e| CliError::output(&volumes_path, e))?;
    manifest.add_output(&volumes_path);

    manifest.write(out)?;
    Ok(SimulateOutputs {
        manifest,
        n_trades: sim.trades.len(),
    })
}

#[derive(Debug, Clone, Default)]
pub struct MetricsArgs {
    pub bars: Vec<PathBuf>,
    pub refs: Vec<PathBuf>,
    /// Per-minute volumes aligned with `bars`; enables stylized facts.
    pub volumes: Vec<PathBuf>,
    /// Overrides the default tail size of 5 % of the returns.
    pub tail_k: Option<usize>,
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BarsMetrics {
    pub path: String,
    pub n_days: usize,
    pub n_returns: usize,
    pub k_used: usize,
    pub hill: f64,
    pub mean_ot: f64,
    pub ot_std: f64,
    pub per_reference_ot: Vec<f64>,
    pub stylized: Option<StylizedFactReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceSummary {
    /// `student_t` or `bars`.
    pub source: String,
    pub n_sets: usize,
    pub mean_hill: f64,
    pub cloud_sizes: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsReport {
    pub inputs: Vec<BarsMetrics>,
    pub reference: ReferenceSummary,
}

fn attach_volumes(bars: &mut [BarSeries], path: &Path) -> Result<(), CliError> {
    let rows = read_volumes_file(path)?;
    if rows.len() != bars.len() {
        return Err(CliError::Data(format!(
            "{}: {} volume rows for {} bar rows",
            path.display(),
            rows.len(),
            bars.len()
        )));
    }
    for (i, (b, (day, v))) in bars.iter_mut().zip(rows).enumerate() {
        if b.day_id != day {
            return Err(CliError::Data(format!(
                "{}: row {}: day_id {day:?} does not match bars day_id {:?}",
                path.display(),
                i + 1,
                b.day_id
            )));
        }
        b.volumes = v;
    }
    Ok(())
}

/// Tail and stylized-fact metrics of each bars file against the references.
pub fn cmd_metrics(
    config: &RunConfig,
    args: &MetricsArgs,
    command: &str,
) -> Result<MetricsReport, CliError> {
    if args.bars.is_empty() {
        return Err(CliError::Config(
            "at least one bars file is required".into(),
        ));
    }
    if !args.volumes.is_empty() && args.volumes.len() != args.bars.len() {
        return Err(CliError::Config(
            "give one volumes file per bars file, or none".into(),
        ));
    }
    create_dir(&args.out)?;
    let seed = config.experiment.reference_seed;
    let mut manifest = RunManifest::new(
        command,
        config,
        SeedRange {
            first: seed,
            last: seed,
        },
    );
    let refs = reference_set(config, &args.refs, &mut manifest)?;

    let mut inputs = Vec::new();
    for (i, path) in args.bars.iter().enumerate() {
        let mut days = read_bars_file(path)?;
        manifest.add_input(path)?;
        if let Some(vp) = args.volumes.get(i) {
            attach_volumes(&mut days, vp)?;
            manifest.add_input(vp)?;
        }
        let per_day: Vec<Vec<f64>> = days.iter().map(log_returns).collect();
        let pooled: Vec<f64> = per_day.iter().flatten().copied().collect();
        let abs: Vec<f64> = standardize(&pooled)?.iter().map(|x| x.abs()).collect();
        let k = args.tail_k.unwrap_or_else(|| default_k(abs.len()));
        let tail = hill_index(&abs, k)?;
        let cloud = build_tail_cloud(&abs, k, &path.display().to_string())?;
        let ot = mean_ot(&cloud, &refs.clouds)?;
        let stylized = if args.volumes.is_empty() {
            None
        } else {
            let segments: Vec<(&[f64], &[f64])> = per_day
                .iter()
                .zip(&days)
                .map(|(r, d)| (r.as_slice(), &d.volumes[1..]))
                .collect();
            Some(stylized_facts_segmented(&segments)?)
        };
        inputs.push(BarsMetrics {
            path: path.display().to_string(),
            n_days: days.len(),
            n_returns: pooled.len(),
            k_used: tail.k_used,
            hill: tail.hill,
            mean_ot: ot.mean,
            ot_std: ot.std,
            per_reference_ot: ot.per_reference,
            stylized,
        });
    }
    let report = MetricsReport {
        inputs,
        reference: ReferenceSummary {
            source: if args.refs.is_empty() {
                "student_t"
            } else {
                "bars"
            }
            .to_string(),
            n_sets: refs.clouds.len(),
            mean_hill: refs.mean_hill(),
            cloud_sizes: refs.clouds.iter().map(|c| c.len()).collect(),
        },
    };

    let json = args.out.join(METRICS_JSON);
    write_json(&json, &report)?;
    manifest.add_output(&json);
    let csv_path = args.out.join(METRICS_CSV);
    write_csv(
        &csv_path,
        &METRICS_HEADER,
        report.inputs.iter().map(|m| {
            vec![
                m.path.clone(),
                m.n_days.to_string(),
                m.n_returns.to_string(),
                m.k_used.to_string(),
                m.hill.to_string(),
                m.mean_ot.to_string(),
                m.ot_std.to_string(),
                m.stylized
                    .as_ref()
                    .map_or(String::new(), |s| s.kurtosis.to_string()),
            ]
        }),
    )?;
    manifest.add_output(&csv_path);
    manifest.write(&args.out)?;
    Ok(report)
}

#[derive(Debug, Clone)]
pub struct ExperimentArgs {
    pub scenarios: Vec<ScenarioSpec>,
    pub refs: Vec<PathBuf>,
    pub paths: Vec<PathBuf>,
    pub out: PathBuf,
    pub resume: bool,
    /// Also evaluate scenarios 0, 1, 2 and 4 for the λᶜ sweep table.
    pub sweep: bool,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutputs {
    pub report: ExperimentReport,
    pub sweep: Option<Vec<SweepRow>>,
    pub manifest: RunManifest,
}

/// Summary file written for each calibrated scenario.
pub fn summary_file(scenario_no: u8) -> String {
    format!("summary_s{scenario_no}.json")
}

pub fn mood_file(scenario_no: u8) -> String {
    format!("fig4_mood_returns_s{scenario_no}.csv")
}

fn results_row(r: &ComboRecord) -> Vec<String> {
    let p = &r.params;
    let mut row = vec![
        r.scenario_no.to_string(),
        r.combo_index.to_string(),
        r.combo_hash.clone(),
        if p.cash_dist.is_pareto() {
            "Pareto"
        } else {
            "U"
        }
        .to_string(),
        p.lambda_c.to_string(),
        (p.lambda_m * 1e3).to_string(),
        p.nu.to_string(),
        p.alpha.to_string(),
    ];
    match r.metrics() {
        Some(m) => {
            let sf = m.stylized.as_ref();
            let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
            let gamma = |lag: usize| opt(sf.and_then(|s| s.abs_autocorr.get(&lag).copied()));
            row.extend([
                if m.unstable { "unstable" } else { "ok" }.to_string(),
                m.hill.to_string(),
                m.k_used.to_string(),
                m.n_returns.to_string(),
                m.mean_ot.to_string(),
                m.ot_std.to_string(),
                m.n_trials.to_string(),
                m.n_degenerate.to_string(),
                m.unstable.to_string(),
                m.mean_trades.to_string(),
                m.mood_change_mean.to_string(),
                m.mood_change_std.to_string(),
                opt(sf.map(|s| s.kurtosis)),
                opt(sf.map(|s| s.vol_volume_corr)),
                gamma(1),
                gamma(10),
                gamma(20),
                gamma(30),
                String::new(),
            ]);
        }
        None => {
            row.push("failed".to_string());
            row.extend(std::iter::repeat_n(String::new(), 17));
            if let lobfactor_core::calibration::ComboOutcome::Failed { reason } = &r.outcome {
                row.push(reason.clone());
            }
        }
    }
    row
}

#[derive(Serialize)]
struct ReportFile<'a> {
    scenarios: Vec<u8>,
    n_trials: usize,
    base_seed: u64,
    reference: &'a ReferenceRow,
    synergy: &'a Option<Synergy>,
    table2: &'a [Table2Row],
    table4: &'a [Table4Row],
}

/// Grid-search calibration of each scenario with result tables, plot data
/// and a resumable ledger under `args.out`.
pub fn cmd_experiment(
    config: &RunConfig,
    args: &ExperimentArgs,
    command: &str,
) -> Result<ExperimentOutputs, CliError> {
    if args.scenarios.is_empty() {
        return Err(CliError::Config("no scenarios selected".into()));
    }
    create_dir(&args.out)?;
    let n_trials = config.experiment.trials;
    let base_seed = config.base_seed();
    let last = base_seed
        .checked_add(n_trials as u64 - 1)
        .ok_or_else(|| CliError::Config("seed range overflows u64".into()))?;
    let mut manifest = RunManifest::new(
        command,
        config,
        SeedRange {
            first: base_seed,
            last,
        },
    );
    let refs = reference_set(config, &args.refs, &mut manifest)?;
    let pool = path_pool(config, &args.paths, &mut manifest)?;
    let ledger_path = args.out.join(LEDGER_FILE);
    let ledger = Ledger::open(&ledger_path, args.resume)?;
    let evaluator = Evaluator::new(
        &config.simulation,
        n_trials,
        base_seed,
        &refs,
        &pool,
        Some(&ledger),
    )?;

    let report = evaluator.experiment_suite(&args.scenarios, &config.grid)?;
    let sweep = if args.sweep {
        Some(evaluator.sweep_lambda_c(&config.grid)?)
    } else {
        None
    };
    let out = &args.out;
    manifest.add_output(&ledger_path);

    let results_path = out.join(RESULTS_FILE);
    write_csv(
        &results_path,
        &RESULTS_HEADER,
        report
            .results
            .iter()
            .flat_map(|r| r.per_combo_table.iter().map(results_row)),
    )?;
    manifest.add_output(&results_path);

    for r in &report.results {
        let p = out.join(summary_file(r.scenario_no));
        write_json(&p, r)?;
        manifest.add_output(&p);
    }

    let t2 = out.join(TABLE2_FILE);
    write_csv(
        &t2,
        &Table2Row::HEADER,
        report.table2.iter().map(Table2Row::record),
    )?;
    manifest.add_output(&t2);
    let t4 = out.join(TABLE4_FILE);
    write_csv(
        &t4,
        &Table4Row::HEADER,
        report.table4.iter().map(Table4Row::record),
    )?;
    manifest.add_output(&t4);

    let summary = out.join(REPORT_FILE);
    write_json(
        &summary,
        &ReportFile {
            scenarios: args.scenarios.iter().map(|s| s.scenario_no).collect(),
            n_trials,
            base_seed,
            reference: &report.reference,
            synergy: &report.synergy,
            table2: &report.table2,
            table4: &report.table4,
        },
    )?;
    manifest.add_output(&summary);

    if let Some(rows) = &sweep {
        let p = out.join(SWEEP_FILE);
        write_csv(
            &p,
            &SWEEP_HEADER,
            rows.iter().map(|r| {
                vec![
                    r.lambda_c.to_string(),
                    r.series.label().to_string(),
                    r.hill_mean.to_string(),
                    r.hill_std.to_string(),
                    r.n_combos.to_string(),
                ]
            }),
        )?;
        manifest.add_output(&p);
    }

    // Return and optimists-rate series of the first non-degenerate trial of
    // each calibrated mood scenario.
    for (spec, r) in args.scenarios.iter().zip(&report.results) {
        if !spec.mood {
            continue;
        }
        let mut sim = r.best_params().apply(&config.simulation);
        let mut series = None;
        for seed in base_seed..=last {
            sim.seed = seed;
            match mood_return_series(&sim, &pool) {
                Ok(s) => {
                    series = Some(s);
                    break;
                }
                Err(Error::AllTrialsDegenerate(_)) => continue,
                Err(e) => return Err(e.into()),
            }
        }
        if let Some(points) = series {
            let p = out.join(mood_file(spec.scenario_no));
            write_csv(
                &p,
                &MOOD_HEADER,
                points.iter().map(|pt| {
                    vec![
                        pt.minute.to_string(),
                        pt.log_return.to_string(),
                        pt.optimists_rate.to_string(),
                    ]
                }),
            )?;
            manifest.add_output(&p);
        }
    }

    manifest.write(out)?;
    Ok(ExperimentOutputs {
        report,
        sweep,
        manifest,
    })
}
