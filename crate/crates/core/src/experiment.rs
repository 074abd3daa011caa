//! Running configured experiments and reading/writing their artifacts.
//!
//! Each run writes a per-epoch trace CSV; each experiment writes one JSON
//! results document. Every number in both files is determined by the config
//! and seed, except the fields under `timing`.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, GameSpec, OracleSpec, PreferenceSweep};
use crate::dynamics::{self, EpochRecord, Order, Trace};
use crate::equilibria::{self, PreferenceTable};
use crate::error::{Error, Result};
use crate::games::{StrategicGame, Vector};

/// Fraction of final epochs averaged for the terminal statistics.
pub const TERMINAL_WINDOW: f64 = 0.1;

pub const OUT_DIR_ENV: &str = "STACKELBERG_OUT_DIR";

pub const SCHEMA_VERSION: u32 = 1;

const ABORT_MARKER: &str = "# aborted";

fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn trace_header(dim: usize) -> Vec<String> {
    let mut header = vec!["epoch".to_string()];
    header.extend((0..dim).map(|i| format!("theta_{i}")));
    header.extend((0..dim).map(|i| format!("mu_{i}")));
    for col in ["L", "R", "running_avg_L", "running_avg_R", "br_gap"] {
        header.push(col.to_string());
    }
    header
}

/// Writes a trace as CSV. An aborted run gets a trailing comment line
/// `# aborted at epoch <k>: <reason>`.
pub fn write_trace_csv(path: &Path, trace: &Trace, dim: usize, abort: Option<&str>) -> Result<()> {
    let file = fs::File::create(path)?;
    let mut writer = csv::Writer::from_writer(file);
    writer.write_record(trace_header(dim))?;
    for r in &trace.records {
        let mut row = vec![r.epoch.to_string()];
        row.extend(r.theta.iter().map(|&x| fmt_float(x)));
        row.extend(r.mu.iter().map(|&x| fmt_float(x)));
        for x in [r.loss_dm, r.loss_agents, r.running_avg_dm, r.running_avg_agents] {
            row.push(fmt_float(x));
        }
        row.push(r.br_gap.map(fmt_float).unwrap_or_default());
        writer.write_record(&row)?;
    }
    let mut file = writer.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    if let Some(reason) = abort {
        writeln!(file, "{ABORT_MARKER} at epoch {}: {reason}", trace.len() + 1)?;
    }
    file.flush()?;
    Ok(())
}

/// A trace read back from CSV.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceTable {
    pub dim: usize,
    pub records: Vec<EpochRecord>,
    pub aborted: Option<String>,
}

pub fn read_trace_csv(path: &Path) -> Result<TraceTable> {
    let text = fs::read_to_string(path)?;
    let aborted = text
        .lines()
        .find(|l| l.starts_with(ABORT_MARKER))
        .map(|l| l.trim_start_matches('#').trim().to_string());
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let header = reader.headers()?.clone();
    let width = header.len();
    if width < 8 || (width - 6) % 2 != 0 || header.get(0) != Some("epoch") {
        return Err(Error::config(format!("{}: not a trace CSV header", path.display())));
    }
    let dim = (width - 6) / 2;
    if header.iter().collect::<Vec<_>>() != trace_header(dim) {
        return Err(Error::config(format!("{}: unexpected trace columns", path.display())));
    }
    let parse = |s: &str, line: usize| -> Result<f64> {
        s.parse::<f64>()
            .map_err(|_| Error::config(format!("{}:{line}: bad number {s:?}", path.display())))
    };
    let mut records = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row?;
        let line = i + 2;
        let epoch = row[0]
            .parse::<usize>()
            .map_err(|_| Error::config(format!("{}:{line}: bad epoch", path.display())))?;
        let theta = (1..=dim).map(|j| parse(&row[j], line)).collect::<Result<Vec<_>>>()?;
        let mu = (dim + 1..=2 * dim).map(|j| parse(&row[j], line)).collect::<Result<Vec<_>>>()?;
        let base = 2 * dim + 1;
        let gap = &row[base + 4];
        records.push(EpochRecord {
            epoch,
            theta,
            mu,
            loss_dm: parse(&row[base], line)?,
            loss_agents: parse(&row[base + 1], line)?,
            running_avg_dm: parse(&row[base + 2], line)?,
            running_avg_agents: parse(&row[base + 3], line)?,
            br_gap: if gap.is_empty() { None } else { Some(parse(gap, line)?) },
        });
    }
    Ok(TraceTable { dim, records, aborted })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Software {
    pub name: String,
    pub version: String,
}

impl Software {
    pub fn current() -> Self {
        Software {
            name: "stackelberg-bench".into(),
            version: env!("CARGO_PKG_VERSION").into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TerminalStats {
    pub window_fraction: f64,
    /// Mean running-average risks over the terminal window.
    pub window_avg_dm: f64,
    pub window_avg_agents: f64,
    /// Running averages at the final epoch.
    pub running_avg_dm: f64,
    pub running_avg_agents: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegretStats {
    /// Equilibrium Stackelberg risk of the slow player.
    pub target: f64,
    /// `sum_t (SR(x_t) - target)` over the slow player's deployed points.
    pub cumulative: f64,
    pub average: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BrGapStats {
    pub mean: f64,
    pub max: f64,
    pub last: f64,
    pub sum: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub order: Order,
    pub seed: u64,
    pub epochs: usize,
    pub epochs_completed: usize,
    pub inner_steps: usize,
    /// Trace CSV file name, relative to the results document.
    pub trace_file: String,
    pub config_digest: String,
    pub aborted: Option<String>,
    pub terminal: Option<TerminalStats>,
    pub regret: Option<RegretStats>,
    pub br_gap: Option<BrGapStats>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub started_unix_seconds: f64,
    pub wall_clock_seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultsDocument {
    pub schema_version: u32,
    pub software: Software,
    pub config: ExperimentConfig,
    pub equilibria: Option<PreferenceTable>,
    pub equilibria_error: Option<String>,
    pub runs: Vec<RunSummary>,
    pub timing: Timing,
}

impl ResultsDocument {
    pub fn aborted(&self) -> bool {
        self.runs.iter().any(|r| r.aborted.is_some())
    }

    /// The document with its timing fields zeroed, for byte comparisons.
    pub fn without_timing(&self) -> ResultsDocument {
        ResultsDocument {
            timing: Timing {
                started_unix_seconds: 0.0,
                wall_clock_seconds: 0.0,
            },
            ..self.clone()
        }
    }
}

#[derive(Clone, Debug)]
pub struct ExperimentOutcome {
    pub document: ResultsDocument,
    pub results_path: PathBuf,
    pub trace_paths: Vec<PathBuf>,
}

pub fn file_stem(config: &ExperimentConfig) -> String {
    let safe: String = config
        .name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' })
        .collect();
    format!("{safe}-seed{}", config.seed)
}

fn terminal_stats(trace: &Trace) -> Option<TerminalStats> {
    let last = trace.last()?;
    Some(TerminalStats {
        window_fraction: TERMINAL_WINDOW,
        window_avg_dm: trace.terminal_dm_risk(TERMINAL_WINDOW),
        window_avg_agents: trace.terminal_agent_risk(TERMINAL_WINDOW),
        running_avg_dm: last.running_avg_dm,
        running_avg_agents: last.running_avg_agents,
    })
}

fn br_gap_stats(trace: &Trace) -> Option<BrGapStats> {
    let series = dynamics::br_gap_series(trace).ok()?;
    let gaps = &series.gaps;
    let sum: f64 = gaps.iter().sum();
    Some(BrGapStats {
        mean: sum / gaps.len() as f64,
        max: gaps.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        last: *gaps.last()?,
        sum,
    })
}

/// Cumulative regret of the slow player against its equilibrium Stackelberg
/// risk, when the follower's best response has a closed form.
fn regret_stats(game: &dyn StrategicGame, trace: &Trace, table: Option<&PreferenceTable>) -> Option<RegretStats> {
    let table = table?;
    if trace.is_empty() {
        return None;
    }
    let (target, cumulative) = match trace.order {
        Order::Proactive => {
            let target = table.dm_leads.risk_dm;
            (target, dynamics::cumulative_regret(game, trace, target).ok()?)
        }
        Order::Reactive => {
            let target = table.agents_lead.risk_agents;
            let mut total = 0.0;
            for r in &trace.records {
                let mu = Vector::from_column_slice(&r.mu);
                let theta = game.decision_best_response(&mu)?;
                total += game.agent_loss(&mu, &theta).ok()? - target;
            }
            (target, total)
        }
    };
    Some(RegretStats {
        target,
        cumulative,
        average: cumulative / trace.len() as f64,
    })
}

pub fn compute_equilibria(game: &GameSpec, oracle: &OracleSpec) -> Result<PreferenceTable> {
    let oracle_game = game.build_with_samples(oracle.samples)?;
    equilibria::preference_table(oracle_game.as_ref(), &oracle.settings)
}

/// Resolves the output directory: explicit flag, then the environment, then
/// the config, then the working directory.
pub fn resolve_out_dir(flag: Option<&Path>, config: &ExperimentConfig) -> PathBuf {
    if let Some(dir) = flag {
        return dir.to_path_buf();
    }
    if let Some(dir) = std::env::var_os(OUT_DIR_ENV) {
        return PathBuf::from(dir);
    }
    config.out_dir.as_ref().map(PathBuf::from).unwrap_or_else(|| PathBuf::from("."))
}

/// Runs every configured order of play, writes one trace CSV per run and the
/// results document. Diverged runs are recorded (partial trace plus abort
/// marker) rather than returned as errors; check [`ResultsDocument::aborted`].
pub fn run_experiment(config: &ExperimentConfig, out_dir: &Path) -> Result<ExperimentOutcome> {
    let started = Instant::now();
    let started_unix = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0);
    fs::create_dir_all(out_dir)?;
    let game = config.game.build()?;
    let dim = game.dim();

    let (table, equilibria_error) = match compute_equilibria(&config.game, &config.oracle) {
        Ok(t) => (Some(t), None),
        Err(e) => {
            log::warn!("equilibrium oracles failed: {e}");
            (None, Some(e.to_string()))
        }
    };

    let stem = file_stem(config);
    let mut runs = Vec::new();
    let mut trace_paths = Vec::new();
    for spec in &config.runs {
        let schedule = spec.schedule(config.scale);
        let trace_file = format!("{stem}-{}.csv", spec.order.label());
        let path = out_dir.join(&trace_file);
        log::info!(
            "{}: {} run, T = {}, tau = {}",
            config.name,
            spec.order.label(),
            schedule.epochs,
            schedule.inner_steps
        );
        let (trace, aborted) = match dynamics::run(game.as_ref(), &schedule, config.seed) {
            Ok(trace) => (trace, None),
            Err(Error::Diverged { epoch, what, partial }) => {
                let reason = format!("non-finite {what} at epoch {epoch}");
                log::error!("{}: {reason}", config.name);
                (*partial, Some(reason))
            }
            Err(e) => return Err(e),
        };
        write_trace_csv(&path, &trace, dim, aborted.as_deref())?;
        runs.push(RunSummary {
            order: spec.order,
            seed: config.seed,
            epochs: schedule.epochs,
            epochs_completed: trace.len(),
            inner_steps: schedule.inner_steps,
            trace_file,
            config_digest: trace.config_digest.clone(),
            terminal: terminal_stats(&trace),
            regret: regret_stats(game.as_ref(), &trace, table.as_ref()),
            br_gap: br_gap_stats(&trace),
            aborted,
        });
        trace_paths.push(path);
    }

    let document = ResultsDocument {
        schema_version: SCHEMA_VERSION,
        software: Software::current(),
        config: config.clone(),
        equilibria: table,
        equilibria_error,
        runs,
        timing: Timing {
            started_unix_seconds: started_unix,
            wall_clock_seconds: started.elapsed().as_secs_f64(),
        },
    };
    let results_path = out_dir.join(format!("{stem}.results.json"));
    write_json(&results_path, &document)?;
    Ok(ExperimentOutcome {
        document,
        results_path,
        trace_paths,
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn read_results(path: &Path) -> Result<ResultsDocument> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

// ---------------------------------------------------------------------------
// sweeps

/// Terminal statistics of one order of play averaged over seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedAverage {
    pub order: Order,
    pub seeds: Vec<u64>,
    pub window_avg_dm: f64,
    pub window_avg_agents: f64,
    pub running_avg_dm: f64,
    pub running_avg_agents: f64,
    pub aborted_runs: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub name: String,
    pub results: Vec<String>,
    pub equilibria: Option<PreferenceTable>,
    pub averages: Vec<SeedAverage>,
    pub errors: Vec<String>,
}

fn average_runs(documents: &[ResultsDocument]) -> Vec<SeedAverage> {
    let mut by_order: BTreeMap<&'static str, (Order, Vec<(u64, &TerminalStats)>, usize)> = BTreeMap::new();
    for doc in documents {
        for run in &doc.runs {
            let entry = by_order.entry(run.order.label()).or_insert((run.order, Vec::new(), 0));
            if run.aborted.is_some() {
                entry.2 += 1;
            } else if let Some(t) = &run.terminal {
                entry.1.push((run.seed, t));
            }
        }
    }
    by_order
        .into_values()
        .map(|(order, stats, aborted_runs)| {
            let n = stats.len().max(1) as f64;
            let mean = |f: fn(&TerminalStats) -> f64| stats.iter().map(|(_, t)| f(t)).sum::<f64>() / n;
            SeedAverage {
                order,
                seeds: stats.iter().map(|(s, _)| *s).collect(),
                window_avg_dm: mean(|t| t.window_avg_dm),
                window_avg_agents: mean(|t| t.window_avg_agents),
                running_avg_dm: mean(|t| t.running_avg_dm),
                running_avg_agents: mean(|t| t.running_avg_agents),
                aborted_runs,
            }
        })
        .collect()
}

/// Runs each config under `seeds` consecutive seeds (starting at the config's
/// own), at most `workers` runs at a time. Each config writes into its own
/// subdirectory of `out_dir`.
pub fn run_sweep(configs: &[ExperimentConfig], seeds: usize, workers: usize, out_dir: &Path) -> Result<Vec<SweepEntry>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::config(format!("cannot start worker pool: {e}")))?;
    let jobs: Vec<(usize, ExperimentConfig)> = configs
        .iter()
        .enumerate()
        .flat_map(|(i, c)| {
            (0..seeds.max(1) as u64).map(move |k| {
                let mut c = c.clone();
                c.seed = c.seed.wrapping_add(k);
                (i, c)
            })
        })
        .collect();
    let outcomes: Vec<(usize, Result<ExperimentOutcome>)> = pool.install(|| {
        jobs.par_iter()
            .map(|(i, c)| (*i, run_experiment(c, &out_dir.join(&c.name))))
            .collect()
    });
    let mut entries: Vec<SweepEntry> = configs
        .iter()
        .map(|c| SweepEntry {
            name: c.name.clone(),
            results: Vec::new(),
            equilibria: None,
            averages: Vec::new(),
            errors: Vec::new(),
        })
        .collect();
    let mut documents: Vec<Vec<ResultsDocument>> = vec![Vec::new(); configs.len()];
    for (i, outcome) in outcomes {
        match outcome {
            Ok(o) => {
                entries[i].results.push(o.results_path.display().to_string());
                documents[i].push(o.document);
            }
            Err(e) => entries[i].errors.push(e.to_string()),
        }
    }
    for (entry, docs) in entries.iter_mut().zip(&documents) {
        entry.equilibria = docs.first().and_then(|d| d.equilibria.clone());
        entry.averages = average_runs(docs);
    }
    Ok(entries)
}

// ---------------------------------------------------------------------------
// regret scaling

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    /// `(T, regret)` pairs used in the fit.
    pub points: Vec<(f64, f64)>,
    pub warnings: Vec<String>,
}

/// Least-squares slope of `log(regret)` against `log(T)`. Points with
/// nonpositive regret are dropped with a warning.
pub fn fit_regret_slope(points: &[(f64, f64)]) -> Result<SlopeFit> {
    let mut warnings = Vec::new();
    let mut used = Vec::new();
    for &(t, regret) in points {
        if !(t > 0.0 && regret > 0.0 && regret.is_finite()) {
            let msg = format!("excluded horizon T = {t}: regret {regret} is not positive");
            log::warn!("{msg}");
            warnings.push(msg);
        } else {
            used.push((t, regret));
        }
    }
    let mut horizons: Vec<f64> = used.iter().map(|p| p.0).collect();
    horizons.sort_by(f64::total_cmp);
    horizons.dedup();
    if horizons.len() < 2 {
        return Err(Error::config(format!(
            "need at least two horizons with positive regret, have {}",
            horizons.len()
        )));
    }
    let n = used.len() as f64;
    let xs: Vec<f64> = used.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = used.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    Ok(SlopeFit {
        slope,
        intercept: my - slope * mx,
        points: used,
        warnings,
    })
}

/// `(T, sum_t (SR_L(theta_t) - target))` for a proactive trace file.
pub fn trace_regret(game: &dyn StrategicGame, path: &Path, target: f64) -> Result<(f64, f64)> {
    let table = read_trace_csv(path)?;
    if table.dim != game.dim() {
        return Err(Error::DimensionMismatch {
            expected: game.dim(),
            actual: table.dim,
        });
    }
    let mut total = 0.0;
    for r in &table.records {
        let theta = Vector::from_column_slice(&r.theta);
        let risk = game
            .stackelberg_risk_dm(&theta)
            .ok_or_else(|| Error::DiagnosticUnavailable("game has no closed-form agents' best response".into()))??;
        total += risk - target;
    }
    Ok((table.records.len() as f64, total))
}

/// Regret slope from proactive trace files. The targets document supplies the
/// game (its config echo) and the decision-maker's equilibrium risk. Regrets
/// of traces sharing a horizon are averaged before fitting.
pub fn regret_slope_from_files(traces: &[PathBuf], targets: &ResultsDocument) -> Result<SlopeFit> {
    let table = targets
        .equilibria
        .as_ref()
        .ok_or_else(|| Error::config("targets document has no equilibria"))?;
    let game = targets.config.game.build()?;
    let mut by_horizon: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
    for path in traces {
        let (t, regret) = trace_regret(game.as_ref(), path, table.dm_leads.risk_dm)?;
        by_horizon.entry(t as u64).or_default().push(regret);
    }
    if by_horizon.len() < 3 {
        return Err(Error::config(format!(
            "regret scaling needs at least three horizons, got {}",
            by_horizon.len()
        )));
    }
    let points: Vec<(f64, f64)> = by_horizon
        .into_iter()
        .map(|(t, rs)| (t as f64, rs.iter().sum::<f64>() / rs.len() as f64))
        .collect();
    fit_regret_slope(&points)
}

// ---------------------------------------------------------------------------
// preference tables

#[derive(Clone, Debug, PartialEq)]
pub struct PreferenceRow {
    pub game: GameSpec,
    pub table: std::result::Result<PreferenceTable, String>,
}

pub const PARAMETER_COLUMNS: &[&str] = &["budget", "lambda", "p", "sigma2"];

pub fn preference_header() -> Vec<&'static str> {
    let mut header = vec!["variant"];
    header.extend_from_slice(PARAMETER_COLUMNS);
    header.extend_from_slice(&[
        "risk_L_dm_leads",
        "risk_L_agents_lead",
        "risk_R_dm_leads",
        "risk_R_agents_lead",
        "delta_L",
        "delta_R",
        "error",
    ]);
    header
}

/// Equilibria of every game in the sweep; oracle failures are kept per row.
pub fn export_preference_table(sweep: &PreferenceSweep) -> Result<Vec<PreferenceRow>> {
    Ok(sweep
        .games()?
        .into_iter()
        .map(|game| {
            let table = compute_equilibria(&game, &sweep.oracle).map_err(|e| e.to_string());
            if let Err(e) = &table {
                log::warn!("{} {:?}: {e}", game.variant(), game.parameters());
            }
            PreferenceRow { game, table }
        })
        .collect())
}

pub fn write_preference_csv(path: &Path, rows: &[PreferenceRow]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(preference_header())?;
    for row in rows {
        let params = row.game.parameters();
        let mut record = vec![row.game.variant().to_string()];
        record.extend(
            PARAMETER_COLUMNS
                .iter()
                .map(|k| params.get(k).map(|&x| fmt_float(x)).unwrap_or_default()),
        );
        match &row.table {
            Ok(t) => {
                for x in [
                    t.dm_leads.risk_dm,
                    t.agents_lead.risk_dm,
                    t.dm_leads.risk_agents,
                    t.agents_lead.risk_agents,
                    t.delta_dm,
                    t.delta_agents,
                ] {
                    record.push(fmt_float(x));
                }
                record.push(String::new());
            }
            Err(e) => {
                record.extend(std::iter::repeat_n(String::new(), 6));
                record.push(e.clone());
            }
        }
        writer.write_record(&record)?;
    }
    writer.flush()?;
    Ok(())
}
