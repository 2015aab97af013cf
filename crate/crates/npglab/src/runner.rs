//! Command entry points behind the CLI: run, sweep, plot, verify.
//!
//! Each returns a process exit code: 0 for success, 2 when a run halted
//! early because the policy logits saturated; callers map errors to 1.
//! Sweeps fan out over one axis on a rayon pool whose size is capped by
//! the `NPGLAB_THREADS` environment variable, and results are reduced in
//! fixed cell order so output bytes do not depend on scheduling.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::checks::{bound_row, perf_diff_sweep, three_point_sweep, verify_run};
use crate::config::{
    Experiment, ExperimentConfig, FeatureSource, MdpSource, ScheduleSpec, SweepSpec,
};
use crate::error::{Error, Result};
use crate::oracle::OracleConfig;
use crate::solver::{bound_floor, records_to_csv, run, RunResult};
use crate::tol;

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
/// A run stopped early because the policy saturated.
pub const EXIT_TRUNCATED: i32 = 2;

/// Cap for sweep parallelism; unset means rayon's default.
pub const THREADS_ENV: &str = "NPGLAB_THREADS";

/// Execute a materialized experiment with its own RNG stream.
pub fn run_experiment(exp: &Experiment) -> Result<RunResult> {
    let mut rng = exp.rng.clone();
    run(
        &exp.mdp,
        &exp.features,
        &exp.schedule,
        &exp.oracle,
        exp.iterations,
        &exp.rho,
        exp.bound.as_ref(),
        &mut rng,
    )
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, text)?;
    Ok(())
}

fn write_run_artifacts(out: &Path, exp: &Experiment, result: &RunResult) -> Result<()> {
    fs::create_dir_all(out)?;
    write_text(&out.join("run.csv"), &records_to_csv(&result.records))?;
    write_text(&out.join("config.json"), &exp.echo.to_json())?;
    write_text(&out.join("mdp.json"), &exp.mdp.to_json())?;
    write_text(&out.join("features.json"), &exp.features.to_json())?;
    write_text(
        &out.join("policy.json"),
        &result.policy.to_json("features.json"),
    )?;
    Ok(())
}

fn exit_code_for(result: &RunResult) -> i32 {
    if result.truncated {
        EXIT_TRUNCATED
    } else {
        EXIT_OK
    }
}

/// Run one experiment; writes `run.csv`, the echoed `config.json`, the
/// materialized `mdp.json` and `features.json`, and the final
/// `policy.json` into `out`.
pub fn cmd_run(config: &Path, out: &Path, seed: Option<u64>) -> Result<i32> {
    let cfg = load_config(config)?;
    if cfg.sweep.is_some() {
        eprintln!("note: config has a sweep axis; running the base experiment only");
    }
    let exp = cfg.materialize(seed)?;
    let result = run_experiment(&exp)?;
    write_run_artifacts(out, &exp, &result)?;
    Ok(exit_code_for(&result))
}

struct SweepCell {
    label: String,
    config: ExperimentConfig,
}

fn schedule_kind_name(spec: &ScheduleSpec) -> &'static str {
    match spec {
        ScheduleSpec::Constant { .. } => "constant",
        ScheduleSpec::Geometric { .. } => "geometric",
    }
}

fn sweep_cells(base: &ExperimentConfig, seed: Option<u64>) -> Result<Vec<SweepCell>> {
    let axis = base
        .sweep
        .clone()
        .ok_or_else(|| Error::Config("config has no sweep axis; add a \"sweep\" entry".into()))?;
    let mut cells = Vec::new();
    let mut template = base.clone();
    template.sweep = None;
    if let Some(s) = seed {
        template.seed = s;
    }
    match axis {
        SweepSpec::Seeds { values } => {
            for v in values {
                let mut cfg = template.clone();
                cfg.seed = v;
                cells.push(SweepCell {
                    label: format!("seed_{v}"),
                    config: cfg,
                });
            }
        }
        SweepSpec::EpsStat { values } => {
            for v in values {
                let mut cfg = template.clone();
                cfg.oracle = OracleConfig::Noisy { eps_stat_target: v };
                cells.push(SweepCell {
                    label: format!("eps_stat_{v:e}"),
                    config: cfg,
                });
            }
        }
        SweepSpec::Schedule { values } => {
            for (i, v) in values.into_iter().enumerate() {
                let mut cfg = template.clone();
                cfg.schedule = v.clone();
                cells.push(SweepCell {
                    label: format!("schedule_{i}_{}", schedule_kind_name(&v)),
                    config: cfg,
                });
            }
        }
    }
    Ok(cells)
}

/// Build a rayon pool sized by `NPGLAB_THREADS` (default when unset).
pub fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(raw) = std::env::var(THREADS_ENV) {
        let n: usize = raw.trim().parse().map_err(|_| {
            Error::Config(format!("{THREADS_ENV} must be a positive integer, got {raw:?}"))
        })?;
        if n == 0 {
            return Err(Error::Config(format!(
                "{THREADS_ENV} must be a positive integer, got 0"
            )));
        }
        builder = builder.num_threads(n);
    }
    builder
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

struct CellOutcome {
    label: String,
    exp: Experiment,
    result: RunResult,
}

pub const SWEEP_CSV_HEADER: &str = "cell,label,seed,final_delta,min_delta,final_bound,floor,\
                                    nu,kappa,eps_stat,eps_bias,converged,truncated";

fn sweep_aggregate_csv(outcomes: &[CellOutcome], n_actions: usize, gamma: f64) -> String {
    let fmt = |x: f64| format!("{x:.16e}");
    let mut out = String::new();
    out.push_str(SWEEP_CSV_HEADER);
    out.push('\n');
    for (i, cell) in outcomes.iter().enumerate() {
        let m = &cell.result.measured;
        let final_rec = cell.result.records.last().expect("run has records");
        let min_delta = cell
            .result
            .records
            .iter()
            .map(|r| r.delta)
            .fold(f64::INFINITY, f64::min);
        let floor = bound_floor(m.nu_mu, gamma, n_actions, m.kappa, m.eps_stat, m.eps_bias);
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            i,
            cell.label,
            cell.exp.seed,
            fmt(final_rec.delta),
            fmt(min_delta),
            fmt(final_rec.bound),
            fmt(floor),
            fmt(m.nu_mu),
            fmt(m.kappa),
            fmt(m.eps_stat),
            fmt(m.eps_bias),
            u8::from(cell.result.converged),
            u8::from(cell.result.truncated),
        );
    }
    out
}

/// Run every cell of the config's sweep axis in parallel; writes one
/// directory per cell plus an aggregate `sweep.csv`.
pub fn cmd_sweep(config: &Path, out: &Path, seed: Option<u64>) -> Result<i32> {
    use rayon::prelude::*;

    let base = load_config(config)?;
    let cells = sweep_cells(&base, seed)?;
    let pool = thread_pool()?;
    let outcomes: Vec<CellOutcome> = pool.install(|| {
        cells
            .par_iter()
            .map(|cell| -> Result<CellOutcome> {
                let exp = cell.config.materialize(None)?;
                let result = run_experiment(&exp)?;
                Ok(CellOutcome {
                    label: cell.label.clone(),
                    exp,
                    result,
                })
            })
            .collect::<Result<Vec<_>>>()
    })?;

    fs::create_dir_all(out)?;
    for outcome in &outcomes {
        let cell_dir = out.join("cells").join(&outcome.label);
        write_run_artifacts(&cell_dir, &outcome.exp, &outcome.result)?;
    }
    let first = outcomes
        .first()
        .ok_or_else(|| Error::Config("sweep axis has no values".into()))?;
    let aggregate = sweep_aggregate_csv(&outcomes, first.exp.mdp.n_actions(), first.exp.mdp.gamma());
    write_text(&out.join("sweep.csv"), &aggregate)?;

    let any_truncated = outcomes.iter().any(|o| o.result.truncated);
    Ok(if any_truncated { EXIT_TRUNCATED } else { EXIT_OK })
}

/// Run one experiment and render the value gap against the predicted
/// bound as `plot.svg` (plus the usual run artifacts).
pub fn cmd_plot(config: &Path, out: &Path, seed: Option<u64>) -> Result<i32> {
    let cfg = load_config(config)?;
    if cfg.sweep.is_some() {
        eprintln!("note: config has a sweep axis; plotting the base experiment only");
    }
    let exp = cfg.materialize(seed)?;
    let result = run_experiment(&exp)?;
    write_run_artifacts(out, &exp, &result)?;
    let title = config
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "run".into());
    let svg = crate::plot::render_run_svg(&result.records, &title)?;
    write_text(&out.join("plot.svg"), &svg)?;
    Ok(exit_code_for(&result))
}

/// Run one experiment and audit it: bound domination, the error-bound and
/// improvement inequalities, the potential contraction, and the two
/// standalone identity sweeps. Writes `verify.txt` and prints the report.
///
/// Exit code 0 when every asserted check passes, 1 when any fails, 2 when
/// the run itself was truncated (checks still apply to recorded rows).
pub fn cmd_verify(config: &Path, out: &Path, seed: Option<u64>) -> Result<i32> {
    let cfg = load_config(config)?;
    if cfg.sweep.is_some() {
        eprintln!("note: config has a sweep axis; verifying the base experiment only");
    }
    let exp = cfg.materialize(seed)?;
    let result = run_experiment(&exp)?;
    let mut report = verify_run(&exp.mdp, &exp.features, &result, &exp.schedule)?;
    report.rows.push(bound_row(
        "perf_diff_identity",
        perf_diff_sweep(100, exp.seed)?,
        tol::PERF_DIFF_TOL,
        "max residual over 100 random instances",
    ));
    report.rows.push(bound_row(
        "three_point_identity",
        three_point_sweep(100, exp.seed)?,
        tol::THREE_POINT_TOL,
        "max residual over 100 random instances",
    ));

    fs::create_dir_all(out)?;
    write_run_artifacts(out, &exp, &result)?;
    write_text(&out.join("verify.txt"), &report.render())?;
    print!("{}", report.render());

    if !report.passed() {
        Ok(EXIT_ERROR)
    } else if result.truncated {
        Ok(EXIT_TRUNCATED)
    } else {
        Ok(EXIT_OK)
    }
}

/// Resolve a path that may be relative to the config file's directory.
pub fn resolve_relative(config: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        config.parent().unwrap_or(Path::new(".")).join(path)
    }
}

/// Load a config and anchor any file references to the config's own
/// directory, so invocations do not depend on the working directory.
fn load_config(config: &Path) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(config)?;
    if let MdpSource::File { path } = &mut cfg.mdp {
        *path = resolve_relative(config, path);
    }
    if let FeatureSource::File { path } = &mut cfg.features {
        *path = resolve_relative(config, path);
    }
    Ok(cfg)
}
