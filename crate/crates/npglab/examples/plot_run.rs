//! End-to-end artifact flow: config JSON to CSV, SVG, and audit report.
//!
//! Builds an experiment config in memory, materializes and runs it the
//! same way the CLI does, and writes the run CSV, the gap-vs-bound SVG,
//! and the verification report into a temporary directory.

use std::fs;

use npglab::checks::verify_run;
use npglab::config::ExperimentConfig;
use npglab::plot::render_run_svg;
use npglab::runner::run_experiment;
use npglab::solver::records_to_csv;

fn main() -> Result<(), npglab::Error> {
    let config_json = r#"{
        "mdp": {"kind": "chain", "n_states": 8, "gamma": 0.9, "slip": 0.1},
        "oracle": {"mode": "noisy", "eps_stat_target": 1e-6},
        "iterations": 150,
        "seed": 4
    }"#;
    let cfg = ExperimentConfig::from_json(config_json)?;
    let exp = cfg.materialize(None)?;
    println!(
        "materialized: {} states, {} actions, gamma {}, schedule {:?}",
        exp.mdp.n_states(),
        exp.mdp.n_actions(),
        exp.mdp.gamma(),
        exp.schedule
    );

    let result = run_experiment(&exp)?;
    let out = std::env::temp_dir().join("npglab_plot_run");
    fs::create_dir_all(&out)?;

    let csv = records_to_csv(&result.records);
    fs::write(out.join("run.csv"), &csv)?;
    let svg = render_run_svg(&result.records, "chain, noisy critic")?;
    fs::write(out.join("plot.svg"), &svg)?;
    let report = verify_run(&exp.mdp, &exp.features, &result, &exp.schedule)?;
    fs::write(out.join("verify.txt"), report.render())?;

    println!(
        "wrote {} rows of measurements, an SVG, and the audit to {}",
        result.records.len(),
        out.display()
    );
    println!("echoed config (reproduces this run exactly):\n{}", exp.echo.to_json());
    Ok(())
}
