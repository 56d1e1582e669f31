//! Command implementations behind the CLI: load a scenario, run one analysis,
//! write its CSV artifacts, and summarize to stdout.
//!
//! Artifacts land in the output directory, named `<scenario>.<kind>.csv`, and
//! re-running a command overwrites them deterministically. The directory is
//! the `--out` flag when given, else the `COMPETING_SIR_OUT` environment
//! variable, else `./artifacts`.

use crate::model::{SimulationError, Trajectory};
use crate::observability::{
    check_local_observability, observability_along, observability_disease_free,
    ObservabilityReport, Regime, WindowOutOfRange,
};
use crate::observer::{run_observer, ObserverError};
use crate::report::{
    write_observability_csv, write_observer_csv, write_outputs_csv, write_stability_csv,
    write_sweep_csv, write_trajectory_csv, SweepRow,
};
use crate::scenario::{Scenario, ScenarioError};
use crate::stability::certify_all;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use thiserror::Error;

/// Environment variable overriding the default artifact directory.
pub const OUT_DIR_ENV: &str = "COMPETING_SIR_OUT";

/// Name under which the bundled scenario can be addressed instead of a path.
pub const BUNDLED_SCENARIO: &str = "europe";

#[derive(Debug, Error)]
pub enum CommandError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Simulation(#[from] SimulationError),
    #[error(transparent)]
    Window(#[from] WindowOutOfRange),
    #[error(transparent)]
    Observer(#[from] ObserverError),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CommandError {
    /// Validation failures exit with 1, every other failure with 2.
    pub fn exit_code(&self) -> i32 {
        match self {
            CommandError::Scenario(ScenarioError::Invalid(_)) => 1,
            _ => 2,
        }
    }
}

/// Files written by one command invocation.
#[derive(Debug, Default)]
pub struct RunArtifacts {
    pub files: Vec<PathBuf>,
}

/// Resolves the artifact directory from flag, environment, or default.
pub fn resolve_out_dir(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("artifacts"))
}

/// Loads a scenario from a path, or the bundled one when the argument names
/// it. Applies the step-size and horizon overrides before validation.
pub fn load_scenario(
    spec: &str,
    step_size: Option<f64>,
    horizon: Option<usize>,
) -> Result<Scenario, CommandError> {
    let mut scenario = if spec == BUNDLED_SCENARIO && !Path::new(spec).exists() {
        Scenario::europe()
    } else {
        Scenario::load(Path::new(spec))?
    };
    if let Some(h) = step_size {
        scenario.set_step_size(h)?;
    }
    if let Some(horizon) = horizon {
        scenario.set_horizon(horizon)?;
    }
    Ok(scenario)
}

fn write_artifact(
    dir: &Path,
    name: &str,
    render: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>,
) -> Result<PathBuf, CommandError> {
    fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CommandError {
        let path = path.to_path_buf();
        move |source| CommandError::Io { path, source }
    }
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let path = dir.join(name);
    let mut buf = Vec::new();
    render(&mut buf).map_err(io_err(&path))?;
    fs::write(&path, buf).map_err(io_err(&path))?;
    Ok(path)
}

/// Prints the validation verdict; an invalid scenario is an error (exit 1).
pub fn cmd_validate(
    out: &mut impl Write,
    spec: &str,
    step_size: Option<f64>,
) -> Result<RunArtifacts, CommandError> {
    let scenario = load_scenario(spec, step_size, None)?;
    let report = scenario.model.validate();
    if report.is_valid() {
        writeln!(out, "scenario '{}': valid", scenario.file.name).ok();
        Ok(RunArtifacts::default())
    } else {
        writeln!(
            out,
            "scenario '{}': {} violation(s)",
            scenario.file.name,
            report.violations.len()
        )
        .ok();
        Err(ScenarioError::Invalid(report).into())
    }
}

/// Simulates the scenario and writes the trajectory and output CSVs.
pub fn cmd_simulate(
    out: &mut impl Write,
    spec: &str,
    step_size: Option<f64>,
    horizon: Option<usize>,
    out_dir: &Path,
) -> Result<RunArtifacts, CommandError> {
    let scenario = load_scenario(spec, step_size, horizon)?.validated()?;
    let traj = scenario.model.simulate()?;
    let name = &scenario.file.name;
    let nodes = scenario.node_labels();
    let viruses = scenario.virus_labels();

    let trajectory_path = write_artifact(out_dir, &format!("{name}.trajectory.csv"), |w| {
        write_trajectory_csv(w, &traj, &nodes, &viruses)
    })?;
    let outputs_path = write_artifact(out_dir, &format!("{name}.outputs.csv"), |w| {
        write_outputs_csv(w, &traj, &nodes)
    })?;

    for (k, label) in viruses.iter().enumerate() {
        let (t_peak, peak) = traj
            .states
            .iter()
            .enumerate()
            .map(|(t, s)| (t, s.infected[k].max()))
            .fold((0, f64::MIN), |acc, (t, v)| if v > acc.1 { (t, v) } else { acc });
        writeln!(out, "{label}: peak infection {peak:.6} at step {t_peak}").ok();
    }
    writeln!(
        out,
        "wrote {} and {}",
        trajectory_path.display(),
        outputs_path.display()
    )
    .ok();
    Ok(RunArtifacts {
        files: vec![trajectory_path, outputs_path],
    })
}

/// Certifies every virus and writes the stability CSV. An uncertified virus
/// is a result, not an error.
pub fn cmd_stability(
    out: &mut impl Write,
    spec: &str,
    step_size: Option<f64>,
    out_dir: &Path,
) -> Result<RunArtifacts, CommandError> {
    let scenario = load_scenario(spec, step_size, None)?.validated()?;
    let report = certify_all(&scenario.model.viruses, scenario.model.step_size);
    let name = &scenario.file.name;
    let viruses = scenario.virus_labels();

    let path = write_artifact(out_dir, &format!("{name}.stability.csv"), |w| {
        write_stability_csv(w, &report, &viruses)
    })?;

    for (entry, label) in report.entries.iter().zip(&viruses) {
        match entry.rate_bound {
            Some(rate) => writeln!(
                out,
                "{label}: spectral radius {:.6} -> eradication certified, rate bound {rate:.6}",
                entry.spectral_radius
            )
            .ok(),
            None => writeln!(
                out,
                "{label}: spectral radius {:.6} -> not certified",
                entry.spectral_radius
            )
            .ok(),
        };
    }
    writeln!(out, "wrote {}", path.display()).ok();
    Ok(RunArtifacts { files: vec![path] })
}

/// Which observability matrix to analyze.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegimeArg {
    DiseaseFree,
    Trajectory { t: usize },
}

/// Builds the requested observability matrix, checks its rank, and writes the
/// observability CSV.
pub fn cmd_observability(
    out: &mut impl Write,
    spec: &str,
    step_size: Option<f64>,
    horizon: Option<usize>,
    regime: RegimeArg,
    out_dir: &Path,
) -> Result<RunArtifacts, CommandError> {
    let scenario = load_scenario(spec, step_size, horizon)?.validated()?;
    let report: ObservabilityReport = match regime {
        RegimeArg::DiseaseFree => {
            let matrix = observability_disease_free(&scenario.model);
            check_local_observability(&matrix, &scenario.model, Regime::DiseaseFree)
        }
        RegimeArg::Trajectory { t } => {
            let traj = scenario.model.simulate()?;
            let matrix = observability_along(&traj, t, &scenario.model)?;
            check_local_observability(&matrix, &scenario.model, Regime::AlongTrajectory { t })
        }
    };
    let name = &scenario.file.name;
    let path = write_artifact(out_dir, &format!("{name}.observability.csv"), |w| {
        write_observability_csv(w, &[&report])
    })?;
    writeln!(
        out,
        "{}: rank {} of {}, locally observable: {}, distinct healing rates: {}",
        report.regime,
        report.numerical_rank,
        report.matrix.nrows(),
        report.locally_observable,
        report.distinct_gamma
    )
    .ok();
    writeln!(out, "wrote {}", path.display()).ok();
    Ok(RunArtifacts { files: vec![path] })
}

/// Simulates the scenario, runs the observer on its outputs, and writes the
/// per-step error CSV.
pub fn cmd_observe(
    out: &mut impl Write,
    spec: &str,
    step_size: Option<f64>,
    horizon: Option<usize>,
    out_dir: &Path,
) -> Result<RunArtifacts, CommandError> {
    let scenario = load_scenario(spec, step_size, horizon)?.validated()?;
    let traj = scenario.model.simulate()?;
    let observer = scenario.observer_config(&traj.outputs[0]);
    let run = run_observer(&traj.outputs, &scenario.model, &observer, Some(&traj))?;

    let name = &scenario.file.name;
    let nodes = scenario.node_labels();
    let viruses = scenario.virus_labels();
    let path = write_artifact(out_dir, &format!("{name}.observer.csv"), |w| {
        write_observer_csv(w, &run, Some(&traj), &nodes, &viruses)
    })?;

    match run.first_within_threshold {
        Some(t) => writeln!(
            out,
            "relative error below {} from step {t}",
            observer.error_threshold
        )
        .ok(),
        None => writeln!(
            out,
            "relative error never fell below {}",
            observer.error_threshold
        )
        .ok(),
    };
    writeln!(
        out,
        "terminal max absolute error: {:e}",
        run.max_abs_error(run.len() - 1).unwrap()
    )
    .ok();
    writeln!(out, "wrote {}", path.display()).ok();
    Ok(RunArtifacts { files: vec![path] })
}

/// Parameter swept by [`cmd_sweep`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    /// Observer gain, applied uniformly at every node.
    Gain,
    /// Sampling step.
    StepSize,
}

fn grid(from: f64, to: f64, steps: usize) -> Vec<f64> {
    if steps <= 1 {
        return vec![from];
    }
    (0..steps)
        .map(|i| from + (to - from) * i as f64 / (steps - 1) as f64)
        .collect()
}

/// Runs one analysis per grid point, fanning the points out across threads,
/// and merges the rows in grid order.
pub fn cmd_sweep(
    out: &mut impl Write,
    spec: &str,
    param: SweepParam,
    from: f64,
    to: f64,
    steps: usize,
    horizon: Option<usize>,
    out_dir: &Path,
) -> Result<RunArtifacts, CommandError> {
    let values = grid(from, to, steps);
    let name;
    let (param_name, columns, rows): (&str, Vec<&str>, Vec<SweepRow>) = match param {
        SweepParam::Gain => {
            let scenario = load_scenario(spec, None, horizon)?.validated()?;
            name = scenario.file.name.clone();
            let traj = scenario.model.simulate()?;
            let mut results: Vec<Option<Result<SweepRow, ObserverError>>> =
                (0..values.len()).map(|_| None).collect();
            std::thread::scope(|scope| {
                for (slot, &gain) in results.iter_mut().zip(&values) {
                    let scenario = &scenario;
                    let traj = &traj;
                    scope.spawn(move || {
                        *slot = Some(sweep_gain_point(scenario, traj, gain));
                    });
                }
            });
            let mut rows = Vec::with_capacity(values.len());
            for slot in results {
                rows.push(slot.expect("sweep point completed")?);
            }
            (
                "gain",
                vec!["time_within_threshold", "terminal_max_abs_error"],
                rows,
            )
        }
        SweepParam::StepSize => {
            let scenario = load_scenario(spec, None, horizon)?;
            name = scenario.file.name.clone();
            let mut results: Vec<Option<Vec<SweepRow>>> =
                (0..values.len()).map(|_| None).collect();
            std::thread::scope(|scope| {
                for (slot, &h) in results.iter_mut().zip(&values) {
                    let scenario = &scenario;
                    scope.spawn(move || {
                        *slot = Some(sweep_step_point(scenario, h));
                    });
                }
            });
            let rows = results
                .into_iter()
                .flat_map(|slot| slot.expect("sweep point completed"))
                .collect();
            ("h", vec!["valid", "virus", "rho", "certified"], rows)
        }
    };

    let kind = match param {
        SweepParam::Gain => "gain",
        SweepParam::StepSize => "h",
    };
    let path = write_artifact(out_dir, &format!("{name}.sweep-{kind}.csv"), |w| {
        write_sweep_csv(w, param_name, &columns, &rows)
    })?;
    writeln!(out, "swept {} values of {param_name}", values.len()).ok();
    writeln!(out, "wrote {}", path.display()).ok();
    Ok(RunArtifacts { files: vec![path] })
}

fn sweep_gain_point(
    scenario: &Scenario,
    traj: &Trajectory,
    gain: f64,
) -> Result<SweepRow, ObserverError> {
    let mut observer = scenario.observer_config(&traj.outputs[0]);
    observer.gain = nalgebra::DVector::from_element(scenario.model.node_count, gain);
    let run = run_observer(&traj.outputs, &scenario.model, &observer, Some(traj))?;
    let time = run
        .first_within_threshold
        .map(|t| t.to_string())
        .unwrap_or_default();
    let terminal = run.max_abs_error(run.len() - 1).unwrap_or(f64::NAN);
    Ok(SweepRow {
        value: gain,
        fields: vec![time, format!("{terminal}")],
    })
}

fn sweep_step_point(scenario: &Scenario, h: f64) -> Vec<SweepRow> {
    let mut scenario = scenario.clone();
    if scenario.set_step_size(h).is_err() {
        return vec![SweepRow {
            value: h,
            fields: vec!["false".into(), String::new(), String::new(), String::new()],
        }];
    }
    let valid = scenario.model.validate().is_valid();
    let report = certify_all(&scenario.model.viruses, h);
    report
        .entries
        .iter()
        .zip(scenario.virus_labels())
        .map(|(entry, label)| SweepRow {
            value: h,
            fields: vec![
                valid.to_string(),
                label.to_string(),
                format!("{}", entry.spectral_radius),
                entry.certified.to_string(),
            ],
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    #[test]
    fn validate_reports_the_bundled_scenario_as_valid() {
        let mut out = Vec::new();
        let artifacts = cmd_validate(&mut out, "europe", None).unwrap();
        assert!(artifacts.files.is_empty());
        assert!(String::from_utf8(out).unwrap().contains("valid"));
    }

    #[test]
    fn validate_rejects_a_doubled_step() {
        let mut out = Vec::new();
        let err = cmd_validate(&mut out, "europe", Some(2.0)).unwrap_err();
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn simulate_writes_both_artifacts() {
        let dir = tempdir().unwrap();
        let mut out = Vec::new();
        let artifacts =
            cmd_simulate(&mut out, "europe", None, Some(10), dir.path()).unwrap();
        assert_eq!(artifacts.files.len(), 2);
        for file in &artifacts.files {
            assert!(file.exists());
        }
    }

    #[test]
    fn sweep_rows_are_ordered_by_grid_value() {
        let dir = tempdir().unwrap();
        let mut out = Vec::new();
        cmd_sweep(
            &mut out,
            "europe",
            SweepParam::StepSize,
            0.5,
            1.5,
            3,
            None,
            dir.path(),
        )
        .unwrap();
        let text = std::fs::read_to_string(dir.path().join("europe.sweep-h.csv")).unwrap();
        let values: Vec<&str> = text
            .lines()
            .skip(1)
            .map(|l| l.split(',').nth(1).unwrap())
            .collect();
        assert_eq!(values, vec!["0.5", "0.5", "1", "1", "1.5", "1.5"]);
    }
}
