//! CSV artifacts for trajectories, certificates, observability verdicts,
//! observer runs, and parameter sweeps.
//!
//! Columns are stable and floats use the shortest representation that parses
//! back to the same value, so identical runs produce byte-identical files.

use crate::model::Trajectory;
use crate::observability::ObservabilityReport;
use crate::observer::ObserverRun;
use crate::stability::StabilityReport;
use std::io::{self, Write};

fn float(v: f64) -> String {
    format!("{v}")
}

fn optional(v: Option<f64>) -> String {
    v.map(float).unwrap_or_default()
}

/// Rows `(t, node, compartment, virus, value)`; the virus column is empty for
/// the susceptible and recovered compartments. Each step contributes
/// `n * (m + 2)` rows: susceptible, then the infected block per virus, then
/// recovered.
pub fn write_trajectory_csv(
    w: &mut impl Write,
    traj: &Trajectory,
    node_labels: &[&str],
    virus_labels: &[&str],
) -> io::Result<()> {
    writeln!(w, "t,node,compartment,virus,value")?;
    for (t, state) in traj.states.iter().enumerate() {
        for (i, label) in node_labels.iter().enumerate() {
            writeln!(
                w,
                "{t},{label},susceptible,,{}",
                float(state.susceptible[i])
            )?;
        }
        for (k, virus) in virus_labels.iter().enumerate() {
            for (i, label) in node_labels.iter().enumerate() {
                writeln!(
                    w,
                    "{t},{label},infected,{virus},{}",
                    float(state.infected[k][i])
                )?;
            }
        }
        for (i, label) in node_labels.iter().enumerate() {
            writeln!(w, "{t},{label},recovered,,{}", float(state.recovered[i]))?;
        }
    }
    Ok(())
}

/// Rows `(t, node, value)` of the symptomatic output.
pub fn write_outputs_csv(
    w: &mut impl Write,
    traj: &Trajectory,
    node_labels: &[&str],
) -> io::Result<()> {
    writeln!(w, "t,node,value")?;
    for (t, y) in traj.outputs.iter().enumerate() {
        for (i, label) in node_labels.iter().enumerate() {
            writeln!(w, "{t},{label},{}", float(y[i]))?;
        }
    }
    Ok(())
}

/// Rows `(virus, rho, certified, sigma1, sigma2, sigma3, rate_bound)`;
/// the envelope and rate columns are empty when a virus is not certified.
pub fn write_stability_csv(
    w: &mut impl Write,
    report: &StabilityReport,
    virus_labels: &[&str],
) -> io::Result<()> {
    writeln!(w, "virus,rho,certified,sigma1,sigma2,sigma3,rate_bound")?;
    for (entry, label) in report.entries.iter().zip(virus_labels) {
        writeln!(
            w,
            "{label},{},{},{},{},{},{}",
            float(entry.spectral_radius),
            entry.certified,
            optional(entry.envelope_min),
            optional(entry.envelope_max),
            optional(entry.decrease_margin),
            optional(entry.rate_bound),
        )?;
    }
    Ok(())
}

/// Rows `(regime, rank, smallest_sv, locally_observable, distinct_gamma)`.
pub fn write_observability_csv(
    w: &mut impl Write,
    reports: &[&ObservabilityReport],
) -> io::Result<()> {
    writeln!(w, "regime,rank,smallest_sv,locally_observable,distinct_gamma")?;
    for report in reports {
        writeln!(
            w,
            "{},{},{},{},{}",
            report.regime,
            report.numerical_rank,
            float(report.smallest_singular_value),
            report.locally_observable,
            report.distinct_gamma,
        )?;
    }
    Ok(())
}

/// Rows `(t, node, virus, truth, estimate, error)`; truth and error columns
/// are empty when no true trajectory accompanied the run.
pub fn write_observer_csv(
    w: &mut impl Write,
    run: &ObserverRun,
    truth: Option<&Trajectory>,
    node_labels: &[&str],
    virus_labels: &[&str],
) -> io::Result<()> {
    writeln!(w, "t,node,virus,truth,estimate,error")?;
    for t in 0..run.len() {
        for (k, virus) in virus_labels.iter().enumerate() {
            for (i, label) in node_labels.iter().enumerate() {
                let estimate = run.estimates[t][k][i];
                let truth_value = truth.map(|tr| tr.states[t].infected[k][i]);
                let error = run
                    .errors
                    .as_ref()
                    .map(|errors| errors[t][k][i]);
                writeln!(
                    w,
                    "{t},{label},{virus},{},{},{}",
                    truth_value.map(float).unwrap_or_default(),
                    float(estimate),
                    error.map(float).unwrap_or_default(),
                )?;
            }
        }
    }
    Ok(())
}

/// One sweep row: the grid value plus the per-run results, already formatted.
pub struct SweepRow {
    pub value: f64,
    pub fields: Vec<String>,
}

/// Rows `(param, value, <columns>)`, sorted by the grid value.
pub fn write_sweep_csv(
    w: &mut impl Write,
    param: &str,
    columns: &[&str],
    rows: &[SweepRow],
) -> io::Result<()> {
    write!(w, "param,value")?;
    for c in columns {
        write!(w, ",{c}")?;
    }
    writeln!(w)?;
    for row in rows {
        write!(w, "{param},{}", float(row.value))?;
        for field in &row.fields {
            write!(w, ",{field}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::Scenario;

    #[test]
    fn trajectory_rows_per_step() {
        let mut scenario = Scenario::europe();
        scenario.model.horizon = 0;
        let traj = scenario.model.simulate().unwrap();
        let mut buf = Vec::new();
        write_trajectory_csv(
            &mut buf,
            &traj,
            &scenario.node_labels(),
            &scenario.virus_labels(),
        )
        .unwrap();
        let text = String::from_utf8(buf).unwrap();
        let rows = text.lines().count() - 1;
        // n * (m + 2) state rows for the single step.
        assert_eq!(rows, 5 * 4);
        assert!(text.starts_with("t,node,compartment,virus,value\n"));
        assert!(text.contains("0,UK,infected,sars-cov-2,0.02\n"));
    }

    #[test]
    fn identical_runs_emit_identical_bytes() {
        let mut scenario = Scenario::europe();
        scenario.model.horizon = 20;
        let traj = scenario.model.simulate().unwrap();
        let render = || {
            let mut buf = Vec::new();
            write_trajectory_csv(
                &mut buf,
                &traj,
                &scenario.node_labels(),
                &scenario.virus_labels(),
            )
            .unwrap();
            buf
        };
        assert_eq!(render(), render());
    }

    #[test]
    fn floats_round_trip_through_the_csv() {
        let mut scenario = Scenario::europe();
        scenario.model.horizon = 30;
        let traj = scenario.model.simulate().unwrap();
        let mut buf = Vec::new();
        write_outputs_csv(&mut buf, &traj, &scenario.node_labels()).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines().skip(1);
        for (t, y) in traj.outputs.iter().enumerate() {
            for i in 0..5 {
                let line = lines.next().unwrap();
                let value: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
                assert_eq!(value.to_bits(), y[i].to_bits(), "t={t}, node {i}");
            }
        }
    }
}
