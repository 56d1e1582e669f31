//! Local observability of the per-virus infection levels from the aggregated
//! symptomatic output.
//!
//! Over a window of `m` consecutive outputs the stacked measurements are a
//! linear image of the stacked per-virus state `X[t] = (x^1[t], ..., x^m[t])`:
//! each virus contributes a block column
//!
//! ```text
//! [ C^k ; C^k T^k[t] ; C^k T^k[t+1] T^k[t] ; ... ]
//! ```
//!
//! where `T^k[t]` is the one-step transition of virus `k` at the recorded
//! susceptible levels and `C^k` the diagonal measurement matrix. The window
//! determines `X[t]` exactly when this `mn x mn` matrix has full rank. In the
//! exhausted-susceptible regime (`s = 0`) the transitions collapse to the
//! diagonal decays `I - h*Gamma^k`, and full rank holds whenever the healing
//! rates of the viruses are distinct at every node.

use crate::model::{ModelConfig, Trajectory};
use crate::stability::transition_at;
use nalgebra::{DMatrix, DVector};
use std::fmt;
use thiserror::Error;

/// Relative cutoff for the numerical rank: singular values below
/// `dim * sigma_max * RANK_EPS` count as zero.
pub const RANK_EPS: f64 = 1e-12;

/// Operating regime an observability matrix was built for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    /// Susceptibles exhausted at every node (`s = 0`).
    DiseaseFree,
    /// Along a recorded trajectory, starting at step `t`.
    AlongTrajectory { t: usize },
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Regime::DiseaseFree => f.write_str("disease-free"),
            Regime::AlongTrajectory { t } => write!(f, "trajectory@{t}"),
        }
    }
}

/// Rank analysis of an observability matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservabilityReport {
    /// The analyzed `mn x mn` matrix.
    pub matrix: DMatrix<f64>,
    pub numerical_rank: usize,
    pub smallest_singular_value: f64,
    /// True when the numerical rank is full, i.e. the window determines the
    /// complete per-virus state.
    pub locally_observable: bool,
    /// Whether the healing rates are pairwise distinct at every node — the
    /// sufficient condition for full rank in the disease-free regime.
    pub distinct_gamma: bool,
    pub regime: Regime,
}

/// Observability matrix in the disease-free regime (`s = 0`), where every
/// block is diagonal: column block `k` stacks
/// `C^k (I - h*Gamma^k)^j` for `j = 0..m-1`.
pub fn observability_disease_free(config: &ModelConfig) -> DMatrix<f64> {
    let n = config.node_count;
    let m = config.virus_count();
    let h = config.step_size;
    let mut matrix = DMatrix::zeros(m * n, m * n);
    for (k, virus) in config.viruses.iter().enumerate() {
        let mut power = vec![1.0; n];
        for block in 0..m {
            for i in 0..n {
                matrix[(block * n + i, k * n + i)] = virus.measurement[i] * power[i];
            }
            for i in 0..n {
                power[i] *= 1.0 - h * virus.gamma[i];
            }
        }
    }
    matrix
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error(
    "window starting at step {t} needs {needed} recorded states, trajectory has {available}"
)]
pub struct WindowOutOfRange {
    pub t: usize,
    pub needed: usize,
    pub available: usize,
}

/// Observability matrix along a recorded trajectory: column block `k` stacks
/// `C^k` times the left-composed transition products
/// `T^k[t+j-1] ... T^k[t]` for `j = 0..m-1`.
///
/// Needs the states `t..=t+m-2`, so the window `[t, t+m-1]` must fit inside
/// the trajectory.
pub fn observability_along(
    traj: &Trajectory,
    t: usize,
    config: &ModelConfig,
) -> Result<DMatrix<f64>, WindowOutOfRange> {
    let n = config.node_count;
    let m = config.virus_count();
    let h = config.step_size;
    if t + m > traj.len() {
        return Err(WindowOutOfRange {
            t,
            needed: t + m,
            available: traj.len(),
        });
    }
    let mut matrix = DMatrix::zeros(m * n, m * n);
    for (k, virus) in config.viruses.iter().enumerate() {
        let mut product = DMatrix::<f64>::identity(n, n);
        for block in 0..m {
            for i in 0..n {
                for j in 0..n {
                    matrix[(block * n + i, k * n + j)] =
                        virus.measurement[i] * product[(i, j)];
                }
            }
            if block + 1 < m {
                let transition = transition_at(virus, &traj.states[t + block].susceptible, h);
                product = transition * product;
            }
        }
    }
    Ok(matrix)
}

/// Distinctness of the healing rates across viruses at every node.
pub fn distinct_healing_rates(config: &ModelConfig) -> bool {
    let n = config.node_count;
    let m = config.virus_count();
    for i in 0..n {
        for k in 0..m {
            for l in (k + 1)..m {
                if config.viruses[k].gamma[i] == config.viruses[l].gamma[i] {
                    return false;
                }
            }
        }
    }
    true
}

/// Rank test with the scale-invariant cutoff `dim * sigma_max * RANK_EPS`.
pub fn check_local_observability(
    matrix: &DMatrix<f64>,
    config: &ModelConfig,
    regime: Regime,
) -> ObservabilityReport {
    let dim = matrix.nrows();
    let svd = matrix.clone().svd(false, false);
    let sigma_max = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let sigma_min = svd
        .singular_values
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    let threshold = dim as f64 * sigma_max * RANK_EPS;
    let numerical_rank = svd
        .singular_values
        .iter()
        .filter(|&&s| s > threshold)
        .count();
    ObservabilityReport {
        matrix: matrix.clone(),
        numerical_rank,
        smallest_singular_value: sigma_min,
        locally_observable: numerical_rank == dim,
        distinct_gamma: distinct_healing_rates(config),
        regime,
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReconstructionError {
    #[error("window holds {got} outputs, expected one per virus ({expected})")]
    WindowSize { got: usize, expected: usize },
    #[error("output {index} has {got} nodes, expected {expected}")]
    OutputLength {
        index: usize,
        got: usize,
        expected: usize,
    },
    /// The observability matrix fails the rank test: the window does not
    /// determine the state.
    #[error("observability matrix is numerically singular: rank {rank} of {dim}")]
    SingularSystem { rank: usize, dim: usize },
    #[error("solver failed: {0}")]
    Solver(&'static str),
}

/// Recovers the stacked per-virus state at the start of a window from the
/// `m` outputs `y[t..t+m-1]`, by solving the square system built from the
/// observability matrix.
pub fn reconstruct_window(
    outputs: &[DVector<f64>],
    matrix: &DMatrix<f64>,
) -> Result<Vec<DVector<f64>>, ReconstructionError> {
    let dim = matrix.nrows();
    let m = outputs.len();
    if m == 0 || dim % m != 0 {
        return Err(ReconstructionError::WindowSize {
            got: m,
            expected: if m == 0 { 1 } else { dim / m.max(1) },
        });
    }
    let n = dim / m;
    for (index, y) in outputs.iter().enumerate() {
        if y.len() != n {
            return Err(ReconstructionError::OutputLength {
                index,
                got: y.len(),
                expected: n,
            });
        }
    }

    let mut stacked = DVector::zeros(dim);
    for (block, y) in outputs.iter().enumerate() {
        for i in 0..n {
            stacked[block * n + i] = y[i];
        }
    }

    let svd = matrix.clone().svd(true, true);
    let sigma_max = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let threshold = dim as f64 * sigma_max * RANK_EPS;
    let rank = svd
        .singular_values
        .iter()
        .filter(|&&s| s > threshold)
        .count();
    if rank < dim {
        return Err(ReconstructionError::SingularSystem { rank, dim });
    }
    let solution = svd
        .solve(&stacked, threshold)
        .map_err(ReconstructionError::Solver)?;
    Ok((0..m)
        .map(|k| DVector::from_iterator(n, (0..n).map(|i| solution[(k * n + i, 0)])))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{EpidemicState, VirusParams};
    use crate::scenario::Scenario;

    fn two_virus_single_node(gamma1: f64, gamma2: f64, c1: f64, c2: f64) -> ModelConfig {
        let virus = |g: f64, c: f64| {
            VirusParams::new(
                DMatrix::from_row_slice(1, 1, &[0.1]),
                DVector::from_vec(vec![g]),
                DVector::from_vec(vec![c]),
            )
            .unwrap()
        };
        let initial = EpidemicState::from_infections(vec![
            DVector::from_vec(vec![0.1]),
            DVector::from_vec(vec![0.05]),
        ])
        .unwrap();
        ModelConfig::new(1.0, vec![virus(gamma1, c1), virus(gamma2, c2)], initial, 10).unwrap()
    }

    #[test]
    fn disease_free_matrix_single_node_two_viruses() {
        let config = two_virus_single_node(0.2, 0.4, 1.0, 1.0);
        let o = observability_disease_free(&config);
        let expected = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.8, 0.6]);
        assert!((o - expected).abs().max() < 1e-15);
    }

    #[test]
    fn disease_free_matrix_single_virus_is_measurement_diagonal() {
        let scenario = Scenario::europe();
        let mut config = scenario.model.clone();
        config.viruses.truncate(1);
        config.initial.infected.truncate(1);
        let o = observability_disease_free(&config);
        assert_eq!(o.nrows(), 5);
        for i in 0..5 {
            for j in 0..5 {
                let expected = if i == j { 0.4 } else { 0.0 };
                assert_eq!(o[(i, j)], expected);
            }
        }
    }

    #[test]
    fn disease_free_matrix_is_block_diagonal_by_node() {
        let scenario = Scenario::europe();
        let o = observability_disease_free(&scenario.model);
        assert_eq!(o.nrows(), 10);
        for r in 0..10 {
            for q in 0..10 {
                if r % 5 == q % 5 {
                    assert!(o[(r, q)] > 0.0, "expected positive entry at ({r}, {q})");
                } else {
                    assert_eq!(o[(r, q)], 0.0, "expected zero at ({r}, {q})");
                }
            }
        }
    }

    #[test]
    fn trajectory_matrix_at_exhausted_susceptibles_reduces_to_disease_free() {
        let scenario = Scenario::europe();
        let config = &scenario.model;
        let n = config.node_count;
        let state = EpidemicState::new(
            DVector::zeros(n),
            vec![
                DVector::from_element(n, 0.05),
                DVector::from_element(n, 0.02),
            ],
            DVector::from_element(n, 0.93),
        )
        .unwrap();
        let mut cfg = config.clone();
        cfg.initial = state;
        cfg.horizon = 5;
        let traj = cfg.simulate().unwrap();
        // Susceptibles stay exhausted, so every window state has s = 0.
        let along = observability_along(&traj, 0, &cfg).unwrap();
        let zero = observability_disease_free(&cfg);
        assert!((along - zero).abs().max() < 1e-14);
    }

    #[test]
    fn trajectory_matrix_single_virus_ignores_the_trajectory() {
        let scenario = Scenario::europe();
        let mut config = scenario.model.clone();
        config.viruses.truncate(1);
        config.initial =
            EpidemicState::from_infections(vec![config.initial.infected[0].clone()]).unwrap();
        config.horizon = 3;
        let traj = config.simulate().unwrap();
        let o = observability_along(&traj, 2, &config).unwrap();
        assert_eq!(o, observability_disease_free(&config));
    }

    #[test]
    fn trajectory_matrix_differs_from_disease_free_at_outbreak_start() {
        let scenario = Scenario::europe();
        let mut config = scenario.model.clone();
        config.horizon = 5;
        let traj = config.simulate().unwrap();
        let along = observability_along(&traj, 0, &config).unwrap();
        let zero = observability_disease_free(&config);
        assert!((along - zero).abs().max() > 1e-3);
    }

    #[test]
    fn window_must_fit_the_trajectory() {
        let scenario = Scenario::europe();
        let mut config = scenario.model.clone();
        config.horizon = 3;
        let traj = config.simulate().unwrap();
        let err = observability_along(&traj, 3, &config).unwrap_err();
        assert_eq!(
            err,
            WindowOutOfRange {
                t: 3,
                needed: 5,
                available: 4
            }
        );
    }

    #[test]
    fn europe_disease_free_regime_is_observable() {
        let scenario = Scenario::europe();
        let o = observability_disease_free(&scenario.model);
        let report = check_local_observability(&o, &scenario.model, Regime::DiseaseFree);
        assert_eq!(report.numerical_rank, 10);
        assert!(report.locally_observable);
        assert!(report.distinct_gamma);
        assert!(report.smallest_singular_value > 0.0);
    }

    #[test]
    fn equal_healing_rates_lose_observability() {
        let config = two_virus_single_node(0.3, 0.3, 0.5, 0.5);
        let o = observability_disease_free(&config);
        let report = check_local_observability(&o, &config, Regime::DiseaseFree);
        assert_eq!(report.numerical_rank, 1);
        assert!(!report.locally_observable);
        assert!(!report.distinct_gamma);
    }

    #[test]
    fn single_virus_is_always_observable() {
        let scenario = Scenario::europe();
        let mut config = scenario.model.clone();
        config.viruses.truncate(1);
        config.initial.infected.truncate(1);
        let o = observability_disease_free(&config);
        let report = check_local_observability(&o, &config, Regime::DiseaseFree);
        assert_eq!(report.numerical_rank, 5);
        assert!(report.locally_observable);
    }

    #[test]
    fn zero_output_window_reconstructs_zero_state() {
        let scenario = Scenario::europe();
        let o = observability_disease_free(&scenario.model);
        let outputs = vec![DVector::zeros(5), DVector::zeros(5)];
        let state = reconstruct_window(&outputs, &o).unwrap();
        for x in state {
            assert!(x.abs().max() < 1e-14);
        }
    }

    #[test]
    fn reconstruction_rejects_singular_window() {
        let config = two_virus_single_node(0.3, 0.3, 0.5, 0.5);
        let o = observability_disease_free(&config);
        let outputs = vec![DVector::from_vec(vec![0.1]), DVector::from_vec(vec![0.09])];
        let err = reconstruct_window(&outputs, &o).unwrap_err();
        assert!(matches!(err, ReconstructionError::SingularSystem { rank: 1, dim: 2 }));
    }

    #[test]
    fn late_window_reconstruction_recovers_the_state() {
        let scenario = Scenario::europe();
        let traj = scenario.model.simulate().unwrap();
        let t = 450;
        let o = observability_along(&traj, t, &scenario.model).unwrap();
        let window: Vec<_> = (0..2).map(|j| traj.outputs[t + j].clone()).collect();
        let recovered = reconstruct_window(&window, &o).unwrap();
        let mut err2 = 0.0;
        let mut norm2 = 0.0;
        for k in 0..2 {
            let diff = &recovered[k] - &traj.states[t].infected[k];
            err2 += diff.norm_squared();
            norm2 += traj.states[t].infected[k].norm_squared();
        }
        let relative = (err2 / norm2).sqrt();
        assert!(relative < 1e-8, "relative error {relative}");
    }
}
