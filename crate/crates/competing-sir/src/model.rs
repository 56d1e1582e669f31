//! Competing multi-virus SIR dynamics on a population network.
//!
//! Each of the `n` nodes carries a susceptible fraction `s_i`, one infected
//! fraction `x^k_i` per virus `k`, and a recovered fraction `r_i`. The
//! compartments of a node always sum to one: an individual hosts at most one
//! virus at a time, and recovery is permanent. One synchronous step advances
//! every node by
//!
//! ```text
//! s_i  <- s_i - h * s_i * sum_k sum_j beta^k_ij x^k_j
//! x^k_i <- x^k_i + h * (s_i * sum_j beta^k_ij x^k_j - gamma^k_i x^k_i)
//! r_i  <- r_i + h * sum_k gamma^k_i x^k_i
//! ```
//!
//! where `h` is the sampling step. The aggregate symptomatic output of a node
//! is `y_i = sum_k c^k_i x^k_i` with per-virus measurement coefficients
//! `c^k_i` in `(0, 1]`.

use nalgebra::{DMatrix, DVector};
use std::fmt;
use thiserror::Error;

/// Tolerance on `|s_i + sum_k x^k_i + r_i - 1|` beyond which a state is
/// rejected as corrupted rather than silently renormalized.
pub const SIMPLEX_TOL: f64 = 1e-9;

/// Parameters of a single virus on the network.
#[derive(Debug, Clone, PartialEq)]
pub struct VirusParams {
    /// Infection rate matrix; entry `(i, j)` is the transmission rate from
    /// node `j` into node `i`, per unit step.
    pub beta: DMatrix<f64>,
    /// Per-node healing rates (must be strictly positive).
    pub gamma: DVector<f64>,
    /// Per-node measurement coefficients in `(0, 1]`: the probability that an
    /// infection by this virus is counted in the symptomatic output.
    pub measurement: DVector<f64>,
}

impl VirusParams {
    pub fn new(
        beta: DMatrix<f64>,
        gamma: DVector<f64>,
        measurement: DVector<f64>,
    ) -> Result<Self, DimensionError> {
        if !beta.is_square() {
            return Err(DimensionError(format!(
                "infection matrix must be square, got {}x{}",
                beta.nrows(),
                beta.ncols()
            )));
        }
        let n = beta.nrows();
        if gamma.len() != n {
            return Err(DimensionError(format!(
                "healing rate vector has length {}, expected {n}",
                gamma.len()
            )));
        }
        if measurement.len() != n {
            return Err(DimensionError(format!(
                "measurement vector has length {}, expected {n}",
                measurement.len()
            )));
        }
        Ok(Self {
            beta,
            gamma,
            measurement,
        })
    }

    pub fn node_count(&self) -> usize {
        self.gamma.len()
    }
}

/// Compartment fractions of all nodes at one time step.
#[derive(Debug, Clone, PartialEq)]
pub struct EpidemicState {
    /// Susceptible fraction per node.
    pub susceptible: DVector<f64>,
    /// Infected fraction per node, one vector per virus.
    pub infected: Vec<DVector<f64>>,
    /// Recovered fraction per node.
    pub recovered: DVector<f64>,
}

impl EpidemicState {
    pub fn new(
        susceptible: DVector<f64>,
        infected: Vec<DVector<f64>>,
        recovered: DVector<f64>,
    ) -> Result<Self, DimensionError> {
        let n = susceptible.len();
        if recovered.len() != n {
            return Err(DimensionError(format!(
                "recovered vector has length {}, expected {n}",
                recovered.len()
            )));
        }
        for (k, x) in infected.iter().enumerate() {
            if x.len() != n {
                return Err(DimensionError(format!(
                    "infected vector for virus {k} has length {}, expected {n}",
                    x.len()
                )));
            }
        }
        Ok(Self {
            susceptible,
            infected,
            recovered,
        })
    }

    /// State with the given infections, no recovered individuals, and the
    /// susceptible fraction filled up to the simplex.
    pub fn from_infections(infected: Vec<DVector<f64>>) -> Result<Self, DimensionError> {
        let n = infected.first().map_or(0, DVector::len);
        let recovered = DVector::zeros(n);
        let susceptible = implied_susceptible(&infected, &recovered);
        Self::new(susceptible, infected, recovered)
    }

    pub fn node_count(&self) -> usize {
        self.susceptible.len()
    }

    pub fn virus_count(&self) -> usize {
        self.infected.len()
    }

    /// Per-node distance from the unit simplex:
    /// `|s_i + sum_k x^k_i + r_i - 1|`.
    pub fn conservation_residual(&self) -> DVector<f64> {
        let n = self.node_count();
        DVector::from_iterator(
            n,
            (0..n).map(|i| {
                let mut total = self.susceptible[i];
                for x in &self.infected {
                    total += x[i];
                }
                total += self.recovered[i];
                (total - 1.0).abs()
            }),
        )
    }
}

/// A full model: network parameters for every virus plus the initial state
/// and simulation horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    /// Number of nodes.
    pub node_count: usize,
    /// Sampling step `h > 0`.
    pub step_size: f64,
    /// One parameter set per virus.
    pub viruses: Vec<VirusParams>,
    /// State at `t = 0`.
    pub initial: EpidemicState,
    /// Number of steps a simulation advances.
    pub horizon: usize,
}

impl ModelConfig {
    pub fn new(
        step_size: f64,
        viruses: Vec<VirusParams>,
        initial: EpidemicState,
        horizon: usize,
    ) -> Result<Self, DimensionError> {
        if !(step_size > 0.0) || !step_size.is_finite() {
            return Err(DimensionError(format!(
                "sampling step must be positive and finite, got {step_size}"
            )));
        }
        if viruses.is_empty() {
            return Err(DimensionError("at least one virus is required".into()));
        }
        let n = viruses[0].node_count();
        for (k, v) in viruses.iter().enumerate() {
            if v.node_count() != n {
                return Err(DimensionError(format!(
                    "virus {k} is defined on {} nodes, expected {n}",
                    v.node_count()
                )));
            }
        }
        if initial.node_count() != n {
            return Err(DimensionError(format!(
                "initial state has {} nodes, expected {n}",
                initial.node_count()
            )));
        }
        if initial.virus_count() != viruses.len() {
            return Err(DimensionError(format!(
                "initial state covers {} viruses, expected {}",
                initial.virus_count(),
                viruses.len()
            )));
        }
        Ok(Self {
            node_count: n,
            step_size,
            viruses,
            initial,
            horizon,
        })
    }

    pub fn virus_count(&self) -> usize {
        self.viruses.len()
    }

    /// Checks every standing assumption of the model and reports each
    /// violation. Violations are data, not failures: the report is always
    /// produced.
    pub fn validate(&self) -> ValidationReport {
        let mut violations = Vec::new();
        let n = self.node_count;
        let h = self.step_size;

        for (k, virus) in self.viruses.iter().enumerate() {
            for i in 0..n {
                for j in 0..n {
                    let value = virus.beta[(i, j)];
                    if !(value >= 0.0) {
                        violations.push(Violation::NegativeInfectionRate {
                            virus: k,
                            to: i,
                            from: j,
                            value,
                        });
                    }
                }
                let g = virus.gamma[i];
                if !(g > 0.0) {
                    violations.push(Violation::NonpositiveHealingRate {
                        virus: k,
                        node: i,
                        value: g,
                    });
                }
                let c = virus.measurement[i];
                if !(c > 0.0 && c <= 1.0) {
                    violations.push(Violation::MeasurementOutOfRange {
                        virus: k,
                        node: i,
                        value: c,
                    });
                }
            }
        }

        // Sampling budgets: h * total infection rate into a node and
        // h * total healing rate at a node may not exceed one.
        for i in 0..n {
            let beta_total: f64 = self
                .viruses
                .iter()
                .map(|v| v.beta.row(i).iter().sum::<f64>())
                .sum();
            if !(h * beta_total <= 1.0) {
                violations.push(Violation::InfectionBudgetExceeded {
                    node: i,
                    budget: h * beta_total,
                });
            }
            let gamma_total: f64 = self.viruses.iter().map(|v| v.gamma[i]).sum();
            if !(h * gamma_total <= 1.0) {
                violations.push(Violation::HealingBudgetExceeded {
                    node: i,
                    budget: h * gamma_total,
                });
            }
        }

        let in_unit = |v: f64| v >= 0.0 && v <= 1.0;
        for i in 0..n {
            if !in_unit(self.initial.susceptible[i]) {
                violations.push(Violation::InitialCompartmentOutOfRange {
                    compartment: Compartment::Susceptible,
                    virus: None,
                    node: i,
                    value: self.initial.susceptible[i],
                });
            }
            for (k, x) in self.initial.infected.iter().enumerate() {
                if !in_unit(x[i]) {
                    violations.push(Violation::InitialCompartmentOutOfRange {
                        compartment: Compartment::Infected,
                        virus: Some(k),
                        node: i,
                        value: x[i],
                    });
                }
            }
            if !in_unit(self.initial.recovered[i]) {
                violations.push(Violation::InitialCompartmentOutOfRange {
                    compartment: Compartment::Recovered,
                    virus: None,
                    node: i,
                    value: self.initial.recovered[i],
                });
            }
        }
        let residual = self.initial.conservation_residual();
        for i in 0..n {
            if !(residual[i] <= SIMPLEX_TOL) {
                violations.push(Violation::InitialSimplexResidual {
                    node: i,
                    residual: residual[i],
                });
            }
        }

        ValidationReport { violations }
    }

    /// Advances the state by one step.
    ///
    /// Rejects a state whose simplex residual exceeds [`SIMPLEX_TOL`]; such a
    /// residual signals corruption upstream, and renormalizing it away would
    /// only hide the source.
    pub fn step(&self, state: &EpidemicState) -> Result<EpidemicState, StepError> {
        let residual = state.conservation_residual();
        for i in 0..state.node_count() {
            if !(residual[i] <= SIMPLEX_TOL) {
                return Err(StepError::SimplexViolation {
                    node: i,
                    residual: residual[i],
                });
            }
        }
        let flows = Flows::compute(&state.susceptible, &state.infected, &self.viruses, self.step_size);
        Ok(EpidemicState {
            susceptible: advance_susceptible(&state.susceptible, &flows),
            infected: advance_infected(&state.infected, &flows),
            recovered: advance_recovered(&state.recovered, &flows),
        })
    }

    /// Symptomatic output `y_i = sum_k c^k_i x^k_i`.
    pub fn output(&self, state: &EpidemicState) -> DVector<f64> {
        measure(&state.infected, &self.viruses)
    }

    /// Runs the model for `horizon` steps from the initial state, recording
    /// every state and output.
    ///
    /// The boundedness and monotonicity guarantees of the model are asserted
    /// on every step; a violation aborts the run with the offending time
    /// index.
    pub fn simulate(&self) -> Result<Trajectory, SimulationError> {
        let report = self.validate();
        if !report.is_valid() {
            return Err(SimulationError::InvalidConfig(report));
        }

        let mut states = Vec::with_capacity(self.horizon + 1);
        states.push(self.initial.clone());
        for t in 0..self.horizon {
            let next = self
                .step(&states[t])
                .map_err(|source| SimulationError::Step { t, source })?;
            check_step_invariants(&states[t], &next, t)?;
            states.push(next);
        }
        let outputs = states.iter().map(|s| self.output(s)).collect();
        Ok(Trajectory { states, outputs })
    }
}

fn check_step_invariants(
    prev: &EpidemicState,
    next: &EpidemicState,
    t: usize,
) -> Result<(), SimulationError> {
    let n = next.node_count();
    for i in 0..n {
        let checks = [
            (Compartment::Susceptible, next.susceptible[i]),
            (Compartment::Recovered, next.recovered[i]),
        ];
        for (compartment, value) in checks {
            if !(0.0..=1.0).contains(&value) {
                return Err(SimulationError::BoxViolation {
                    t: t + 1,
                    node: i,
                    compartment,
                    value,
                });
            }
        }
        for x in &next.infected {
            if !(0.0..=1.0).contains(&x[i]) {
                return Err(SimulationError::BoxViolation {
                    t: t + 1,
                    node: i,
                    compartment: Compartment::Infected,
                    value: x[i],
                });
            }
        }
        if next.susceptible[i] > prev.susceptible[i] {
            return Err(SimulationError::SusceptibleIncreased {
                t,
                node: i,
                before: prev.susceptible[i],
                after: next.susceptible[i],
            });
        }
    }
    Ok(())
}

/// A simulated run: `horizon + 1` states and the output at each of them.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<EpidemicState>,
    pub outputs: Vec<DVector<f64>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

// --- shared update kernels -------------------------------------------------
//
// The observer mirrors the model step exactly (plus an innovation term), and
// one of its contracts is bitwise equality with a plain simulation when the
// gain is zero. Both paths therefore go through the helpers below; the fold
// order over viruses is part of that contract.

/// Per-step flows: `infections[k][i] = h * s_i * (beta^k x^k)_i` and
/// `recoveries[k][i] = h * gamma^k_i * x^k_i`.
pub(crate) struct Flows {
    pub infections: Vec<DVector<f64>>,
    pub recoveries: Vec<DVector<f64>>,
}

impl Flows {
    pub(crate) fn compute(
        susceptible: &DVector<f64>,
        infected: &[DVector<f64>],
        viruses: &[VirusParams],
        h: f64,
    ) -> Self {
        let n = susceptible.len();
        let mut infections = Vec::with_capacity(viruses.len());
        let mut recoveries = Vec::with_capacity(viruses.len());
        for (virus, x) in viruses.iter().zip(infected) {
            let pressure = &virus.beta * x;
            infections.push(DVector::from_iterator(
                n,
                (0..n).map(|i| h * (susceptible[i] * pressure[i])),
            ));
            recoveries.push(DVector::from_iterator(
                n,
                (0..n).map(|i| h * (virus.gamma[i] * x[i])),
            ));
        }
        Self {
            infections,
            recoveries,
        }
    }
}

pub(crate) fn advance_infected(infected: &[DVector<f64>], flows: &Flows) -> Vec<DVector<f64>> {
    infected
        .iter()
        .enumerate()
        .map(|(k, x)| {
            let n = x.len();
            DVector::from_iterator(
                n,
                (0..n).map(|i| x[i] + (flows.infections[k][i] - flows.recoveries[k][i])),
            )
        })
        .collect()
}

pub(crate) fn advance_susceptible(susceptible: &DVector<f64>, flows: &Flows) -> DVector<f64> {
    let n = susceptible.len();
    DVector::from_iterator(
        n,
        (0..n).map(|i| {
            let mut s = susceptible[i];
            for infection in &flows.infections {
                s -= infection[i];
            }
            s
        }),
    )
}

pub(crate) fn advance_recovered(recovered: &DVector<f64>, flows: &Flows) -> DVector<f64> {
    let n = recovered.len();
    DVector::from_iterator(
        n,
        (0..n).map(|i| {
            let mut r = recovered[i];
            for recovery in &flows.recoveries {
                r += recovery[i];
            }
            r
        }),
    )
}

pub(crate) fn measure(infected: &[DVector<f64>], viruses: &[VirusParams]) -> DVector<f64> {
    let n = viruses[0].node_count();
    DVector::from_iterator(
        n,
        (0..n).map(|i| {
            let mut y = 0.0;
            for (virus, x) in viruses.iter().zip(infected) {
                y += virus.measurement[i] * x[i];
            }
            y
        }),
    )
}

/// `s_i = 1 - sum_k x^k_i - r_i`, the susceptible fraction implied by the
/// simplex constraint.
pub(crate) fn implied_susceptible(
    infected: &[DVector<f64>],
    recovered: &DVector<f64>,
) -> DVector<f64> {
    let n = recovered.len();
    DVector::from_iterator(
        n,
        (0..n).map(|i| {
            let mut s = 1.0;
            for x in infected {
                s -= x[i];
            }
            s -= recovered[i];
            s
        }),
    )
}

// --- validation report -----------------------------------------------------

/// Compartment kind, used in violation reports and CSV artifacts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Compartment {
    Susceptible,
    Infected,
    Recovered,
}

impl Compartment {
    pub fn as_str(self) -> &'static str {
        match self {
            Compartment::Susceptible => "susceptible",
            Compartment::Infected => "infected",
            Compartment::Recovered => "recovered",
        }
    }
}

impl fmt::Display for Compartment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One violated model assumption, with the indices that violate it.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NegativeInfectionRate {
        virus: usize,
        to: usize,
        from: usize,
        value: f64,
    },
    NonpositiveHealingRate {
        virus: usize,
        node: usize,
        value: f64,
    },
    MeasurementOutOfRange {
        virus: usize,
        node: usize,
        value: f64,
    },
    /// `h * sum_k sum_j beta^k_ij` exceeds one at a node.
    InfectionBudgetExceeded { node: usize, budget: f64 },
    /// `h * sum_k gamma^k_i` exceeds one at a node.
    HealingBudgetExceeded { node: usize, budget: f64 },
    InitialCompartmentOutOfRange {
        compartment: Compartment,
        virus: Option<usize>,
        node: usize,
        value: f64,
    },
    InitialSimplexResidual { node: usize, residual: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NegativeInfectionRate {
                virus,
                to,
                from,
                value,
            } => write!(
                f,
                "virus {virus}: infection rate into node {to} from node {from} is {value}, must be >= 0"
            ),
            Violation::NonpositiveHealingRate { virus, node, value } => write!(
                f,
                "virus {virus}: healing rate at node {node} is {value}, must be > 0"
            ),
            Violation::MeasurementOutOfRange { virus, node, value } => write!(
                f,
                "virus {virus}: measurement coefficient at node {node} is {value}, must be in (0, 1]"
            ),
            Violation::InfectionBudgetExceeded { node, budget } => write!(
                f,
                "node {node}: step size times total infection rate is {budget}, must be <= 1"
            ),
            Violation::HealingBudgetExceeded { node, budget } => write!(
                f,
                "node {node}: step size times total healing rate is {budget}, must be <= 1"
            ),
            Violation::InitialCompartmentOutOfRange {
                compartment,
                virus,
                node,
                value,
            } => match virus {
                Some(k) => write!(
                    f,
                    "initial {compartment} fraction of virus {k} at node {node} is {value}, must be in [0, 1]"
                ),
                None => write!(
                    f,
                    "initial {compartment} fraction at node {node} is {value}, must be in [0, 1]"
                ),
            },
            Violation::InitialSimplexResidual { node, residual } => write!(
                f,
                "initial compartments at node {node} miss the unit sum by {residual:e}"
            ),
        }
    }
}

/// Result of [`ModelConfig::validate`]: empty means every assumption holds.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return f.write_str("valid");
        }
        for (idx, v) in self.violations.iter().enumerate() {
            if idx > 0 {
                writeln!(f)?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

// --- errors ------------------------------------------------------------------

/// Inconsistent dimensions when assembling a model.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{0}")]
pub struct DimensionError(pub String);

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StepError {
    #[error("node {node}: compartments miss the unit sum by {residual:e} (tolerance {SIMPLEX_TOL:e})")]
    SimplexViolation { node: usize, residual: f64 },
}

#[derive(Debug, Error)]
pub enum SimulationError {
    #[error("configuration is invalid:\n{0}")]
    InvalidConfig(ValidationReport),
    #[error("step {t}: {source}")]
    Step { t: usize, source: StepError },
    #[error("step {t}: {compartment} fraction at node {node} left [0, 1] ({value})")]
    BoxViolation {
        t: usize,
        node: usize,
        compartment: Compartment,
        value: f64,
    },
    #[error("step {t}: susceptible fraction increased at node {node} ({before} -> {after})")]
    SusceptibleIncreased {
        t: usize,
        node: usize,
        before: f64,
        after: f64,
    },
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::Scenario;

    fn single_node_config(beta: f64, gamma: f64, c: f64, h: f64, x0: f64) -> ModelConfig {
        let virus = VirusParams::new(
            DMatrix::from_row_slice(1, 1, &[beta]),
            DVector::from_vec(vec![gamma]),
            DVector::from_vec(vec![c]),
        )
        .unwrap();
        let initial = EpidemicState::from_infections(vec![DVector::from_vec(vec![x0])]).unwrap();
        ModelConfig::new(h, vec![virus], initial, 10).unwrap()
    }

    #[test]
    fn europe_is_valid_at_default_step() {
        let scenario = Scenario::europe();
        let report = scenario.model.validate();
        assert!(report.is_valid(), "unexpected violations: {report}");
    }

    #[test]
    fn europe_violates_infection_budget_at_h_two() {
        let mut scenario = Scenario::europe();
        scenario.set_step_size(2.0).unwrap();
        let report = scenario.model.validate();
        assert!(!report.is_valid());
        // Germany carries the largest total infection rate (0.94); doubling
        // the step pushes its budget to 1.88.
        let ger = report.violations.iter().find(|v| {
            matches!(v, Violation::InfectionBudgetExceeded { node: 2, budget } if (budget - 1.88).abs() < 1e-12)
        });
        assert!(ger.is_some(), "expected budget violation at node 2: {report}");
    }

    #[test]
    fn zero_healing_rate_is_reported() {
        let mut config = single_node_config(0.1, 0.5, 0.5, 1.0, 0.1);
        config.viruses[0].gamma[0] = 0.0;
        let report = config.validate();
        assert_eq!(
            report.violations,
            vec![Violation::NonpositiveHealingRate {
                virus: 0,
                node: 0,
                value: 0.0
            }]
        );
    }

    #[test]
    fn disease_free_state_is_a_fixed_point() {
        let scenario = Scenario::europe();
        let config = &scenario.model;
        let n = config.node_count;
        let state = EpidemicState::new(
            DVector::from_element(n, 0.7),
            vec![DVector::zeros(n), DVector::zeros(n)],
            DVector::from_element(n, 0.3),
        )
        .unwrap();
        let next = config.step(&state).unwrap();
        assert_eq!(next, state);
    }

    #[test]
    fn scalar_step_matches_hand_computation() {
        // s = 0.9, x = 0.1, beta = 0, gamma = 0.5, h = 1:
        // no infection, half the infected recover.
        let config = single_node_config(0.0, 0.5, 1.0, 1.0, 0.1);
        let next = config.step(&config.initial).unwrap();
        assert_eq!(next.susceptible[0], 0.9);
        assert_eq!(next.infected[0][0], 0.05);
        assert_eq!(next.recovered[0], 0.05);
    }

    #[test]
    fn step_rejects_corrupted_state() {
        let config = single_node_config(0.1, 0.5, 0.5, 1.0, 0.1);
        let state = EpidemicState::new(
            DVector::from_vec(vec![0.5]),
            vec![DVector::from_vec(vec![0.1])],
            DVector::from_vec(vec![0.1]),
        )
        .unwrap();
        let err = config.step(&state).unwrap_err();
        assert!(matches!(err, StepError::SimplexViolation { node: 0, .. }));
    }

    #[test]
    fn europe_first_step_conserves_mass() {
        let scenario = Scenario::europe();
        let next = scenario.model.step(&scenario.model.initial).unwrap();
        let residual = next.conservation_residual();
        assert!(residual.max() < 1e-12, "residual {}", residual.max());
    }

    #[test]
    fn zero_horizon_yields_initial_state_only() {
        let mut scenario = Scenario::europe();
        scenario.model.horizon = 0;
        let traj = scenario.model.simulate().unwrap();
        assert_eq!(traj.len(), 1);
        assert_eq!(traj.states[0], scenario.model.initial);
        assert_eq!(traj.outputs.len(), 1);
    }

    #[test]
    fn europe_infections_rise_then_decay() {
        let scenario = Scenario::europe();
        let traj = scenario.model.simulate().unwrap();
        let horizon = traj.len() - 1;
        let mut peaks = vec![vec![0usize; 5]; 2];
        for k in 0..2 {
            for i in 0..5 {
                let series: Vec<f64> = traj.states.iter().map(|s| s.infected[k][i]).collect();
                let (t_peak, peak) = series
                    .iter()
                    .enumerate()
                    .fold((0, f64::MIN), |acc, (t, &v)| if v > acc.1 { (t, v) } else { acc });
                assert!(t_peak > 0, "virus {k} node {i} never rises");
                assert!(t_peak < horizon, "virus {k} node {i} never decays");
                assert!(series[horizon] < peak);
                peaks[k][i] = t_peak;
            }
        }
        // The more contagious first virus peaks higher than the second.
        let peak = |k: usize| -> f64 {
            traj.states
                .iter()
                .flat_map(|s| s.infected[k].iter().copied())
                .fold(f64::MIN, f64::max)
        };
        assert!(peak(0) > peak(1));
    }

    #[test]
    fn europe_susceptibles_never_increase() {
        let scenario = Scenario::europe();
        let traj = scenario.model.simulate().unwrap();
        for t in 1..traj.len() {
            for i in 0..5 {
                assert!(traj.states[t].susceptible[i] <= traj.states[t - 1].susceptible[i]);
            }
        }
    }

    #[test]
    fn output_is_zero_without_infections() {
        let scenario = Scenario::europe();
        let n = scenario.model.node_count;
        let state = EpidemicState::new(
            DVector::from_element(n, 1.0),
            vec![DVector::zeros(n), DVector::zeros(n)],
            DVector::zeros(n),
        )
        .unwrap();
        assert_eq!(scenario.model.output(&state), DVector::zeros(n));
    }

    #[test]
    fn europe_initial_output_matches_hand_computation() {
        // First node: 0.4 * 0.02 + 0.3 * 0.001 = 0.0083.
        let scenario = Scenario::europe();
        let y = scenario.model.output(&scenario.model.initial);
        assert!((y[0] - 0.0083).abs() < 1e-15, "y[0] = {}", y[0]);
    }

    #[test]
    fn unit_measurement_single_virus_output_is_identity() {
        let config = single_node_config(0.1, 0.5, 1.0, 1.0, 0.37);
        let y = config.output(&config.initial);
        assert_eq!(y[0], 0.37);
    }

    #[test]
    fn conservation_residual_examples() {
        let state = EpidemicState::new(
            DVector::from_vec(vec![1.0]),
            vec![DVector::zeros(1)],
            DVector::zeros(1),
        )
        .unwrap();
        assert_eq!(state.conservation_residual()[0], 0.0);

        let state = EpidemicState::new(
            DVector::from_vec(vec![0.5]),
            vec![DVector::from_vec(vec![0.4])],
            DVector::from_vec(vec![0.2]),
        )
        .unwrap();
        assert!((state.conservation_residual()[0] - 0.1).abs() < 1e-15);

        let scenario = Scenario::europe();
        assert_eq!(scenario.model.initial.conservation_residual().max(), 0.0);
    }

    #[test]
    fn simulate_is_deterministic() {
        let scenario = Scenario::europe();
        let a = scenario.model.simulate().unwrap();
        let b = scenario.model.simulate().unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn simulate_replays_step_exactly() {
        let mut scenario = Scenario::europe();
        scenario.model.horizon = 50;
        let traj = scenario.model.simulate().unwrap();
        for t in 0..50 {
            let replayed = scenario.model.step(&traj.states[t]).unwrap();
            assert_eq!(replayed, traj.states[t + 1]);
        }
    }
}
