//! Luenberger observer: tracks the hidden per-virus infection levels from the
//! aggregated symptomatic output.
//!
//! The observer runs a copy of the model on its own estimates and corrects
//! every virus's update with the shared innovation `y_i - yhat_i` through a
//! per-node gain `L_i`:
//!
//! ```text
//! xhat^k_i <- xhat^k_i + h*(shat_i sum_j beta^k_ij xhat^k_j - gamma^k_i xhat^k_i)
//!             + L_i (y_i - yhat_i)
//! ```
//!
//! The recovered estimate accumulates `h * sum_k gamma^k_i xhat^k_i`
//! recursively, and the susceptible estimate is pinned to the simplex,
//! `shat_i = 1 - sum_k xhat^k_i - rhat_i`. The state here carries `shat`
//! explicitly and advances it by the algebraically identical recursion
//! `shat_i <- shat_i - (new infections) - m * L_i * (y_i - yhat_i)`; with the
//! gain at zero this makes the observer's arithmetic bit-identical to a plain
//! simulation, which is part of its contract.
//!
//! Estimates are never clamped to `[0, 1]`: the correction is linear, and
//! out-of-range excursions are reported rather than hidden.

use crate::model::{
    advance_infected, advance_recovered, advance_susceptible, implied_susceptible, measure,
    Flows, ModelConfig, Trajectory,
};
use nalgebra::DVector;
use thiserror::Error;

/// Default innovation gain applied at every node.
pub const DEFAULT_GAIN: f64 = 0.5;

/// Default threshold on the relative estimation error for
/// [`ObserverRun::first_within_threshold`].
pub const DEFAULT_ERROR_THRESHOLD: f64 = 0.1;

/// Floor for the relative error denominator `max(x, floor)`, so that nodes
/// with vanished infections do not divide by zero.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-9;

/// Gains and initial estimates for an observer run.
#[derive(Debug, Clone, PartialEq)]
pub struct ObserverConfig {
    /// Innovation gain per node, shared across viruses.
    pub gain: DVector<f64>,
    /// Initial infection estimates, one vector per virus.
    pub x_hat0: Vec<DVector<f64>>,
    /// Initial recovered estimate.
    pub r_hat0: DVector<f64>,
    /// Relative-error threshold reported by the run.
    pub error_threshold: f64,
}

impl ObserverConfig {
    /// Default initialization from the first measured output: attributes the
    /// observed symptomatic fraction equally across viruses, inverted through
    /// each virus's measurement coefficient
    /// (`xhat^k_i = y_i / (m * c^k_i)`), with no recovered individuals.
    pub fn from_first_output(y0: &DVector<f64>, config: &ModelConfig, gain: DVector<f64>) -> Self {
        let n = config.node_count;
        let m = config.virus_count() as f64;
        let x_hat0 = config
            .viruses
            .iter()
            .map(|virus| {
                DVector::from_iterator(n, (0..n).map(|i| y0[i] / (m * virus.measurement[i])))
            })
            .collect();
        Self {
            gain,
            x_hat0,
            r_hat0: DVector::zeros(n),
            error_threshold: DEFAULT_ERROR_THRESHOLD,
        }
    }

    /// All estimates start at zero.
    pub fn zero_init(config: &ModelConfig, gain: DVector<f64>) -> Self {
        let n = config.node_count;
        Self {
            gain,
            x_hat0: vec![DVector::zeros(n); config.virus_count()],
            r_hat0: DVector::zeros(n),
            error_threshold: DEFAULT_ERROR_THRESHOLD,
        }
    }

    pub fn uniform_gain(config: &ModelConfig, gain: f64) -> DVector<f64> {
        DVector::from_element(config.node_count, gain)
    }
}

/// Observer state: infection and recovered estimates plus the susceptible
/// estimate implied by the simplex constraint.
#[derive(Debug, Clone, PartialEq)]
pub struct ObserverState {
    pub x_hat: Vec<DVector<f64>>,
    pub s_hat: DVector<f64>,
    pub r_hat: DVector<f64>,
}

impl ObserverState {
    pub fn new(x_hat0: Vec<DVector<f64>>, r_hat0: DVector<f64>) -> Self {
        let s_hat = implied_susceptible(&x_hat0, &r_hat0);
        Self {
            x_hat: x_hat0,
            s_hat,
            r_hat: r_hat0,
        }
    }

    /// Predicted output `yhat_i = sum_k c^k_i xhat^k_i`.
    pub fn predicted_output(&self, config: &ModelConfig) -> DVector<f64> {
        measure(&self.x_hat, &config.viruses)
    }

    /// One observer update driven by the measured output `y`. Returns the
    /// next state and the innovation `y - yhat` that drove it.
    pub fn step(
        &self,
        y: &DVector<f64>,
        config: &ModelConfig,
        gain: &DVector<f64>,
    ) -> (ObserverState, DVector<f64>) {
        let n = config.node_count;
        let m = config.virus_count() as f64;
        let innovation = y - self.predicted_output(config);
        let flows = Flows::compute(&self.s_hat, &self.x_hat, &config.viruses, config.step_size);

        let mut x_hat = advance_infected(&self.x_hat, &flows);
        for x in &mut x_hat {
            for i in 0..n {
                x[i] += gain[i] * innovation[i];
            }
        }
        let mut s_hat = advance_susceptible(&self.s_hat, &flows);
        for i in 0..n {
            s_hat[i] -= (m * gain[i]) * innovation[i];
        }
        let r_hat = advance_recovered(&self.r_hat, &flows);

        (ObserverState { x_hat, s_hat, r_hat }, innovation)
    }
}

/// Full observer run over a sequence of outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct ObserverRun {
    /// Infection estimates per step, aligned with the driving outputs.
    pub estimates: Vec<Vec<DVector<f64>>>,
    /// Recovered estimates per step.
    pub recovered_estimates: Vec<DVector<f64>>,
    /// Innovation `y - yhat` per step.
    pub innovations: Vec<DVector<f64>>,
    /// Per-step estimation errors `x - xhat`, present when the true
    /// trajectory was supplied.
    pub errors: Option<Vec<Vec<DVector<f64>>>>,
    /// First step at which the largest relative error (floored at
    /// [`RELATIVE_ERROR_FLOOR`]) drops below the configured threshold.
    pub first_within_threshold: Option<usize>,
}

impl ObserverRun {
    pub fn len(&self) -> usize {
        self.estimates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.estimates.is_empty()
    }

    /// Largest absolute estimation error at step `t`.
    pub fn max_abs_error(&self, t: usize) -> Option<f64> {
        let errors = self.errors.as_ref()?;
        Some(max_abs(&errors[t]))
    }
}

fn max_abs(vectors: &[DVector<f64>]) -> f64 {
    vectors
        .iter()
        .flat_map(|v| v.iter().map(|e| e.abs()))
        .fold(0.0, f64::max)
}

/// Largest error relative to the matching true infection level, with the
/// denominator floored: `max_{k,i} |e^k_i| / max(x^k_i, floor)`.
pub fn max_relative_error(
    errors: &[DVector<f64>],
    truth: &[DVector<f64>],
    floor: f64,
) -> f64 {
    errors
        .iter()
        .zip(truth)
        .flat_map(|(e, x)| e.iter().zip(x.iter()).map(|(e, x)| e.abs() / x.max(floor)))
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ObserverError {
    #[error("no outputs supplied")]
    EmptyOutputs,
    #[error("output {index} has {got} nodes, expected {expected}")]
    OutputLength {
        index: usize,
        got: usize,
        expected: usize,
    },
    #[error("observer dimensions do not match the model: {0}")]
    ConfigMismatch(String),
    #[error("truth trajectory has {got} states, needs at least {needed}")]
    TruthTooShort { got: usize, needed: usize },
}

/// Runs the observer over the recorded outputs. When a true trajectory is
/// supplied, per-step errors and the first threshold crossing are reported.
pub fn run_observer(
    outputs: &[DVector<f64>],
    config: &ModelConfig,
    observer: &ObserverConfig,
    truth: Option<&Trajectory>,
) -> Result<ObserverRun, ObserverError> {
    if outputs.is_empty() {
        return Err(ObserverError::EmptyOutputs);
    }
    let n = config.node_count;
    for (index, y) in outputs.iter().enumerate() {
        if y.len() != n {
            return Err(ObserverError::OutputLength {
                index,
                got: y.len(),
                expected: n,
            });
        }
    }
    if observer.gain.len() != n {
        return Err(ObserverError::ConfigMismatch(format!(
            "gain vector has length {}, expected {n}",
            observer.gain.len()
        )));
    }
    if observer.x_hat0.len() != config.virus_count()
        || observer.x_hat0.iter().any(|x| x.len() != n)
        || observer.r_hat0.len() != n
    {
        return Err(ObserverError::ConfigMismatch(
            "initial estimates do not match the model dimensions".into(),
        ));
    }
    if let Some(truth) = truth {
        if truth.len() < outputs.len() {
            return Err(ObserverError::TruthTooShort {
                got: truth.len(),
                needed: outputs.len(),
            });
        }
    }

    let steps = outputs.len();
    let mut estimates = Vec::with_capacity(steps);
    let mut recovered_estimates = Vec::with_capacity(steps);
    let mut innovations = Vec::with_capacity(steps);
    let mut state = ObserverState::new(observer.x_hat0.clone(), observer.r_hat0.clone());

    for (t, y) in outputs.iter().enumerate() {
        estimates.push(state.x_hat.clone());
        recovered_estimates.push(state.r_hat.clone());
        let (next, innovation) = state.step(y, config, &observer.gain);
        innovations.push(innovation);
        if t + 1 < steps {
            state = next;
        }
    }

    let mut first_within_threshold = None;
    let errors = truth.map(|truth| {
        let mut all = Vec::with_capacity(steps);
        for (t, est) in estimates.iter().enumerate() {
            let err: Vec<DVector<f64>> = truth.states[t]
                .infected
                .iter()
                .zip(est)
                .map(|(x, xh)| x - xh)
                .collect();
            if first_within_threshold.is_none()
                && max_relative_error(&err, &truth.states[t].infected, RELATIVE_ERROR_FLOOR)
                    < observer.error_threshold
            {
                first_within_threshold = Some(t);
            }
            all.push(err);
        }
        all
    });

    Ok(ObserverRun {
        estimates,
        recovered_estimates,
        innovations,
        errors,
        first_within_threshold,
    })
}
