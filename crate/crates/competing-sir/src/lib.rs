//! Competing multi-virus SIR epidemics on population networks: simulation,
//! spectral/Lyapunov eradication certificates, local-observability analysis
//! of the aggregated symptomatic output, and Luenberger state estimation.
//!
//! Several viruses spread over the same set of population nodes and compete
//! for hosts: an individual carries at most one virus at a time and is immune
//! after recovery. Health authorities only see the *sum* of symptomatic
//! fractions per node, weighted by how often each virus shows symptoms — the
//! per-virus infection levels are hidden. This crate simulates that model,
//! certifies when every virus dies out exponentially fast, decides when the
//! hidden levels can be recovered from the aggregate signal, and runs an
//! observer that tracks them online.
//!
//! ## Examples
//!
//! Each major capability has a runnable example against the bundled
//! two-virus Europe scenario:
//!
//! ```bash
//! cargo run --example validate_scenario      # assumption checks
//! cargo run --example simulate_epidemic      # trajectories and peaks
//! cargo run --example certify_eradication    # spectral + Lyapunov certificates
//! cargo run --example observability_rank     # rank tests in both regimes
//! cargo run --example reconstruct_window     # state recovery from outputs
//! cargo run --example track_hidden_state     # Luenberger observer run
//! cargo run --example gain_sweep             # observer gain grid search
//! ```
//!
//! ## Library tour
//!
//! - [`model`] — domain types ([`ModelConfig`], [`EpidemicState`],
//!   [`Trajectory`]), validation, the step map, and simulation.
//! - [`stability`] — per-virus transition matrices, spectral radius,
//!   diagonal Lyapunov certificates, and decay-rate bounds.
//! - [`observability`] — stacked observability matrices, numerical rank
//!   tests, and window-based state reconstruction.
//! - [`observer`] — the innovation-driven observer and its run records.
//! - [`scenario`] — the TOML scenario format and the bundled
//!   [`Scenario::europe`] fixture.
//! - [`report`] — deterministic CSV artifacts.
//! - [`commands`] — the operations behind the `competing-sir` binary
//!   (`validate`, `simulate`, `stability`, `observability`, `observe`,
//!   `sweep`).
//!
//! ```
//! use competing_sir::Scenario;
//!
//! let scenario = Scenario::europe();
//! let trajectory = scenario.model.simulate().unwrap();
//! assert_eq!(trajectory.len(), scenario.model.horizon + 1);
//! ```

pub mod commands;
pub mod model;
pub mod observability;
pub mod observer;
pub mod report;
pub mod scenario;
pub mod stability;

pub use model::{
    EpidemicState, ModelConfig, SimulationError, StepError, Trajectory, ValidationReport,
    Violation, VirusParams, SIMPLEX_TOL,
};
pub use observability::{
    check_local_observability, observability_along, observability_disease_free,
    reconstruct_window, ObservabilityReport, ReconstructionError, Regime,
};
pub use observer::{run_observer, ObserverConfig, ObserverRun, ObserverState};
pub use scenario::{Scenario, ScenarioError, ScenarioFile};
pub use stability::{
    certify, certify_all, diagonal_lyapunov, spectral_radius, transition_at, transition_bound,
    StabilityEntry, StabilityReport,
};
