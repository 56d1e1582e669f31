//! Eradication certificates for the per-virus infection dynamics.
//!
//! Stacked per virus, the infected fractions follow
//! `x^k[t+1] = (I + h(S[t] B^k - Gamma^k)) x^k[t]`. Since the susceptible
//! diagonal `S[t]` never exceeds the identity, the constant matrix
//!
//! ```text
//! M^k = I - h*Gamma^k + h*B^k
//! ```
//!
//! bounds the dynamics from above. Whenever its spectral radius is below one,
//! a diagonal quadratic Lyapunov function `V = x' P x` certifies that the
//! virus dies out exponentially fast from any initial state, and the spectrum
//! of `P - M' P M` yields a concrete decay rate.

use crate::model::VirusParams;
use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Convergence tolerance on the Rayleigh-quotient change in the power
/// iteration.
pub const RAYLEIGH_TOL: f64 = 1e-12;

/// Iteration cap before the power iteration gives up and the dense
/// eigensolver takes over.
pub const POWER_ITERATION_CAP: usize = 100_000;

/// Relative margin by which `M' P M - P` must clear negative definiteness
/// before a certificate is accepted. Guards against false certificates near
/// the stability boundary.
pub const CERTIFICATE_MARGIN: f64 = 1e-12;

/// Transition matrix with the susceptible pool at full strength,
/// `I - h*diag(gamma) + h*beta`. Bounds the infection dynamics entrywise.
pub fn transition_bound(virus: &VirusParams, h: f64) -> DMatrix<f64> {
    let n = virus.node_count();
    DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            (1.0 - h * virus.gamma[i]) + h * virus.beta[(i, i)]
        } else {
            h * virus.beta[(i, j)]
        }
    })
}

/// Exact one-step transition matrix of the infection dynamics at the given
/// susceptible levels: `I + h*(diag(s) beta - diag(gamma))`.
///
/// Equals [`transition_bound`] minus `h*(I - diag(s))*beta`, entrywise to
/// machine precision.
pub fn transition_at(virus: &VirusParams, susceptible: &DVector<f64>, h: f64) -> DMatrix<f64> {
    let n = virus.node_count();
    DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            1.0 + h * (susceptible[i] * virus.beta[(i, i)] - virus.gamma[i])
        } else {
            h * (susceptible[i] * virus.beta[(i, j)])
        }
    })
}

/// Spectral radius of an entrywise-nonnegative matrix.
///
/// Runs a power iteration on the shifted matrix `M + I` (the shift keeps the
/// dominant eigenvalue of a nonnegative matrix strictly ahead of the rest in
/// modulus) and falls back to a dense eigensolve when the iterate fails its
/// residual check.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    debug_assert!(m.is_square());
    debug_assert!(m.iter().all(|&v| v >= 0.0));
    if n == 0 {
        return 0.0;
    }

    let shifted = m + DMatrix::<f64>::identity(n, n);
    let mut v = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    let mut previous = f64::INFINITY;
    for _ in 0..POWER_ITERATION_CAP {
        let w = &shifted * &v;
        let lambda = v.dot(&w);
        let norm = w.norm();
        if norm == 0.0 {
            break;
        }
        v = w / norm;
        if (lambda - previous).abs() <= RAYLEIGH_TOL {
            break;
        }
        previous = lambda;
    }

    let w = &shifted * &v;
    let lambda = v.dot(&w);
    let residual = (&w - lambda * &v).norm();
    if residual <= 1e-11 * lambda.max(1.0) {
        lambda - 1.0
    } else {
        dense_spectral_radius(m)
    }
}

fn dense_spectral_radius(m: &DMatrix<f64>) -> f64 {
    m.complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LyapunovError {
    /// No diagonal certificate exists: the spectral radius is not below one.
    #[error("matrix is not Schur stable: spectral radius {rho}")]
    NotSchur { rho: f64 },
    /// Every candidate failed the negative-definiteness check; the matrix is
    /// numerically pathological.
    #[error("no candidate passed verification (best margin {best_margin:e})")]
    VerificationFailed { best_margin: f64 },
}

/// Largest eigenvalue of the symmetrized `M' P M - P` for a diagonal `P`.
/// Negative values mean `V = x' P x` strictly decreases along `x -> M x`.
pub fn lyapunov_decrease_margin(m: &DMatrix<f64>, p: &DVector<f64>) -> f64 {
    let pm = DMatrix::from_diagonal(p);
    let q = m.transpose() * &pm * m - pm;
    let sym = (&q + q.transpose()) * 0.5;
    sym.symmetric_eigen().eigenvalues.max()
}

fn verified(m: &DMatrix<f64>, p: &DVector<f64>) -> Option<f64> {
    if !p.iter().all(|&v| v > 0.0 && v.is_finite()) {
        return None;
    }
    let margin = lyapunov_decrease_margin(m, p);
    (margin < -CERTIFICATE_MARGIN * p.max()).then_some(margin)
}

/// Diagonal of a positive-definite diagonal `P` with `M' P M - P` negative
/// definite, for a nonnegative Schur matrix `M`.
///
/// The candidate is `p_i = eta_i / xi_i` with `xi = (I-M)^{-1} 1` and
/// `eta = (I-M')^{-1} 1`; both vectors are strictly positive exactly when the
/// spectral radius is below one. The candidate is always verified through a
/// symmetric eigensolve before it is returned, so a returned certificate is
/// sound regardless of how it was constructed. If verification fails, the
/// diagonal of the dense solution of `M' Q M - Q = -I` is tried, then
/// blends between the two.
pub fn diagonal_lyapunov(m: &DMatrix<f64>) -> Result<DVector<f64>, LyapunovError> {
    let rho = spectral_radius(m);
    if !(rho < 1.0) {
        return Err(LyapunovError::NotSchur { rho });
    }
    let n = m.nrows();
    let identity = DMatrix::<f64>::identity(n, n);
    let ones = DVector::from_element(n, 1.0);

    let mut best_margin = f64::INFINITY;
    let xi = (&identity - m).lu().solve(&ones);
    let eta = (&identity - m.transpose()).lu().solve(&ones);
    let candidate = match (xi, eta) {
        (Some(xi), Some(eta)) => {
            let p = eta.component_div(&xi);
            if verified(m, &p).is_some() {
                return Ok(p);
            }
            best_margin = best_margin.min(lyapunov_decrease_margin(m, &p));
            Some(p)
        }
        _ => None,
    };

    // Fallback: diagonal of the dense discrete Lyapunov solution, then a
    // bisection between it and the candidate.
    if let Some(dense) = dense_lyapunov_diagonal(m) {
        if verified(m, &dense).is_some() {
            return Ok(dense);
        }
        best_margin = best_margin.min(lyapunov_decrease_margin(m, &dense));
        if let Some(p) = candidate {
            for step in 1..=6 {
                let tau = 1.0 / f64::powi(2.0, step);
                for blend in [tau, 1.0 - tau] {
                    let mix = &p * (1.0 - blend) + &dense * blend;
                    if verified(m, &mix).is_some() {
                        return Ok(mix);
                    }
                }
            }
        }
    }

    Err(LyapunovError::VerificationFailed { best_margin })
}

/// Solves `M' Q M - Q = -I` densely and returns the diagonal of `Q`.
fn dense_lyapunov_diagonal(m: &DMatrix<f64>) -> Option<DVector<f64>> {
    let n = m.nrows();
    let mt = m.transpose();
    // vec(M' Q M) = (M' (x) M') vec(Q) in column-major vectorization.
    let system = mt.kronecker(&mt) - DMatrix::<f64>::identity(n * n, n * n);
    let mut rhs = DVector::zeros(n * n);
    for i in 0..n {
        rhs[i * n + i] = -1.0;
    }
    let q = system.lu().solve(&rhs)?;
    Some(DVector::from_iterator(n, (0..n).map(|i| q[i * n + i])))
}

/// Certificate for one virus: spectral radius verdict plus, when it holds,
/// the Lyapunov envelope and the decay-rate bound it implies.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityEntry {
    /// Spectral radius of the transition bound.
    pub spectral_radius: f64,
    /// True when the radius is below one and the Lyapunov certificate passed
    /// its negative-definiteness check.
    pub certified: bool,
    /// Diagonal of the verified `P`, when certified.
    pub lyapunov_diag: Option<DVector<f64>>,
    /// Smallest entry of `P`: lower envelope coefficient in
    /// `envelope_min * |x|^2 <= V(x)`.
    pub envelope_min: Option<f64>,
    /// Largest entry of `P`: upper envelope coefficient.
    pub envelope_max: Option<f64>,
    /// Smallest eigenvalue of `P - M' P M`: guaranteed per-step decrease
    /// `V(x[t+1]) - V(x[t]) <= -decrease_margin * |x[t]|^2`.
    pub decrease_margin: Option<f64>,
    /// Exponential decay rate bound `sqrt(1 - decrease_margin/envelope_max)`,
    /// in `[0, 1)` whenever certified.
    pub rate_bound: Option<f64>,
}

impl StabilityEntry {
    fn uncertified(spectral_radius: f64) -> Self {
        Self {
            spectral_radius,
            certified: false,
            lyapunov_diag: None,
            envelope_min: None,
            envelope_max: None,
            decrease_margin: None,
            rate_bound: None,
        }
    }
}

/// Per-virus certificates for a whole model.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub entries: Vec<StabilityEntry>,
}

impl StabilityReport {
    pub fn all_certified(&self) -> bool {
        self.entries.iter().all(|e| e.certified)
    }
}

/// Builds the eradication certificate for a single virus.
pub fn certify(virus: &VirusParams, h: f64) -> StabilityEntry {
    let m = transition_bound(virus, h);
    let rho = spectral_radius(&m);
    if !(rho < 1.0) {
        return StabilityEntry::uncertified(rho);
    }
    let p = match diagonal_lyapunov(&m) {
        Ok(p) => p,
        Err(_) => return StabilityEntry::uncertified(rho),
    };
    let envelope_min = p.min();
    let envelope_max = p.max();
    let decrease_margin = -lyapunov_decrease_margin(&m, &p);
    let rate_bound = (1.0 - decrease_margin / envelope_max).sqrt();
    StabilityEntry {
        spectral_radius: rho,
        certified: true,
        lyapunov_diag: Some(p),
        envelope_min: Some(envelope_min),
        envelope_max: Some(envelope_max),
        decrease_margin: Some(decrease_margin),
        rate_bound: Some(rate_bound),
    }
}

/// Certifies every virus of a model.
pub fn certify_all(viruses: &[VirusParams], h: f64) -> StabilityReport {
    StabilityReport {
        entries: viruses.iter().map(|v| certify(v, h)).collect(),
    }
}
