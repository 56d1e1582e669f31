//! Shared test support: seeded random model generators.

use competing_sir::{EpidemicState, ModelConfig, VirusParams};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// A random model satisfying every standing assumption, with comfortable
/// margin in the sampling budgets.
pub fn random_valid_config(
    rng: &mut ChaCha8Rng,
    n: usize,
    m: usize,
    horizon: usize,
) -> ModelConfig {
    let h = rng.random_range(0.25..=1.0);

    // Healing rates: positive, scaled so h * sum_k gamma^k_i stays below one.
    let mut gammas = vec![DVector::zeros(n); m];
    for i in 0..n {
        let raw: Vec<f64> = (0..m).map(|_| rng.random_range(0.05..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let budget = rng.random_range(0.3..0.95);
        for k in 0..m {
            gammas[k][i] = raw[k] * budget / (h * total);
        }
    }

    // Infection rates: nonnegative with random sparsity, scaled so
    // h * sum_k sum_j beta^k_ij stays below one.
    let mut betas = vec![DMatrix::zeros(n, n); m];
    for i in 0..n {
        let density = rng.random_range(0.3..=1.0);
        let mut raw = vec![vec![0.0; n]; m];
        let mut total = 0.0;
        for (k, row) in raw.iter_mut().enumerate() {
            for (j, value) in row.iter_mut().enumerate() {
                let keep = rng.random_range(0.0..1.0) < density || (k == 0 && j == i);
                if keep {
                    *value = rng.random_range(0.0..1.0);
                    total += *value;
                }
            }
        }
        let budget = rng.random_range(0.2..0.9);
        let factor = if total > 0.0 { budget / (h * total) } else { 0.0 };
        for k in 0..m {
            for j in 0..n {
                betas[k][(i, j)] = raw[k][j] * factor;
            }
        }
    }

    let viruses: Vec<VirusParams> = (0..m)
        .map(|k| {
            let measurement =
                DVector::from_iterator(n, (0..n).map(|_| rng.random_range(0.2..=1.0)));
            VirusParams::new(betas[k].clone(), gammas[k].clone(), measurement).unwrap()
        })
        .collect();

    let initial = random_valid_state(rng, n, m);
    ModelConfig::new(h, viruses, initial, horizon).unwrap()
}

/// A random state on the unit simplex with strictly positive infections.
pub fn random_valid_state(rng: &mut ChaCha8Rng, n: usize, m: usize) -> EpidemicState {
    let mut infected = vec![DVector::zeros(n); m];
    let mut recovered = DVector::zeros(n);
    let mut susceptible = DVector::zeros(n);
    for i in 0..n {
        let mass = rng.random_range(0.01..0.6);
        let weights: Vec<f64> = (0..m).map(|_| rng.random_range(0.05..1.0)).collect();
        let total: f64 = weights.iter().sum();
        for k in 0..m {
            infected[k][i] = mass * weights[k] / total;
        }
        recovered[i] = rng.random_range(0.0..(1.0 - mass) * 0.5);
        susceptible[i] = 1.0 - mass - recovered[i];
    }
    EpidemicState::new(susceptible, infected, recovered).unwrap()
}

/// Rescales every virus's infection matrix until its transition bound is
/// Schur stable (spectral radius below the requested ceiling).
pub fn rescale_until_stable(config: &mut ModelConfig, ceiling: f64) {
    for virus in &mut config.viruses {
        for _ in 0..200 {
            let bound = competing_sir::transition_bound(virus, config.step_size);
            if competing_sir::spectral_radius(&bound) < ceiling {
                break;
            }
            virus.beta *= 0.7;
        }
        let bound = competing_sir::transition_bound(virus, config.step_size);
        assert!(
            competing_sir::spectral_radius(&bound) < ceiling,
            "rescaling failed to stabilize a virus"
        );
    }
}

/// Duplicates the first virus, producing a model whose per-virus states are
/// indistinguishable from the aggregate output in every regime. All rates are
/// halved so the sampling budgets survive the extra virus.
pub fn with_duplicated_virus(config: &ModelConfig) -> ModelConfig {
    let mut viruses = config.viruses.clone();
    viruses.push(config.viruses[0].clone());
    for virus in &mut viruses {
        virus.beta *= 0.5;
        virus.gamma *= 0.5;
    }
    let mut infected = config.initial.infected.clone();
    let share = infected[0].clone() * 0.5;
    infected[0] = share.clone();
    infected.push(share);
    let initial = EpidemicState::new(
        config.initial.susceptible.clone(),
        infected,
        config.initial.recovered.clone(),
    )
    .unwrap();
    ModelConfig::new(config.step_size, viruses, initial, config.horizon).unwrap()
}
