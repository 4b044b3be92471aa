//! Deterministic random states for tests and benchmarks.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::norms::mass;
use crate::state::FourierState;

/// Coefficients uniform in the unit square, rescaled to the given mass.
pub fn random_state(n_trunc: usize, seed: u64, target_mass: f64) -> FourierState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u = FourierState::from_fn(n_trunc, |_| {
        Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
    });
    let m = mass(&u);
    if m == 0.0 {
        u
    } else {
        u.scaled_real((target_mass / m).sqrt())
    }
}

/// Random phases with `|u(n)|` proportional to `<n>^{-decay}`, rescaled to the given mass.
pub fn decaying_state(n_trunc: usize, seed: u64, decay: f64, target_mass: f64) -> FourierState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u = FourierState::from_fn(n_trunc, |n| {
        let amp = (1.0 + (n * n) as f64).powf(-decay / 2.0);
        Complex64::from_polar(amp, rng.gen_range(0.0..std::f64::consts::TAU))
    });
    u.scaled_real((target_mass / mass(&u)).sqrt())
}
