//! Seeded sampling of the truncated Gaussian measure `gamma_{alpha,N}`, the L2-ball
//! restriction, Gibbs weights and Monte Carlo estimation.
//!
//! Every draw is a pure function of `(seed, stream, index)`: the generator is
//! ChaCha8 keyed by `seed`, with `stream` as the ChaCha stream id and the word
//! position set to `index << 24`. Results do not depend on how indices are
//! partitioned across workers.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::divisor::frequency;
use crate::error::{Error, Result};
use crate::norms::{l4_quartic, mass};
use crate::params::ModelParams;
use crate::state::FourierState;
use crate::stats::mean_sd;

/// Below this in-ball fraction an estimate is refused.
pub const MIN_ACCEPTANCE: f64 = 1e-3;

/// Largest admissible exponent of a Gibbs weight.
pub const MAX_WEIGHT_EXPONENT: f64 = 700.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MCEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n_samples: usize,
    pub n_accepted: usize,
    pub seed: u64,
}

impl MCEstimate {
    /// Mean and standard error of per-draw values (zeros included for draws
    /// outside the ball, so the mean estimates `E_gamma[1_ball ...]`).
    pub fn from_values(values: &[f64], n_accepted: usize, seed: u64) -> Self {
        let (mean, sd) = mean_sd(values);
        let n = values.len();
        Self {
            mean,
            stderr: if n > 0 { sd / (n as f64).sqrt() } else { 0.0 },
            n_samples: n,
            n_accepted,
            seed,
        }
    }

    pub fn acceptance(&self) -> f64 {
        if self.n_samples == 0 {
            0.0
        } else {
            self.n_accepted as f64 / self.n_samples as f64
        }
    }
}

#[derive(Debug, Clone)]
pub struct SampleBatch {
    pub states: Vec<FourierState>,
    /// `exp(-(sigma/2) ||u||_{L^4}^4)`; for draws outside the ball the exponent is capped at 700.
    pub weights: Vec<f64>,
    pub in_ball: Vec<bool>,
    pub seed: u64,
    pub stream_id: u64,
}

/// Stable 64-bit stream id for a name (FNV-1a).
pub fn stream_id(name: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Draws `u(n) = g_n / (1 + |n|^{2 alpha})^{1/2}` with `E|g_n|^2 = 1`.
///
/// Modes are filled in the order `0, 1, -1, 2, -2, ...`, so truncating a draw at
/// `N` to `M < N` reproduces the draw at `M` with the same key.
#[derive(Debug, Clone)]
pub struct GaussianSampler {
    n_trunc: usize,
    std_devs: Vec<f64>,
    base: ChaCha8Rng,
    seed: u64,
    stream: u64,
}

impl GaussianSampler {
    pub fn new(params: &ModelParams, seed: u64, stream: u64) -> Self {
        let nt = params.n_trunc as i64;
        let std_devs = (-nt..=nt)
            .map(|n| (0.5 / (1.0 + frequency(n, params.alpha))).sqrt())
            .collect();
        let mut base = ChaCha8Rng::seed_from_u64(seed);
        base.set_stream(stream);
        Self {
            n_trunc: params.n_trunc,
            std_devs,
            base,
            seed,
            stream,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    pub fn draw(&self, index: u64) -> FourierState {
        let mut rng = self.base.clone();
        rng.set_word_pos(u128::from(index) << 24);
        let nt = self.n_trunc as i64;
        let mut u = FourierState::zeros(self.n_trunc);
        let mut put = |n: i64, rng: &mut ChaCha8Rng| {
            let i = (n + nt) as usize;
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            u.coeffs_mut()[i] = Complex64::new(re, im) * self.std_devs[i];
        };
        put(0, &mut rng);
        for k in 1..=nt {
            put(k, &mut rng);
            put(-k, &mut rng);
        }
        u
    }
}

pub fn in_ball(u: &FourierState, params: &ModelParams) -> bool {
    mass(u) <= params.radius * params.radius
}

/// `exp(-(sigma/2) ||u||_{L^4}^4)`, unnormalized.
pub fn gibbs_weight(u: &FourierState, params: &ModelParams) -> Result<f64> {
    u.check_finite()?;
    let exponent = -0.5 * params.sign() * l4_quartic(u);
    if exponent > MAX_WEIGHT_EXPONENT {
        return Err(Error::WeightOverflow {
            exponent,
            seed: 0,
            index: 0,
        });
    }
    Ok(exponent.exp())
}

pub fn sample_gaussian(params: &ModelParams, count: usize, seed: u64, stream: u64) -> Result<SampleBatch> {
    params.validate()?;
    if count == 0 {
        return Err(Error::InvalidParams("count must be at least 1".into()));
    }
    let sampler = GaussianSampler::new(params, seed, stream);
    let drawn: Vec<(FourierState, f64, bool)> = (0..count as u64)
        .into_par_iter()
        .map(|i| {
            let u = sampler.draw(i);
            let inside = in_ball(&u, params);
            let exponent = -0.5 * params.sign() * l4_quartic(&u);
            if inside && exponent > MAX_WEIGHT_EXPONENT {
                return Err(Error::WeightOverflow {
                    exponent,
                    seed,
                    index: i,
                });
            }
            Ok((u, exponent.min(MAX_WEIGHT_EXPONENT).exp(), inside))
        })
        .collect::<Result<_>>()?;
    let mut batch = SampleBatch {
        states: Vec::with_capacity(count),
        weights: Vec::with_capacity(count),
        in_ball: Vec::with_capacity(count),
        seed,
        stream_id: stream,
    };
    for (u, w, b) in drawn {
        batch.states.push(u);
        batch.weights.push(w);
        batch.in_ball.push(b);
    }
    Ok(batch)
}

/// Evaluates `body` on every in-ball draw `0..count` in parallel; out-of-ball
/// draws yield `None`. Output is in index order regardless of worker count.
pub fn map_in_ball<T, F>(
    params: &ModelParams,
    count: usize,
    seed: u64,
    stream: u64,
    body: F,
) -> Result<Vec<Option<T>>>
where
    T: Send,
    F: Fn(u64, &FourierState) -> Result<T> + Sync,
{
    let sampler = GaussianSampler::new(params, seed, stream);
    (0..count as u64)
        .into_par_iter()
        .map(|i| {
            let u = sampler.draw(i);
            if in_ball(&u, params) {
                body(i, &u).map(Some)
            } else {
                Ok(None)
            }
        })
        .collect()
}

pub fn check_acceptance(accepted: usize, count: usize) -> Result<()> {
    let rate = accepted as f64 / count.max(1) as f64;
    if rate < MIN_ACCEPTANCE {
        return Err(Error::LowAcceptance {
            rate,
            accepted,
            count,
        });
    }
    Ok(())
}

/// Importance-sampling estimate of `int f d rho_{alpha,N} = E_gamma[1_ball w f]`.
pub fn estimate<F>(f: F, params: &ModelParams, count: usize, seed: u64, stream: u64) -> Result<MCEstimate>
where
    F: Fn(&FourierState) -> f64 + Sync,
{
    params.validate()?;
    if count == 0 {
        return Err(Error::InvalidParams("count must be at least 1".into()));
    }
    let per_draw = map_in_ball(params, count, seed, stream, |i, u| {
        let exponent = -0.5 * params.sign() * l4_quartic(u);
        if exponent > MAX_WEIGHT_EXPONENT {
            return Err(Error::WeightOverflow {
                exponent,
                seed,
                index: i,
            });
        }
        let v = exponent.exp() * f(u);
        if !v.is_finite() {
            return Err(Error::NonFiniteObservable {
                seed,
                stream,
                index: i,
            });
        }
        Ok(v)
    })?;
    let accepted = per_draw.iter().filter(|v| v.is_some()).count();
    check_acceptance(accepted, count)?;
    let values: Vec<f64> = per_draw.into_iter().map(|v| v.unwrap_or(0.0)).collect();
    Ok(MCEstimate::from_values(&values, accepted, seed))
}
