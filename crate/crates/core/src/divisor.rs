//! Small divisors `Phi(j1, j2, j3) = |j1|^2a + |j2|^2a - |j3|^2a - |n|^2a`, `n = j1 + j2 - j3`.
//!
//! Resonance is decided combinatorially: for `alpha` in `(1/2, 1]` the zero set of
//! `Phi` is exactly `{j1, j2} = {j3, n}` as multisets, so no floating-point zero
//! test is ever made.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Divisor {
    pub value: f64,
    pub resonant: bool,
}

/// `|n|^{2 alpha}`, with the integer square taken exactly when `alpha = 1`.
#[inline]
pub fn frequency(n: i64, alpha: f64) -> f64 {
    if alpha == 1.0 {
        (n * n) as f64
    } else if n == 0 {
        0.0
    } else {
        (n.abs() as f64).powf(2.0 * alpha)
    }
}

#[inline]
pub fn is_resonant(j1: i64, j2: i64, j3: i64, _alpha: f64) -> bool {
    let n = j1 + j2 - j3;
    (j1 == j3 && j2 == n) || (j1 == n && j2 == j3)
}

pub fn divisor(j1: i64, j2: i64, j3: i64, alpha: f64) -> Divisor {
    if is_resonant(j1, j2, j3, alpha) {
        return Divisor {
            value: 0.0,
            resonant: true,
        };
    }
    let value = if alpha == 1.0 {
        (2 * (j3 - j2) * (j1 - j3)) as f64
    } else {
        let n = j1 + j2 - j3;
        frequency(j1, alpha) + frequency(j2, alpha) - frequency(j3, alpha) - frequency(n, alpha)
    };
    Divisor {
        value,
        resonant: false,
    }
}

/// Reciprocal divisors `1/Phi` for every in-range triple at one `(alpha, N)`.
///
/// Layout is `[n][j3][j1]` with `j2 = n + j3 - j1` implied, so the inner loop of
/// the cubic vector field runs contiguously over `j1`. Resonant and out-of-range
/// entries hold 0.
#[derive(Debug, Clone)]
pub struct DivisorTable {
    alpha: f64,
    n_trunc: usize,
    width: usize,
    frequencies: Vec<f64>,
    reciprocals: Vec<f64>,
}

impl DivisorTable {
    pub fn new(alpha: f64, n_trunc: usize) -> Self {
        let nt = n_trunc as i64;
        let width = 2 * n_trunc + 1;
        let frequencies: Vec<f64> = (-nt..=nt).map(|n| frequency(n, alpha)).collect();
        let mut reciprocals = vec![0.0; width * width * width];
        for n in -nt..=nt {
            for j3 in -nt..=nt {
                let row = ((n + nt) as usize * width + (j3 + nt) as usize) * width;
                for j1 in -nt..=nt {
                    let j2 = n + j3 - j1;
                    if j2.abs() > nt || is_resonant(j1, j2, j3, alpha) {
                        continue;
                    }
                    let value = if alpha == 1.0 {
                        (2 * (j3 - j2) * (j1 - j3)) as f64
                    } else {
                        let f = |k: i64| frequencies[(k + nt) as usize];
                        f(j1) + f(j2) - f(j3) - f(n)
                    };
                    reciprocals[row + (j1 + nt) as usize] = 1.0 / value;
                }
            }
        }
        Self {
            alpha,
            n_trunc,
            width,
            frequencies,
            reciprocals,
        }
    }

    #[inline]
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    #[inline]
    pub fn n_trunc(&self) -> usize {
        self.n_trunc
    }

    /// `|n|^{2 alpha}` indexed by `n + N`.
    #[inline]
    pub fn frequencies(&self) -> &[f64] {
        &self.frequencies
    }

    /// Row of `1/Phi` over `j1 + N` for fixed output mode index `ni` and `j3` index `ki`.
    #[inline]
    pub fn row(&self, ni: usize, ki: usize) -> &[f64] {
        let start = (ni * self.width + ki) * self.width;
        &self.reciprocals[start..start + self.width]
    }

    pub fn reciprocal(&self, j1: i64, j2: i64, j3: i64) -> f64 {
        let nt = self.n_trunc as i64;
        let n = j1 + j2 - j3;
        if [j1, j2, j3, n].iter().any(|j| j.abs() > nt) {
            return 0.0;
        }
        self.row((n + nt) as usize, (j3 + nt) as usize)[(j1 + nt) as usize]
    }
}
