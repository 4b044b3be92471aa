use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fixes one model instance: dispersion exponent, coupling sign, truncation and ball radius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub alpha: f64,
    /// +1 defocusing, -1 focusing.
    pub sigma: i8,
    pub n_trunc: usize,
    /// Radius of the L2 ball; membership is `mass <= radius^2`.
    pub radius: f64,
}

impl ModelParams {
    pub fn new(alpha: f64, sigma: i8, n_trunc: usize, radius: f64) -> Result<Self> {
        let p = Self {
            alpha,
            sigma,
            n_trunc,
            radius,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.5 && self.alpha <= 1.0) {
            return Err(Error::InvalidParams(format!(
                "alpha must lie in (1/2, 1], got {}",
                self.alpha
            )));
        }
        if self.sigma != 1 && self.sigma != -1 {
            return Err(Error::InvalidParams(format!(
                "sigma must be +1 or -1, got {}",
                self.sigma
            )));
        }
        if !(self.radius > 0.0) {
            return Err(Error::InvalidParams(format!(
                "radius must be positive, got {}",
                self.radius
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn sign(&self) -> f64 {
        f64::from(self.sigma)
    }

    /// `alpha == 1`: divisors are integers and are evaluated exactly.
    #[inline]
    pub fn is_integer_regime(&self) -> bool {
        self.alpha == 1.0
    }

    pub fn with_truncation(&self, n_trunc: usize) -> Self {
        Self { n_trunc, ..*self }
    }

    pub fn with_sigma(&self, sigma: i8) -> Self {
        Self { sigma, ..*self }
    }

    /// Sobolev index used by default for blowup monitoring: `2 - 2 alpha`
    /// (which is 0, i.e. plain L2, when `alpha = 1`).
    pub fn critical_sobolev_index(&self) -> f64 {
        2.0 - 2.0 * self.alpha
    }
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            sigma: 1,
            n_trunc: 8,
            radius: 1.0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_out_of_range() {
        assert!(ModelParams::new(0.5, 1, 4, 1.0).is_err());
        assert!(ModelParams::new(1.01, 1, 4, 1.0).is_err());
        assert!(ModelParams::new(0.9, 0, 4, 1.0).is_err());
        assert!(ModelParams::new(0.9, 1, 4, 0.0).is_err());
        assert!(ModelParams::new(0.9, 1, 4, f64::NAN).is_err());
        assert!(ModelParams::new(0.9, -1, 0, 2.0).is_ok());
        assert!(ModelParams::new(1.0, 1, 4, f64::INFINITY).is_ok());
    }

    #[test]
    fn integer_regime_flag() {
        assert!(ModelParams::new(1.0, 1, 2, 1.0).unwrap().is_integer_regime());
        assert!(!ModelParams::new(0.95, 1, 2, 1.0).unwrap().is_integer_regime());
    }
}
