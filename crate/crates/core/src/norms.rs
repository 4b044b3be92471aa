//! Coefficient-sequence norms. No `2 pi` factors anywhere: `mass` is `sum |u(n)|^2`
//! and the quartic functional is the coefficient form of `||u||_{L^4}^4`.

use num_complex::Complex64;

use crate::error::Result;
use crate::state::FourierState;

pub fn mass(u: &FourierState) -> f64 {
    u.coeffs().iter().map(|c| c.norm_sqr()).sum()
}

/// `||u||_{H^s} = (sum (1 + |n|^{2s}) |u(n)|^2)^{1/2}`.
pub fn hs_norm(u: &FourierState, s: f64) -> f64 {
    u.modes()
        .map(|(n, c)| (1.0 + sobolev_weight(n, s)) * c.norm_sqr())
        .sum::<f64>()
        .sqrt()
}

#[inline]
fn sobolev_weight(n: i64, s: f64) -> f64 {
    if n == 0 {
        if s == 0.0 {
            1.0
        } else {
            0.0
        }
    } else {
        (n.abs() as f64).powf(2.0 * s)
    }
}

/// `||u||_{FL^{0,p}} = (sum |u(n)|^p)^{1/p}`.
pub fn fl_norm(u: &FourierState, p: f64) -> f64 {
    u.coeffs()
        .iter()
        .map(|c| c.norm().powf(p))
        .sum::<f64>()
        .powf(1.0 / p)
}

/// `(u * u)(k) = sum_{n1 + n2 = k} u(n1) u(n2)` for `k = -2N..=2N`, indexed by `k + 2N`.
pub fn self_convolution(u: &FourierState) -> Vec<Complex64> {
    let c = u.coeffs();
    let mut out = vec![Complex64::new(0.0, 0.0); 2 * c.len() - 1];
    for (i, a) in c.iter().enumerate() {
        if a.re == 0.0 && a.im == 0.0 {
            continue;
        }
        for (j, b) in c.iter().enumerate() {
            out[i + j] += a * b;
        }
    }
    out
}

/// `||u||_{L^4}^4` as `sum_k |(u * u)(k)|^2`.
pub fn l4_quartic(u: &FourierState) -> f64 {
    self_convolution(u).iter().map(|c| c.norm_sqr()).sum()
}

pub fn l4_quartic_checked(u: &FourierState) -> Result<f64> {
    u.check_finite()?;
    Ok(l4_quartic(u))
}

/// `Pi_m u`: zero every coefficient with `|n| > m`. The truncation `N` is kept.
pub fn project(u: &FourierState, m: usize) -> FourierState {
    let m = m as i64;
    FourierState::from_fn(u.n_trunc(), |n| {
        if n.abs() <= m {
            u.get(n)
        } else {
            Complex64::new(0.0, 0.0)
        }
    })
}

/// `Pi_m^perp u = u - Pi_m u`.
pub fn complement(u: &FourierState, m: usize) -> FourierState {
    let m = m as i64;
    FourierState::from_fn(u.n_trunc(), |n| {
        if n.abs() > m {
            u.get(n)
        } else {
            Complex64::new(0.0, 0.0)
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn single_mode_norms() {
        let a = c(0.6, -0.8) * 1.5;
        let u = FourierState::single_mode(4, 3, a);
        assert!((l4_quartic(&u) - a.norm().powi(4)).abs() < 1e-14);
        assert!((mass(&u) - a.norm_sqr()).abs() < 1e-14);
        let s = 0.7;
        let expected = ((1.0 + 3f64.powf(2.0 * s)) * a.norm_sqr()).sqrt();
        assert!((hs_norm(&u, s) - expected).abs() < 1e-14);
        assert!((fl_norm(&u, 1.0) - a.norm()).abs() < 1e-14);
    }

    #[test]
    fn two_mode_quartic() {
        let (a, b) = (c(0.3, 0.4), c(-1.1, 0.2));
        let mut u = FourierState::zeros(2);
        u.set(0, a);
        u.set(1, b);
        let (na, nb) = (a.norm_sqr(), b.norm_sqr());
        let expected = na * na + 4.0 * na * nb + nb * nb;
        assert!((l4_quartic(&u) - expected).abs() < 1e-14);
    }

    #[test]
    fn zero_state() {
        let u = FourierState::zeros(3);
        assert_eq!(mass(&u), 0.0);
        assert_eq!(hs_norm(&u, 1.0), 0.0);
        assert_eq!(fl_norm(&u, 2.0), 0.0);
        assert_eq!(l4_quartic(&u), 0.0);
    }

    #[test]
    fn projections() {
        let u = FourierState::from_fn(3, |n| c(n as f64, 1.0));
        assert_eq!(project(&u, 3), u);
        let p0 = project(&u, 0);
        assert_eq!(p0.get(0), u.get(0));
        assert!(p0.modes().filter(|(n, _)| *n != 0).all(|(_, v)| v == c(0.0, 0.0)));
    }

    #[test]
    fn hs_at_zero_is_l2_up_to_factor() {
        let u = FourierState::from_fn(3, |n| c(1.0 / (1 + n.abs()) as f64, 0.5));
        assert!((hs_norm(&u, 0.0).powi(2) - 2.0 * mass(&u)).abs() < 1e-13);
    }

    proptest! {
        #[test]
        fn pythagoras(n in 0usize..8, m in 0usize..10, xs in proptest::collection::vec(-2f64..2.0, 34)) {
            let u = FourierState::from_fn(n, |k| {
                let i = (k + n as i64) as usize;
                c(xs[2 * i], xs[2 * i + 1])
            });
            let total = mass(&project(&u, m)) + mass(&complement(&u, m));
            prop_assert!((total - mass(&u)).abs() <= 1e-12 * (1.0 + mass(&u)));
        }
    }
}
