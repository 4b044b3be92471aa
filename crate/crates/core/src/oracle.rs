//! Brute-force reference computations. Nothing here shares code with the
//! production paths it is used to check: resonance is re-derived from the
//! multiset condition, sums are enumerated, derivatives are finite differences.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{Flow, IntegratorConfig};
use crate::hamiltonian::Model;
use crate::params::ModelParams;
use crate::state::FourierState;

pub const WICK_MAX_ORDER: usize = 6;
pub const RESONANT_SUM_MAX_N: usize = 16;
pub const JACOBIAN_MAX_N: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairingSum {
    pub value: f64,
    pub n_pairings: usize,
}

fn covariance(n: i64, alpha: f64) -> f64 {
    let a = (n.abs() as f64).powf(2.0 * alpha);
    1.0 / (1.0 + a)
}

fn for_each_permutation(len: usize, mut visit: impl FnMut(&[usize])) {
    fn rec(k: usize, perm: &mut Vec<usize>, used: &mut Vec<bool>, visit: &mut dyn FnMut(&[usize])) {
        if k == perm.len() {
            visit(perm);
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                perm[k] = i;
                rec(k + 1, perm, used, visit);
                used[i] = false;
            }
        }
    }
    let mut perm = vec![0; len];
    let mut used = vec![false; len];
    rec(0, &mut perm, &mut used, &mut visit);
}

/// `E[prod u(n_j) conj(u(m_j))] = sum_{s in S_l} prod_j delta(m_j, n_{s(j)}) / (1 + |n_j|^{2 alpha})`.
pub fn wick_enumeration(ns: &[i64], ms: &[i64], alpha: f64) -> Result<PairingSum> {
    if ns.len() != ms.len() {
        return Err(Error::InvalidParams(format!(
            "index lists differ in length ({} vs {})",
            ns.len(),
            ms.len()
        )));
    }
    if ns.len() > WICK_MAX_ORDER {
        return Err(Error::SizeCap {
            what: "Wick order",
            cap: WICK_MAX_ORDER,
            got: ns.len(),
        });
    }
    let weight: f64 = ns.iter().map(|&n| covariance(n, alpha)).product();
    let mut n_pairings = 0;
    for_each_permutation(ns.len(), |perm| {
        if ms.iter().zip(perm).all(|(m, &p)| *m == ns[p]) {
            n_pairings += 1;
        }
    });
    Ok(PairingSum {
        value: weight * n_pairings as f64,
        n_pairings,
    })
}

/// `sum u(n1) u(n2) conj(u(m1)) conj(u(m2))` over `n1 + n2 = m1 + m2` with `{n1, n2} = {m1, m2}`.
pub fn resonant_sum(u: &FourierState, params: &ModelParams) -> Result<f64> {
    let nt = u.n_trunc();
    if nt > RESONANT_SUM_MAX_N {
        return Err(Error::SizeCap {
            what: "resonant_sum truncation",
            cap: RESONANT_SUM_MAX_N,
            got: nt,
        });
    }
    let _ = params;
    let nt = nt as i64;
    let mut acc = Complex64::new(0.0, 0.0);
    for n1 in -nt..=nt {
        for n2 in -nt..=nt {
            for m1 in -nt..=nt {
                let m2 = n1 + n2 - m1;
                if m2.abs() > nt {
                    continue;
                }
                let mut lhs = [n1, n2];
                let mut rhs = [m1, m2];
                lhs.sort_unstable();
                rhs.sort_unstable();
                if lhs == rhs {
                    acc += u.get(n1) * u.get(n2) * u.get(m1).conj() * u.get(m2).conj();
                }
            }
        }
    }
    Ok(acc.re)
}

/// `F_N` by direct quadruple enumeration with divisors from raw powers.
pub fn f_n_brute(u: &FourierState, params: &ModelParams) -> Result<Complex64> {
    let nt = u.n_trunc();
    if nt > RESONANT_SUM_MAX_N {
        return Err(Error::SizeCap {
            what: "f_n_brute truncation",
            cap: RESONANT_SUM_MAX_N,
            got: nt,
        });
    }
    let nt = nt as i64;
    let w = |n: i64| (n.abs() as f64).powf(2.0 * params.alpha);
    let sigma = params.sign();
    let mut acc = Complex64::new(0.0, 0.0);
    for n1 in -nt..=nt {
        for n2 in -nt..=nt {
            for m1 in -nt..=nt {
                let m2 = n1 + n2 - m1;
                if m2.abs() > nt {
                    continue;
                }
                let mut lhs = [n1, n2];
                let mut rhs = [m1, m2];
                lhs.sort_unstable();
                rhs.sort_unstable();
                if lhs == rhs {
                    continue;
                }
                let phi = w(n1) + w(n2) - w(m1) - w(m2);
                let coeff = Complex64::new(-sigma, 0.0) / (Complex64::new(0.0, 2.0) * phi);
                acc += coeff * u.get(n1) * u.get(n2) * u.get(m1).conj() * u.get(m2).conj();
            }
        }
    }
    Ok(acc)
}

/// Central-difference Wirtinger gradient `df/d conj(u) = (df/dRe + i df/dIm) / 2`.
pub fn fd_gradient<F>(f: F, u: &FourierState, h: f64) -> Result<FourierState>
where
    F: Fn(&FourierState) -> f64,
{
    if !(h > 0.0) {
        return Err(Error::InvalidParams(format!("finite-difference step must be positive, got {h}")));
    }
    let mut grad = FourierState::zeros(u.n_trunc());
    let mut probe = u.clone();
    for i in 0..u.len() {
        let mut partial = [0.0; 2];
        for (part, dir) in [Complex64::new(h, 0.0), Complex64::new(0.0, h)].iter().enumerate() {
            let base = u.coeffs()[i];
            probe.coeffs_mut()[i] = base + dir;
            let plus = f(&probe);
            probe.coeffs_mut()[i] = base - dir;
            let minus = f(&probe);
            probe.coeffs_mut()[i] = base;
            let d = (plus - minus) / (2.0 * h);
            if !d.is_finite() {
                return Err(Error::NonFiniteDifference {
                    coordinate: 2 * i + part,
                });
            }
            partial[part] = d;
        }
        grad.coeffs_mut()[i] = Complex64::new(partial[0], partial[1]) * 0.5;
    }
    Ok(grad)
}

/// Default step `1e-5 (1 + ||u||)`.
pub fn default_step(u: &FourierState) -> f64 {
    1e-5 * (1.0 + crate::norms::mass(u).sqrt())
}

/// Determinant of the real `2(2N+1)`-dimensional Jacobian of `u -> Phi_t(u)`,
/// by central differences and dense LU.
pub fn jacobian_det(
    t: f64,
    u: &FourierState,
    params: &ModelParams,
    cfg: &IntegratorConfig,
    h: f64,
) -> Result<f64> {
    if u.n_trunc() > JACOBIAN_MAX_N {
        return Err(Error::SizeCap {
            what: "jacobian_det truncation",
            cap: JACOBIAN_MAX_N,
            got: u.n_trunc(),
        });
    }
    if t == 0.0 {
        return Ok(1.0);
    }
    let model = Model::new(params.with_truncation(u.n_trunc()))?;
    let flow = Flow::new(&model, *cfg)?;
    let dim = 2 * u.len();
    let mut jac = DMatrix::<f64>::zeros(dim, dim);
    let mut probe = u.clone();
    for col in 0..dim {
        let (i, dir) = (col / 2, if col % 2 == 0 { Complex64::new(h, 0.0) } else { Complex64::new(0.0, h) });
        let base = u.coeffs()[i];
        probe.coeffs_mut()[i] = base + dir;
        let plus = flow.evolve(&probe, t)?;
        probe.coeffs_mut()[i] = base - dir;
        let minus = flow.evolve(&probe, t)?;
        probe.coeffs_mut()[i] = base;
        for (k, (p, m)) in plus.coeffs().iter().zip(minus.coeffs()).enumerate() {
            let d = (p - m) / (2.0 * h);
            if !(d.re.is_finite() && d.im.is_finite()) {
                return Err(Error::NonFiniteDifference { coordinate: col });
            }
            jac[(2 * k, col)] = d.re;
            jac[(2 * k + 1, col)] = d.im;
        }
    }
    let det = jac.lu().determinant();
    if !(1e-3..=1e3).contains(&det.abs()) {
        return Err(Error::IllConditioned { det });
    }
    Ok(det)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::random_state;

    #[test]
    fn wick_examples() {
        assert_eq!(
            wick_enumeration(&[0], &[0], 0.9).unwrap(),
            PairingSum {
                value: 1.0,
                n_pairings: 1
            }
        );
        let k = 3;
        let alpha = 0.95;
        let s = wick_enumeration(&[k, k], &[k, k], alpha).unwrap();
        assert_eq!(s.n_pairings, 2);
        let c = 1.0 / (1.0 + 3f64.powf(1.9));
        assert!((s.value - 2.0 * c * c).abs() < 1e-16);
        assert_eq!(
            wick_enumeration(&[1], &[2], 1.0).unwrap(),
            PairingSum {
                value: 0.0,
                n_pairings: 0
            }
        );
        assert!(wick_enumeration(&[0; 7], &[0; 7], 1.0).is_err());
    }

    #[test]
    fn wick_is_permutation_symmetric() {
        let ns = [1, -2, 1, 0];
        let ms = [0, 1, 1, -2];
        let base = wick_enumeration(&ns, &ms, 0.9).unwrap();
        assert_eq!(base.n_pairings, 2);
        let ms_perm = [1, -2, 0, 1];
        let ns_perm = [0, 1, -2, 1];
        assert_eq!(wick_enumeration(&ns_perm, &ms_perm, 0.9).unwrap(), base);
        assert_eq!(wick_enumeration(&ns, &ms_perm, 0.9).unwrap(), base);
    }

    #[test]
    fn resonant_sum_examples() {
        let p = ModelParams::new(0.95, 1, 3, 1.0).unwrap();
        assert_eq!(resonant_sum(&FourierState::zeros(3), &p).unwrap(), 0.0);
        let a = Complex64::new(0.5, -0.7);
        let r = resonant_sum(&FourierState::single_mode(3, -2, a), &p).unwrap();
        assert!((r - a.norm_sqr().powi(2)).abs() < 1e-15);
        assert!(resonant_sum(&FourierState::zeros(17), &p).is_err());
    }

    #[test]
    fn resonant_sum_pairing_count() {
        let p = ModelParams::new(1.0, 1, 6, 1.0).unwrap();
        let u = random_state(6, 4, 1.3);
        let m: f64 = crate::norms::mass(&u);
        let quartic: f64 = u.coeffs().iter().map(|c| c.norm_sqr().powi(2)).sum();
        let r = resonant_sum(&u, &p).unwrap();
        assert!((r - (2.0 * m * m - quartic)).abs() < 1e-13);
        let rotated = u.scaled(Complex64::from_polar(1.0, 0.4));
        assert!((resonant_sum(&rotated, &p).unwrap() - r).abs() < 1e-13);
    }

    #[test]
    fn fd_gradient_of_mass() {
        let u = random_state(3, 2, 1.0);
        let g = fd_gradient(crate::norms::mass, &u, 1e-4).unwrap();
        for (a, b) in g.coeffs().iter().zip(u.coeffs()) {
            assert!((a - b).norm() < 1e-10);
        }
        assert!(fd_gradient(crate::norms::mass, &u, 0.0).is_err());
    }

    #[test]
    fn fd_gradient_is_second_order() {
        let u = random_state(2, 6, 1.0);
        let exact = crate::hamiltonian::grad_l4(&u);
        let err = |h: f64| {
            let g = fd_gradient(crate::norms::l4_quartic, &u, h).unwrap();
            g.coeffs()
                .iter()
                .zip(exact.coeffs())
                .map(|(a, b)| (a - b).norm())
                .fold(0.0, f64::max)
        };
        let ratio = err(0.01) / err(0.02);
        assert!((ratio - 0.25).abs() < 0.02, "ratio {ratio}");
    }

    #[test]
    fn jacobian_trivial_cases() {
        let p = ModelParams::new(1.0, 1, 1, 1.0).unwrap();
        let cfg = IntegratorConfig::rk4(1e-3);
        let u = random_state(1, 1, 0.8);
        assert_eq!(jacobian_det(0.0, &u, &p, &cfg, 1e-5).unwrap(), 1.0);
        let d = jacobian_det(0.7, &FourierState::zeros(1), &p, &cfg, 1e-5).unwrap();
        assert!((d - 1.0).abs() < 1e-12);
        assert!(jacobian_det(0.5, &FourierState::zeros(5), &p, &cfg, 1e-5).is_err());
    }
}
