//! Energies, the normal-form generator `F_N` and its Hamiltonian vector field.
//!
//! Convention: the flow of a real functional `G` is `du(n)/dt = -i dG/d conj(u(n))`
//! (Wirtinger derivative). Under this convention the flow of
//!
//! `F_N(u) = sum_{nonresonant} -sigma / (2i Phi) u(n1) u(n2) conj(u(m1)) conj(u(m2))`
//!
//! is `du(n)/dt = sum sigma / Phi(j1, j2, j3) u(j1) u(j2) conj(u(j3))`, and it is this
//! field that solves the homological equation `{K, F_N} + (sigma/2) Q = (sigma/2) Z`
//! with `Z` the resonant quartic sum.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::divisor::{divisor, DivisorTable};
use crate::error::{Error, Result};
use crate::norms::{l4_quartic, mass, self_convolution};
use crate::oracle;
use crate::params::ModelParams;
use crate::state::FourierState;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Outputs wider than this are evaluated in parallel over output modes.
const PARALLEL_WIDTH: usize = 49;

/// Relative tolerance on the imaginary part of the assembled `F_N` sum.
pub const FN_IMAG_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    /// `sum |n|^{2 alpha} |u(n)|^2`
    pub kinetic: f64,
    /// `||u||_{L^4}^4`
    pub quartic: f64,
    /// `kinetic + (sigma/2) quartic`
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorFieldOutput {
    pub dot_u: FourierState,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FnValue {
    pub value: f64,
    /// `|Im|` of the assembled sum relative to the sum of absolute contributions.
    pub imag_residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HomologicalCheck {
    /// `{K, F_N} + (sigma/2) ||u||_{L^4}^4`
    pub lhs: f64,
    /// `(sigma/2)` times the enumerated resonant quartic sum.
    pub rhs_exact: f64,
    /// `sigma * mass^2`, reported for comparison only.
    pub rhs_paper: f64,
}

impl HomologicalCheck {
    pub fn residual(&self) -> f64 {
        (self.lhs - self.rhs_exact).abs() / self.rhs_exact.abs().max(f64::MIN_POSITIVE)
    }
}

/// A model instance with its divisor table built once.
#[derive(Debug, Clone)]
pub struct Model {
    params: ModelParams,
    table: DivisorTable,
}

impl Model {
    pub fn new(params: ModelParams) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            table: DivisorTable::new(params.alpha, params.n_trunc),
            params,
        })
    }

    #[inline]
    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    #[inline]
    pub fn n_trunc(&self) -> usize {
        self.params.n_trunc
    }

    #[inline]
    pub fn table(&self) -> &DivisorTable {
        &self.table
    }

    fn check(&self, u: &FourierState) -> Result<()> {
        if u.n_trunc() != self.params.n_trunc {
            return Err(Error::TruncationMismatch {
                expected: self.params.n_trunc,
                got: u.n_trunc(),
            });
        }
        u.check_finite()
    }

    pub fn kinetic(&self, u: &FourierState) -> f64 {
        self.table
            .frequencies()
            .iter()
            .zip(u.coeffs())
            .map(|(w, c)| w * c.norm_sqr())
            .sum()
    }

    pub fn energy(&self, u: &FourierState) -> Result<EnergyBreakdown> {
        self.check(u)?;
        Ok(self.energy_unchecked(u))
    }

    pub(crate) fn energy_unchecked(&self, u: &FourierState) -> EnergyBreakdown {
        let kinetic = self.kinetic(u);
        let quartic = l4_quartic(u);
        EnergyBreakdown {
            kinetic,
            quartic,
            total: kinetic + 0.5 * self.params.sign() * quartic,
        }
    }

    pub fn vector_field(&self, u: &FourierState) -> Result<VectorFieldOutput> {
        self.check(u)?;
        let mut out = vec![ZERO; u.len()];
        self.field_into(u.coeffs(), &mut out);
        Ok(VectorFieldOutput {
            dot_u: FourierState::from_coeffs(u.n_trunc(), out)?,
        })
    }

    /// Cache-friendly evaluation into `out`; `u` and `out` have length `2N+1`.
    ///
    /// `out(n) = sigma * sum_{j3} conj(u(j3)) sum_{j1} u(j1) u(n + j3 - j1) / Phi`,
    /// with the inner sum running in a fixed order for every `n`.
    pub fn field_into(&self, u: &[Complex64], out: &mut [Complex64]) {
        let width = u.len();
        debug_assert_eq!(width, 2 * self.params.n_trunc + 1);
        let sigma = self.params.sign();
        let last = width - 1;
        let eval = |ni: usize| -> Complex64 {
            let mut acc = ZERO;
            for (ki, uk) in u.iter().enumerate() {
                if uk.re == 0.0 && uk.im == 0.0 {
                    continue;
                }
                // j2 index = ni + ki - ii must lie in 0..=last.
                let s = ni + ki;
                let lo = s.saturating_sub(last);
                let hi = s.min(last);
                let row = self.table.row(ni, ki);
                let mut inner = ZERO;
                for ii in lo..=hi {
                    let r = row[ii];
                    if r != 0.0 {
                        inner += (u[ii] * u[s - ii]) * r;
                    }
                }
                acc += inner * uk.conj();
            }
            acc * sigma
        };
        if width >= PARALLEL_WIDTH {
            out.par_iter_mut()
                .enumerate()
                .for_each(|(ni, o)| *o = eval(ni));
        } else {
            for (ni, o) in out.iter_mut().enumerate() {
                *o = eval(ni);
            }
        }
    }

    /// Triple loop with divisors evaluated on the fly. Reference path for tests.
    pub fn vector_field_naive(&self, u: &FourierState) -> Result<VectorFieldOutput> {
        self.check(u)?;
        let nt = self.params.n_trunc as i64;
        let sigma = self.params.sign();
        let mut dot = FourierState::zeros(u.n_trunc());
        for j1 in -nt..=nt {
            for j2 in -nt..=nt {
                for j3 in -nt..=nt {
                    let n = j1 + j2 - j3;
                    if n.abs() > nt {
                        continue;
                    }
                    let d = divisor(j1, j2, j3, self.params.alpha);
                    if d.resonant {
                        continue;
                    }
                    let term = u.get(j1) * u.get(j2) * u.get(j3).conj() * (sigma / d.value);
                    let cur = dot.get(n);
                    dot.set(n, cur + term);
                }
            }
        }
        Ok(VectorFieldOutput { dot_u: dot })
    }

    pub fn f_n_value(&self, u: &FourierState) -> Result<f64> {
        let v = self.f_n_with_residual(u)?;
        if v.imag_residual > FN_IMAG_TOL {
            return Err(Error::ImaginaryResidual {
                residual: v.imag_residual,
            });
        }
        Ok(v.value)
    }

    /// `F_N = (i/2) sum_n conj(u(n)) X(n)` where `X` is the cubic field; the
    /// imaginary part of that sum is `(1/2) d(mass)/dt` and must vanish.
    pub fn f_n_with_residual(&self, u: &FourierState) -> Result<FnValue> {
        self.check(u)?;
        let mut dot = vec![ZERO; u.len()];
        self.field_into(u.coeffs(), &mut dot);
        Ok(self.f_n_from_field(u.coeffs(), &dot))
    }

    pub(crate) fn f_n_from_field(&self, u: &[Complex64], dot: &[Complex64]) -> FnValue {
        let mut z = ZERO;
        let mut scale = 0.0;
        for (a, b) in u.iter().zip(dot) {
            let t = a.conj() * b;
            z += t;
            scale += t.norm();
        }
        let f = Complex64::new(0.0, 0.5) * z;
        let imag_residual = if scale > 0.0 { f.im.abs() / (0.5 * scale) } else { 0.0 };
        FnValue {
            value: f.re,
            imag_residual,
        }
    }

    /// `d/dt H[Phi_t(u)]` at `t = 0` by the chain rule:
    /// `2 Re sum conj(dH/d conj u(n)) X(n)`, `dH/d conj u(n) = |n|^{2a} u(n) + (sigma/2) grad_l4(n)`.
    pub fn g_n_observable(&self, u: &FourierState) -> Result<f64> {
        self.check(u)?;
        let mut dot = vec![ZERO; u.len()];
        self.field_into(u.coeffs(), &mut dot);
        Ok(self.g_n_from_field(u, &dot))
    }

    pub(crate) fn g_n_from_field(&self, u: &FourierState, dot: &[Complex64]) -> f64 {
        let g4 = grad_l4(u);
        let half_sigma = 0.5 * self.params.sign();
        let w = self.table.frequencies();
        let mut acc = 0.0;
        for i in 0..u.len() {
            let dh = u.coeffs()[i] * w[i] + g4.coeffs()[i] * half_sigma;
            acc += (dh.conj() * dot[i]).re;
        }
        2.0 * acc
    }

    /// `{K, F_N}`: derivative of the kinetic energy along the field.
    pub fn kinetic_bracket(&self, u: &FourierState) -> Result<f64> {
        self.check(u)?;
        let mut dot = vec![ZERO; u.len()];
        self.field_into(u.coeffs(), &mut dot);
        let w = self.table.frequencies();
        Ok(2.0
            * u.coeffs()
                .iter()
                .zip(&dot)
                .zip(w)
                .map(|((a, b), w)| w * (a.conj() * b).re)
                .sum::<f64>())
    }

    pub fn homological_check(&self, u: &FourierState) -> Result<HomologicalCheck> {
        let bracket = self.kinetic_bracket(u)?;
        let half_sigma = 0.5 * self.params.sign();
        let m = mass(u);
        Ok(HomologicalCheck {
            lhs: bracket + half_sigma * l4_quartic(u),
            rhs_exact: half_sigma * oracle::resonant_sum(u, &self.params)?,
            rhs_paper: self.params.sign() * m * m,
        })
    }
}

/// `dQ/d conj(u(n)) = 2 sum_{n1 + n2 - m = n} u(n1) u(n2) conj(u(m))`, via the self-convolution.
pub fn grad_l4(u: &FourierState) -> FourierState {
    let conv = self_convolution(u);
    let nt = u.n_trunc();
    let c = u.coeffs();
    // (u*u)(n + m) sits at index (n + N) + (m + N).
    FourierState::from_fn(nt, |n| {
        let ni = (n + nt as i64) as usize;
        let mut acc = ZERO;
        for (mi, um) in c.iter().enumerate() {
            acc += um.conj() * conv[ni + mi];
        }
        acc * 2.0
    })
}

pub fn energy(u: &FourierState, params: &ModelParams) -> Result<EnergyBreakdown> {
    Model::new(*params)?.energy(u)
}

pub fn f_n_value(u: &FourierState, params: &ModelParams) -> Result<f64> {
    Model::new(*params)?.f_n_value(u)
}

pub fn vector_field(u: &FourierState, params: &ModelParams) -> Result<VectorFieldOutput> {
    Model::new(*params)?.vector_field(u)
}

pub fn g_n_observable(u: &FourierState, params: &ModelParams) -> Result<f64> {
    Model::new(*params)?.g_n_observable(u)
}

pub fn homological_check(u: &FourierState, params: &ModelParams) -> Result<HomologicalCheck> {
    Model::new(*params)?.homological_check(u)
}
