//! Transported density of the Gibbs measure under the Birkhoff flow and the
//! measure-level experiments built on it.
//!
//! At finite `N` the flow preserves mass and Lebesgue measure, so for every set
//! `A` in the ball
//!
//! `rho(Phi_t(A)) = int_A exp(H[u] - H[Phi_t(u)]) rho(du)`
//!
//! holds exactly; Monte Carlo and integrator error are the only discrepancies.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{flow_with_observable_in, Flow, IntegratorConfig};
use crate::hamiltonian::Model;
use crate::measure::{check_acceptance, map_in_ball, stream_id, MCEstimate, MAX_WEIGHT_EXPONENT};
use crate::norms::{hs_norm, l4_quartic};
use crate::params::ModelParams;
use crate::state::FourierState;
use crate::stats::{loglog_slope, mean_sd};

/// Below this distance to a predicate boundary a membership decision is flagged.
pub const BOUNDARY_BAND: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Part {
    Re,
    Im,
}

/// Measurable test sets, given as predicates on states.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SetPredicate {
    /// `Re u(mode) > threshold` or `Im u(mode) > threshold`.
    CoordinateHalfspace { mode: i64, part: Part, threshold: f64 },
    /// `||u||_{H^s} <= r`.
    HsBall { s: f64, r: f64 },
    /// `||u||_{L^4}^4 <= c`.
    L4Sublevel { c: f64 },
}

impl SetPredicate {
    /// Signed distance to the boundary in the predicate's own coordinate;
    /// positive inside.
    pub fn margin(&self, u: &FourierState) -> f64 {
        match *self {
            SetPredicate::CoordinateHalfspace {
                mode,
                part,
                threshold,
            } => {
                let c = u.get(mode);
                let v = match part {
                    Part::Re => c.re,
                    Part::Im => c.im,
                };
                v - threshold
            }
            SetPredicate::HsBall { s, r } => r - hs_norm(u, s),
            SetPredicate::L4Sublevel { c } => c - l4_quartic(u),
        }
    }

    pub fn contains(&self, u: &FourierState) -> bool {
        let m = self.margin(u);
        match self {
            SetPredicate::CoordinateHalfspace { .. } => m > 0.0,
            _ => m >= 0.0,
        }
    }
}

impl fmt::Display for SetPredicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SetPredicate::CoordinateHalfspace {
                mode,
                part,
                threshold,
            } => {
                let p = match part {
                    Part::Re => "re",
                    Part::Im => "im",
                };
                write!(f, "{p}(u{mode})>{threshold}")
            }
            SetPredicate::HsBall { s, r } => write!(f, "hs({s})<={r}"),
            SetPredicate::L4Sublevel { c } => write!(f, "l4<={c}"),
        }
    }
}

fn parse_number(s: &str, what: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| Error::Predicate(format!("expected a numeric literal for {what}, got {s:?}")))
}

impl FromStr for SetPredicate {
    type Err = Error;

    /// Grammar: `re(uK)>x`, `im(uK)>x`, `hs(s)<=r`, `l4<=c` (whitespace ignored).
    fn from_str(input: &str) -> Result<Self> {
        let s: String = input.chars().filter(|c| !c.is_whitespace()).collect();
        let bad = || Error::Predicate(format!("cannot parse predicate {input:?}"));
        if let Some(rest) = s.strip_prefix("l4<=") {
            return Ok(SetPredicate::L4Sublevel {
                c: parse_number(rest, "l4 level")?,
            });
        }
        if let Some(rest) = s.strip_prefix("hs(") {
            let (inner, tail) = rest.split_once(')').ok_or_else(bad)?;
            let r = tail.strip_prefix("<=").ok_or_else(bad)?;
            return Ok(SetPredicate::HsBall {
                s: parse_number(inner, "Sobolev index")?,
                r: parse_number(r, "radius")?,
            });
        }
        let (part, rest) = if let Some(rest) = s.strip_prefix("re(u") {
            (Part::Re, rest)
        } else if let Some(rest) = s.strip_prefix("im(u") {
            (Part::Im, rest)
        } else {
            return Err(bad());
        };
        let (mode, tail) = rest.split_once(')').ok_or_else(bad)?;
        let threshold = tail.strip_prefix('>').ok_or_else(bad)?;
        Ok(SetPredicate::CoordinateHalfspace {
            mode: mode
                .parse::<i64>()
                .map_err(|_| Error::Predicate(format!("bad mode index {mode:?}")))?,
            part,
            threshold: parse_number(threshold, "threshold")?,
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransportReport {
    pub predicate: SetPredicate,
    pub t: f64,
    /// `rho(Phi_t(A))`, membership decided through the inverse flow.
    pub lhs: MCEstimate,
    /// `int_A f_N d rho`.
    pub rhs: MCEstimate,
    /// Standard error of the per-draw difference (common random numbers).
    pub diff_stderr: f64,
    pub z_score: f64,
    /// In-ball draws whose inverse-flow image lies within the boundary band.
    pub ambiguous: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityReport {
    /// Endpoint form `exp(H[u] - H[Phi_t u])`.
    pub density: f64,
    /// `exp(-quadrature of G_N)`.
    pub quadrature_density: f64,
    /// `|log density - log quadrature_density|`.
    pub log_discrepancy: f64,
}

/// `exp(H[u] - H[Phi_t(u)])`.
pub fn density(u: &FourierState, t: f64, params: &ModelParams, cfg: &IntegratorConfig) -> Result<f64> {
    let model = Model::new(*params)?;
    let flow = Flow::new(&model, *cfg)?;
    density_in(&flow, u, t)
}

pub fn density_in(flow: &Flow<'_>, u: &FourierState, t: f64) -> Result<f64> {
    let model = flow.model();
    if t == 0.0 {
        model.energy(u)?;
        return Ok(1.0);
    }
    let end = flow.evolve(u, t)?;
    Ok((model.energy(u)?.total - model.energy(&end)?.total).exp())
}

/// Density in both the endpoint and the quadrature form.
pub fn density_report(
    u: &FourierState,
    t: f64,
    params: &ModelParams,
    cfg: &IntegratorConfig,
) -> Result<DensityReport> {
    let model = Model::new(*params)?;
    let flow = Flow::new(&model, *cfg)?;
    let o = flow_with_observable_in(&flow, u, t)?;
    let log_endpoint = -o.energy_difference;
    let log_quadrature = -o.quadrature;
    Ok(DensityReport {
        density: log_endpoint.exp(),
        quadrature_density: log_quadrature.exp(),
        log_discrepancy: (log_endpoint - log_quadrature).abs(),
    })
}

fn weight_of(u: &FourierState, params: &ModelParams, seed: u64, index: u64) -> Result<f64> {
    let exponent = -0.5 * params.sign() * l4_quartic(u);
    if exponent > MAX_WEIGHT_EXPONENT {
        return Err(Error::WeightOverflow {
            exponent,
            seed,
            index,
        });
    }
    Ok(exponent.exp())
}

pub fn verify_transport(
    predicate: SetPredicate,
    t: f64,
    params: &ModelParams,
    cfg: &IntegratorConfig,
    count: usize,
    seed: u64,
) -> Result<TransportReport> {
    Ok(verify_transport_many(&[predicate], t, params, cfg, count, seed)?.remove(0))
}

/// Change-of-variable check for several sets on one set of draws and flows.
pub fn verify_transport_many(
    predicates: &[SetPredicate],
    t: f64,
    params: &ModelParams,
    cfg: &IntegratorConfig,
    count: usize,
    seed: u64,
) -> Result<Vec<TransportReport>> {
    if count < 1000 {
        return Err(Error::InvalidParams(format!(
            "verify_transport needs count >= 1000, got {count}"
        )));
    }
    if predicates.is_empty() {
        return Err(Error::InvalidParams("no predicates given".into()));
    }
    let model = Model::new(*params)?;
    let flow = Flow::new(&model, *cfg)?;
    let stream = stream_id("transport");

    // Per in-ball draw: (weight, density, in A for each predicate at u and at Phi_{-t}(u), ambiguity).
    let per_draw = map_in_ball(params, count, seed, stream, |i, u| {
        let w = weight_of(u, params, seed, i)?;
        let (back, dens) = if t == 0.0 {
            (u.clone(), 1.0)
        } else {
            let back = flow.evolve(u, -t)?;
            let fwd = flow.evolve(u, t)?;
            let dens = (model.energy(u)?.total - model.energy(&fwd)?.total).exp();
            (back, dens)
        };
        let members: Vec<(bool, bool, bool)> = predicates
            .iter()
            .map(|a| {
                (
                    a.contains(&back),
                    a.contains(u),
                    a.margin(&back).abs() < BOUNDARY_BAND,
                )
            })
            .collect();
        Ok((w, dens, members))
    })?;
    let accepted = per_draw.iter().filter(|d| d.is_some()).count();
    check_acceptance(accepted, count)?;

    let mut reports = Vec::with_capacity(predicates.len());
    for (k, predicate) in predicates.iter().enumerate() {
        let mut lhs = Vec::with_capacity(count);
        let mut rhs = Vec::with_capacity(count);
        let mut diff = Vec::with_capacity(count);
        let mut ambiguous = 0;
        for d in &per_draw {
            let (l, r) = match d {
                Some((w, dens, members)) => {
                    let (in_back, in_u, amb) = members[k];
                    ambiguous += usize::from(amb);
                    (
                        if in_back { *w } else { 0.0 },
                        if in_u { w * dens } else { 0.0 },
                    )
                }
                None => (0.0, 0.0),
            };
            lhs.push(l);
            rhs.push(r);
            diff.push(l - r);
        }
        let lhs = MCEstimate::from_values(&lhs, accepted, seed);
        let rhs = MCEstimate::from_values(&rhs, accepted, seed);
        let (diff_mean, diff_sd) = mean_sd(&diff);
        let diff_stderr = diff_sd / (count as f64).sqrt();
        let z_score = if diff_stderr > 0.0 {
            diff_mean.abs() / diff_stderr
        } else if diff_mean == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        reports.push(TransportReport {
            predicate: *predicate,
            t,
            lhs,
            rhs,
            diff_stderr,
            z_score,
            ambiguous,
        });
    }
    Ok(reports)
}

/// `zeta(alpha) = min(1/3 + (2a-1)/(3(1-a)), 2a(a+1)/(4 - 4a^2 + 3a))`; the first
/// branch is infinite at `alpha = 1`.
pub fn zeta(alpha: f64) -> f64 {
    let first = if alpha == 1.0 {
        f64::INFINITY
    } else {
        1.0 / 3.0 + (2.0 * alpha - 1.0) / (3.0 * (1.0 - alpha))
    };
    let second = 2.0 * alpha * (alpha + 1.0) / (4.0 - 4.0 * alpha * alpha + 3.0 * alpha);
    first.min(second)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MomentRow {
    pub p: f64,
    /// Estimate of `||G_N||_{L^p}`, stderr by the delta method.
    pub norm: MCEstimate,
    /// Raw `p`-th moment `E[1_ball |G_N|^p]`.
    pub moment: MCEstimate,
    pub heavy_tail: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MomentsReport {
    pub rows: Vec<MomentRow>,
    pub fitted_exponent: Option<f64>,
    /// Same fit for the norms conditioned on the ball, i.e. without the `P(ball)^{1/p}` factor.
    pub conditional_exponent: Option<f64>,
    pub reference_exponent: f64,
}

/// `L^p` norms from per-draw observable values (`None` outside the ball).
pub fn moments_from_values(values: &[Option<f64>], p_list: &[f64], seed: u64, alpha: f64) -> Result<MomentsReport> {
    let accepted = values.iter().filter(|v| v.is_some()).count();
    let mut rows = Vec::with_capacity(p_list.len());
    for &p in p_list {
        if !(p >= 1.0) {
            return Err(Error::InvalidParams(format!("moment order must be >= 1, got {p}")));
        }
        let raw: Vec<f64> = values
            .iter()
            .map(|v| v.map_or(0.0, |g| g.abs().powf(p)))
            .collect();
        let moment = MCEstimate::from_values(&raw, accepted, seed);
        let (mean, stderr) = if moment.mean > 0.0 {
            let m = moment.mean.powf(1.0 / p);
            (m, m / (p * moment.mean) * moment.stderr)
        } else {
            (0.0, 0.0)
        };
        rows.push(MomentRow {
            p,
            norm: MCEstimate {
                mean,
                stderr,
                ..moment
            },
            heavy_tail: moment.stderr > 0.5 * moment.mean,
            moment,
        });
    }
    let fitted_exponent = loglog_slope(&rows.iter().map(|r| (r.p, r.norm.mean)).collect::<Vec<_>>());
    let ball = accepted as f64 / values.len().max(1) as f64;
    let conditional_exponent = loglog_slope(
        &rows
            .iter()
            .map(|r| (r.p, r.norm.mean / ball.powf(1.0 / r.p)))
            .collect::<Vec<_>>(),
    );
    Ok(MomentsReport {
        rows,
        fitted_exponent,
        conditional_exponent,
        reference_exponent: 1.0 / zeta(alpha),
    })
}

pub fn gn_moments(
    params: &ModelParams,
    p_list: &[f64],
    count: usize,
    seed: u64,
) -> Result<MomentsReport> {
    let model = Model::new(*params)?;
    let values = map_in_ball(params, count, seed, stream_id("moments"), |_, u| model.g_n_observable(u))?;
    let accepted = values.iter().filter(|v| v.is_some()).count();
    check_acceptance(accepted, count)?;
    moments_from_values(&values, p_list, seed, params.alpha)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecayReport {
    /// `(M, ||G_N - G_M||_{L^2})`.
    pub rows: Vec<(usize, MCEstimate)>,
    pub slope: Option<f64>,
    pub reference_slope: f64,
}

/// `L^2` norms of per-draw differences; `diffs[k][i]` is draw `i` at `m_list[k]`.
pub fn decay_from_differences(
    m_list: &[usize],
    diffs: &[Vec<f64>],
    accepted: usize,
    seed: u64,
    alpha: f64,
) -> DecayReport {
    let rows: Vec<(usize, MCEstimate)> = m_list
        .iter()
        .zip(diffs)
        .map(|(&m, d)| {
            let sq: Vec<f64> = d.iter().map(|x| x * x).collect();
            let e = MCEstimate::from_values(&sq, accepted, seed);
            let (mean, stderr) = if e.mean > 0.0 {
                let r = e.mean.sqrt();
                (r, e.stderr / (2.0 * r))
            } else {
                (0.0, 0.0)
            };
            (m, MCEstimate { mean, stderr, ..e })
        })
        .collect();
    let slope = loglog_slope(&rows.iter().map(|(m, e)| (*m as f64, e.mean)).collect::<Vec<_>>());
    DecayReport {
        rows,
        slope,
        reference_slope: -(2.0 * alpha - 1.0),
    }
}

/// Same-draw differences `G_N(u) - G_M(Pi_M u)` for every `M` in `m_list`.
pub fn gn_truncation_decay(
    params: &ModelParams,
    m_list: &[usize],
    count: usize,
    seed: u64,
) -> Result<DecayReport> {
    if let Some(&m) = m_list.iter().find(|&&m| m > params.n_trunc) {
        return Err(Error::InvalidParams(format!(
            "truncation M = {m} exceeds N = {}",
            params.n_trunc
        )));
    }
    let model = Model::new(*params)?;
    let lower = m_list
        .iter()
        .map(|&m| Model::new(params.with_truncation(m)))
        .collect::<Result<Vec<_>>>()?;
    let per_draw = map_in_ball(params, count, seed, stream_id("decay"), |_, u| {
        let g_n = model.g_n_observable(u)?;
        lower
            .iter()
            .map(|lm| {
                if lm.n_trunc() == params.n_trunc {
                    Ok(0.0)
                } else {
                    Ok(g_n - lm.g_n_observable(&u.resized(lm.n_trunc()))?)
                }
            })
            .collect::<Result<Vec<f64>>>()
    })?;
    let accepted = per_draw.iter().filter(|d| d.is_some()).count();
    check_acceptance(accepted, count)?;
    let diffs: Vec<Vec<f64>> = (0..m_list.len())
        .map(|k| {
            per_draw
                .iter()
                .map(|d| d.as_ref().map_or(0.0, |v| v[k]))
                .collect()
        })
        .collect();
    Ok(decay_from_differences(m_list, &diffs, accepted, seed, params.alpha))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExpMomentReport {
    pub lambda: f64,
    /// `(N, E[1_{||Pi_N u|| <= R} exp(lambda ||Pi_N u||_{L^4}^4)])`.
    pub rows: Vec<(usize, MCEstimate)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpreadCheck {
    pub spread: f64,
    pub joint_stderr: f64,
    /// `spread <= 4 joint_stderr`.
    pub uniform: bool,
}

impl ExpMomentReport {
    /// Max-minus-min over rows with `N >= min_n`, against the stderr of that pair.
    pub fn spread(&self, min_n: usize) -> Option<SpreadCheck> {
        let rows: Vec<&MCEstimate> = self
            .rows
            .iter()
            .filter(|(n, _)| *n >= min_n)
            .map(|(_, e)| e)
            .collect();
        let hi = rows.iter().max_by(|a, b| a.mean.total_cmp(&b.mean))?;
        let lo = rows.iter().min_by(|a, b| a.mean.total_cmp(&b.mean))?;
        let spread = hi.mean - lo.mean;
        let joint_stderr = (hi.stderr.powi(2) + lo.stderr.powi(2)).sqrt();
        Some(SpreadCheck {
            spread,
            joint_stderr,
            uniform: spread <= 4.0 * joint_stderr,
        })
    }
}

/// Independent draws at each `N` (stream offset by `N`); the ball is imposed on `Pi_N u`.
pub fn exp_moment(
    params: &ModelParams,
    lambda: f64,
    n_list: &[usize],
    count: usize,
    seed: u64,
) -> Result<ExpMomentReport> {
    if lambda > 0.0 && !params.radius.is_finite() {
        return Err(Error::InvalidParams(
            "a positive exponent needs a finite ball radius".into(),
        ));
    }
    let base = stream_id("exp-moment");
    let mut rows = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let p = params.with_truncation(n);
        let values = map_in_ball(&p, count, seed, base.wrapping_add(n as u64), |i, u| {
            let exponent = lambda * l4_quartic(u);
            if exponent > MAX_WEIGHT_EXPONENT {
                return Err(Error::WeightOverflow {
                    exponent,
                    seed,
                    index: i,
                });
            }
            Ok(exponent.exp())
        })?;
        let accepted = values.iter().filter(|v| v.is_some()).count();
        let flat: Vec<f64> = values.into_iter().map(|v| v.unwrap_or(0.0)).collect();
        rows.push((n, MCEstimate::from_values(&flat, accepted, seed)));
    }
    Ok(ExpMomentReport { lambda, rows })
}
