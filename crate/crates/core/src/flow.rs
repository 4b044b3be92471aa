//! Integration of the truncated Birkhoff flow `Phi_t^N`.

use std::io::Write;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamiltonian::Model;
use crate::norms::{hs_norm, mass};
use crate::params::ModelParams;
use crate::state::FourierState;
use crate::stats::{loglog_slope, simpson};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Rk4Fixed,
    Rk45Adaptive,
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rk4_fixed" | "rk4" => Ok(Method::Rk4Fixed),
            "rk45_adaptive" | "rk45" => Ok(Method::Rk45Adaptive),
            other => Err(Error::InvalidParams(format!(
                "unknown integrator method {other:?} (expected rk4_fixed or rk45_adaptive)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub method: Method,
    /// Initial step (adaptive) or the step (fixed).
    pub dt: f64,
    pub rel_tol: f64,
    /// Threshold on the monitored `H^s` norm.
    pub blowup_threshold: f64,
    pub max_steps: usize,
    /// Sobolev index monitored for blowup; `None` means `2 - 2 alpha`.
    pub hs_index: Option<f64>,
    /// Simpson checkpoints per unit time for observable quadrature.
    pub checkpoints_per_unit: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            method: Method::Rk45Adaptive,
            dt: 0.01,
            rel_tol: 1e-10,
            blowup_threshold: 1e6,
            max_steps: 1_000_000,
            hs_index: None,
            checkpoints_per_unit: 65,
        }
    }
}

impl IntegratorConfig {
    pub fn rk4(dt: f64) -> Self {
        Self {
            method: Method::Rk4Fixed,
            dt,
            ..Self::default()
        }
    }

    pub fn rk45(rel_tol: f64) -> Self {
        Self {
            rel_tol,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !(self.rel_tol > 0.0) || !(self.blowup_threshold > 0.0) {
            return Err(Error::InvalidParams(
                "integrator dt, rel_tol and blowup_threshold must be positive".into(),
            ));
        }
        if self.max_steps == 0 {
            return Err(Error::InvalidParams("max_steps must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowDiagnostics {
    /// `|mass(end) - mass(start)| / mass(start)`
    pub mass_drift: f64,
    /// Relative drift of `F_N`.
    pub fn_drift: f64,
    /// Accepted steps.
    pub steps: usize,
    /// Peak monitored `H^s` norm.
    pub max_hs: f64,
    /// Largest imaginary residual of `F_N` at the endpoints.
    pub fn_imag_residual: f64,
}

#[derive(Debug, Clone)]
pub struct FlowResult {
    pub final_state: FourierState,
    pub trajectory: Option<Vec<(f64, FourierState)>>,
    pub diagnostics: FlowDiagnostics,
}

#[derive(Debug, Clone)]
pub struct ObservableFlow {
    pub result: FlowResult,
    /// Simpson quadrature of `G_N` along the trajectory.
    pub quadrature: f64,
    /// `H[final] - H[initial]`.
    pub energy_difference: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvergenceTable {
    pub rows: Vec<(usize, f64)>,
    pub n_ref: usize,
    pub slope: Option<f64>,
}

// Dormand-Prince 5(4) tableau.
const A: [[f64; 6]; 6] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

struct Workspace {
    k: [Vec<Complex64>; 7],
    stage: Vec<Complex64>,
    k1_valid: bool,
}

impl Workspace {
    fn new(width: usize) -> Self {
        Self {
            k: std::array::from_fn(|_| vec![ZERO; width]),
            stage: vec![ZERO; width],
            k1_valid: false,
        }
    }
}

fn l2(v: &[Complex64]) -> f64 {
    v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
}

/// Integrates the Birkhoff flow of one model with one integrator configuration.
pub struct Flow<'m> {
    model: &'m Model,
    cfg: IntegratorConfig,
    hs_index: f64,
}

struct Progress {
    time: f64,
    h: f64,
    steps: usize,
    attempts: usize,
    max_hs: f64,
}

impl<'m> Flow<'m> {
    pub fn new(model: &'m Model, cfg: IntegratorConfig) -> Result<Self> {
        cfg.validate()?;
        let hs_index = cfg
            .hs_index
            .unwrap_or_else(|| model.params().critical_sobolev_index());
        Ok(Self {
            model,
            cfg,
            hs_index,
        })
    }

    pub fn model(&self) -> &Model {
        self.model
    }

    pub fn config(&self) -> &IntegratorConfig {
        &self.cfg
    }

    /// `Phi_t(u0)` without diagnostics; the hot path for Monte Carlo.
    pub fn evolve(&self, u0: &FourierState, t: f64) -> Result<FourierState> {
        let mut y = u0.coeffs().to_vec();
        let mut ws = Workspace::new(y.len());
        let mut p = self.start(u0);
        self.advance(&mut ws, &mut y, t, &mut p)?;
        FourierState::from_coeffs(u0.n_trunc(), y)
    }

    /// Full integration with diagnostics; `checkpoints > 0` records that many
    /// equal intervals (plus the initial point) in the trajectory.
    pub fn run(&self, u0: &FourierState, t: f64, checkpoints: usize) -> Result<FlowResult> {
        if u0.n_trunc() != self.model.n_trunc() {
            return Err(Error::TruncationMismatch {
                expected: self.model.n_trunc(),
                got: u0.n_trunc(),
            });
        }
        u0.check_finite()?;
        let width = u0.len();
        let mut y = u0.coeffs().to_vec();
        let mut ws = Workspace::new(width);

        let mut dot = vec![ZERO; width];
        self.model.field_into(&y, &mut dot);
        let f_start = self.model.f_n_from_field(&y, &dot);
        let mass_start = mass(u0);

        let mut p = self.start(u0);
        let mut trajectory = (checkpoints > 0).then(|| vec![(0.0, u0.clone())]);
        if let Some(traj) = trajectory.as_mut() {
            for k in 1..=checkpoints {
                let target = t * k as f64 / checkpoints as f64;
                self.advance(&mut ws, &mut y, target, &mut p)?;
                traj.push((target, FourierState::from_coeffs(u0.n_trunc(), y.clone())?));
            }
        } else {
            self.advance(&mut ws, &mut y, t, &mut p)?;
        }

        self.model.field_into(&y, &mut dot);
        let f_end = self.model.f_n_from_field(&y, &dot);
        let final_state = FourierState::from_coeffs(u0.n_trunc(), y)?;
        let mass_end = mass(&final_state);
        let rel = |a: f64, b: f64| {
            let d = (b - a).abs();
            if a != 0.0 {
                d / a.abs()
            } else {
                d
            }
        };
        Ok(FlowResult {
            diagnostics: FlowDiagnostics {
                mass_drift: rel(mass_start, mass_end),
                fn_drift: rel(f_start.value, f_end.value),
                steps: p.steps,
                max_hs: p.max_hs,
                fn_imag_residual: f_start.imag_residual.max(f_end.imag_residual),
            },
            final_state,
            trajectory,
        })
    }

    fn start(&self, u0: &FourierState) -> Progress {
        let m = mass(u0);
        Progress {
            time: 0.0,
            h: self.cfg.dt.min(0.1 / (1.0 + m * m)),
            steps: 0,
            attempts: 0,
            max_hs: hs_norm(u0, self.hs_index),
        }
    }

    fn advance(
        &self,
        ws: &mut Workspace,
        y: &mut [Complex64],
        target: f64,
        p: &mut Progress,
    ) -> Result<()> {
        match self.cfg.method {
            Method::Rk4Fixed => self.advance_rk4(ws, y, target, p),
            Method::Rk45Adaptive => self.advance_rk45(ws, y, target, p),
        }
    }

    fn monitor(&self, y: &[Complex64], p: &mut Progress) -> Result<()> {
        let nt = self.model.n_trunc() as i64;
        let s = self.hs_index;
        let norm = y
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let n = (i as i64 - nt).abs();
                let w = if n == 0 {
                    if s == 0.0 {
                        1.0
                    } else {
                        0.0
                    }
                } else {
                    (n as f64).powf(2.0 * s)
                };
                (1.0 + w) * c.norm_sqr()
            })
            .sum::<f64>()
            .sqrt();
        if !norm.is_finite() || norm > self.cfg.blowup_threshold {
            return Err(Error::BlowupDetected {
                time: p.time,
                norm,
                threshold: self.cfg.blowup_threshold,
            });
        }
        p.max_hs = p.max_hs.max(norm);
        Ok(())
    }

    fn advance_rk4(
        &self,
        ws: &mut Workspace,
        y: &mut [Complex64],
        target: f64,
        p: &mut Progress,
    ) -> Result<()> {
        let span = target - p.time;
        if span == 0.0 {
            return Ok(());
        }
        let n_steps = (span.abs() / self.cfg.dt).ceil().max(1.0) as usize;
        if p.steps + n_steps > self.cfg.max_steps {
            return Err(Error::MaxStepsExceeded {
                max_steps: self.cfg.max_steps,
                time: p.time,
            });
        }
        let h = span / n_steps as f64;
        let start = p.time;
        for i in 0..n_steps {
            let [k1, k2, k3, k4, ..] = &mut ws.k;
            self.model.field_into(y, k1);
            for j in 0..y.len() {
                ws.stage[j] = y[j] + k1[j] * (0.5 * h);
            }
            self.model.field_into(&ws.stage, k2);
            for j in 0..y.len() {
                ws.stage[j] = y[j] + k2[j] * (0.5 * h);
            }
            self.model.field_into(&ws.stage, k3);
            for j in 0..y.len() {
                ws.stage[j] = y[j] + k3[j] * h;
            }
            self.model.field_into(&ws.stage, k4);
            for j in 0..y.len() {
                y[j] += (k1[j] + (k2[j] + k3[j]) * 2.0 + k4[j]) * (h / 6.0);
            }
            p.steps += 1;
            p.time = if i + 1 == n_steps {
                target
            } else {
                start + h * (i + 1) as f64
            };
            self.monitor(y, p)?;
        }
        ws.k1_valid = false;
        Ok(())
    }

    fn advance_rk45(
        &self,
        ws: &mut Workspace,
        y: &mut [Complex64],
        target: f64,
        p: &mut Progress,
    ) -> Result<()> {
        let width = y.len();
        let mut y_new = vec![ZERO; width];
        loop {
            let remaining = target - p.time;
            if remaining.abs() <= 1e-14 * target.abs().max(1.0) {
                p.time = target;
                return Ok(());
            }
            if p.attempts >= self.cfg.max_steps {
                return Err(Error::MaxStepsExceeded {
                    max_steps: self.cfg.max_steps,
                    time: p.time,
                });
            }
            p.attempts += 1;
            let clamped = p.h >= remaining.abs();
            let hh = if clamped { remaining.abs() } else { p.h };
            let h = hh.copysign(remaining);

            if !ws.k1_valid {
                self.model.field_into(y, &mut ws.k[0]);
                ws.k1_valid = true;
            }
            for s in 0..6 {
                let row = &A[s];
                for j in 0..width {
                    let mut acc = ZERO;
                    for (r, a) in row.iter().enumerate().take(s + 1) {
                        if *a != 0.0 {
                            acc += ws.k[r][j] * *a;
                        }
                    }
                    let target = if s == 5 { &mut y_new[j] } else { &mut ws.stage[j] };
                    *target = y[j] + acc * h;
                }
                let (head, tail) = ws.k.split_at_mut(s + 1);
                let src = if s == 5 { &y_new } else { &ws.stage };
                self.model.field_into(src, &mut tail[0]);
                let _ = head;
            }
            let mut err_sq = 0.0;
            for j in 0..width {
                let mut e = ZERO;
                for (r, c) in E.iter().enumerate() {
                    if *c != 0.0 {
                        e += ws.k[r][j] * *c;
                    }
                }
                err_sq += (e * h).norm_sqr();
            }
            let scale = self.cfg.rel_tol * l2(y).max(l2(&y_new));
            let err = if err_sq == 0.0 {
                0.0
            } else if scale > 0.0 {
                err_sq.sqrt() / scale
            } else {
                f64::INFINITY
            };

            if err <= 1.0 {
                y.copy_from_slice(&y_new);
                ws.k.swap(0, 6);
                p.time = if clamped { target } else { p.time + h };
                p.steps += 1;
                self.monitor(y, p)?;
                let grow = if err == 0.0 {
                    5.0
                } else {
                    (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
                };
                if !clamped {
                    p.h = hh * grow;
                } else {
                    p.h = p.h.max(hh * grow);
                }
            } else {
                p.h = hh * (0.9 * err.powf(-0.2)).clamp(0.2, 1.0);
                if p.h < 1e-14 * p.time.abs().max(1.0) {
                    return Err(Error::StepUnderflow { time: p.time });
                }
            }
        }
    }
}

pub fn flow_map(
    u0: &FourierState,
    t: f64,
    params: &ModelParams,
    cfg: &IntegratorConfig,
) -> Result<FlowResult> {
    let model = Model::new(*params)?;
    Flow::new(&model, *cfg)?.run(u0, t, 0)
}

/// Integrates while recording equally spaced checkpoints and integrates `G_N`
/// over them with composite Simpson.
pub fn flow_with_observable(
    u0: &FourierState,
    t: f64,
    params: &ModelParams,
    cfg: &IntegratorConfig,
) -> Result<ObservableFlow> {
    let model = Model::new(*params)?;
    flow_with_observable_in(&Flow::new(&model, *cfg)?, u0, t)
}

pub fn flow_with_observable_in(flow: &Flow<'_>, u0: &FourierState, t: f64) -> Result<ObservableFlow> {
    let model = flow.model();
    let e0 = model.energy(u0)?.total;
    if t == 0.0 {
        return Ok(ObservableFlow {
            result: flow.run(u0, 0.0, 0)?,
            quadrature: 0.0,
            energy_difference: 0.0,
        });
    }
    let per_unit = flow.config().checkpoints_per_unit.max(3) - 1;
    let mut intervals = ((per_unit as f64) * t.abs()).ceil().max(2.0) as usize;
    if intervals % 2 == 1 {
        intervals += 1;
    }
    let result = flow.run(u0, t, intervals)?;
    let traj = result.trajectory.as_ref().expect("trajectory requested");
    let values = traj
        .iter()
        .map(|(_, u)| model.g_n_observable(u))
        .collect::<Result<Vec<f64>>>()?;
    let quadrature = simpson(&values, t / intervals as f64);
    let energy_difference = model.energy(&result.final_state)?.total - e0;
    Ok(ObservableFlow {
        result,
        quadrature,
        energy_difference,
    })
}

/// `||Phi_t^N(Pi_N u0) - Phi_t^{N_ref}(u0)||_{H^{s'}}` for each `N` in `n_list`.
///
/// `u0` is embedded at the reference truncation (default `2 max(n_list)`).
#[allow(clippy::too_many_arguments)]
pub fn truncation_convergence(
    u0: &FourierState,
    t: f64,
    params: &ModelParams,
    s: f64,
    s_prime: f64,
    n_list: &[usize],
    n_ref: Option<usize>,
    cfg: &IntegratorConfig,
) -> Result<ConvergenceTable> {
    if !(s_prime < s) {
        return Err(Error::InvalidParams(format!(
            "need s' < s, got s = {s}, s' = {s_prime}"
        )));
    }
    let max_n = *n_list
        .iter()
        .max()
        .ok_or_else(|| Error::InvalidParams("empty n_list".into()))?;
    let n_ref = n_ref.unwrap_or(2 * max_n);
    if max_n >= n_ref {
        return Err(Error::InvalidParams(format!(
            "max(n_list) = {max_n} must be below the reference truncation {n_ref}"
        )));
    }
    let reference_model = Model::new(params.with_truncation(n_ref))?;
    let reference = Flow::new(&reference_model, *cfg)?.evolve(&u0.resized(n_ref), t)?;
    let mut rows = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let model = Model::new(params.with_truncation(n))?;
        let evolved = Flow::new(&model, *cfg)?.evolve(&u0.resized(n), t)?;
        let err = hs_norm(&evolved.resized(n_ref).sub(&reference), s_prime);
        rows.push((n, err));
    }
    let slope = loglog_slope(&rows.iter().map(|&(n, e)| (n as f64, e)).collect::<Vec<_>>());
    Ok(ConvergenceTable { rows, n_ref, slope })
}

/// One JSON object per line: `{"t": .., "coeffs": [N, re, im, ...]}`.
pub fn write_trajectory_jsonl<W: Write>(trajectory: &[(f64, FourierState)], mut w: W) -> Result<()> {
    for (t, u) in trajectory {
        let line = serde_json::json!({ "t": t, "coeffs": u.to_json_value() });
        writeln!(w, "{line}")?;
    }
    Ok(())
}
