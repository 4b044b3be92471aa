//! Experiment runner: one entry point per CLI subcommand, producing JSONL
//! records, CSV summary rows and an acceptance-gate verdict.
//!
//! Records carry no timing information, so a replayed [`RunConfig`] reproduces
//! them bitwise for any worker count.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::divisor::frequency;
use crate::error::{Error, Result};
use crate::flow::{truncation_convergence, write_trajectory_jsonl, Flow, IntegratorConfig, Method};
use crate::hamiltonian::Model;
use crate::measure::{in_ball, sample_gaussian, stream_id, GaussianSampler, MCEstimate};
use crate::oracle::{default_step, jacobian_det};
use crate::params::ModelParams;
use crate::state::FourierState;
use crate::stats::mean_sd;
use crate::testutil::decaying_state;
use crate::transport::{exp_moment, gn_moments, gn_truncation_decay, verify_transport_many, SetPredicate};

pub const ARTIFACT_VERSION: &str = concat!("birkhoff-core/", env!("CARGO_PKG_VERSION"));

/// Tolerances of the per-experiment acceptance gates.
pub mod gates {
    pub const HOMOLOGICAL_REL: f64 = 1e-10;
    pub const FIXED_POINT_ABS: f64 = 1e-12;
    pub const TRANSPORT_Z: f64 = 3.0;
    pub const COVARIANCE_Z: f64 = 5.0;
    pub const JACOBIAN_ABS: f64 = 1e-5;
    pub const MOMENT_EXPONENT_SLACK: f64 = 0.35;
    pub const DECAY_FRACTION: f64 = 0.7;
    pub const CONVERGENCE_FRACTION: f64 = 0.8;
    pub const EXP_MOMENT_MIN_N: usize = 8;
    /// Allowed drift as a multiple of the integrator tolerance.
    pub const DRIFT_FACTOR: f64 = 100.0;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum Experiment {
    Sample {
        count: usize,
    },
    Evolve {
        t: f64,
        samples: usize,
    },
    CheckIdentities {
        samples: usize,
    },
    TransportVerify {
        t: f64,
        count: usize,
        predicates: Vec<SetPredicate>,
    },
    Moments {
        count: usize,
        p_list: Vec<f64>,
    },
    Decay {
        count: usize,
        m_list: Vec<usize>,
    },
    ExpMoment {
        count: usize,
        lambda: f64,
        n_list: Vec<usize>,
    },
    Convergence {
        t: f64,
        s: f64,
        s_prime: f64,
        n_list: Vec<usize>,
        n_ref: Option<usize>,
    },
    Jacobian {
        t: f64,
        samples: usize,
    },
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Sample { .. } => "sample",
            Experiment::Evolve { .. } => "evolve",
            Experiment::CheckIdentities { .. } => "check-identities",
            Experiment::TransportVerify { .. } => "transport-verify",
            Experiment::Moments { .. } => "moments",
            Experiment::Decay { .. } => "decay",
            Experiment::ExpMoment { .. } => "exp-moment",
            Experiment::Convergence { .. } => "convergence",
            Experiment::Jacobian { .. } => "jacobian",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub params: ModelParams,
    pub integrator: IntegratorConfig,
    pub seed: u64,
    pub workers: usize,
    pub experiment: Experiment,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: RunConfig,
    pub artifact_version: String,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub outputs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub experiment: String,
    pub label: String,
    pub value: f64,
    pub stderr: f64,
    pub n_samples: usize,
    pub pass: bool,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub records: Vec<Value>,
    pub summary: Vec<SummaryRow>,
    pub gate_passed: bool,
    /// Extra data files `(name, bytes)`, e.g. sample batches or trajectories.
    pub files: Vec<(String, Vec<u8>)>,
}

impl RunOutput {
    pub fn jsonl(&self) -> String {
        let mut s = String::new();
        for r in &self.records {
            s.push_str(&r.to_string());
            s.push('\n');
        }
        s
    }

    pub fn csv(&self) -> String {
        let mut s = String::from("experiment,label,value,stderr,n_samples,pass\n");
        for r in &self.summary {
            s.push_str(&format!(
                "{},{},{:e},{:e},{},{}\n",
                r.experiment,
                r.label.replace(',', ";"),
                r.value,
                r.stderr,
                r.n_samples,
                r.pass
            ));
        }
        s
    }
}

struct Collector<'a> {
    cfg: &'a RunConfig,
    out: RunOutput,
}

impl<'a> Collector<'a> {
    fn new(cfg: &'a RunConfig) -> Self {
        Self {
            cfg,
            out: RunOutput {
                records: Vec::new(),
                summary: Vec::new(),
                gate_passed: true,
                files: Vec::new(),
            },
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn push(
        &mut self,
        label: &str,
        t: Option<f64>,
        predicate: Option<String>,
        estimate: f64,
        stderr: f64,
        n_samples: usize,
        acceptance: Option<f64>,
        pass: bool,
        extra: Value,
    ) {
        let p = &self.cfg.params;
        let mut rec = json!({
            "experiment": self.cfg.experiment.name(),
            "label": label,
            "params": { "alpha": p.alpha, "sigma": p.sigma, "N": p.n_trunc, "R": p.radius },
            "t": t,
            "predicate": predicate,
            "estimate": estimate,
            "stderr": stderr,
            "n_samples": n_samples,
            "acceptance": acceptance,
            "seed": self.cfg.seed,
            "integrator_cfg": self.cfg.integrator,
            "artifact_version": ARTIFACT_VERSION,
            "pass": pass,
        });
        if let (Value::Object(map), Value::Object(more)) = (&mut rec, extra) {
            map.extend(more);
        }
        self.out.records.push(rec);
        self.out.summary.push(SummaryRow {
            experiment: self.cfg.experiment.name().to_string(),
            label: label.to_string(),
            value: estimate,
            stderr,
            n_samples,
            pass,
        });
        self.out.gate_passed &= pass;
    }

    fn push_estimate(&mut self, label: &str, t: Option<f64>, e: &MCEstimate, pass: bool, extra: Value) {
        self.push(
            label,
            t,
            None,
            e.mean,
            e.stderr,
            e.n_samples,
            Some(e.acceptance()),
            pass,
            extra,
        );
    }
}

/// First `samples` in-ball Gaussian draws of the named stream.
pub fn in_ball_draws(params: &ModelParams, samples: usize, seed: u64, stream_name: &str) -> Result<Vec<FourierState>> {
    let sampler = GaussianSampler::new(params, seed, stream_id(stream_name));
    let cap = (samples as u64).saturating_mul(1000).max(1000);
    let mut out = Vec::with_capacity(samples);
    let mut i = 0;
    while out.len() < samples {
        if i >= cap {
            return Err(Error::LowAcceptance {
                rate: out.len() as f64 / i as f64,
                accepted: out.len(),
                count: i as usize,
            });
        }
        let u = sampler.draw(i);
        if in_ball(&u, params) {
            out.push(u);
        }
        i += 1;
    }
    Ok(out)
}

/// Runs the experiment on a dedicated pool of `cfg.workers` threads.
pub fn run(cfg: &RunConfig) -> Result<RunOutput> {
    cfg.params.validate()?;
    cfg.integrator.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers.max(1))
        .build()
        .map_err(|e| Error::InvalidParams(format!("cannot build worker pool: {e}")))?;
    pool.install(|| run_inline(cfg))
}

fn run_inline(cfg: &RunConfig) -> Result<RunOutput> {
    let mut c = Collector::new(cfg);
    let params = &cfg.params;
    match &cfg.experiment {
        Experiment::Sample { count } => run_sample(&mut c, *count)?,
        Experiment::Evolve { t, samples } => {
            let model = Model::new(*params)?;
            let flow = Flow::new(&model, cfg.integrator)?;
            let limit = gates::DRIFT_FACTOR * cfg.integrator.rel_tol;
            for (k, u) in in_ball_draws(params, *samples, cfg.seed, "evolve")?.iter().enumerate() {
                let r = flow.run(u, *t, if k == 0 { 16 } else { 0 })?;
                let d = r.diagnostics;
                let pass = d.mass_drift <= limit && d.fn_drift <= limit;
                c.push(
                    &format!("state {k}"),
                    Some(*t),
                    None,
                    d.mass_drift,
                    0.0,
                    1,
                    None,
                    pass,
                    json!({ "mass_drift": d.mass_drift, "fn_drift": d.fn_drift, "steps": d.steps,
                            "max_hs": d.max_hs, "fn_imag_residual": d.fn_imag_residual }),
                );
                if let Some(traj) = &r.trajectory {
                    let mut buf = Vec::new();
                    write_trajectory_jsonl(traj, &mut buf)?;
                    c.out.files.push(("trajectory.jsonl".into(), buf));
                }
            }
        }
        Experiment::CheckIdentities { samples } => {
            let model = Model::new(*params)?;
            for (k, u) in in_ball_draws(params, *samples, cfg.seed, "check-identities")?.iter().enumerate() {
                let h = model.homological_check(u)?;
                let f = model.f_n_with_residual(u)?;
                let pass = h.residual() < gates::HOMOLOGICAL_REL && f.imag_residual <= crate::hamiltonian::FN_IMAG_TOL;
                c.push(
                    &format!("homological state {k}"),
                    None,
                    None,
                    h.residual(),
                    0.0,
                    1,
                    None,
                    pass,
                    json!({ "lhs": h.lhs, "rhs_exact": h.rhs_exact, "rhs_paper": h.rhs_paper,
                            "fn_imag_residual": f.imag_residual }),
                );
            }
            let nt = params.n_trunc as i64;
            let single = FourierState::single_mode(params.n_trunc, nt, Complex64::new(0.7, -0.2));
            let field = model.vector_field(&single)?.dot_u;
            let field_max = field.coeffs().iter().map(|z| z.norm()).fold(0.0, f64::max);
            let g = model.g_n_observable(&single)?;
            let dens = crate::transport::density(&single, 1.0, params, &cfg.integrator)?;
            let worst = field_max.max(g.abs()).max((dens - 1.0).abs());
            c.push(
                "fixed point",
                Some(1.0),
                None,
                worst,
                0.0,
                1,
                None,
                worst <= gates::FIXED_POINT_ABS,
                json!({ "field_max": field_max, "g_n": g, "density": dens }),
            );
        }
        Experiment::TransportVerify { t, count, predicates } => {
            let reports = verify_transport_many(predicates, *t, params, &cfg.integrator, *count, cfg.seed)?;
            for r in reports {
                c.push(
                    &format!("z {}", r.predicate),
                    Some(*t),
                    Some(r.predicate.to_string()),
                    r.z_score,
                    r.diff_stderr,
                    r.lhs.n_samples,
                    Some(r.lhs.acceptance()),
                    r.z_score <= gates::TRANSPORT_Z,
                    json!({ "lhs": r.lhs, "rhs": r.rhs, "ambiguous": r.ambiguous }),
                );
            }
        }
        Experiment::Moments { count, p_list } => {
            let r = gn_moments(params, p_list, *count, cfg.seed)?;
            for row in &r.rows {
                c.push_estimate(
                    &format!("||G_N||_{}", row.p),
                    None,
                    &row.norm,
                    true,
                    json!({ "p": row.p, "moment": row.moment, "heavy_tail": row.heavy_tail }),
                );
            }
            let fit = r.fitted_exponent.unwrap_or(f64::NAN);
            let pass = fit.is_finite() && fit <= r.reference_exponent + gates::MOMENT_EXPONENT_SLACK;
            c.push(
                "growth exponent",
                None,
                None,
                fit,
                0.0,
                *count,
                None,
                pass,
                json!({ "reference_exponent": r.reference_exponent, "conditional_exponent": r.conditional_exponent }),
            );
        }
        Experiment::Decay { count, m_list } => {
            let r = gn_truncation_decay(params, m_list, *count, cfg.seed)?;
            for (m, e) in &r.rows {
                c.push_estimate(&format!("||G_N - G_{m}||_2"), None, e, true, json!({ "M": m }));
            }
            let slope = r.slope.unwrap_or(f64::NAN);
            let pass = slope <= gates::DECAY_FRACTION * r.reference_slope;
            c.push(
                "decay slope",
                None,
                None,
                slope,
                0.0,
                *count,
                None,
                pass,
                json!({ "reference_slope": r.reference_slope }),
            );
        }
        Experiment::ExpMoment { count, lambda, n_list } => {
            let r = exp_moment(params, *lambda, n_list, *count, cfg.seed)?;
            for (n, e) in &r.rows {
                c.push_estimate(&format!("exp moment N={n}"), None, e, true, json!({ "N_row": n, "lambda": lambda }));
            }
            if let Some(s) = r.spread(gates::EXP_MOMENT_MIN_N) {
                c.push(
                    "spread N>=8",
                    None,
                    None,
                    s.spread,
                    s.joint_stderr,
                    *count,
                    None,
                    s.uniform,
                    json!({ "lambda": lambda }),
                );
            }
        }
        Experiment::Convergence { t, s, s_prime, n_list, n_ref } => {
            let n_ref_v = n_ref.unwrap_or(2 * n_list.iter().copied().max().unwrap_or(0));
            let mass_target = (params.radius * params.radius).min(1.0);
            let u0 = decaying_state(n_ref_v, cfg.seed, s + 1.0, mass_target);
            let table = truncation_convergence(&u0, *t, params, *s, *s_prime, n_list, Some(n_ref_v), &cfg.integrator)?;
            for (n, err) in &table.rows {
                c.push(&format!("error N={n}"), Some(*t), None, *err, 0.0, 1, None, true, json!({ "N_row": n }));
            }
            if let Some(slope) = table.slope {
                let pass = slope <= -gates::CONVERGENCE_FRACTION * (s - s_prime);
                c.push(
                    "convergence slope",
                    Some(*t),
                    None,
                    slope,
                    0.0,
                    table.rows.len(),
                    None,
                    pass,
                    json!({ "n_ref": table.n_ref, "reference_slope": -(s - s_prime) }),
                );
            }
        }
        Experiment::Jacobian { t, samples } => {
            let jac_cfg = jacobian_integrator(&cfg.integrator);
            for (k, u) in in_ball_draws(params, *samples, cfg.seed, "jacobian")?.iter().enumerate() {
                let det = jacobian_det(*t, u, params, &jac_cfg, default_step(u))?;
                let dev = (det - 1.0).abs();
                c.push(
                    &format!("det state {k}"),
                    Some(*t),
                    None,
                    det,
                    0.0,
                    1,
                    None,
                    dev <= gates::JACOBIAN_ABS,
                    json!({ "deviation": dev }),
                );
            }
        }
    }
    Ok(c.out)
}

/// The finite-difference Jacobian differentiates a fixed-step map, which is
/// smooth in the initial data; adaptive step selection is not.
pub fn jacobian_integrator(cfg: &IntegratorConfig) -> IntegratorConfig {
    IntegratorConfig {
        method: Method::Rk4Fixed,
        dt: cfg.dt.min(1e-3),
        ..*cfg
    }
}

fn run_sample(c: &mut Collector<'_>, count: usize) -> Result<()> {
    let params = c.cfg.params;
    let stream = stream_id("sample");
    let batch = sample_gaussian(&params, count, c.cfg.seed, stream)?;
    let nt = params.n_trunc as i64;
    for n in -nt..=nt {
        let second: Vec<f64> = batch.states.iter().map(|u| u.get(n).norm_sqr()).collect();
        let (mean, sd) = mean_sd(&second);
        let stderr = sd / (count as f64).sqrt();
        let expected = 1.0 / (1.0 + frequency(n, params.alpha));
        let z = if stderr > 0.0 { (mean - expected).abs() / stderr } else { 0.0 };
        c.push(
            &format!("E|u({n})|^2"),
            None,
            None,
            mean,
            stderr,
            count,
            None,
            z <= gates::COVARIANCE_Z,
            json!({ "mode": n, "expected": expected, "z": z }),
        );
    }
    let mut bin = Vec::new();
    for u in &batch.states {
        u.write_binary(&mut bin)?;
    }
    let accepted = batch.in_ball.iter().filter(|b| **b).count();
    let sidecar = json!({
        "seed": batch.seed,
        "stream": batch.stream_id,
        "params": params,
        "count": count,
        "in_ball": accepted,
        "format": "per state: N as u64 LE, then 2N+1 (re, im) f64 LE pairs in mode order -N..N",
    });
    c.out.files.push(("samples.bin".into(), bin));
    c.out
        .files
        .push(("samples.json".into(), serde_json::to_vec_pretty(&sidecar)?));
    Ok(())
}
