//! Cross-checks of production paths against the brute-force oracles.

use approx::assert_relative_eq;
use astro_float::{BigFloat, Consts, RoundingMode};
use birkhoff_core::divisor::{divisor, frequency, is_resonant};
use birkhoff_core::experiment::{run, Experiment, RunConfig};
use birkhoff_core::hamiltonian::grad_l4;
use birkhoff_core::measure::{sample_gaussian, stream_id, GaussianSampler};
use birkhoff_core::norms::{hs_norm, l4_quartic, mass};
use birkhoff_core::oracle::{default_step, fd_gradient, jacobian_det, resonant_sum};
use birkhoff_core::testutil::random_state;
use birkhoff_core::transport::{density_report, SetPredicate};
use birkhoff_core::flow::Flow;
use birkhoff_core::{Complex64, FourierState, IntegratorConfig, Model, ModelParams};

fn params(alpha: f64, sigma: i8, n: usize) -> ModelParams {
    ModelParams::new(alpha, sigma, n, 1.0).unwrap()
}

const PREC: usize = 256;
const RM: RoundingMode = RoundingMode::ToEven;

#[test]
fn resonance_matches_extended_precision_zero_set() {
    let mut cc = Consts::new().unwrap();
    let jmax = 32i64;
    for alpha in [0.8, 0.9, 0.95, 1.0] {
        let exponent = BigFloat::from_f64(2.0 * alpha, PREC);
        // |j|^{2 alpha} for every magnitude a divisor can touch (|n| <= 3 jmax).
        let pow: Vec<BigFloat> = (0..=3 * jmax)
            .map(|m| {
                if m == 0 {
                    BigFloat::from_f64(0.0, PREC)
                } else {
                    BigFloat::from_f64(m as f64, PREC).pow(&exponent, PREC, RM, &mut cc)
                }
            })
            .collect();
        let threshold = BigFloat::from_f64(1e-12, PREC);
        for j1 in -jmax..=jmax {
            for j2 in -jmax..=jmax {
                for j3 in -jmax..=jmax {
                    let n = j1 + j2 - j3;
                    let phi = pow[j1.unsigned_abs() as usize]
                        .add(&pow[j2.unsigned_abs() as usize], PREC, RM)
                        .sub(&pow[j3.unsigned_abs() as usize], PREC, RM)
                        .sub(&pow[n.unsigned_abs() as usize], PREC, RM);
                    let numeric_zero = phi.abs() < threshold;
                    assert_eq!(
                        is_resonant(j1, j2, j3, alpha),
                        numeric_zero,
                        "({j1},{j2},{j3}) alpha {alpha}"
                    );
                }
            }
        }
    }
}

fn bracket(j: i64) -> f64 {
    (1.0 + (j * j) as f64).sqrt()
}

/// `min |Phi| / (|j1-j3||j2-j3| (<j1>+<j2>+<j3>)^{-(2-2a)})` over nonresonant triples.
fn divisor_bound_constant(alpha: f64, jmax: i64) -> f64 {
    let mut c = f64::INFINITY;
    for j1 in -jmax..=jmax {
        for j2 in -jmax..=jmax {
            for j3 in -jmax..=jmax {
                if is_resonant(j1, j2, j3, alpha) {
                    continue;
                }
                let d = divisor(j1, j2, j3, alpha).value.abs();
                let scale = ((j1 - j3).abs() * (j2 - j3).abs()) as f64
                    * (bracket(j1) + bracket(j2) + bracket(j3)).powf(-(2.0 - 2.0 * alpha));
                c = c.min(d / scale);
            }
        }
    }
    c
}

#[test]
fn divisor_lower_bound_has_uniform_constant() {
    for alpha in [0.6, 0.8, 0.95, 1.0] {
        let c32 = divisor_bound_constant(alpha, 32);
        let c64 = divisor_bound_constant(alpha, 64);
        assert!(c64 > 0.0, "alpha {alpha}");
        // A genuine constant does not keep shrinking as the sweep widens.
        assert!(c64 > 0.5 * c32, "alpha {alpha}: c32 {c32}, c64 {c64}");
        if alpha == 1.0 {
            assert_relative_eq!(c64, 2.0);
        }
    }
}

#[test]
fn integer_path_agrees_with_float_powers() {
    for j1 in -20i64..=20 {
        for j2 in -20i64..=20 {
            for j3 in -20i64..=20 {
                let n = j1 + j2 - j3;
                let pw = |j: i64| (j.abs() as f64).powf(2.0);
                let float = pw(j1) + pw(j2) - pw(j3) - pw(n);
                let exact = 2 * (j3 - j2) * (j1 - j3);
                assert_eq!(divisor(j1, j2, j3, 1.0).value, exact as f64);
                assert!((float - exact as f64).abs() <= 1e-12 * (1.0 + float.abs()));
            }
        }
    }
}

fn l4_brute(u: &FourierState) -> f64 {
    let nt = u.n_trunc() as i64;
    let mut acc = Complex64::new(0.0, 0.0);
    for n1 in -nt..=nt {
        for n2 in -nt..=nt {
            for m1 in -nt..=nt {
                let m2 = n1 + n2 - m1;
                if m2.abs() > nt {
                    continue;
                }
                acc += u.get(n1) * u.get(n2) * u.get(m1).conj() * u.get(m2).conj();
            }
        }
    }
    assert!(acc.im.abs() <= 1e-12 * acc.re.abs().max(1.0));
    acc.re
}

#[test]
fn quartic_convolution_matches_quadruple_sum() {
    for n in 0..=8 {
        for seed in 0..5 {
            let u = random_state(n, seed, 1.3);
            assert_relative_eq!(l4_quartic(&u), l4_brute(&u), max_relative = 1e-12);
        }
    }
}

#[test]
fn resonant_sum_is_diagonal_corrected_mass_square() {
    for n in 0..=8 {
        let u = random_state(n, 40 + n as u64, 0.9);
        let fourth: f64 = u.coeffs().iter().map(|c| c.norm_sqr().powi(2)).sum();
        let expected = 2.0 * mass(&u).powi(2) - fourth;
        for alpha in [0.7, 1.0] {
            assert_relative_eq!(resonant_sum(&u, &params(alpha, 1, n)).unwrap(), expected, max_relative = 1e-13);
        }
    }
}

#[test]
fn field_is_rotated_gradient_of_fn() {
    for (alpha, sigma) in [(1.0, 1), (0.9, -1), (0.75, 1)] {
        for n in 1..=4 {
            let p = params(alpha, sigma, n);
            let model = Model::new(p).unwrap();
            let u = random_state(n, 11 * n as u64, 0.8);
            let grad = fd_gradient(|v| model.f_n_value(v).unwrap(), &u, default_step(&u)).unwrap();
            let field = model.vector_field(&u).unwrap().dot_u;
            for (g, d) in grad.coeffs().iter().zip(field.coeffs()) {
                let rotated = Complex64::new(0.0, -1.0) * g;
                assert!((rotated - d).norm() <= 1e-6, "alpha {alpha} N {n}: {rotated} vs {d}");
            }
        }
    }
}

#[test]
fn quartic_gradient_matches_finite_differences() {
    for n in 0..=4 {
        let u = random_state(n, 3 + n as u64, 1.1);
        let fd = fd_gradient(l4_quartic, &u, default_step(&u)).unwrap();
        let g = grad_l4(&u);
        for (a, b) in fd.coeffs().iter().zip(g.coeffs()) {
            assert!((a - b).norm() <= 1e-6, "N {n}: {a} vs {b}");
        }
    }
}

#[test]
fn gn_is_time_derivative_of_energy() {
    for n in [2, 4, 6] {
        let p = params(1.0, 1, n);
        let model = Model::new(p).unwrap();
        let flow = Flow::new(&model, IntegratorConfig::rk45(1e-13)).unwrap();
        let u = random_state(n, 70 + n as u64, 0.7);
        let h = |v: &FourierState| model.energy(v).unwrap().total;
        let g = model.g_n_observable(&u).unwrap();
        let mut errs = Vec::new();
        for eps in [1e-2, 5e-3] {
            let fd = (h(&flow.evolve(&u, eps).unwrap()) - h(&flow.evolve(&u, -eps).unwrap())) / (2.0 * eps);
            errs.push((fd - g).abs());
        }
        assert!(errs[0] <= 1e-3 * g.abs().max(1.0), "N {n}: {errs:?}");
        // Central difference: halving eps cuts the error about fourfold.
        assert!(errs[1] <= 0.35 * errs[0] || errs[1] < 1e-9, "N {n}: {errs:?}");
    }
}

#[test]
fn field_bound_is_uniform_in_truncation() {
    // ||X_F(u)||_{H^s} <= C ||u||_{L^2}^2 ||u||_{H^s}: the ratio stays bounded as N grows.
    for s in [0.0, 1.0] {
        let mut worst = Vec::new();
        for n in [4, 8, 16] {
            let model = Model::new(params(1.0, 1, n)).unwrap();
            let mut r: f64 = 0.0;
            for seed in 0..20 {
                let u = random_state(n, seed, 1.0);
                let x = model.vector_field(&u).unwrap().dot_u;
                r = r.max(hs_norm(&x, s) / (mass(&u) * hs_norm(&u, s)));
            }
            worst.push(r);
        }
        assert!(worst.iter().all(|r| r.is_finite()));
        assert!(worst[2] <= 2.0 * worst[0], "s {s}: {worst:?}");
    }
}

#[test]
fn flow_map_is_lipschitz_on_the_ball() {
    let p = params(1.0, -1, 4);
    let model = Model::new(p).unwrap();
    let flow = Flow::new(&model, IntegratorConfig::rk45(1e-11)).unwrap();
    let mut worst: f64 = 0.0;
    for k in 0..100u64 {
        let u = random_state(4, k, 0.2 + 0.8 * (k % 5) as f64 / 4.0);
        let v = random_state(4, 500 + k, 0.2 + 0.8 * (k % 7) as f64 / 6.0);
        let a = flow.evolve(&u, 1.0).unwrap();
        let b = flow.evolve(&v, 1.0).unwrap();
        worst = worst.max(mass(&a.sub(&b)).sqrt() / mass(&u.sub(&v)).sqrt());
    }
    assert!(worst < 5.0, "{worst}");
}

#[test]
fn gaussian_covariance_is_diagonal() {
    let p = params(0.8, 1, 3);
    let count = 40_000;
    let batch = sample_gaussian(&p, count, 9, stream_id("covariance-test")).unwrap();
    for n in -3i64..=3 {
        for m in -3i64..=3 {
            let vals: Vec<Complex64> = batch.states.iter().map(|u| u.get(n) * u.get(m).conj()).collect();
            let mean: Complex64 = vals.iter().sum::<Complex64>() / count as f64;
            let expected = if n == m { 1.0 / (1.0 + frequency(n, 0.8)) } else { 0.0 };
            let var: f64 = vals.iter().map(|v| (v - mean).norm_sqr()).sum::<f64>() / (count - 1) as f64;
            let se = (var / count as f64).sqrt();
            assert!((mean - expected).norm() <= 5.0 * se, "({n},{m}): {mean} vs {expected}");
        }
    }
}

#[test]
fn sampler_is_deterministic_and_index_addressed() {
    let p = params(1.0, 1, 6);
    let a = GaussianSampler::new(&p, 5, 17);
    let b = GaussianSampler::new(&p, 5, 17);
    for i in [0u64, 1, 999, 1 << 30] {
        assert_eq!(a.draw(i), b.draw(i));
    }
    assert_ne!(a.draw(0), a.draw(1));
    assert_ne!(a.draw(0), GaussianSampler::new(&p, 5, 18).draw(0));
    assert_ne!(a.draw(0), GaussianSampler::new(&p, 6, 17).draw(0));
}

#[test]
fn experiments_are_worker_count_independent() {
    let base = RunConfig {
        params: params(1.0, -1, 3),
        integrator: IntegratorConfig::default(),
        seed: 21,
        workers: 1,
        experiment: Experiment::Moments {
            count: 20_000,
            p_list: vec![2.0, 4.0, 6.0],
        },
    };
    let one = run(&base).unwrap().jsonl();
    for workers in [2, 5] {
        let other = run(&RunConfig { workers, ..base.clone() }).unwrap().jsonl();
        assert_eq!(one, other);
    }
}

#[test]
fn inverse_flow_recovers_membership() {
    let p = params(1.0, 1, 3);
    let model = Model::new(p).unwrap();
    let flow = Flow::new(&model, IntegratorConfig::default()).unwrap();
    let preds: Vec<SetPredicate> = ["re(u0)>0.1", "im(u-1)>0", "hs(1)<=0.8", "l4<=0.2"]
        .iter()
        .map(|s| s.parse().unwrap())
        .collect();
    let sampler = GaussianSampler::new(&p, 4, stream_id("roundtrip-test"));
    for i in 0..300 {
        let u = sampler.draw(i);
        let back = flow.evolve(&flow.evolve(&u, 1.0).unwrap(), -1.0).unwrap();
        for a in &preds {
            if a.margin(&u).abs() > 1e-8 {
                assert_eq!(a.contains(&back), a.contains(&u), "draw {i}, {a}");
            }
        }
    }
}

#[test]
fn inverse_flow_jacobians_multiply_to_one() {
    let p = params(1.0, 1, 1);
    let cfg = IntegratorConfig::rk4(1e-3);
    let model = Model::new(p).unwrap();
    let flow = Flow::new(&model, cfg).unwrap();
    for seed in 0..3 {
        let u = random_state(1, seed, 0.8);
        let fwd = jacobian_det(0.5, &u, &p, &cfg, default_step(&u)).unwrap();
        let end = flow.evolve(&u, 0.5).unwrap();
        let back = jacobian_det(-0.5, &end, &p, &cfg, default_step(&end)).unwrap();
        assert!((fwd * back - 1.0).abs() <= 1e-6, "{fwd} {back}");
    }
}

#[test]
fn density_forms_agree_and_are_positive() {
    let cfg = IntegratorConfig::rk45(1e-11);
    for (sigma, n) in [(1, 2), (-1, 4)] {
        let p = params(0.95, sigma, n);
        for seed in 0..4 {
            let u = random_state(n, seed, 0.9);
            let r = density_report(&u, 1.0, &p, &cfg).unwrap();
            assert!(r.density > 0.0 && r.quadrature_density > 0.0);
            assert!(r.log_discrepancy <= 1e-9, "{r:?}");
        }
    }
}
