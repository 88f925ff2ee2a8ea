use approx::assert_relative_eq;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rgg_edge::kernels::{compute_moments_quadrature, MomentMethod};
use rgg_edge::{compute_moments, KernelSpec, MetricOrder};
use statrs::function::gamma::gamma;

fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

/// Closed forms for `g ≡ 1`.
fn closed_form(d: usize, p: MetricOrder) -> (f64, f64) {
    let two_d = 2f64.powi(d as i32);
    match p {
        MetricOrder::Infinity => (two_d, two_d / 3.0),
        MetricOrder::Finite(q) if q == 1.0 => (two_d / factorial(d), 2f64.powi(d as i32 + 1) / factorial(d + 2)),
        _ => {
            let vd = std::f64::consts::PI.powf(d as f64 / 2.0) / gamma(d as f64 / 2.0 + 1.0);
            (vd, vd / (d as f64 + 2.0))
        }
    }
}

#[test]
fn quadrature_agrees_with_closed_forms() {
    for d in 1..=3 {
        for p in [MetricOrder::L1, MetricOrder::L2, MetricOrder::Infinity] {
            let q = compute_moments_quadrature(d, p, &KernelSpec::ConstantOne).unwrap();
            let (m0, m2) = closed_form(d, p);
            assert_relative_eq!(q.m0, m0, max_relative = 1e-8);
            assert_relative_eq!(q.m2, m2, max_relative = 1e-8);
            assert!((q.m0 - m0).abs() <= q.est_error.max(1e-12 * m0) + 1e-8 * m0, "d={d} p={p}");
            assert_eq!(q.method, MomentMethod::Quadrature);
        }
    }
}

#[test]
fn analytic_path_is_used_for_constant_kernel() {
    let m = compute_moments(2, MetricOrder::L2, &KernelSpec::ConstantOne).unwrap();
    assert_eq!(m.method, MomentMethod::Analytic);
    assert_relative_eq!(m.scale_factor(0.1), 2.0 * m.m0 / (m.m2 * 0.01), max_relative = 1e-15);
}

fn in_ball(u: &[f64], p: MetricOrder) -> bool {
    p.norm(u.iter().copied()) <= 1.0
}

#[test]
fn monte_carlo_oracle_within_three_standard_errors() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let kernel = KernelSpec::exponential(1.5).unwrap();
    for (d, p) in [(1, MetricOrder::L2), (2, MetricOrder::new(1.5).unwrap()), (3, MetricOrder::Infinity), (2, MetricOrder::L1)] {
        let m = compute_moments(d, p, &kernel).unwrap();
        let trials = 200_000;
        let vol = 2f64.powi(d as i32);
        let (mut s0, mut s0sq, mut s2, mut s2sq) = (0.0, 0.0, 0.0, 0.0);
        let mut u = vec![0.0; d];
        for _ in 0..trials {
            for ui in u.iter_mut() {
                *ui = rng.random_range(-1.0..1.0);
            }
            let (a, b) = if in_ball(&u, p) {
                let g = kernel.eval(p.norm(u.iter().copied()));
                (vol * g, vol * g * u[0] * u[0])
            } else {
                (0.0, 0.0)
            };
            s0 += a;
            s0sq += a * a;
            s2 += b;
            s2sq += b * b;
        }
        let t = trials as f64;
        let (e0, e2) = (s0 / t, s2 / t);
        let se0 = ((s0sq / t - e0 * e0) / t).sqrt();
        let se2 = ((s2sq / t - e2 * e2) / t).sqrt();
        assert!((e0 - m.m0).abs() <= 3.0 * se0, "d={d} p={p}: {e0} vs {} (se {se0})", m.m0);
        assert!((e2 - m.m2).abs() <= 3.0 * se2, "d={d} p={p}: {e2} vs {} (se {se2})", m.m2);
    }
}

#[test]
fn second_moment_does_not_depend_on_axis() {
    use rgg_edge::kernels::moment_quadrature;
    let g = KernelSpec::exponential(0.7).unwrap();
    for p in [MetricOrder::L1, MetricOrder::new(2.5).unwrap(), MetricOrder::Infinity] {
        let first = moment_quadrature(3, p, &g, 2, 0).unwrap().value;
        let last = moment_quadrature(3, p, &g, 2, 2).unwrap().value;
        assert_relative_eq!(first, last, max_relative = 1e-9);
    }
}
