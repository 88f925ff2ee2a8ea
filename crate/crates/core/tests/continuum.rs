use proptest::prelude::*;
use rgg_edge::continuum::{
    enumerate_spectrum, hermite_addition, hermite_eval, inner_product, weight_ratio_series, EigenFunction,
};
use rgg_edge::quadrature::GaussHermite;
use rgg_edge::SigmaDiag;

/// All `Σ 2kᵢ/σᵢ²` with every `kᵢ ≤ bound`, sorted.
fn brute_force(variances: &[f64], bound: usize) -> Vec<f64> {
    let d = variances.len();
    let mut out = Vec::new();
    let mut k = vec![0usize; d];
    loop {
        out.push(k.iter().zip(variances).map(|(&ki, v)| 2.0 * ki as f64 / v).sum::<f64>());
        let mut i = 0;
        loop {
            if i == d {
                out.sort_by(f64::total_cmp);
                return out;
            }
            k[i] += 1;
            if k[i] <= bound {
                break;
            }
            k[i] = 0;
            i += 1;
        }
    }
}

#[test]
fn first_fifty_values_match_brute_force() {
    let cases: &[&[f64]] = &[
        &[1.0],
        &[0.5],
        &[1.0, 1.0],
        &[1.0, 2.0],
        &[0.25, 3.0],
        &[1.0, 1.0, 1.0],
        &[1.0, 2.0, 4.0],
        &[0.5, 1.5, 2.5],
    ];
    for vars in cases {
        // the bound keeps every truncated tuple above the 50th value
        let bound = if vars.len() == 3 { 20 } else { 80 };
        let brute = brute_force(vars, bound);
        let s = enumerate_spectrum(&SigmaDiag::new(vars.to_vec()).unwrap(), 50);
        assert!(s.exact);
        for (a, b) in s.values.iter().zip(&brute[..50]) {
            assert!((a - b).abs() <= 4.0 * f64::EPSILON * b, "{vars:?}: {a} vs {b}");
        }
    }
    let irrational = [std::f64::consts::PI, std::f64::consts::E];
    let s = enumerate_spectrum(&SigmaDiag::new(irrational.to_vec()).unwrap(), 50);
    for (a, b) in s.values.iter().zip(brute_force(&irrational, 80)) {
        assert!((a - b).abs() <= 1e-12 * b.max(1.0));
    }
}

#[test]
fn group_multiplicities_count_tuples() {
    let s = enumerate_spectrum(&SigmaDiag::new(vec![1.0, 1.0, 1.0]).unwrap(), 30);
    for g in &s.groups {
        assert_eq!(g.multiplicity, g.tuples.len());
        // in d = 3 with unit variances, level j has (j+1)(j+2)/2 tuples
        let j = (g.value / 2.0).round() as usize;
        assert_eq!(g.multiplicity, (j + 1) * (j + 2) / 2);
    }
}

/// `H_m(t)`, `H_m'(t)` and `H_m''(t)` from an independent recurrence.
fn hermite_with_derivatives(m: usize, t: f64) -> (f64, f64, f64) {
    let mut h = vec![1.0, 2.0 * t];
    for k in 1..m.max(1) {
        h.push(2.0 * t * h[k] - 2.0 * k as f64 * h[k - 1]);
    }
    let at = |j: isize| if j < 0 { 0.0 } else { h[j as usize] };
    let mi = m as isize;
    (at(mi), 2.0 * m as f64 * at(mi - 1), 4.0 * (m * m.saturating_sub(1)) as f64 * at(mi - 2))
}

#[test]
fn eigenfunctions_satisfy_the_eigen_relation_at_quadrature_nodes() {
    let gh = GaussHermite::get(40);
    for vars in [vec![1.0], vec![2.5], vec![1.0, 0.5], vec![3.0, 1.7]] {
        let sigma = SigmaDiag::new(vars.clone()).unwrap();
        let d = vars.len();
        let tuples: Vec<Vec<usize>> = if d == 1 {
            (0..=10).map(|k| vec![k]).collect()
        } else {
            (0..=10).flat_map(|a| (0..=10 - a).map(move |b| vec![a, b])).collect()
        };
        for k in tuples {
            let ef = EigenFunction::new(k.clone(), sigma.clone()).unwrap();
            let lambda = ef.eigenvalue();
            let expected: f64 = k.iter().zip(&vars).map(|(&ki, v)| 2.0 * ki as f64 / v).sum();
            assert!((lambda - expected).abs() <= 1e-14 * expected.max(1.0));
            let poly = ef.to_poly();
            let image = poly.apply_laplace_beltrami();
            let mut max_psi = 0.0f64;
            let mut max_res = 0.0f64;
            let mut max_poly_res = 0.0f64;
            let mut max_normalized = 0.0f64;
            let grid: Vec<Vec<f64>> = if d == 1 {
                gh.nodes.iter().map(|&t| vec![t * sigma.std(0)]).collect()
            } else {
                gh.nodes.iter().step_by(3).flat_map(|&a| gh.nodes.iter().step_by(3).map(move |&b| vec![a, b])).map(|t| vec![t[0] * sigma.std(0), t[1] * sigma.std(1)]).collect()
            };
            for x in grid {
                // unnormalized product of H_{kᵢ}(xᵢ/σᵢ); the relation is linear
                let parts: Vec<(f64, f64, f64)> = (0..d).map(|i| hermite_with_derivatives(k[i], x[i] / sigma.std(i))).collect();
                let value: f64 = parts.iter().map(|p| p.0).product();
                let mut lap = 0.0;
                for i in 0..d {
                    let s = sigma.std(i);
                    let others: f64 = (0..d).filter(|&j| j != i).map(|j| parts[j].0).product();
                    let (_, d1, d2) = parts[i];
                    lap += others * (-d2 / (s * s) + 2.0 * x[i] / (s * s) * d1 / s);
                }
                max_psi = max_psi.max(value.abs());
                max_res = max_res.max((lap - lambda * value).abs());
                let psi = ef.eval(&x);
                max_normalized = max_normalized.max(psi.abs());
                max_poly_res = max_poly_res.max((image.eval(&x) - lambda * psi).abs());
            }
            for x in [[0.3, -0.2], [1.1, 0.8], [-2.0, 1.5]] {
                let x = &x[..d];
                assert!((poly.eval(x) - ef.eval(x)).abs() <= 1e-12 * max_normalized);
            }
            assert!(max_res <= 1e-8 * max_psi * lambda.max(1.0), "{k:?}: {max_res} vs {max_psi}");
            assert!(max_poly_res <= 1e-8 * max_normalized * lambda.max(1.0), "{k:?}: {max_poly_res}");
        }
    }
}

#[test]
fn eigenfunctions_are_orthonormal() {
    for vars in [vec![1.0], vec![0.3], vec![2.0, 0.7]] {
        let sigma = SigmaDiag::new(vars.clone()).unwrap();
        let d = vars.len();
        let indices: Vec<Vec<usize>> = if d == 1 {
            (0..=12).map(|k| vec![k]).collect()
        } else {
            (0..=5).flat_map(|a| (0..=5).map(move |b| vec![a, b])).collect()
        };
        let fs: Vec<EigenFunction> = indices.iter().map(|k| EigenFunction::new(k.clone(), sigma.clone()).unwrap()).collect();
        for (i, f) in fs.iter().enumerate() {
            for (j, g) in fs.iter().enumerate().skip(i) {
                let ip = inner_product(|x| f.eval(x), |x| g.eval(x), &sigma, 64);
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((ip - want).abs() < 1e-10, "{:?} {:?}: {ip}", f.index, g.index);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn spectrum_is_monotone_and_prefix_stable(
        vars in prop::collection::vec(prop_oneof![Just(0.5), Just(1.0), Just(2.0), 0.2f64..5.0], 1..=3),
        count in 1usize..60,
        extra in 1usize..40,
    ) {
        let sigma = SigmaDiag::new(vars).unwrap();
        let a = enumerate_spectrum(&sigma, count);
        let b = enumerate_spectrum(&sigma, count + extra);
        prop_assert_eq!(a.values.len(), count);
        prop_assert!(a.values.windows(2).all(|w| w[0] <= w[1]));
        prop_assert_eq!(&a.values[..], &b.values[..count]);
        prop_assert_eq!(a.values[0], 0.0);
    }

    #[test]
    fn addition_formula(m in 0usize..30, x in -3.0f64..3.0, z in -1.0f64..1.0) {
        let lhs = hermite_addition(m, x, z);
        let rhs = hermite_eval(m, x + z);
        let scale = (0..=m).map(|j| hermite_eval(j, x).abs() * (2.0 * z.abs() + 1.0).powi((m - j) as i32)).fold(1.0, f64::max);
        prop_assert!((lhs - rhs).abs() <= 1e-9 * scale.max(rhs.abs()), "{} vs {}", lhs, rhs);
    }

    #[test]
    fn generating_series_matches_weight_ratio(sigma in 0.3f64..3.0, x_unit in -3.0f64..3.0, z_unit in -0.25f64..0.25) {
        let (x, z) = (x_unit * sigma, z_unit * sigma);
        let exact = (-(2.0 * x * z + z * z) / (2.0 * sigma * sigma)).exp();
        let series = weight_ratio_series(x, z, sigma, 40);
        prop_assert!((series - exact).abs() <= 1e-8 * exact);
    }
}
