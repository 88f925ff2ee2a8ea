use std::collections::BTreeSet;

use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rgg_edge::graph::{sigmoid, smoothed_weight};
use rgg_edge::{
    build_hard_affinity, build_laplacian, build_smoothed_affinity, neighbor_pairs, GraphSpec, KernelSpec,
    MetricOrder, PointCloud,
};

fn random_cloud(n: usize, d: usize, seed: u64) -> PointCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    PointCloud::from_rows(&rows).unwrap()
}

fn brute_pairs(cloud: &PointCloud, r: f64, p: MetricOrder) -> BTreeSet<(usize, usize)> {
    let mut out = BTreeSet::new();
    for i in 0..cloud.len() {
        for j in i + 1..cloud.len() {
            if p.dist(cloud.point(i), cloud.point(j)) <= r {
                out.insert((i, j));
            }
        }
    }
    out
}

#[test]
fn neighbor_search_matches_brute_force() {
    for seed in 0..20u64 {
        let d = 1 + (seed % 3) as usize;
        let n = 100 + 20 * seed as usize;
        let cloud = random_cloud(n, d, seed);
        for p in [MetricOrder::L1, MetricOrder::L2, MetricOrder::Infinity] {
            let r = 0.05 + 0.02 * (seed % 7) as f64;
            let got: BTreeSet<(usize, usize)> = neighbor_pairs(&cloud, r, p).into_iter().map(|(i, j)| (i.min(j), i.max(j))).collect();
            assert_eq!(got, brute_pairs(&cloud, r, p), "seed {seed} d {d} p {p}");
        }
    }
}

#[test]
fn affinity_is_exactly_symmetric_and_row_stochastic() {
    let cloud = random_cloud(300, 2, 4);
    let g = KernelSpec::exponential(2.0).unwrap();
    for aff in [
        build_hard_affinity(&cloud, &GraphSpec::hard(0.2, MetricOrder::L2, g.clone())).unwrap(),
        build_smoothed_affinity(&cloud, &GraphSpec::smoothed_default(0.2, MetricOrder::L2, g.clone())).unwrap(),
    ] {
        let n = aff.n();
        for i in 0..n {
            let (cols, vals) = aff.row(i);
            let mut sum = 0.0;
            for (j, w) in cols.iter().zip(vals) {
                assert_eq!(aff.get(*j as usize, i).to_bits(), w.to_bits());
                sum += w;
            }
            assert!((sum / aff.degrees()[i] - 1.0).abs() < 1e-12);
        }
    }
}

/// Every eigenpair `(μ, u)` of `I - S` maps to `(μ, D^{-1/2} u)` of
/// `I - D^{-1} K`, checked against `K` directly. `n` independent vectors
/// make the two spectra equal.
#[test]
fn symmetrized_spectrum_matches_random_walk_matrix() {
    for seed in 0..6u64 {
        let cloud = random_cloud(120 + 15 * seed as usize, 2, 100 + seed);
        let aff = build_hard_affinity(&cloud, &GraphSpec::hard(0.3, MetricOrder::L2, KernelSpec::ConstantOne)).unwrap();
        let n = aff.n();
        let deg = aff.degrees().to_vec();
        let rw = DMatrix::from_fn(n, n, |i, j| (i == j) as u8 as f64 - aff.get(i, j) / deg[i]);
        let op = build_laplacian(aff, 1.0).unwrap();
        let eig = DMatrix::from_row_slice(n, n, &op.dense_sym_laplacian()).symmetric_eigen();
        for (k, mu) in eig.eigenvalues.iter().enumerate() {
            let v = eig.eigenvectors.column(k).component_div(&nalgebra::DVector::from_fn(n, |i, _| deg[i].sqrt()));
            let resid = (&rw * &v - *mu * &v).norm();
            assert!(resid < 1e-8 * v.norm(), "seed {seed}: mu {mu} residual {resid}");
        }
    }
}

/// `|K - K̃| ≤ sup g* / (1 + exp(α |r² - dist²|))`, up to one rounding of `K`.
pub fn closeness_holds(dist: f64, r: f64, alpha: f64, g: &KernelSpec) -> bool {
    let hard = if dist <= r { g.eval(dist / r) } else { 0.0 };
    let smooth = smoothed_weight(dist, r, alpha, g);
    let bound = g.sup_extended() / (1.0 + (alpha * (r * r - dist * dist).abs()).min(700.0).exp());
    (hard - smooth).abs() <= bound * (1.0 + 1e-12) + 2.0 * f64::EPSILON * hard
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn kernel_closeness_bound(dist in 0.0f64..0.6, r in 0.01f64..0.5, alpha_scale in 1.0f64..500.0, c in 0.0f64..3.0) {
        let g = KernelSpec::exponential(c).unwrap();
        prop_assert!(closeness_holds(dist, r, alpha_scale / (r * r), &g));
    }

    #[test]
    fn sigmoid_is_monotone_and_bounded(a in -1e4f64..1e4, b in -1e4f64..1e4) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(sigmoid(lo) <= sigmoid(hi));
        prop_assert!((0.0..=1.0).contains(&sigmoid(a)));
    }
}
