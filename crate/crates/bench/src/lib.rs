//! Shared fixtures for the criterion benches in `benches/`.

use rgg_edge::sampling::sample_gaussian_rep;
use rgg_edge::{
    build_hard_affinity, build_laplacian, compute_moments, GraphSpec, KernelSpec, LaplacianOperator, MetricOrder,
    PointCloud, SigmaDiag,
};

pub fn unit_sigma() -> SigmaDiag {
    SigmaDiag::new(vec![1.0]).expect("unit variance")
}

pub fn gaussian_cloud(n: usize, seed: u64) -> PointCloud {
    sample_gaussian_rep(n, &unit_sigma(), seed, 0).expect("sampling")
}

pub fn hard_spec(radius: f64) -> GraphSpec {
    GraphSpec::hard(radius, MetricOrder::L2, KernelSpec::ConstantOne)
}

/// Scaled random-walk Laplacian of a 1-D standard Gaussian sample.
pub fn laplacian(n: usize, radius: f64, seed: u64) -> LaplacianOperator {
    let cloud = gaussian_cloud(n, seed);
    let moments = compute_moments(1, MetricOrder::L2, &KernelSpec::ConstantOne).expect("moments");
    let aff = build_hard_affinity(&cloud, &hard_spec(radius)).expect("affinity");
    build_laplacian(aff, moments.scale_factor(radius)).expect("laplacian")
}
