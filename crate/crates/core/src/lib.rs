//! Edge eigenvalues of random geometric graphs built on Gaussian samples,
//! and the Hermite spectrum of the weighted Laplace–Beltrami operator they
//! converge to.

pub mod continuum;
pub mod eigen;
pub mod error;
pub mod experiments;
pub mod graph;
pub mod kernels;
pub mod operators;
pub mod quadrature;
pub mod sampling;
pub mod sturm;

pub use continuum::{enumerate_spectrum, hermite_eval, ContinuumSpectrum, EigenFunction, HermiteIndex, HermitePoly};
pub use eigen::{adaptive_spectrum, compute_k0, edge_eigenvalues, smallest_eigs, DeltaPolicy, SolverOptions, SpectrumResult};
pub use error::{Error, Result};
pub use experiments::{ExperimentConfig, Mode};
pub use graph::{build_hard_affinity, build_laplacian, build_smoothed_affinity, neighbor_pairs, GraphSpec, LaplacianOperator, SparseAffinity};
pub use kernels::{compute_moments, scale_factor, KernelSpec, MomentMethod, MomentPair};
pub use operators::{bias_slope_check, extension_correspondence_check, DeterministicOperator, EmpiricalOperator};
pub use sturm::{signal_density, solve_weighted_neumann, WeightedInterval};
pub use sampling::{
    lp_distance, sample_gaussian, sample_signal_plus_noise, BulkRegion, Embedding, MetricOrder,
    PointCloud, SigmaDiag, SignalModel,
};
