//! Point clouds: centered Gaussian samples with diagonal covariance and 1-D
//! signal-plus-noise clouds, plus the ℓp metric and the bulk boxes used to
//! separate well-sampled points from tail points.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Diagonal covariance `diag(σ₁², …, σ_d²)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct SigmaDiag {
    sigma_sq: Vec<f64>,
}

impl SigmaDiag {
    pub fn new(sigma_sq: Vec<f64>) -> Result<Self> {
        if sigma_sq.is_empty() {
            return Err(Error::InvalidSigma("dimension must be at least 1".into()));
        }
        if let Some(v) = sigma_sq.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::InvalidSigma(format!("variance {v} is not positive and finite")));
        }
        Ok(Self { sigma_sq })
    }

    /// Same variance on every axis.
    pub fn isotropic(d: usize, variance: f64) -> Result<Self> {
        Self::new(vec![variance; d])
    }

    /// Build from standard deviations rather than variances.
    pub fn from_std(std: &[f64]) -> Result<Self> {
        Self::new(std.iter().map(|s| s * s).collect())
    }

    pub fn dim(&self) -> usize {
        self.sigma_sq.len()
    }

    pub fn variances(&self) -> &[f64] {
        &self.sigma_sq
    }

    pub fn variance(&self, i: usize) -> f64 {
        self.sigma_sq[i]
    }

    pub fn std(&self, i: usize) -> f64 {
        self.sigma_sq[i].sqrt()
    }

    /// `min_i σᵢ⁻²`, the upper limit for the trivial-eigenvalue threshold.
    pub fn min_inverse_variance(&self) -> f64 {
        self.sigma_sq.iter().map(|v| 1.0 / v).fold(f64::INFINITY, f64::min)
    }

    /// Unnormalized Gaussian weight `exp(-Σ xᵢ²/(2σᵢ²))`.
    pub fn weight(&self, x: &[f64]) -> f64 {
        self.log_weight(x).exp()
    }

    pub fn log_weight(&self, x: &[f64]) -> f64 {
        -x.iter()
            .zip(&self.sigma_sq)
            .map(|(xi, s2)| xi * xi / (2.0 * s2))
            .sum::<f64>()
    }
}

impl TryFrom<Vec<f64>> for SigmaDiag {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<SigmaDiag> for Vec<f64> {
    fn from(s: SigmaDiag) -> Self {
        s.sigma_sq
    }
}

/// Order of the ℓp metric. `Infinity` is a distinct variant so that no code
/// path ever compares against a large float standing in for ∞.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MetricOrder {
    Finite(f64),
    Infinity,
}

impl MetricOrder {
    pub const L1: MetricOrder = MetricOrder::Finite(1.0);
    pub const L2: MetricOrder = MetricOrder::Finite(2.0);

    pub fn new(p: f64) -> Result<Self> {
        if p == f64::INFINITY {
            Ok(MetricOrder::Infinity)
        } else if p.is_finite() && p >= 1.0 {
            Ok(MetricOrder::Finite(p))
        } else {
            Err(Error::InvalidParameter(format!("metric order p = {p} must satisfy p >= 1")))
        }
    }

    /// Norm of a difference vector given coordinate-wise.
    #[inline]
    pub fn norm(&self, v: impl Iterator<Item = f64>) -> f64 {
        match *self {
            MetricOrder::Infinity => v.fold(0.0, |m, x| m.max(x.abs())),
            MetricOrder::Finite(p) if p == 1.0 => v.map(f64::abs).sum(),
            MetricOrder::Finite(p) if p == 2.0 => v.map(|x| x * x).sum::<f64>().sqrt(),
            MetricOrder::Finite(p) => v.map(|x| x.abs().powf(p)).sum::<f64>().powf(1.0 / p),
        }
    }

    /// Distance without the dimension check.
    #[inline]
    pub fn dist(&self, x: &[f64], y: &[f64]) -> f64 {
        self.norm(x.iter().zip(y).map(|(a, b)| a - b))
    }
}

impl std::fmt::Display for MetricOrder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MetricOrder::Finite(p) => write!(f, "{p}"),
            MetricOrder::Infinity => write!(f, "inf"),
        }
    }
}

impl Serialize for MetricOrder {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            MetricOrder::Finite(p) => s.serialize_f64(*p),
            MetricOrder::Infinity => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for MetricOrder {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Int(i64),
            Text(String),
        }
        let p = match Raw::deserialize(d)? {
            Raw::Num(p) => p,
            Raw::Int(p) => p as f64,
            Raw::Text(t) if matches!(t.as_str(), "inf" | "infinity" | "Inf" | "∞") => f64::INFINITY,
            Raw::Text(t) => t.parse::<f64>().map_err(serde::de::Error::custom)?,
        };
        MetricOrder::new(p).map_err(serde::de::Error::custom)
    }
}

/// ℓp distance between two points.
pub fn lp_distance(x: &[f64], y: &[f64], p: MetricOrder) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch { expected: x.len(), found: y.len() });
    }
    Ok(p.dist(x, y))
}

/// Map `ι: [0,1] → ℝ` carrying the clean 1-D signal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "values")]
pub enum Embedding {
    Identity,
    /// `sin(πz/2)`
    Sine,
    /// Piecewise-linear through `values[k]` at `z = k/(len-1)`.
    Tabulated(Vec<f64>),
}

impl Embedding {
    pub fn apply(&self, z: f64) -> f64 {
        match self {
            Embedding::Identity => z,
            Embedding::Sine => (std::f64::consts::FRAC_PI_2 * z).sin(),
            Embedding::Tabulated(v) => {
                let m = v.len() - 1;
                let t = (z.clamp(0.0, 1.0) * m as f64).min(m as f64);
                let k = (t.floor() as usize).min(m.saturating_sub(1));
                let w = t - k as f64;
                v[k] * (1.0 - w) + v[(k + 1).min(m)] * w
            }
        }
    }

    pub fn derivative(&self, z: f64) -> f64 {
        match self {
            Embedding::Identity => 1.0,
            Embedding::Sine => {
                std::f64::consts::FRAC_PI_2 * (std::f64::consts::FRAC_PI_2 * z).cos()
            }
            Embedding::Tabulated(v) => {
                let m = v.len() - 1;
                let k = ((z.clamp(0.0, 1.0) * m as f64).floor() as usize).min(m - 1);
                (v[k + 1] - v[k]) * m as f64
            }
        }
    }

    /// +1 increasing, -1 decreasing, error otherwise.
    pub fn monotone_direction(&self) -> Result<f64> {
        match self {
            Embedding::Identity | Embedding::Sine => Ok(1.0),
            Embedding::Tabulated(v) => {
                if v.len() < 2 || v.iter().any(|x| !x.is_finite()) {
                    return Err(Error::NonMonotoneEmbedding);
                }
                if v.windows(2).all(|w| w[1] > w[0]) {
                    Ok(1.0)
                } else if v.windows(2).all(|w| w[1] < w[0]) {
                    Ok(-1.0)
                } else {
                    Err(Error::NonMonotoneEmbedding)
                }
            }
        }
    }

    /// `ι⁻¹(y)` by bisection on [0, 1].
    pub fn inverse(&self, y: f64) -> Result<f64> {
        let dir = self.monotone_direction()?;
        let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if dir * (self.apply(mid) - y) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// Image interval `ι([0, 1])`.
    pub fn range(&self) -> (f64, f64) {
        let (a, b) = (self.apply(0.0), self.apply(1.0));
        (a.min(b), a.max(b))
    }
}

/// How the latent coordinates `z_j` are drawn.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LatentSampling {
    #[default]
    Uniform,
    /// Midpoints `(j + 1/2)/n`.
    Grid,
}

/// `y_j = ι(z_j) + x_j` with `x_j ~ N(0, σ²)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignalModel {
    pub embedding: Embedding,
    pub noise_sigma: f64,
    #[serde(default)]
    pub latent: LatentSampling,
}

impl SignalModel {
    pub fn new(embedding: Embedding, noise_sigma: f64) -> Result<Self> {
        if !(noise_sigma.is_finite() && noise_sigma >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "noise sigma {noise_sigma} must be nonnegative"
            )));
        }
        embedding.monotone_direction()?;
        Ok(Self { embedding, noise_sigma, latent: LatentSampling::Uniform })
    }

    pub fn with_latent(mut self, latent: LatentSampling) -> Self {
        self.latent = latent;
        self
    }

    fn validate(&self) -> Result<()> {
        Self::new(self.embedding.clone(), self.noise_sigma).map(|_| ())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CloudSource {
    Gaussian(SigmaDiag),
    Signal(SignalModel),
    Explicit,
}

/// `n × d` sample matrix, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud {
    n: usize,
    d: usize,
    data: Vec<f64>,
    pub seed: Option<u64>,
    pub repetition: u64,
    pub source: CloudSource,
}

impl PointCloud {
    /// Cloud from explicit coordinates; all rows must share one dimension.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map(Vec::len).unwrap_or(0);
        if d == 0 {
            return Err(Error::InvalidParameter("empty point cloud".into()));
        }
        let mut data = Vec::with_capacity(rows.len() * d);
        for r in rows {
            if r.len() != d {
                return Err(Error::DimensionMismatch { expected: d, found: r.len() });
            }
            if r.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidParameter("non-finite coordinate".into()));
            }
            data.extend_from_slice(r);
        }
        Ok(Self { n: rows.len(), d, data, seed: None, repetition: 0, source: CloudSource::Explicit })
    }

    /// 1-D cloud from scalar samples.
    pub fn from_scalars(xs: &[f64]) -> Result<Self> {
        Self::from_rows(&xs.iter().map(|&x| vec![x]).collect::<Vec<_>>())
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn point(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.d)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Per-coordinate unbiased sample variance.
    pub fn sample_variances(&self) -> Vec<f64> {
        (0..self.d)
            .map(|c| {
                let mean = self.points().map(|p| p[c]).sum::<f64>() / self.n as f64;
                self.points().map(|p| (p[c] - mean).powi(2)).sum::<f64>() / (self.n as f64 - 1.0)
            })
            .collect()
    }
}

/// Generator for repetition `rep` of a run seeded with `seed`. Each repetition
/// owns an independent ChaCha stream, so results do not depend on the order in
/// which repetitions are executed.
pub fn rng_for(seed: u64, rep: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep);
    rng
}

pub fn sample_gaussian(n: usize, sigma: &SigmaDiag, seed: u64) -> Result<PointCloud> {
    sample_gaussian_rep(n, sigma, seed, 0)
}

pub fn sample_gaussian_rep(n: usize, sigma: &SigmaDiag, seed: u64, rep: u64) -> Result<PointCloud> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!("need n >= 2 samples, got {n}")));
    }
    // Re-validate: a SigmaDiag can also arrive through deserialization.
    let sigma = SigmaDiag::new(sigma.variances().to_vec())?;
    let d = sigma.dim();
    let std: Vec<f64> = (0..d).map(|i| sigma.std(i)).collect();
    let mut rng = rng_for(seed, rep);
    let mut data = Vec::with_capacity(n * d);
    for _ in 0..n {
        for s in &std {
            let z: f64 = rng.sample(StandardNormal);
            data.push(s * z);
        }
    }
    Ok(PointCloud { n, d, data, seed: Some(seed), repetition: rep, source: CloudSource::Gaussian(sigma) })
}

pub fn sample_signal_plus_noise(n: usize, model: &SignalModel, seed: u64) -> Result<PointCloud> {
    sample_signal_plus_noise_rep(n, model, seed, 0)
}

pub fn sample_signal_plus_noise_rep(
    n: usize,
    model: &SignalModel,
    seed: u64,
    rep: u64,
) -> Result<PointCloud> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!("need n >= 2 samples, got {n}")));
    }
    model.validate()?;
    let mut rng = rng_for(seed, rep);
    let mut data = Vec::with_capacity(n);
    for j in 0..n {
        let z = match model.latent {
            LatentSampling::Uniform => rng.random::<f64>(),
            LatentSampling::Grid => (j as f64 + 0.5) / n as f64,
        };
        let noise: f64 = rng.sample(StandardNormal);
        data.push(model.embedding.apply(z) + model.noise_sigma * noise);
    }
    Ok(PointCloud {
        n,
        d: 1,
        data,
        seed: Some(seed),
        repetition: rep,
        source: CloudSource::Signal(model.clone()),
    })
}

/// Coordinate boxes where Gaussian samples concentrate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BulkRegion {
    /// Half-width `σᵢ √(log n / (d²/4 + d + 1))`.
    Bn,
    /// Half-width `σᵢ √(2(1+β) log n)`.
    B1 { beta: f64 },
}

impl BulkRegion {
    pub const DEFAULT_BETA: f64 = 0.1;

    pub fn b1() -> Self {
        BulkRegion::B1 { beta: Self::DEFAULT_BETA }
    }

    /// Half-width of the box along an axis with unit variance.
    pub fn unit_half_width(&self, n: usize, d: usize) -> f64 {
        let log_n = (n as f64).ln();
        match *self {
            BulkRegion::Bn => {
                let d = d as f64;
                (log_n / (d * d / 4.0 + d + 1.0)).sqrt()
            }
            BulkRegion::B1 { beta } => (2.0 * (1.0 + beta) * log_n).sqrt(),
        }
    }
}

pub fn bulk_membership(x: &[f64], sigma: &SigmaDiag, n: usize, variant: BulkRegion) -> bool {
    bulk_membership_real(x, sigma, n as f64, variant)
}

/// Same as [`bulk_membership`] with a real-valued sample size, so that
/// thresholds like `n = e⁹` can be expressed exactly.
pub fn bulk_membership_real(x: &[f64], sigma: &SigmaDiag, n: f64, variant: BulkRegion) -> bool {
    let d = sigma.dim() as f64;
    let log_n = n.ln();
    let unit = match variant {
        BulkRegion::Bn => (log_n / (d * d / 4.0 + d + 1.0)).sqrt(),
        BulkRegion::B1 { beta } => (2.0 * (1.0 + beta) * log_n).sqrt(),
    };
    x.iter().enumerate().all(|(i, xi)| xi.abs() <= sigma.std(i) * unit)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn distances_on_the_3_4_5_triangle() {
        let (x, y) = ([0.0, 0.0], [3.0, 4.0]);
        assert_eq!(lp_distance(&x, &y, MetricOrder::L2).unwrap(), 5.0);
        assert_eq!(lp_distance(&x, &y, MetricOrder::Infinity).unwrap(), 4.0);
        assert_eq!(lp_distance(&x, &y, MetricOrder::L1).unwrap(), 7.0);
    }

    #[test]
    fn distance_dimension_mismatch() {
        assert!(matches!(
            lp_distance(&[0.0], &[1.0, 2.0], MetricOrder::L2),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn metric_order_rejects_p_below_one() {
        assert!(MetricOrder::new(0.5).is_err());
        assert_eq!(MetricOrder::new(f64::INFINITY).unwrap(), MetricOrder::Infinity);
    }

    #[test]
    fn metric_order_parses_inf() {
        let p: MetricOrder = serde_json::from_str("\"inf\"").unwrap();
        assert_eq!(p, MetricOrder::Infinity);
        let p: MetricOrder = serde_json::from_str("1.5").unwrap();
        assert_eq!(p, MetricOrder::Finite(1.5));
    }

    #[test]
    fn sigma_rejects_nonpositive() {
        assert!(SigmaDiag::new(vec![1.0, 0.0]).is_err());
        assert!(SigmaDiag::new(vec![]).is_err());
        assert!(SigmaDiag::new(vec![f64::NAN]).is_err());
    }

    #[test]
    fn gaussian_sampling_is_deterministic() {
        let s = SigmaDiag::new(vec![1.0]).unwrap();
        let a = sample_gaussian(4, &s, 7).unwrap();
        let b = sample_gaussian(4, &s, 7).unwrap();
        assert_eq!(a.as_slice(), b.as_slice());
        let c = sample_gaussian(4, &s, 8).unwrap();
        assert_ne!(a.as_slice(), c.as_slice());
    }

    #[test]
    fn repetitions_use_distinct_streams() {
        let s = SigmaDiag::new(vec![1.0]).unwrap();
        let a = sample_gaussian_rep(8, &s, 7, 0).unwrap();
        let b = sample_gaussian_rep(8, &s, 7, 1).unwrap();
        assert_ne!(a.as_slice(), b.as_slice());
    }

    #[test]
    fn gaussian_sample_variance() {
        let n = 100_000;
        let s = SigmaDiag::new(vec![1.0]).unwrap();
        let c = sample_gaussian(n, &s, 11).unwrap();
        let v = c.sample_variances()[0];
        let tol = 3.0 * (2.0 / n as f64).sqrt();
        assert!((v - 1.0).abs() < tol, "variance {v}");
        assert!((0.98..=1.02).contains(&v));
    }

    #[test]
    fn gaussian_coordinates_are_uncorrelated() {
        let n = 100_000;
        let s = SigmaDiag::from_std(&[1.0, 2.0]).unwrap();
        let c = sample_gaussian(n, &s, 3).unwrap();
        let v = c.sample_variances();
        assert!((v[1] / 4.0 - 1.0).abs() < 0.02);
        // correlation of the standardized coordinates
        let (m0, m1) = c.points().fold((0.0, 0.0), |(a, b), p| (a + p[0], b + p[1]));
        let (m0, m1) = (m0 / n as f64, m1 / n as f64);
        let cov = c.points().map(|p| (p[0] - m0) * (p[1] - m1)).sum::<f64>() / n as f64;
        let corr = cov / (v[0] * v[1]).sqrt();
        assert!(corr.abs() < 0.02, "correlation {corr}");
    }

    #[test]
    fn noiseless_signals_stay_in_unit_interval() {
        for emb in [Embedding::Identity, Embedding::Sine] {
            let m = SignalModel::new(emb, 0.0).unwrap();
            let c = sample_signal_plus_noise(1000, &m, 5).unwrap();
            assert!(c.as_slice().iter().all(|y| (0.0..=1.0).contains(y)));
        }
    }

    #[test]
    fn signal_plus_noise_variance_adds() {
        let m = SignalModel::new(Embedding::Identity, 1.0).unwrap();
        let c = sample_signal_plus_noise(100_000, &m, 9).unwrap();
        let v = c.sample_variances()[0];
        let expect = 1.0 / 12.0 + 1.0;
        assert!((v / expect - 1.0).abs() < 0.02, "variance {v}");
    }

    #[test]
    fn grid_latent_is_pushforward_of_midpoints() {
        let m = SignalModel::new(Embedding::Sine, 0.0).unwrap().with_latent(LatentSampling::Grid);
        let c = sample_signal_plus_noise(10, &m, 1).unwrap();
        for (j, y) in c.as_slice().iter().enumerate() {
            let z = (j as f64 + 0.5) / 10.0;
            assert_eq!(*y, (std::f64::consts::FRAC_PI_2 * z).sin());
        }
    }

    #[test]
    fn non_monotone_table_is_rejected() {
        let e = Embedding::Tabulated(vec![0.0, 1.0, 0.5]);
        assert!(matches!(SignalModel::new(e, 0.1), Err(Error::NonMonotoneEmbedding)));
    }

    #[test]
    fn tabulated_inverse_round_trips() {
        let e = Embedding::Tabulated(vec![0.0, 0.5, 2.0]);
        let z = e.inverse(1.25).unwrap();
        assert!((e.apply(z) - 1.25).abs() < 1e-12);
        assert!((z - 0.75).abs() < 1e-12);
    }

    #[test]
    fn bulk_boxes() {
        let s = SigmaDiag::new(vec![1.0]).unwrap();
        for v in [BulkRegion::Bn, BulkRegion::b1()] {
            assert!(bulk_membership(&[0.0], &s, 100, v));
        }
        let n = 9f64.exp();
        assert!(!bulk_membership_real(&[2.1], &s, n, BulkRegion::Bn));
        assert!(bulk_membership_real(&[1.9], &s, n, BulkRegion::Bn));
        let w = BulkRegion::b1();
        let thr = 22f64.sqrt();
        let n = 10f64.exp();
        assert!((thr - 4.690).abs() < 1e-3);
        assert!(bulk_membership_real(&[thr - 1e-9], &s, n, w));
        assert!(!bulk_membership_real(&[thr + 1e-9], &s, n, w));
    }
}
