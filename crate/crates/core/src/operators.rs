//! Function-space versions of the graph Laplacian: the empirical operator
//! built from the smoothed kernel, the deterministic ball-integral operators,
//! and numerical checks tying them to the matrix and to `Δ_ϱ`.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::continuum::{hermite_all, hermite_log_norm_sq, EigenFunction};
use crate::eigen::{smallest_eigs, SolverOptions};
use crate::error::{Error, Result};
use crate::graph::{build_laplacian, build_smoothed_affinity, smoothed_weight, GraphSpec};
use crate::kernels::{compute_moments, MomentPair};
use crate::quadrature::{integrate_ball, integrate_ball_multi, Estimate, GaussHermite, Parity, Tolerance};
use crate::sampling::{bulk_membership, BulkRegion, PointCloud, SigmaDiag};

/// Denominators below this are treated as an isolated query point.
pub const DENOMINATOR_FLOOR: f64 = 1e-300;

/// `L̃ₙ f(x) = scale · Σ w_j (f(x) - f(x_j)) / Σ w_j` with smoothed weights
/// `w_j = sig(α(r² - ‖x - x_j‖²)) g*(‖x - x_j‖/r)`. Weights below the shared
/// drop threshold are discarded, matching the stored matrix.
#[derive(Clone, Debug)]
pub struct EmpiricalOperator {
    pub cloud: PointCloud,
    pub spec: GraphSpec,
    pub moments: MomentPair,
    alpha: f64,
}

impl EmpiricalOperator {
    pub fn new(cloud: PointCloud, spec: GraphSpec) -> Result<Self> {
        spec.validate()?;
        let alpha = spec.alpha.ok_or_else(|| Error::InvalidParameter("empirical operator needs alpha".into()))?;
        let moments = compute_moments(cloud.dim(), spec.p, &spec.kernel)?;
        Ok(Self { cloud, spec, moments, alpha })
    }

    pub fn scale(&self) -> f64 {
        self.moments.scale_factor(self.spec.radius)
    }

    pub fn weight(&self, x: &[f64], j: usize) -> f64 {
        let y = self.cloud.point(j);
        let dist = self.spec.p.norm(x.iter().zip(y).map(|(a, b)| a - b));
        let w = smoothed_weight(dist, self.spec.radius, self.alpha, self.spec.extension());
        if w < self.spec.drop_threshold {
            0.0
        } else {
            w
        }
    }

    /// `(Σ w_j v_j, Σ w_j)` for sample values `v`.
    pub fn weighted_sums(&self, x: &[f64], values: &[f64]) -> (f64, f64) {
        (0..self.cloud.len()).fold((0.0, 0.0), |(num, den), j| {
            let w = self.weight(x, j);
            (num + w * values[j], den + w)
        })
    }

    /// Evaluate with `f` at the samples given as `f_samples`.
    pub fn apply_with_values(&self, fx: f64, f_samples: &[f64], x: &[f64]) -> Result<f64> {
        let (num, den) = (0..self.cloud.len()).fold((0.0, 0.0), |(num, den), j| {
            let w = self.weight(x, j);
            (num + w * (fx - f_samples[j]), den + w)
        });
        if den < DENOMINATOR_FLOOR {
            return Err(Error::Isolated { denominator: den });
        }
        Ok(self.scale() * num / den)
    }

    pub fn apply(&self, f: impl Fn(&[f64]) -> f64, x: &[f64]) -> Result<f64> {
        let values: Vec<f64> = self.cloud.points().map(&f).collect();
        self.apply_with_values(f(x), &values, x)
    }
}

/// Ball-integral operators against the Gaussian weight
/// `ϱ(x) = exp(-Σ xᵢ²/(2σᵢ²))`, evaluated by quadrature after `y = x + r z`.
#[derive(Clone, Debug)]
pub struct DeterministicOperator {
    pub sigma: SigmaDiag,
    pub spec: GraphSpec,
    pub moments: MomentPair,
    pub tol: Tolerance,
}

impl DeterministicOperator {
    pub fn new(sigma: SigmaDiag, spec: GraphSpec) -> Result<Self> {
        spec.validate()?;
        if sigma.dim() > 3 {
            return Err(Error::InvalidParameter("ball quadrature supports d <= 3".into()));
        }
        let moments = compute_moments(sigma.dim(), spec.p, &spec.kernel)?;
        Ok(Self { sigma, spec, moments, tol: Tolerance { rel: 1e-10, abs: 1e-14, ..Tolerance::default() } })
    }

    pub fn with_radius(&self, radius: f64) -> Self {
        let mut out = self.clone();
        out.spec.radius = radius;
        out
    }

    /// `ϱ(x + r z)/ϱ(x)`.
    fn weight_ratio(&self, x: &[f64], rz: &[f64]) -> f64 {
        let e: f64 = x
            .iter()
            .zip(rz)
            .enumerate()
            .map(|(i, (xi, zi))| (2.0 * xi * zi + zi * zi) / (2.0 * self.sigma.variance(i)))
            .sum();
        (-e).exp()
    }

    /// `(∫ g (f(x) - f(x+rz)) ϱ(x+rz)/ϱ(x) dz, ∫ g ϱ(x+rz)/ϱ(x) dz)` over the unit ball.
    fn integrals(&self, f: &(impl Fn(&[f64]) -> f64 + Sync), x: &[f64]) -> Result<[Estimate; 2]> {
        let r = self.spec.radius;
        let fx = f(x);
        let d = x.len();
        let scale_hint = fx.abs().max(1.0);
        let tol = Tolerance { abs: self.tol.abs * scale_hint, ..self.tol };
        integrate_ball_multi(d, self.spec.p, Parity::General, tol, |z| {
            let mut y = [0.0; 3];
            let mut rz = [0.0; 3];
            for i in 0..d {
                rz[i] = r * z[i];
                y[i] = x[i] + rz[i];
            }
            let g = self.spec.kernel.eval_h(self.spec.p.norm(z.iter().copied()));
            let w = g * self.weight_ratio(x, &rz[..d]);
            [w * (fx - f(&y[..d])), w]
        })
    }

    /// `𝒯ₙ f(x) = (2/(m₂ r²)) ∫_{‖z‖≤1} g(‖z‖)(f(x) - f(x+rz)) ϱ(x+rz)/ϱ(x) dz`.
    pub fn apply_tn(&self, f: impl Fn(&[f64]) -> f64 + Sync, x: &[f64]) -> Result<f64> {
        let [num, _] = self.integrals(&f, x)?;
        let r = self.spec.radius;
        Ok(2.0 / (self.moments.m2 * r * r) * num.value)
    }

    /// Ratio-of-integrals form `𝒯̃ₙ f(x)` with scale `2m₀/(m₂r²)`.
    pub fn apply_ttilde_n(&self, f: impl Fn(&[f64]) -> f64 + Sync, x: &[f64]) -> Result<f64> {
        let [num, den] = self.integrals(&f, x)?;
        if den.value < DENOMINATOR_FLOOR {
            return Err(Error::Isolated { denominator: den.value });
        }
        Ok(self.moments.scale_factor(self.spec.radius) * num.value / den.value)
    }

    /// Both forms from one pass over the nodes: `(𝒯ₙ f(x), 𝒯̃ₙ f(x))`.
    pub fn apply_both(&self, f: impl Fn(&[f64]) -> f64 + Sync, x: &[f64]) -> Result<(f64, f64)> {
        let [num, den] = self.integrals(&f, x)?;
        let r = self.spec.radius;
        let tn = 2.0 / (self.moments.m2 * r * r) * num.value;
        Ok((tn, self.moments.scale_factor(r) * num.value / den.value))
    }

    /// `∫_{‖x-y‖≤r} g(‖x-y‖/r) ϱ(y) dy`.
    pub fn denominator(&self, x: &[f64]) -> Result<f64> {
        let r = self.spec.radius;
        let d = x.len();
        let rho_x = self.sigma.weight(x);
        let e = integrate_ball(d, self.spec.p, Parity::General, self.tol, |z| {
            let rz: Vec<f64> = z.iter().map(|v| r * v).collect();
            self.spec.kernel.eval_h(self.spec.p.norm(z.iter().copied())) * self.weight_ratio(x, &rz)
        })?;
        Ok(e.value * r.powi(d as i32) * rho_x)
    }

    /// `Λ_γ = ∫_{‖z‖≤1} g(‖z‖) exp(-Σ r² zᵢ²/(4σᵢ²)) z^γ dz`, zero when any `γᵢ` is odd.
    pub fn lambda_gamma(&self, gamma: &[usize]) -> Result<f64> {
        if gamma.iter().any(|g| g % 2 == 1) {
            return Ok(0.0);
        }
        let r = self.spec.radius;
        let e = integrate_ball(gamma.len(), self.spec.p, Parity::Even, self.tol, |z| {
            let g = self.spec.kernel.eval_h(self.spec.p.norm(z.iter().copied()));
            let damp: f64 = z.iter().enumerate().map(|(i, zi)| r * r * zi * zi / (4.0 * self.sigma.variance(i))).sum();
            let mono: f64 = z.iter().zip(gamma).map(|(zi, &gi)| zi.powi(gi as i32)).product();
            g * (-damp).exp() * mono
        })?;
        Ok(e.value)
    }

    /// `𝒯ₙ φ(x)` for an eigenfunction through its Hermite series, keeping
    /// the terms with `|γ| ≤ max_order`, `γ = k - s + α`.
    pub fn expansion_series(&self, phi: &EigenFunction, x: &[f64], max_order: usize) -> Result<f64> {
        let d = self.sigma.dim();
        let k = &phi.index.0;
        let r = self.spec.radius;
        let c_phi: f64 = k
            .iter()
            .enumerate()
            .map(|(i, &ki)| (-0.5 * (hermite_log_norm_sq(ki) + self.sigma.std(i).ln())).exp())
            .product();
        let h: Vec<Vec<f64>> = (0..d).map(|i| hermite_all(max_order + k[i], x[i] / self.sigma.std(i))).collect();
        let mut lambda_cache: HashMap<Vec<usize>, f64> = HashMap::new();
        let mut total = 0.0;
        for s in multi_indices_below(k) {
            if &s == k {
                continue;
            }
            let ks: usize = k.iter().zip(&s).map(|(a, b)| a - b).sum();
            if ks > max_order {
                continue;
            }
            for alpha in multi_indices_of_total_at_most(d, max_order - ks) {
                let gamma: Vec<usize> = (0..d).map(|i| k[i] - s[i] + alpha[i]).collect();
                if gamma.iter().any(|g| g % 2 == 1) {
                    continue;
                }
                let lam = match lambda_cache.get(&gamma) {
                    Some(v) => *v,
                    None => {
                        let v = self.lambda_gamma(&gamma)?;
                        lambda_cache.insert(gamma.clone(), v);
                        v
                    }
                };
                let abs_alpha: usize = alpha.iter().sum();
                let abs_gamma: usize = gamma.iter().sum();
                let alpha_fact: f64 = alpha.iter().map(|&a| (1..=a).map(|t| t as f64).product::<f64>()).product();
                let mut c = -1.0;
                for i in 0..d {
                    c *= h[i][s[i]] * h[i][alpha[i]] * binomial(k[i], s[i]) * 2f64.powi((k[i] - s[i]) as i32);
                }
                let sigma_pow: f64 = (0..d).map(|i| self.sigma.std(i).powi(-(gamma[i] as i32))).product();
                let sign = if abs_alpha.is_multiple_of(2) { 1.0 } else { -1.0 };
                total += sign / (alpha_fact * 2f64.powi(abs_alpha as i32))
                    * c
                    * sigma_pow
                    * r.powi(abs_gamma as i32 - 2)
                    * lam;
            }
        }
        Ok(2.0 * c_phi / self.moments.m2 * total)
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn multi_indices_below(k: &[usize]) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for &ki in k {
        out = out.into_iter().flat_map(|p| (0..=ki).map(move |s| [p.clone(), vec![s]].concat())).collect();
    }
    out
}

fn multi_indices_of_total_at_most(d: usize, total: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..d {
        out = out
            .into_iter()
            .flat_map(|p: Vec<usize>| {
                let used: usize = p.iter().sum();
                (0..=total - used).map(move |a| [p.clone(), vec![a]].concat())
            })
            .collect();
    }
    out
}

/// Outcome of the bias check: `e(r) = ‖(𝒯ₙ - Δ_ϱ)φ‖_ℱ` per radius and the
/// least-squares slope of `log e` against `log r`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BiasReport {
    pub radii: Vec<f64>,
    pub errors: Vec<f64>,
    /// `None` when every error is exactly zero.
    pub slope: Option<f64>,
    pub exact_zero: bool,
    /// `e(r_i)/e(r_{i+1})` for consecutive radii.
    pub ratios: Vec<f64>,
    pub quad_order: usize,
    pub bulk_n: usize,
}

pub const BIAS_QUAD_ORDER: usize = 80;

/// `e(r)` for each radius, with the ℱ-norm taken by Gauss–Hermite order 80
/// over the nodes inside the bulk box `B_1` for sample size `bulk_n`.
pub fn bias_slope_check(
    op: &DeterministicOperator,
    phi: &EigenFunction,
    radii: &[f64],
    bulk_n: usize,
) -> Result<BiasReport> {
    if radii.len() < 4 || radii.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::InvalidParameter("need at least 4 strictly decreasing radii".into()));
    }
    let d = op.sigma.dim();
    let gh = GaussHermite::get(BIAS_QUAD_ORDER);
    let nodes = tensor_nodes(&op.sigma, &gh);
    let bulk = BulkRegion::b1();
    let inside: Vec<(Vec<f64>, f64)> =
        nodes.into_iter().filter(|(x, _)| bulk_membership(x, &op.sigma, bulk_n, bulk)).collect();
    let lambda = phi.eigenvalue();
    let jac: f64 = (0..d).map(|i| op.sigma.std(i)).product();
    let mut errors = Vec::with_capacity(radii.len());
    for &r in radii {
        let op_r = op.with_radius(r);
        let terms: Vec<f64> = inside
            .par_iter()
            .map(|(x, w)| -> Result<f64> {
                let t = op_r.apply_tn(|y| phi.eval(y), x)?;
                let res = t - lambda * phi.eval(x);
                Ok(w * res * res)
            })
            .collect::<Result<_>>()?;
        errors.push((jac * terms.iter().sum::<f64>()).sqrt());
    }
    let exact_zero = errors.iter().all(|&e| e == 0.0);
    let slope = if exact_zero { None } else { Some(log_log_slope(radii, &errors)) };
    let ratios = errors.windows(2).map(|w| w[0] / w[1]).collect();
    Ok(BiasReport { radii: radii.to_vec(), errors, slope, exact_zero, ratios, quad_order: BIAS_QUAD_ORDER, bulk_n })
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

fn tensor_nodes(sigma: &SigmaDiag, gh: &GaussHermite) -> Vec<(Vec<f64>, f64)> {
    let d = sigma.dim();
    let mut out = vec![(Vec::with_capacity(d), 1.0)];
    for i in 0..d {
        let s = sigma.std(i);
        out = out
            .into_iter()
            .flat_map(|(x, w)| {
                gh.nodes.iter().zip(&gh.weights).map(move |(t, wt)| {
                    let mut x = x.clone();
                    x.push(s * t);
                    (x, w * wt)
                })
            })
            .collect();
    }
    out
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CorrespondenceReport {
    pub max_residual: f64,
    pub pairs_checked: usize,
    /// Eigenvalues skipped for lying within `1e-6` of the scale factor.
    pub skipped: Vec<f64>,
}

/// For every eigenpair `(λ, v)` of the smoothed matrix Laplacian, extend `v`
/// off the sample by `φ*(x) = Σ K̃(x,x_j) v_j / ((1 - λ/scale) Σ K̃(x,x_j))`
/// and measure `|L̃ₙ φ*(x) - λ φ*(x)|` at `queries` random points.
pub fn extension_correspondence_check(
    cloud: &PointCloud,
    spec: &GraphSpec,
    queries: usize,
    seed: u64,
) -> Result<CorrespondenceReport> {
    let n = cloud.len();
    if n > 200 {
        return Err(Error::InvalidParameter(format!("correspondence check is dense; n = {n} > 200")));
    }
    let emp = EmpiricalOperator::new(cloud.clone(), spec.clone())?;
    let scale = emp.scale();
    let op = build_laplacian(build_smoothed_affinity(cloud, spec)?, scale)?;
    let solve = smallest_eigs(&op, n, &SolverOptions::default())?;

    let d = cloud.dim();
    let (mut lo, mut hi) = (vec![f64::INFINITY; d], vec![f64::NEG_INFINITY; d]);
    for x in cloud.points() {
        for i in 0..d {
            lo[i] = lo[i].min(x[i]);
            hi[i] = hi[i].max(x[i]);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pts: Vec<Vec<f64>> =
        (0..queries).map(|_| (0..d).map(|i| rng.random_range(lo[i]..=hi[i])).collect()).collect();
    let weights: Vec<Vec<f64>> = pts.iter().map(|x| (0..n).map(|j| emp.weight(x, j)).collect()).collect();

    let mut max_residual: f64 = 0.0;
    let mut skipped = Vec::new();
    let mut checked = 0;
    for pair in &solve.pairs {
        let lambda = pair.value;
        if (lambda - scale).abs() <= 1e-6 * scale.max(1.0) {
            skipped.push(lambda);
            continue;
        }
        let factor = 1.0 / (1.0 - lambda / scale);
        let v = &pair.vector;
        let extend = |w: &[f64]| -> Result<f64> {
            let den: f64 = w.iter().sum();
            if den < DENOMINATOR_FLOOR {
                return Err(Error::Isolated { denominator: den });
            }
            Ok(factor * w.iter().zip(v).map(|(a, b)| a * b).sum::<f64>() / den)
        };
        // φ* at the samples, from the same formula
        let at_samples: Vec<f64> = (0..n)
            .map(|i| extend(&(0..n).map(|j| emp.weight(cloud.point(i), j)).collect::<Vec<_>>()))
            .collect::<Result<_>>()?;
        for (x, w) in pts.iter().zip(&weights) {
            let phi_x = extend(w)?;
            let l = emp.apply_with_values(phi_x, &at_samples, x)?;
            max_residual = max_residual.max((l - lambda * phi_x).abs());
        }
        checked += 1;
    }
    Ok(CorrespondenceReport { max_residual, pairs_checked: checked, skipped })
}
