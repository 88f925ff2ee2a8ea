//! Radial kernels `g`, their truncation `h = 1_{[0,1]} g`, and the moment
//! constants `m_l = ∫ |u_i|^l h(‖u‖_p) du` that fix the Laplacian scaling.

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{integrate_ball, Parity, Tolerance};
use crate::sampling::MetricOrder;

/// Kernel profile. Values for `t > 1` are only used by the smoothed graph,
/// where the profile acts as the extension `g*`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
#[derive(Default)]
pub enum KernelSpec {
    #[default]
    ConstantOne,
    /// `exp(-c t²)` with `c ≥ 0`.
    Exponential { c: f64 },
    Tabulated(TabulatedKernel),
}


impl KernelSpec {
    pub fn exponential(c: f64) -> Result<Self> {
        if !(c.is_finite() && c >= 0.0) {
            return Err(Error::InvalidParameter(format!("exponential kernel needs c >= 0, got {c}")));
        }
        Ok(KernelSpec::Exponential { c })
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            KernelSpec::ConstantOne => Ok(()),
            KernelSpec::Exponential { c } => Self::exponential(*c).map(|_| ()),
            KernelSpec::Tabulated(t) => t.check_bounds(),
        }
    }

    /// `g(t)` for any `t ≥ 0` (the extension `g*` beyond 1).
    #[inline]
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            KernelSpec::ConstantOne => 1.0,
            KernelSpec::Exponential { c } => (-c * t * t).exp(),
            KernelSpec::Tabulated(tab) => tab.eval(t),
        }
    }

    /// `h(t) = 1_{[0,1]}(t) g(t)`.
    #[inline]
    pub fn eval_h(&self, t: f64) -> f64 {
        if t <= 1.0 {
            self.eval(t)
        } else {
            0.0
        }
    }

    /// `sup g` over `[0, 1]`.
    pub fn sup_unit(&self) -> f64 {
        match self {
            KernelSpec::ConstantOne | KernelSpec::Exponential { .. } => 1.0,
            KernelSpec::Tabulated(t) => t.sampled_extrema(1.0).1,
        }
    }

    /// `sup g*` over `[0, ∞)`.
    pub fn sup_extended(&self) -> f64 {
        match self {
            KernelSpec::ConstantOne | KernelSpec::Exponential { .. } => 1.0,
            KernelSpec::Tabulated(t) => t.sampled_extrema(t.last_knot().max(1.0)).1,
        }
    }

    fn is_constant_one(&self) -> bool {
        matches!(self, KernelSpec::ConstantOne)
    }

    fn cache_key(&self) -> String {
        serde_json::to_string(self).unwrap_or_default()
    }
}

/// Natural cubic spline through user samples. Beyond the last knot the last
/// value is held.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TabulatedRaw", into = "TabulatedRaw")]
pub struct TabulatedKernel {
    knots: Vec<f64>,
    values: Vec<f64>,
    second: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct TabulatedRaw {
    t: Vec<f64>,
    values: Vec<f64>,
}

impl TryFrom<TabulatedRaw> for TabulatedKernel {
    type Error = Error;

    fn try_from(raw: TabulatedRaw) -> Result<Self> {
        TabulatedKernel::new(raw.t, raw.values)
    }
}

impl From<TabulatedKernel> for TabulatedRaw {
    fn from(k: TabulatedKernel) -> Self {
        TabulatedRaw { t: k.knots, values: k.values }
    }
}

impl TabulatedKernel {
    const CHECK_POINTS: usize = 1024;

    pub fn new(knots: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if knots.len() != values.len() {
            return Err(Error::DimensionMismatch { expected: knots.len(), found: values.len() });
        }
        if knots.len() < 2 {
            return Err(Error::InvalidParameter("tabulated kernel needs at least 2 samples".into()));
        }
        if knots[0] != 0.0 || *knots.last().unwrap() < 1.0 {
            return Err(Error::InvalidParameter("tabulated kernel must cover [0, 1]".into()));
        }
        if knots.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParameter("kernel knots must be strictly increasing".into()));
        }
        let second = natural_spline_second_derivatives(&knots, &values);
        let k = Self { knots, values, second };
        k.check_bounds()?;
        Ok(k)
    }

    pub fn last_knot(&self) -> f64 {
        *self.knots.last().unwrap()
    }

    pub fn eval(&self, t: f64) -> f64 {
        let n = self.knots.len();
        if t >= self.knots[n - 1] {
            return self.values[n - 1];
        }
        let t = t.max(0.0);
        let hi = self.knots.partition_point(|&k| k <= t).clamp(1, n - 1);
        let lo = hi - 1;
        let h = self.knots[hi] - self.knots[lo];
        let a = (self.knots[hi] - t) / h;
        let b = 1.0 - a;
        a * self.values[lo]
            + b * self.values[hi]
            + ((a * a * a - a) * self.second[lo] + (b * b * b - b) * self.second[hi]) * h * h / 6.0
    }

    fn sampled_extrema(&self, upper: f64) -> (f64, f64) {
        (0..=Self::CHECK_POINTS)
            .map(|i| self.eval(upper * i as f64 / Self::CHECK_POINTS as f64))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
    }

    fn check_bounds(&self) -> Result<()> {
        let (lo, hi) = self.sampled_extrema(self.last_knot());
        if !(lo > 0.0 && hi.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "tabulated kernel must stay in (0, inf); sampled range [{lo}, {hi}]"
            )));
        }
        Ok(())
    }
}

fn natural_spline_second_derivatives(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut m = vec![0.0; n];
    if n < 3 {
        return m;
    }
    // Thomas algorithm on the interior equations.
    let mut c_prime = vec![0.0; n];
    let mut d_prime = vec![0.0; n];
    for i in 1..n - 1 {
        let h0 = x[i] - x[i - 1];
        let h1 = x[i + 1] - x[i];
        let a = h0 / 6.0;
        let b = (h0 + h1) / 3.0;
        let c = h1 / 6.0;
        let rhs = (y[i + 1] - y[i]) / h1 - (y[i] - y[i - 1]) / h0;
        let denom = b - a * c_prime[i - 1];
        c_prime[i] = c / denom;
        d_prime[i] = (rhs - a * d_prime[i - 1]) / denom;
    }
    for i in (1..n - 1).rev() {
        m[i] = d_prime[i] - c_prime[i] * m[i + 1];
    }
    m
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MomentMethod {
    Analytic,
    Quadrature,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentPair {
    pub m0: f64,
    pub m2: f64,
    pub method: MomentMethod,
    pub est_error: f64,
}

impl MomentPair {
    /// `2 m₀ / (m₂ r²)`.
    pub fn scale_factor(&self, radius: f64) -> f64 {
        scale_factor(self, radius)
    }
}

pub fn scale_factor(moments: &MomentPair, radius: f64) -> f64 {
    2.0 * moments.m0 / (moments.m2 * radius * radius)
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

/// Volume of the unit Euclidean ball in `d` dimensions.
pub fn unit_ball_volume(d: usize) -> f64 {
    // V_d = 2π/d · V_{d-2}
    let mut v = if d.is_multiple_of(2) { 1.0 } else { 2.0 };
    let mut k = if d.is_multiple_of(2) { 2 } else { 3 };
    while k <= d {
        v *= 2.0 * std::f64::consts::PI / k as f64;
        k += 2;
    }
    v
}

fn analytic_moments(d: usize, p: MetricOrder) -> Option<(f64, f64)> {
    let two_d = 2f64.powi(d as i32);
    match p {
        MetricOrder::Infinity => Some((two_d, two_d / 3.0)),
        MetricOrder::Finite(q) if q == 1.0 => {
            Some((two_d / factorial(d), 2.0 * two_d / factorial(d + 2)))
        }
        MetricOrder::Finite(q) if q == 2.0 => {
            let v = unit_ball_volume(d);
            Some((v, v / (d as f64 + 2.0)))
        }
        _ => None,
    }
}

/// `m_l = ∫_{‖u‖_p ≤ 1} |u_axis|^l g(‖u‖_p) du` by quadrature.
pub fn moment_quadrature(
    d: usize,
    p: MetricOrder,
    g: &KernelSpec,
    l: u32,
    axis: usize,
) -> Result<crate::quadrature::Estimate> {
    if d == 0 || axis >= d {
        return Err(Error::InvalidParameter(format!("axis {axis} invalid for d = {d}")));
    }
    integrate_ball(d, p, Parity::Even, Tolerance::with_rel(1e-11), |u| {
        let norm = p.norm(u.iter().copied());
        u[axis].abs().powi(l as i32) * g.eval_h(norm)
    })
}

/// Quadrature path regardless of whether a closed form exists.
pub fn compute_moments_quadrature(d: usize, p: MetricOrder, g: &KernelSpec) -> Result<MomentPair> {
    let m0 = moment_quadrature(d, p, g, 0, 0)?;
    let m2 = moment_quadrature(d, p, g, 2, 0)?;
    Ok(MomentPair {
        m0: m0.value,
        m2: m2.value,
        method: MomentMethod::Quadrature,
        est_error: m0.error.max(m2.error),
    })
}

/// `m₀` and `m₂`, memoized per `(d, p, g)`.
pub fn compute_moments(d: usize, p: MetricOrder, g: &KernelSpec) -> Result<MomentPair> {
    if d == 0 {
        return Err(Error::InvalidParameter("dimension must be at least 1".into()));
    }
    g.validate()?;
    static CACHE: OnceLock<Mutex<HashMap<String, MomentPair>>> = OnceLock::new();
    let key = format!("{d}|{p}|{}", g.cache_key());
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(m) = cache.lock().unwrap().get(&key) {
        return Ok(*m);
    }
    let pair = match (g.is_constant_one(), analytic_moments(d, p)) {
        (true, Some((m0, m2))) => MomentPair { m0, m2, method: MomentMethod::Analytic, est_error: 0.0 },
        _ => compute_moments_quadrature(d, p, g)?,
    };
    cache.lock().unwrap().insert(key, pair);
    Ok(pair)
}
