//! Numerical integration: tanh-sinh rules on intervals, nested integration
//! over the unit ℓp ball, and Gauss–Hermite rules for the weight `e^{-t²}`.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use crate::error::{Error, Result};
use crate::sampling::MetricOrder;

/// Integral estimate with the change between the last two refinement levels.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct Tolerance {
    pub rel: f64,
    pub abs: f64,
    pub min_level: u32,
    pub max_level: u32,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self { rel: 1e-10, abs: 1e-14, min_level: 3, max_level: 8 }
    }
}

impl Tolerance {
    pub fn with_rel(rel: f64) -> Self {
        Self { rel, ..Self::default() }
    }

    fn met(&self, prev: f64, cur: f64) -> bool {
        (cur - prev).abs() <= (self.rel * cur.abs()).max(self.abs)
    }
}

/// Tanh-sinh abscissae `t ∈ (0, 1)` and weights for `∫₀¹`, at step `2^-level`.
/// Nodes whose distance from an endpoint underflows are dropped.
#[derive(Debug)]
struct UnitRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

const T_MAX: f64 = 3.6;

fn unit_rule(level: u32) -> Arc<UnitRule> {
    static CACHE: OnceLock<Mutex<HashMap<u32, Arc<UnitRule>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(r) = cache.lock().unwrap().get(&level) {
        return r.clone();
    }
    let h = 0.5f64.powi(level as i32);
    let k_max = (T_MAX / h).ceil() as i64;
    let half_pi = std::f64::consts::FRAC_PI_2;
    let mut nodes = Vec::with_capacity(2 * k_max as usize + 1);
    let mut weights = Vec::with_capacity(2 * k_max as usize + 1);
    for k in -k_max..=k_max {
        let t = k as f64 * h;
        let u = half_pi * t.sinh();
        // x = (1 + tanh u)/2, written to keep precision near both ends
        let e = (-2.0 * u.abs()).exp();
        let near = e / (1.0 + e);
        let x = if u >= 0.0 { 1.0 - near } else { near };
        if near <= 0.0 || x <= 0.0 || x >= 1.0 {
            continue;
        }
        let sech = 2.0 * e.sqrt() / (1.0 + e);
        let w = 0.5 * h * half_pi * t.cosh() * sech * sech;
        if w < 1e-300 {
            continue;
        }
        nodes.push(x);
        weights.push(w);
    }
    let rule = Arc::new(UnitRule { nodes, weights });
    cache.lock().unwrap().insert(level, rule.clone());
    rule
}

fn tanh_sinh_level(f: &mut impl FnMut(f64) -> f64, a: f64, b: f64, level: u32) -> f64 {
    let rule = unit_rule(level);
    let len = b - a;
    rule.nodes.iter().zip(&rule.weights).map(|(t, w)| w * f(a + len * t)).sum::<f64>() * len
}

/// Adaptive tanh-sinh integral of `f` over `[a, b]`.
pub fn integrate_interval(mut f: impl FnMut(f64) -> f64, a: f64, b: f64, tol: Tolerance) -> Result<Estimate> {
    let mut prev = tanh_sinh_level(&mut f, a, b, tol.min_level);
    for level in tol.min_level + 1..=tol.max_level {
        let cur = tanh_sinh_level(&mut f, a, b, level);
        if tol.met(prev, cur) {
            return Ok(Estimate { value: cur, error: (cur - prev).abs() });
        }
        prev = cur;
    }
    Err(Error::QuadratureNonConvergence { estimate: prev, error: f64::NAN })
}

/// Symmetry of a ball integrand, used to cut work.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Parity {
    /// `F` is even in every coordinate: integrate the positive orthant only.
    Even,
    General,
}

/// `∫_{‖u‖_p ≤ 1} F(u) du` over the unit ℓp ball in `d` dimensions by nested
/// tanh-sinh over each orthant, with exact section limits
/// `u_k ≤ (1 - Σ_{i<k} |u_i|^p)^{1/p}`.
pub fn integrate_ball(
    d: usize,
    p: MetricOrder,
    parity: Parity,
    tol: Tolerance,
    f: impl Fn(&[f64]) -> f64,
) -> Result<Estimate> {
    let [e] = integrate_ball_multi(d, p, parity, tol, |u| [f(u)])?;
    Ok(e)
}

/// Several integrals over the same nodes; every component must meet `tol`.
pub fn integrate_ball_multi<const N: usize>(
    d: usize,
    p: MetricOrder,
    parity: Parity,
    tol: Tolerance,
    f: impl Fn(&[f64]) -> [f64; N],
) -> Result<[Estimate; N]> {
    let mut prev = ball_level(d, p, parity, tol.min_level, &f);
    let max_level = tol.max_level.min(max_level_for_dim(d));
    for level in tol.min_level + 1..=max_level {
        let cur = ball_level(d, p, parity, level, &f);
        if (0..N).all(|k| tol.met(prev[k], cur[k])) {
            return Ok(std::array::from_fn(|k| Estimate { value: cur[k], error: (cur[k] - prev[k]).abs() }));
        }
        prev = cur;
    }
    let worst = (0..N).max_by(|&a, &b| prev[a].abs().total_cmp(&prev[b].abs())).unwrap_or(0);
    Err(Error::QuadratureNonConvergence { estimate: prev[worst], error: f64::NAN })
}

fn max_level_for_dim(d: usize) -> u32 {
    match d {
        1 => 10,
        2 => 7,
        3 => 5,
        _ => 4,
    }
}

fn ball_level<const N: usize>(
    d: usize,
    p: MetricOrder,
    parity: Parity,
    level: u32,
    f: &impl Fn(&[f64]) -> [f64; N],
) -> [f64; N] {
    let rule = unit_rule(level);
    let mut u = vec![0.0; d];
    match parity {
        Parity::Even => {
            let signs = vec![1.0; d];
            let factor = (1u64 << d) as f64;
            orthant(&rule, p, &mut u, &signs, f).map(|v| factor * v)
        }
        Parity::General => {
            let mut total = [0.0; N];
            for mask in 0..(1u64 << d) {
                let signs: Vec<f64> =
                    (0..d).map(|i| if mask >> i & 1 == 1 { -1.0 } else { 1.0 }).collect();
                let part = orthant(&rule, p, &mut u, &signs, f);
                for k in 0..N {
                    total[k] += part[k];
                }
            }
            total
        }
    }
}

/// One orthant of the unit ball. The ∞-ball is split by which coordinate is
/// largest, so integrands depending on `max |u_i|` stay smooth on each piece.
fn orthant<const N: usize>(
    rule: &UnitRule,
    p: MetricOrder,
    u: &mut [f64],
    signs: &[f64],
    f: &impl Fn(&[f64]) -> [f64; N],
) -> [f64; N] {
    if p != MetricOrder::Infinity || u.len() == 1 {
        return nested(rule, p, 0, 1.0, u, signs, f);
    }
    let d = u.len();
    let mut total = [0.0; N];
    for top in 0..d {
        let order: Vec<usize> = std::iter::once(top).chain((0..d).filter(|&i| i != top)).collect();
        let part = below_max(rule, &order, 0, 1.0, u, signs, f);
        for k in 0..N {
            total[k] += part[k];
        }
    }
    total
}

/// Coordinate `order[0]` runs over `[0, 1]`, the rest over `[0, u_{order[0]}]`.
fn below_max<const N: usize>(
    rule: &UnitRule,
    order: &[usize],
    depth: usize,
    cap: f64,
    u: &mut [f64],
    signs: &[f64],
    f: &impl Fn(&[f64]) -> [f64; N],
) -> [f64; N] {
    let mut sum = [0.0; N];
    let axis = order[depth];
    for (t, w) in rule.nodes.iter().zip(&rule.weights) {
        let v = cap * t;
        u[axis] = signs[axis] * v;
        let val = if depth + 1 == order.len() {
            f(u)
        } else {
            below_max(rule, order, depth + 1, if depth == 0 { v } else { cap }, u, signs, f)
        };
        for k in 0..N {
            sum[k] += w * val[k];
        }
    }
    sum.map(|s| s * cap)
}

/// `budget` is `1 - Σ_{i<depth} |u_i|^p` (unused for p = ∞).
fn nested<const N: usize>(
    rule: &UnitRule,
    p: MetricOrder,
    depth: usize,
    budget: f64,
    u: &mut [f64],
    signs: &[f64],
    f: &impl Fn(&[f64]) -> [f64; N],
) -> [f64; N] {
    let upper = match p {
        MetricOrder::Infinity => 1.0,
        MetricOrder::Finite(q) if q == 1.0 => budget,
        MetricOrder::Finite(q) => budget.max(0.0).powf(1.0 / q),
    };
    let mut sum = [0.0; N];
    if upper <= 0.0 {
        return sum;
    }
    let last = depth + 1 == u.len();
    for (t, w) in rule.nodes.iter().zip(&rule.weights) {
        let v = upper * t;
        u[depth] = signs[depth] * v;
        let val = if last {
            f(u)
        } else {
            let next = match p {
                MetricOrder::Infinity => 1.0,
                MetricOrder::Finite(q) if q == 1.0 => budget - v,
                MetricOrder::Finite(q) if q == 2.0 => budget - v * v,
                MetricOrder::Finite(q) => budget - v.powf(q),
            };
            nested(rule, p, depth + 1, next, u, signs, f)
        };
        for k in 0..N {
            sum[k] += w * val[k];
        }
    }
    sum.map(|s| s * upper)
}

/// Gauss–Hermite rule for `∫ F(t) e^{-t²} dt`.
#[derive(Debug)]
pub struct GaussHermite {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussHermite {
    /// Cached rule of the given order.
    pub fn get(order: usize) -> Arc<GaussHermite> {
        static CACHE: OnceLock<Mutex<HashMap<usize, Arc<GaussHermite>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        if let Some(r) = cache.lock().unwrap().get(&order) {
            return r.clone();
        }
        let rule = Arc::new(Self::compute(order));
        cache.lock().unwrap().insert(order, rule.clone());
        rule
    }

    /// Newton iteration on the orthonormal Hermite recurrence, with the
    /// classical asymptotic starting guesses for the largest roots.
    fn compute(n: usize) -> GaussHermite {
        assert!(n >= 1, "Gauss-Hermite order must be positive");
        let pim4 = std::f64::consts::PI.powf(-0.25);
        let nf = n as f64;
        let mut x = vec![0.0; n];
        let mut w = vec![0.0; n];
        let mut z = 0.0_f64;
        for i in 0..n.div_ceil(2) {
            z = match i {
                0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
                1 => z - 1.14 * nf.powf(0.426) / z,
                2 => 1.86 * z - 0.86 * x[0],
                3 => 1.91 * z - 0.91 * x[1],
                _ => 2.0 * z - x[i - 2],
            };
            let mut pp = 0.0;
            for _ in 0..200 {
                let (mut p1, mut p2) = (pim4, 0.0);
                for j in 0..n {
                    let p3 = p2;
                    p2 = p1;
                    let jf = j as f64;
                    p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
                }
                pp = (2.0 * nf).sqrt() * p2;
                let z1 = z;
                z = z1 - p1 / pp;
                if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                    break;
                }
            }
            x[i] = z;
            x[n - 1 - i] = -z;
            w[i] = 2.0 / (pp * pp);
            w[n - 1 - i] = w[i];
        }
        if n % 2 == 1 {
            x[n / 2] = 0.0;
        }
        GaussHermite { nodes: x, weights: w }
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }
}
