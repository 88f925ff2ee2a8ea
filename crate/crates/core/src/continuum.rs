//! Exact spectrum of the Gaussian-weighted Laplace–Beltrami operator
//! `Δ_ϱ f = -Σ ∂ᵢ²f + Σ (2xᵢ/σᵢ²) ∂ᵢf`: eigenvalues `Σ 2kᵢ/σᵢ²` with tensor
//! Hermite eigenfunctions.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BinaryHeap, HashSet};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::quadrature::GaussHermite;
use crate::sampling::SigmaDiag;

/// Physicist's Hermite polynomial `H_m(x)` by the three-term recurrence.
/// Values overflow double precision beyond roughly `m = 150` at `|x| = 10`.
pub fn hermite_eval(m: usize, x: f64) -> f64 {
    let (mut prev, mut cur) = (0.0, 1.0);
    for k in 0..m {
        let next = 2.0 * x * cur - 2.0 * k as f64 * prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// `H_0(x), …, H_m(x)`.
pub fn hermite_all(m: usize, x: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(m + 1);
    out.push(1.0);
    if m >= 1 {
        out.push(2.0 * x);
    }
    for k in 1..m {
        let next = 2.0 * x * out[k] - 2.0 * k as f64 * out[k - 1];
        out.push(next);
    }
    out
}

/// `ln(√π · m! · 2^m)`, the log of `∫ H_m² e^{-t²} dt`.
pub fn hermite_log_norm_sq(m: usize) -> f64 {
    let log_fact: f64 = (1..=m).map(|k| (k as f64).ln()).sum();
    0.5 * std::f64::consts::PI.ln() + log_fact + m as f64 * std::f64::consts::LN_2
}

/// Orthonormal Hermite function values `H_m(t)/√(√π m! 2^m)` via the
/// normalized recurrence, which never overflows for moderate `t`.
fn normalized_hermite(m: usize, t: f64) -> f64 {
    let mut prev = 0.0;
    let mut cur = std::f64::consts::PI.powf(-0.25);
    for k in 0..m {
        let kf = k as f64;
        let next = (2.0 / (kf + 1.0)).sqrt() * t * cur - (kf / (kf + 1.0)).sqrt() * prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// Zero-based multi-index `(k₁, …, k_d)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct HermiteIndex(pub Vec<usize>);

impl HermiteIndex {
    pub fn degree(&self) -> usize {
        self.0.iter().sum()
    }
}

/// Normalized eigenfunction `Π ψ_{i,kᵢ}(xᵢ)` with
/// `ψ_{i,m}(x) = (√π m! 2^m σᵢ)^{-1/2} H_m(x/σᵢ)`.
#[derive(Clone, Debug, PartialEq)]
pub struct EigenFunction {
    pub index: HermiteIndex,
    pub sigma: SigmaDiag,
}

impl EigenFunction {
    pub fn new(index: Vec<usize>, sigma: SigmaDiag) -> Result<Self> {
        if index.len() != sigma.dim() {
            return Err(crate::Error::DimensionMismatch { expected: sigma.dim(), found: index.len() });
        }
        Ok(Self { index: HermiteIndex(index), sigma })
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.index
            .0
            .iter()
            .enumerate()
            .map(|(i, &k)| {
                let s = self.sigma.std(i);
                normalized_hermite(k, x[i] / s) / s.sqrt()
            })
            .product()
    }

    /// `Σ 2kᵢ/σᵢ²`.
    pub fn eigenvalue(&self) -> f64 {
        self.index.0.iter().enumerate().map(|(i, &k)| 2.0 * k as f64 / self.sigma.variance(i)).sum()
    }

    /// The same function as a tensor Hermite polynomial.
    pub fn to_poly(&self) -> HermitePoly {
        let log_c: f64 = self
            .index
            .0
            .iter()
            .enumerate()
            .map(|(i, &k)| -0.5 * (hermite_log_norm_sq(k) + self.sigma.std(i).ln()))
            .sum();
        let mut terms = BTreeMap::new();
        terms.insert(self.index.0.clone(), log_c.exp());
        HermitePoly { sigma: self.sigma.clone(), terms }
    }
}

/// Finite linear combination of `Π H_{kᵢ}(xᵢ/σᵢ)`. Closed under `Δ_ϱ`.
#[derive(Clone, Debug, PartialEq)]
pub struct HermitePoly {
    pub sigma: SigmaDiag,
    terms: BTreeMap<Vec<usize>, f64>,
}

impl HermitePoly {
    pub fn zero(sigma: SigmaDiag) -> Self {
        Self { sigma, terms: BTreeMap::new() }
    }

    pub fn constant(sigma: SigmaDiag, c: f64) -> Self {
        let d = sigma.dim();
        let mut p = Self::zero(sigma);
        p.add_term(vec![0; d], c);
        p
    }

    /// `f(x) = xᵢ = (σᵢ/2) H₁(xᵢ/σᵢ)`.
    pub fn coordinate(sigma: SigmaDiag, i: usize) -> Self {
        let d = sigma.dim();
        let s = sigma.std(i);
        let mut p = Self::zero(sigma);
        let mut k = vec![0; d];
        k[i] = 1;
        p.add_term(k, s / 2.0);
        p
    }

    pub fn add_term(&mut self, index: Vec<usize>, coef: f64) {
        *self.terms.entry(index).or_insert(0.0) += coef;
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Vec<usize>, &f64)> {
        self.terms.iter()
    }

    pub fn add(&self, other: &HermitePoly) -> HermitePoly {
        let mut out = self.clone();
        for (k, c) in &other.terms {
            out.add_term(k.clone(), *c);
        }
        out
    }

    pub fn scaled(&self, a: f64) -> HermitePoly {
        let mut out = self.clone();
        out.terms.values_mut().for_each(|c| *c *= a);
        out
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let d = self.sigma.dim();
        let max_deg: Vec<usize> = (0..d).map(|i| self.terms.keys().map(|k| k[i]).max().unwrap_or(0)).collect();
        let tables: Vec<Vec<f64>> = (0..d).map(|i| hermite_all(max_deg[i], x[i] / self.sigma.std(i))).collect();
        self.terms
            .iter()
            .map(|(k, c)| c * k.iter().enumerate().map(|(i, &ki)| tables[i][ki]).product::<f64>())
            .sum()
    }

    /// `∂f/∂xᵢ` through `d/dx H_m(x/σ) = (2m/σ) H_{m-1}(x/σ)`.
    pub fn derivative(&self, i: usize) -> HermitePoly {
        let s = self.sigma.std(i);
        let mut out = HermitePoly::zero(self.sigma.clone());
        for (k, &c) in &self.terms {
            let m = k[i];
            if m > 0 {
                let mut j = k.clone();
                j[i] = m - 1;
                out.add_term(j, c * 2.0 * m as f64 / s);
            }
        }
        out
    }

    /// `xᵢ f(x)`, using `t H_m(t) = H_{m+1}(t)/2 + m H_{m-1}(t)` with `xᵢ = σᵢ t`.
    pub fn times_coordinate(&self, i: usize) -> HermitePoly {
        let s = self.sigma.std(i);
        let mut out = HermitePoly::zero(self.sigma.clone());
        for (k, &c) in &self.terms {
            let m = k[i];
            let mut up = k.clone();
            up[i] = m + 1;
            out.add_term(up, c * s / 2.0);
            if m > 0 {
                let mut down = k.clone();
                down[i] = m - 1;
                out.add_term(down, c * s * m as f64);
            }
        }
        out
    }

    /// Exact `Δ_ϱ f = -Σ ∂ᵢ²f + Σ (2xᵢ/σᵢ²) ∂ᵢf`.
    pub fn apply_laplace_beltrami(&self) -> HermitePoly {
        let mut out = HermitePoly::zero(self.sigma.clone());
        for i in 0..self.sigma.dim() {
            let di = self.derivative(i);
            out = out.add(&di.derivative(i).scaled(-1.0));
            out = out.add(&di.times_coordinate(i).scaled(2.0 / self.sigma.variance(i)));
        }
        out.terms.retain(|_, c| *c != 0.0);
        out
    }
}

/// Distinct eigenvalue with every index tuple attaining it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumGroup {
    pub value: f64,
    pub multiplicity: usize,
    pub tuples: Vec<HermiteIndex>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContinuumSpectrum {
    /// First `count` eigenvalues, ascending, repeated by multiplicity.
    pub values: Vec<f64>,
    /// Groups covering `values`; the last group is listed in full.
    pub groups: Vec<SpectrumGroup>,
    pub sigma: SigmaDiag,
    pub exact: bool,
}

impl ContinuumSpectrum {
    /// `(group id, tuple)` attached to each listed value.
    pub fn labelled(&self) -> Vec<(f64, usize, &HermiteIndex)> {
        let mut out = Vec::with_capacity(self.values.len());
        'outer: for (g, group) in self.groups.iter().enumerate() {
            for t in &group.tuples {
                if out.len() == self.values.len() {
                    break 'outer;
                }
                out.push((group.value, g, t));
            }
        }
        out
    }

    /// CSV rows `j, a_j, group_id, k_tuple` with 1-based `j` and the tuple
    /// joined by `;`.
    pub fn write_csv(&self, w: impl Write) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["j", "a_j", "group_id", "k_tuple"])?;
        for (j, (v, g, t)) in self.labelled().into_iter().enumerate() {
            let tuple = t.0.iter().map(|k| k.to_string()).collect::<Vec<_>>().join(";");
            wtr.write_record([(j + 1).to_string(), format!("{v}"), (g + 1).to_string(), tuple])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Rational `p/q` with `q ≤ MAX_DEN` matching `x` to round-off, if any.
fn small_rational(x: f64) -> Option<(u64, u64)> {
    const MAX_DEN: u64 = 1000;
    for q in 1..=MAX_DEN {
        let p = (x * q as f64).round();
        if (0.0..1e12).contains(&p) && (p / q as f64 - x).abs() <= 4.0 * f64::EPSILON * x.abs().max(1.0) {
            return Some((p as u64, q));
        }
    }
    None
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Key {
    Exact(u128),
    Float(f64),
}

impl Eq for Key {}

impl PartialOrd for Key {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Key {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Key::Exact(a), Key::Exact(b)) => a.cmp(b),
            (Key::Float(a), Key::Float(b)) => a.total_cmp(b),
            _ => unreachable!("mixed key kinds"),
        }
    }
}

/// First `count` values of `{Σ 2kᵢ/σᵢ² : k ∈ ℕ^d}` in ascending order by a
/// best-first walk over index tuples. Integer arithmetic is used when every
/// `2/σᵢ²` is a rational with a small denominator.
pub fn enumerate_spectrum(sigma: &SigmaDiag, count: usize) -> ContinuumSpectrum {
    let d = sigma.dim();
    let weights: Vec<f64> = sigma.variances().iter().map(|v| 2.0 / v).collect();
    let rationals: Option<Vec<(u64, u64)>> = weights.iter().map(|&w| small_rational(w)).collect();
    let (int_weights, denom) = match &rationals {
        Some(r) => {
            let l = r.iter().fold(1u64, |acc, &(_, q)| acc / gcd(acc, q) * q);
            (Some(r.iter().map(|&(p, q)| p as u128 * (l / q) as u128).collect::<Vec<u128>>()), l as f64)
        }
        None => (None, 1.0),
    };
    let key_of = |k: &[usize]| -> Key {
        match &int_weights {
            Some(w) => Key::Exact(k.iter().zip(w).map(|(&ki, &wi)| ki as u128 * wi).sum()),
            None => Key::Float(k.iter().zip(&weights).map(|(&ki, &wi)| ki as f64 * wi).sum()),
        }
    };
    let value_of = |key: Key| -> f64 {
        match key {
            Key::Exact(v) => v as f64 / denom,
            Key::Float(v) => v,
        }
    };
    let same = |a: Key, b: Key| -> bool {
        match (a, b) {
            (Key::Exact(x), Key::Exact(y)) => x == y,
            (Key::Float(x), Key::Float(y)) => (x - y).abs() <= 1e-12 * x.abs().max(1.0),
            _ => false,
        }
    };

    let mut heap = BinaryHeap::new();
    let mut seen = HashSet::new();
    let origin = vec![0usize; d];
    heap.push(Reverse((key_of(&origin), origin.clone())));
    seen.insert(origin);

    let mut values = Vec::with_capacity(count);
    let mut groups: Vec<SpectrumGroup> = Vec::new();
    let mut group_key: Option<Key> = None;
    while let Some(Reverse((key, k))) = heap.pop() {
        let joins = group_key.is_some_and(|g| same(g, key));
        if !joins && values.len() >= count {
            break;
        }
        if joins {
            let g = groups.last_mut().unwrap();
            g.multiplicity += 1;
            g.tuples.push(HermiteIndex(k.clone()));
        } else {
            group_key = Some(key);
            groups.push(SpectrumGroup { value: value_of(key), multiplicity: 1, tuples: vec![HermiteIndex(k.clone())] });
        }
        if values.len() < count {
            values.push(groups.last().unwrap().value);
        }
        for i in 0..d {
            let mut next = k.clone();
            next[i] += 1;
            if seen.insert(next.clone()) {
                heap.push(Reverse((key_of(&next), next)));
            }
        }
    }
    for g in &mut groups {
        g.tuples.sort();
    }
    ContinuumSpectrum { values, groups, sigma: sigma.clone(), exact: int_weights.is_some() }
}

/// `∫ f g ϱ² dx` by tensor Gauss–Hermite with `xᵢ = σᵢ tᵢ`.
pub fn inner_product(f: impl Fn(&[f64]) -> f64, g: impl Fn(&[f64]) -> f64, sigma: &SigmaDiag, order: usize) -> f64 {
    let d = sigma.dim();
    let gh = GaussHermite::get(order);
    let jac: f64 = (0..d).map(|i| sigma.std(i)).product();
    let mut idx = vec![0usize; d];
    let mut x = vec![0.0; d];
    let mut total = 0.0;
    loop {
        let mut w = 1.0;
        for i in 0..d {
            x[i] = sigma.std(i) * gh.nodes[idx[i]];
            w *= gh.weights[idx[i]];
        }
        total += w * f(&x) * g(&x);
        let mut i = 0;
        loop {
            if i == d {
                return total * jac;
            }
            idx[i] += 1;
            if idx[i] < order {
                break;
            }
            idx[i] = 0;
            i += 1;
        }
    }
}

/// `‖f‖_ℱ = (∫ f² ϱ²)^{1/2}` at a fixed order.
pub fn f_norm(f: impl Fn(&[f64]) -> f64, sigma: &SigmaDiag, order: usize) -> f64 {
    inner_product(&f, &f, sigma, order).max(0.0).sqrt()
}

/// `‖f‖_ℱ` starting at order 64 and doubling while successive values differ
/// by more than `1e-10` relatively.
pub fn f_norm_adaptive(f: impl Fn(&[f64]) -> f64, sigma: &SigmaDiag) -> f64 {
    let max_order = match sigma.dim() {
        1 => 1024,
        2 => 256,
        _ => 64,
    };
    let mut order = 64;
    let mut prev = f_norm(&f, sigma, order);
    while order < max_order {
        order *= 2;
        let cur = f_norm(&f, sigma, order);
        if (cur - prev).abs() <= 1e-10 * cur.abs() {
            return cur;
        }
        prev = cur;
    }
    prev
}

/// `Σ_j C(m,j) H_j(x) (2z)^{m-j}`, which equals `H_m(x+z)`.
pub fn hermite_addition(m: usize, x: f64, z: f64) -> f64 {
    let h = hermite_all(m, x);
    let mut binom = 1.0;
    let mut sum = 0.0;
    for j in 0..=m {
        if j > 0 {
            binom = binom * (m - j + 1) as f64 / j as f64;
        }
        sum += binom * h[j] * (2.0 * z).powi((m - j) as i32);
    }
    sum
}

/// Truncated series `exp(-z²/(4σ²)) Σ_{α<terms} H_α(x/σ)/α! (-z/(2σ))^α`
/// for the one-dimensional weight ratio `ϱ(x+z)/ϱ(x)`.
pub fn weight_ratio_series(x: f64, z: f64, sigma: f64, terms: usize) -> f64 {
    let h = hermite_all(terms.saturating_sub(1), x / sigma);
    let s = -z / (2.0 * sigma);
    let mut pow = 1.0;
    let mut sum = 0.0;
    for (a, ha) in h.iter().enumerate().take(terms) {
        if a > 0 {
            pow *= s / a as f64;
        }
        sum += ha * pow;
    }
    (-z * z / (4.0 * sigma * sigma)).exp() * sum
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit() -> SigmaDiag {
        SigmaDiag::new(vec![1.0]).unwrap()
    }

    #[test]
    fn low_degree_values() {
        assert_eq!(hermite_eval(0, 3.3), 1.0);
        assert_eq!(hermite_eval(2, 1.5), 7.0);
        assert_eq!(hermite_all(3, 0.5), vec![1.0, 1.0, -1.0, -5.0]);
    }

    #[test]
    fn psi_one_at_one() {
        let f = EigenFunction::new(vec![1], unit()).unwrap();
        assert!((f.eval(&[1.0]) - 1.06225).abs() < 1e-5);
        let g = EigenFunction::new(vec![0, 0], SigmaDiag::new(vec![4.0, 9.0]).unwrap()).unwrap();
        let want = (1.0 / (std::f64::consts::PI.sqrt() * 2.0)).sqrt() * (1.0 / (std::f64::consts::PI.sqrt() * 3.0)).sqrt();
        assert!((g.eval(&[0.3, -7.0]) - want).abs() < 1e-14);
    }

    #[test]
    fn poly_matches_eigenfunction() {
        let sigma = SigmaDiag::new(vec![1.5, 0.7]).unwrap();
        let f = EigenFunction::new(vec![3, 2], sigma).unwrap();
        let p = f.to_poly();
        for x in [[0.1, 0.2], [-1.3, 0.9], [2.0, -0.4]] {
            assert!((p.eval(&x) - f.eval(&x)).abs() < 1e-13);
        }
    }

    #[test]
    fn example_one() {
        let s = enumerate_spectrum(&unit(), 7);
        assert_eq!(s.values, vec![0.0, 2.0, 4.0, 6.0, 8.0, 10.0, 12.0]);
        assert!(s.exact);
    }

    #[test]
    fn example_two_and_three() {
        let s = enumerate_spectrum(&SigmaDiag::new(vec![1.0, 1.0]).unwrap(), 6);
        assert_eq!(s.values, vec![0.0, 2.0, 2.0, 4.0, 4.0, 4.0]);
        let s = enumerate_spectrum(&SigmaDiag::new(vec![1.0, 2.0]).unwrap(), 6);
        assert_eq!(s.values, vec![0.0, 1.0, 2.0, 2.0, 3.0, 3.0]);
    }

    #[test]
    fn irrational_weights_use_float_path() {
        let s = enumerate_spectrum(&SigmaDiag::new(vec![std::f64::consts::PI, 1.0]).unwrap(), 10);
        assert!(!s.exact);
        assert!(s.values.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn last_group_complete() {
        let s = enumerate_spectrum(&SigmaDiag::new(vec![1.0, 1.0]).unwrap(), 4);
        assert_eq!(s.values.len(), 4);
        assert_eq!(s.groups.last().unwrap().multiplicity, 3);
    }

    #[test]
    fn coordinate_function_norm() {
        let p = HermitePoly::coordinate(unit(), 0);
        let n = f_norm(|x| p.eval(x), &unit(), 64);
        assert!((n - (std::f64::consts::PI.sqrt() / 2.0).sqrt()).abs() < 1e-12);
        assert!((n - 0.941396).abs() < 1e-6);
    }

    #[test]
    fn constants_are_annihilated() {
        let p = HermitePoly::constant(SigmaDiag::new(vec![1.0, 3.0]).unwrap(), 2.5);
        let q = p.apply_laplace_beltrami();
        assert_eq!(q.eval(&[0.4, -1.0]), 0.0);
    }

    #[test]
    fn csv_rows() {
        let s = enumerate_spectrum(&SigmaDiag::new(vec![1.0, 2.0]).unwrap(), 4);
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "j,a_j,group_id,k_tuple");
        assert_eq!(lines[1], "1,0,1,0;0");
        assert_eq!(lines[2], "2,1,2,0;1");
        assert_eq!(lines.len(), 5);
    }
}
