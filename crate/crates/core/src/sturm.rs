//! Reference spectra for clean 1-D signals: eigenvalues of
//! `-(1/q²)(q² u')'` on an interval with zero-flux ends.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::sampling::{Embedding, SignalModel};

pub const MIN_NODES: usize = 200;

/// Uniform nodes on `[a, b]` with positive density values at each node.
#[derive(Clone, Debug)]
pub struct WeightedInterval {
    pub a: f64,
    pub b: f64,
    pub q: Vec<f64>,
    /// Mass of `q` beyond `b` that is lumped into the last node (singular endpoints).
    pub right_tail_mass: f64,
}

impl WeightedInterval {
    pub fn new(a: f64, b: f64, q: Vec<f64>) -> Result<Self> {
        if !(a < b) || !a.is_finite() || !b.is_finite() {
            return Err(Error::InvalidParameter(format!("bad interval [{a}, {b}]")));
        }
        if q.len() < MIN_NODES {
            return Err(Error::InvalidParameter(format!("need at least {MIN_NODES} nodes, got {}", q.len())));
        }
        if q.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidParameter("density must be positive and finite at every node".into()));
        }
        Ok(Self { a, b, q, right_tail_mass: 0.0 })
    }

    pub fn from_density(a: f64, b: f64, m: usize, density: impl Fn(f64) -> f64) -> Result<Self> {
        let h = (b - a) / (m.max(2) - 1) as f64;
        Self::new(a, b, (0..m).map(|i| density(a + i as f64 * h)).collect())
    }

    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    pub fn step(&self) -> f64 {
        (self.b - self.a) / (self.len() - 1) as f64
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        let h = self.step();
        (0..self.len()).map(move |i| self.a + i as f64 * h)
    }

    /// Edge conductances `q_i q_{i+1}/h` and node masses for the `q²`-weighted
    /// form. The pencil `(A, M)` has `A = Dᵀ diag(c) D`, `M` diagonal.
    fn pencil(&self) -> (Vec<f64>, Vec<f64>) {
        let h = self.step();
        let m = self.len();
        let cond: Vec<f64> = self.q.windows(2).map(|w| w[0] * w[1] / h).collect();
        let mut mass: Vec<f64> = self.q.iter().map(|v| v * v * h).collect();
        mass[0] *= 0.5;
        mass[m - 1] *= 0.5;
        mass[m - 1] += self.q[m - 1] * self.right_tail_mass;
        (cond, mass)
    }

    /// The symmetrized operator `M^{-1/2} A M^{-1/2}` as (diagonal, off-diagonal).
    pub fn symmetric_tridiagonal(&self) -> (Vec<f64>, Vec<f64>) {
        let (cond, mass) = self.pencil();
        let m = self.len();
        let diag = (0..m)
            .map(|i| {
                let left = if i > 0 { cond[i - 1] } else { 0.0 };
                let right = if i + 1 < m { cond[i] } else { 0.0 };
                (left + right) / mass[i]
            })
            .collect();
        let off = (0..m - 1).map(|i| -cond[i] / (mass[i] * mass[i + 1]).sqrt()).collect();
        (diag, off)
    }

    /// Number of eigenvalues strictly below `x`.
    ///
    /// Pivots of `A - xM` are tracked as `t_i = d_i - c_i`, which is exactly
    /// zero at `x = 0` and keeps small eigenvalues accurate to high relative
    /// precision.
    fn count_below(&self, cond: &[f64], mass: &[f64], x: f64) -> usize {
        let m = mass.len();
        let right = |i: usize| if i + 1 < m { cond[i] } else { 0.0 };
        let mut t = -x * mass[0];
        let mut d = guard(t + right(0));
        let mut count = usize::from(d < 0.0);
        for i in 1..m {
            t = cond[i - 1] * t / d - x * mass[i];
            d = guard(t + right(i));
            count += usize::from(d < 0.0);
        }
        count
    }
}

fn guard(d: f64) -> f64 {
    if d == 0.0 {
        f64::MIN_POSITIVE
    } else {
        d
    }
}

/// The `count` smallest eigenvalues, ascending, by Sturm bisection.
pub fn solve_weighted_neumann(w: &WeightedInterval, count: usize) -> Result<Vec<f64>> {
    if count == 0 || count >= w.len() / 4 {
        return Err(Error::InvalidParameter(format!("count must be in 1..{}", w.len() / 4)));
    }
    let (cond, mass) = w.pencil();
    let (diag, off) = w.symmetric_tridiagonal();
    let upper = (0..diag.len())
        .map(|i| {
            let l = if i > 0 { off[i - 1].abs() } else { 0.0 };
            let r = if i < off.len() { off[i].abs() } else { 0.0 };
            diag[i] + l + r
        })
        .fold(0.0, f64::max);
    let mut out = Vec::with_capacity(count);
    let mut lo_start = 0.0;
    for k in 0..count {
        // k-th eigenvalue: smallest x with count_below(x) > k
        let (mut lo, mut hi) = (lo_start, upper);
        if w.count_below(&cond, &mass, f64::MIN_POSITIVE) > k {
            out.push(0.0);
            continue;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if w.count_below(&cond, &mass, mid) > k {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let v = 0.5 * (lo + hi);
        out.push(v);
        lo_start = lo;
    }
    Ok(out)
}

/// Pushforward density of `Unif[0, 1]` under a monotone embedding, on its
/// image. An endpoint where `ι' = 0` is cut one step short and the mass beyond
/// it is lumped into the last node.
pub fn signal_density(model: &SignalModel, m: usize) -> Result<WeightedInterval> {
    signal_density_for(&model.embedding, m)
}

pub fn signal_density_for(embedding: &Embedding, m: usize) -> Result<WeightedInterval> {
    let dir = embedding.monotone_direction()?;
    let (a, b) = embedding.range();
    let density = |y: f64| -> Result<f64> {
        let z = embedding.inverse(y)?;
        Ok(1.0 / (dir * embedding.derivative(z)))
    };
    // latent endpoints mapping to the left and right ends of the image
    let (z_a, z_b) = if dir > 0.0 { (0.0, 1.0) } else { (1.0, 0.0) };
    let singular = |z: f64| embedding.derivative(z).abs() < 1e-12;
    if singular(z_a) {
        return Err(Error::InvalidParameter("density singular at the left end of the image".into()));
    }
    if !singular(z_b) {
        let h = (b - a) / (m - 1) as f64;
        let q = (0..m).map(|i| density(a + i as f64 * h)).collect::<Result<Vec<_>>>()?;
        return WeightedInterval::new(a, b, q);
    }
    let h = (b - a) / m as f64;
    let end = b - h;
    let q = (0..m).map(|i| density(a + i as f64 * h)).collect::<Result<Vec<_>>>()?;
    let mut w = WeightedInterval::new(a, end, q)?;
    w.right_tail_mass = (z_b - embedding.inverse(end)?).abs();
    Ok(w)
}

/// Write `(k, nu_k)` rows, `k` starting at 1.
pub fn write_reference_csv(path: &Path, values: &[f64]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "k,nu_k")?;
    for (k, v) in values.iter().enumerate() {
        writeln!(f, "{},{:.12e}", k + 1, v)?;
    }
    Ok(())
}
