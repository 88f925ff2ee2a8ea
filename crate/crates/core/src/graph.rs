//! Sparse affinity matrices on point clouds (hard radius and sigmoid-smoothed)
//! and the random-walk Laplacian built from them.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::sampling::{MetricOrder, PointCloud};

pub const DEFAULT_DROP_THRESHOLD: f64 = 1e-12;
const SIGMOID_CLAMP: f64 = 700.0;

/// Radius, metric and kernel of a graph. With `alpha` set the graph is the
/// smoothed one and `kernel_ext` (defaulting to `kernel`) supplies `g*`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphSpec {
    pub radius: f64,
    #[serde(default = "default_metric")]
    pub p: MetricOrder,
    #[serde(default)]
    pub kernel: KernelSpec,
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub kernel_ext: Option<KernelSpec>,
    #[serde(default = "default_drop")]
    pub drop_threshold: f64,
}

fn default_metric() -> MetricOrder {
    MetricOrder::L2
}

fn default_drop() -> f64 {
    DEFAULT_DROP_THRESHOLD
}

impl GraphSpec {
    pub fn hard(radius: f64, p: MetricOrder, kernel: KernelSpec) -> Self {
        Self { radius, p, kernel, alpha: None, kernel_ext: None, drop_threshold: DEFAULT_DROP_THRESHOLD }
    }

    pub fn smoothed(radius: f64, p: MetricOrder, kernel: KernelSpec, alpha: f64) -> Self {
        Self { alpha: Some(alpha), ..Self::hard(radius, p, kernel) }
    }

    /// Smoothed spec with the practical default sharpness `50 / r²`.
    pub fn smoothed_default(radius: f64, p: MetricOrder, kernel: KernelSpec) -> Self {
        Self::smoothed(radius, p, kernel, 50.0 / (radius * radius))
    }

    pub fn extension(&self) -> &KernelSpec {
        self.kernel_ext.as_ref().unwrap_or(&self.kernel)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.radius.is_finite() && self.radius > 0.0) {
            return Err(Error::InvalidParameter(format!("radius must be positive, got {}", self.radius)));
        }
        if let Some(a) = self.alpha {
            if !(a.is_finite() && a > 0.0) {
                return Err(Error::InvalidParameter(format!("alpha must be positive, got {a}")));
            }
        }
        if !(self.drop_threshold >= 0.0) {
            return Err(Error::InvalidParameter("drop threshold must be nonnegative".into()));
        }
        self.kernel.validate()?;
        if let Some(k) = &self.kernel_ext {
            k.validate()?;
            for i in 0..=64 {
                let t = i as f64 / 64.0;
                if (k.eval(t) - self.kernel.eval(t)).abs() > 1e-12 * self.kernel.eval(t).abs().max(1.0) {
                    return Err(Error::InvalidParameter("kernel extension must agree with g on [0, 1]".into()));
                }
            }
        }
        Ok(())
    }

    /// Distance beyond which a smoothed weight is certainly below the drop threshold.
    pub fn search_radius(&self) -> f64 {
        match self.alpha {
            None => self.radius,
            Some(alpha) => {
                let sup = self.extension().sup_extended();
                let tau = self.drop_threshold.max(f64::MIN_POSITIVE);
                let extra = ((sup / tau).ln() / alpha).max(0.0);
                (self.radius * self.radius + extra).sqrt()
            }
        }
    }
}

#[inline]
pub fn sigmoid(t: f64) -> f64 {
    1.0 / (1.0 + (-t.clamp(-SIGMOID_CLAMP, SIGMOID_CLAMP)).exp())
}

/// Smoothed weight `sig(α(r² - dist²)) g*(dist/r)`.
#[inline]
pub fn smoothed_weight(dist: f64, radius: f64, alpha: f64, ext: &KernelSpec) -> f64 {
    sigmoid(alpha * (radius * radius - dist * dist)) * ext.eval(dist / radius)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AffinityKind {
    Hard,
    Smoothed,
}

/// Symmetric affinity in CSR form, diagonal included, columns sorted per row.
#[derive(Clone, Debug)]
pub struct SparseAffinity {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<f64>,
    degrees: Vec<f64>,
    pub kind: AffinityKind,
    /// Bound `n τ / min degree` on the eigenvalue change from dropping small
    /// smoothed weights; zero for hard graphs.
    pub drop_bound: f64,
}

impl SparseAffinity {
    /// From per-row `(column, weight)` lists. Callers guarantee symmetry.
    pub fn from_rows(rows: Vec<Vec<(u32, f64)>>, kind: AffinityKind) -> Self {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        row_ptr.push(0);
        let nnz: usize = rows.iter().map(Vec::len).sum();
        let mut cols = Vec::with_capacity(nnz);
        let mut vals = Vec::with_capacity(nnz);
        let mut degrees = Vec::with_capacity(n);
        for mut row in rows {
            row.sort_by_key(|e| e.0);
            degrees.push(row.iter().map(|e| e.1).sum());
            for (c, v) in row {
                cols.push(c);
                vals.push(v);
            }
            row_ptr.push(cols.len());
        }
        Self { n, row_ptr, cols, vals, degrees, kind, drop_bound: 0.0 }
    }

    /// Dense symmetric input; zero entries are skipped.
    pub fn from_dense(n: usize, entries: &[f64], kind: AffinityKind) -> Result<Self> {
        if entries.len() != n * n {
            return Err(Error::DimensionMismatch { expected: n * n, found: entries.len() });
        }
        let rows = (0..n)
            .map(|i| {
                (0..n)
                    .filter(|&j| entries[i * n + j] != 0.0)
                    .map(|j| (j as u32, entries[i * n + j]))
                    .collect()
            })
            .collect();
        Ok(Self::from_rows(rows, kind))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    pub fn degrees(&self) -> &[f64] {
        &self.degrees
    }

    #[inline]
    pub fn row(&self, i: usize) -> (&[u32], &[f64]) {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        (&self.cols[a..b], &self.vals[a..b])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (c, v) = self.row(i);
        match c.binary_search(&(j as u32)) {
            Ok(k) => v[k],
            Err(_) => 0.0,
        }
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n * self.n];
        for i in 0..self.n {
            let (c, v) = self.row(i);
            for (j, w) in c.iter().zip(v) {
                out[i * self.n + *j as usize] = *w;
            }
        }
        out
    }

    /// Labels of connected components, numbered in order of first vertex.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let mut label = vec![usize::MAX; self.n];
        let mut comps = Vec::new();
        let mut stack = Vec::new();
        for s in 0..self.n {
            if label[s] != usize::MAX {
                continue;
            }
            let id = comps.len();
            let mut members = vec![s];
            label[s] = id;
            stack.push(s);
            while let Some(u) = stack.pop() {
                for &v in self.row(u).0 {
                    let v = v as usize;
                    if label[v] == usize::MAX {
                        label[v] = id;
                        members.push(v);
                        stack.push(v);
                    }
                }
            }
            members.sort_unstable();
            comps.push(members);
        }
        comps
    }

    /// MatrixMarket coordinate export (lower triangle, shortest round-trip decimals).
    pub fn write_matrix_market(&self, mut w: impl Write) -> Result<()> {
        let lower: usize = (0..self.n).map(|i| self.row(i).0.iter().filter(|&&j| j as usize <= i).count()).sum();
        writeln!(w, "%%MatrixMarket matrix coordinate real symmetric")?;
        writeln!(w, "{} {} {}", self.n, self.n, lower)?;
        for i in 0..self.n {
            let (c, v) = self.row(i);
            for (j, x) in c.iter().zip(v) {
                if *j as usize <= i {
                    writeln!(w, "{} {} {:e}", i + 1, j + 1, x)?;
                }
            }
        }
        Ok(())
    }

    pub fn read_matrix_market(r: impl BufRead, kind: AffinityKind) -> Result<Self> {
        let mut lines = r.lines().filter(|l| l.as_ref().map(|s| !s.starts_with('%')).unwrap_or(true));
        let header = lines.next().ok_or(Error::EmptyTable)??;
        let dims: Vec<usize> = header
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| Error::Config(format!("bad size line: {header}"))))
            .collect::<Result<_>>()?;
        if dims.len() != 3 || dims[0] != dims[1] {
            return Err(Error::Config(format!("expected square size line, got {header}")));
        }
        let n = dims[0];
        let mut rows: Vec<Vec<(u32, f64)>> = vec![Vec::new(); n];
        for line in lines {
            let line = line?;
            let mut it = line.split_whitespace();
            let parse_err = || Error::Config(format!("bad entry: {line}"));
            let i: usize = it.next().and_then(|t| t.parse().ok()).ok_or_else(parse_err)?;
            let j: usize = it.next().and_then(|t| t.parse().ok()).ok_or_else(parse_err)?;
            let v: f64 = it.next().and_then(|t| t.parse().ok()).ok_or_else(parse_err)?;
            rows[i - 1].push((j as u32 - 1, v));
            if i != j {
                rows[j - 1].push((i as u32 - 1, v));
            }
        }
        Ok(Self::from_rows(rows, kind))
    }
}

/// Uniform grid over the cloud's bounding box with cells of side `side`.
struct Grid {
    side: f64,
    origin: Vec<f64>,
    cells: HashMap<Vec<i64>, Vec<u32>>,
    offsets: Vec<Vec<i64>>,
}

impl Grid {
    fn new(cloud: &PointCloud, side: f64) -> Self {
        let d = cloud.dim();
        let mut origin = vec![f64::INFINITY; d];
        for x in cloud.points() {
            for (o, v) in origin.iter_mut().zip(x) {
                *o = o.min(*v);
            }
        }
        let mut g = Self { side, origin, cells: HashMap::new(), offsets: Vec::new() };
        for (i, x) in cloud.points().enumerate() {
            let key = g.cell_of(x);
            g.cells.entry(key).or_default().push(i as u32);
        }
        // {-1, 0, 1}^d
        let mut offsets = vec![Vec::with_capacity(d)];
        for _ in 0..d {
            offsets = offsets
                .into_iter()
                .flat_map(|o| {
                    (-1..=1).map(move |s| {
                        let mut o = o.clone();
                        o.push(s);
                        o
                    })
                })
                .collect();
        }
        g.offsets = offsets;
        g
    }

    fn cell_of(&self, x: &[f64]) -> Vec<i64> {
        x.iter().zip(&self.origin).map(|(v, o)| ((v - o) / self.side).floor() as i64).collect()
    }

    /// Every point within `radius` of point `i` (itself included), sorted by index.
    fn row(&self, cloud: &PointCloud, i: usize, radius: f64, p: MetricOrder) -> Vec<(u32, f64)> {
        let x = cloud.point(i);
        let base = self.cell_of(x);
        let mut key = base.clone();
        let mut out = Vec::new();
        for off in &self.offsets {
            for (k, (b, o)) in key.iter_mut().zip(base.iter().zip(off)) {
                *k = b.saturating_add(*o);
            }
            if let Some(members) = self.cells.get(&key) {
                for &j in members {
                    let y = cloud.point(j as usize);
                    let dist = p.norm(x.iter().zip(y).map(|(a, b)| a - b));
                    if dist <= radius {
                        out.push((j, dist));
                    }
                }
            }
        }
        out.sort_by_key(|e| e.0);
        out
    }
}

/// For each point, the indices and distances of every point within `radius`,
/// itself included. Distances are computed as `‖x_i - x_j‖`, which is bitwise
/// symmetric in `(i, j)`.
pub fn neighbor_rows(cloud: &PointCloud, radius: f64, p: MetricOrder) -> Vec<Vec<(u32, f64)>> {
    let grid = Grid::new(cloud, radius);
    (0..cloud.len()).into_par_iter().map(|i| grid.row(cloud, i, radius, p)).collect()
}

/// Unordered pairs `i < j` within ℓp distance `radius`, in lexicographic order.
pub fn neighbor_pairs(cloud: &PointCloud, radius: f64, p: MetricOrder) -> Vec<(usize, usize)> {
    neighbor_rows(cloud, radius, p)
        .into_iter()
        .enumerate()
        .flat_map(|(i, row)| row.into_iter().filter(move |e| e.0 as usize > i).map(move |e| (i, e.0 as usize)))
        .collect()
}

pub fn build_hard_affinity(cloud: &PointCloud, spec: &GraphSpec) -> Result<SparseAffinity> {
    spec.validate()?;
    if spec.alpha.is_some() {
        return Err(Error::InvalidParameter("hard affinity requested with alpha set".into()));
    }
    let r = spec.radius;
    let rows = neighbor_rows(cloud, r, spec.p)
        .into_iter()
        .map(|row| row.into_iter().map(|(j, dist)| (j, spec.kernel.eval(dist / r))).collect())
        .collect();
    Ok(SparseAffinity::from_rows(rows, AffinityKind::Hard))
}

pub fn build_smoothed_affinity(cloud: &PointCloud, spec: &GraphSpec) -> Result<SparseAffinity> {
    spec.validate()?;
    let alpha = spec
        .alpha
        .ok_or_else(|| Error::InvalidParameter("smoothed affinity needs alpha".into()))?;
    let (r, tau, ext) = (spec.radius, spec.drop_threshold, spec.extension());
    let rows: Vec<Vec<(u32, f64)>> = neighbor_rows(cloud, spec.search_radius(), spec.p)
        .into_iter()
        .map(|row| {
            row.into_iter()
                .map(|(j, dist)| (j, smoothed_weight(dist, r, alpha, ext)))
                .filter(|e| e.1 >= tau && e.1 > 0.0)
                .collect()
        })
        .collect();
    let mut aff = SparseAffinity::from_rows(rows, AffinityKind::Smoothed);
    let min_deg = aff.degrees.iter().copied().fold(f64::INFINITY, f64::min);
    aff.drop_bound = if min_deg > 0.0 { aff.n as f64 * tau / min_deg } else { f64::INFINITY };
    Ok(aff)
}

/// `build_hard_affinity` or `build_smoothed_affinity` depending on `alpha`.
pub fn build_affinity(cloud: &PointCloud, spec: &GraphSpec) -> Result<SparseAffinity> {
    if spec.alpha.is_some() {
        build_smoothed_affinity(cloud, spec)
    } else {
        build_hard_affinity(cloud, spec)
    }
}

/// `L_rw = I - D⁻¹K` and `S = D^{-1/2} K D^{-1/2}` on a shared affinity,
/// with eigenvalues reported as `scale · λ(L_rw)`.
#[derive(Clone, Debug)]
pub struct LaplacianOperator {
    pub affinity: SparseAffinity,
    pub scale: f64,
    inv_sqrt_deg: Vec<f64>,
}

pub fn build_laplacian(affinity: SparseAffinity, scale: f64) -> Result<LaplacianOperator> {
    if !(scale.is_finite() && scale > 0.0) {
        return Err(Error::InvalidParameter(format!("scale must be positive, got {scale}")));
    }
    if let Some(row) = affinity.degrees.iter().position(|&d| !(d > 0.0)) {
        return Err(Error::ZeroDegree { row });
    }
    let inv_sqrt_deg = affinity.degrees.iter().map(|d| 1.0 / d.sqrt()).collect();
    Ok(LaplacianOperator { affinity, scale, inv_sqrt_deg })
}

impl LaplacianOperator {
    pub fn n(&self) -> usize {
        self.affinity.n
    }

    pub fn inv_sqrt_degrees(&self) -> &[f64] {
        &self.inv_sqrt_deg
    }

    /// `y ← (I - D⁻¹K) x`.
    pub fn apply_rw(&self, x: &[f64], y: &mut [f64]) {
        let a = &self.affinity;
        y.par_iter_mut().enumerate().for_each(|(i, yi)| {
            let (c, v) = a.row(i);
            let s: f64 = c.iter().zip(v).map(|(j, w)| w * x[*j as usize]).sum();
            *yi = x[i] - s / a.degrees[i];
        });
    }

    /// `y ← S x`.
    pub fn apply_sym(&self, x: &[f64], y: &mut [f64]) {
        let a = &self.affinity;
        let isd = &self.inv_sqrt_deg;
        y.par_iter_mut().enumerate().for_each(|(i, yi)| {
            let (c, v) = a.row(i);
            let s: f64 = c.iter().zip(v).map(|(j, w)| w * isd[*j as usize] * x[*j as usize]).sum();
            *yi = isd[i] * s;
        });
    }

    /// Dense `I - S`, for small instances.
    pub fn dense_sym_laplacian(&self) -> Vec<f64> {
        let n = self.n();
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            out[i * n + i] = 1.0;
            let (c, v) = self.affinity.row(i);
            for (j, w) in c.iter().zip(v) {
                let j = *j as usize;
                out[i * n + j] -= w * self.inv_sqrt_deg[i] * self.inv_sqrt_deg[j];
            }
        }
        out
    }
}

/// Upper bound on `‖𝐋 - L̃‖` from `scale · √n · max_i Σ_j |K_ij/d_i - K̃_ij/d̃_i|`.
pub fn matrix_closeness_check(hard: &LaplacianOperator, smoothed: &LaplacianOperator) -> Result<f64> {
    let n = hard.n();
    if smoothed.n() != n {
        return Err(Error::DimensionMismatch { expected: n, found: smoothed.n() });
    }
    if (hard.scale - smoothed.scale).abs() > 1e-12 * hard.scale {
        return Err(Error::InvalidParameter("operators must share the same scale".into()));
    }
    let (a, b) = (&hard.affinity, &smoothed.affinity);
    let max_row = (0..n)
        .into_par_iter()
        .map(|i| {
            let (ca, va) = a.row(i);
            let (cb, vb) = b.row(i);
            let (da, db) = (a.degrees[i], b.degrees[i]);
            let (mut p, mut q, mut sum) = (0, 0, 0.0);
            while p < ca.len() || q < cb.len() {
                let ja = ca.get(p).copied().unwrap_or(u32::MAX);
                let jb = cb.get(q).copied().unwrap_or(u32::MAX);
                let (x, y) = if ja == jb {
                    p += 1;
                    q += 1;
                    (va[p - 1] / da, vb[q - 1] / db)
                } else if ja < jb {
                    p += 1;
                    (va[p - 1] / da, 0.0)
                } else {
                    q += 1;
                    (0.0, vb[q - 1] / db)
                };
                sum += (x - y).abs();
            }
            sum
        })
        .reduce(|| 0.0, f64::max);
    Ok(hard.scale * (n as f64).sqrt() * max_row)
}
