//! Smallest eigenvalues of the scaled random-walk Laplacian, the trivial
//! count `K0`, and the edge eigenvalues that follow it.
//!
//! The graph is split into connected components. Small components are solved
//! densely in full; large ones by Lanczos on the symmetric form, either
//! directly on `S` or shift-inverted through an envelope Cholesky factor of
//! `(1+θ)I - S`.

use std::time::Instant;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::LaplacianOperator;
use crate::sampling::SigmaDiag;

const ZERO_FLOOR: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverKind {
    Dense,
    Lanczos,
    LanczosShiftInvert,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LanczosMode {
    /// Shift-invert when the envelope factor is affordable, plain otherwise.
    Auto,
    Plain,
    ShiftInvert,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    /// Components up to this size are solved densely.
    pub dense_max: usize,
    pub mode: LanczosMode,
    /// Shift θ in scaled units; defaults to half the trivial threshold, or
    /// 0.25 when no threshold is known.
    pub shift: Option<f64>,
    /// Largest per-component eigenvalue count the adaptive driver may request.
    pub growth_cap: usize,
    pub max_restarts: usize,
    /// Envelope work `Σ (row width)²` above which `Auto` falls back to plain Lanczos.
    pub envelope_work_limit: f64,
    pub seed: u64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            dense_max: 2000,
            mode: LanczosMode::Auto,
            shift: None,
            growth_cap: 2048,
            max_restarts: 200,
            envelope_work_limit: 5e8,
            seed: 0x1a2c_05e7,
        }
    }
}

/// Eigenpair of the scaled `L_rw`. `vector` is a unit right eigenvector
/// `v` with `𝐋 v = λ v`.
#[derive(Clone, Debug)]
pub struct EigenPair {
    pub value: f64,
    pub vector: Vec<f64>,
    pub residual: f64,
    pub component: usize,
}

#[derive(Clone, Debug)]
pub struct EigenSolve {
    pub pairs: Vec<EigenPair>,
    pub converged: bool,
    pub solver: SolverKind,
}

/// Trivial-eigenvalue threshold δ together with whether it satisfies
/// `δ < min σᵢ⁻²`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeltaPolicy {
    pub delta: f64,
    pub constraint_ok: bool,
    #[serde(skip)]
    bound: f64,
}

impl DeltaPolicy {
    /// `δ = 0.5 · min σᵢ⁻²`.
    pub fn for_sigma(sigma: &SigmaDiag) -> Self {
        let bound = sigma.min_inverse_variance();
        Self { delta: 0.5 * bound, constraint_ok: true, bound }
    }

    /// Explicit δ, checked against σ.
    pub fn checked(delta: f64, sigma: &SigmaDiag) -> Result<Self> {
        if !(delta.is_finite() && delta > 0.0) {
            return Err(Error::InvalidParameter(format!("delta must be positive, got {delta}")));
        }
        let bound = sigma.min_inverse_variance();
        Ok(Self { delta, constraint_ok: delta < bound, bound })
    }

    /// Explicit δ when the covariance is unknown; the caller vouches for it.
    pub fn unchecked(delta: f64) -> Result<Self> {
        if !(delta.is_finite() && delta > 0.0) {
            return Err(Error::InvalidParameter(format!("delta must be positive, got {delta}")));
        }
        Ok(Self { delta, constraint_ok: true, bound: f64::INFINITY })
    }

    fn require_ok(&self) -> Result<()> {
        if self.constraint_ok {
            Ok(())
        } else {
            Err(Error::DeltaViolatesConstraint { delta: self.delta, bound: self.bound })
        }
    }
}

/// `K0 = #{j : λ_j ≤ δ}`; the list must reach past δ.
pub fn compute_k0(eigs: &[f64], policy: &DeltaPolicy) -> Result<usize> {
    policy.require_ok()?;
    let k0 = eigs.iter().take_while(|&&v| v <= policy.delta).count();
    if k0 == eigs.len() {
        return Err(Error::InsufficientSpectrum { computed: eigs.len() });
    }
    Ok(k0)
}

/// `λ_{K0+1}, …, λ_{K0+M}`.
pub fn edge_eigenvalues(eigs: &[f64], k0: usize, m: usize) -> Result<Vec<f64>> {
    if eigs.len() < k0 + m {
        return Err(Error::InsufficientSpectrum { computed: eigs.len() });
    }
    Ok(eigs[k0..k0 + m].to_vec())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpectrumResult {
    pub eigenvalues: Vec<f64>,
    #[serde(rename = "K0")]
    pub k0: usize,
    pub delta: f64,
    pub edge: Vec<f64>,
    #[serde(skip)]
    pub residuals: Vec<f64>,
    pub residual_max: f64,
    pub solver: SolverKind,
    pub wall_time_s: f64,
    #[serde(skip)]
    pub components: usize,
    #[serde(skip)]
    pub growth_rounds: usize,
}

fn floor_zero(v: f64) -> f64 {
    if v.abs() < ZERO_FLOOR {
        v.max(0.0)
    } else {
        v
    }
}

/// Component-local copy of the affinity.
struct LocalGraph {
    members: Vec<usize>,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<f64>,
    degrees: Vec<f64>,
    isd: Vec<f64>,
}

impl LocalGraph {
    fn extract(op: &LaplacianOperator, members: Vec<usize>, local_of: &mut [usize]) -> Self {
        for (l, &g) in members.iter().enumerate() {
            local_of[g] = l;
        }
        let aff = &op.affinity;
        let mut row_ptr = vec![0];
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        for &g in &members {
            let (c, v) = aff.row(g);
            for (j, w) in c.iter().zip(v) {
                cols.push(local_of[*j as usize] as u32);
                vals.push(*w);
            }
            row_ptr.push(cols.len());
        }
        let degrees: Vec<f64> = members.iter().map(|&g| aff.degrees()[g]).collect();
        let isd = degrees.iter().map(|d| 1.0 / d.sqrt()).collect();
        Self { members, row_ptr, cols, vals, degrees, isd }
    }

    fn len(&self) -> usize {
        self.members.len()
    }

    fn row(&self, i: usize) -> (&[u32], &[f64]) {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        (&self.cols[a..b], &self.vals[a..b])
    }

    /// `y ← S x`.
    fn apply_s(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let (c, v) = self.row(i);
            let s: f64 = c.iter().zip(v).map(|(j, w)| w * self.isd[*j as usize] * x[*j as usize]).sum();
            *yi = self.isd[i] * s;
        }
    }

    /// `y ← (I - D⁻¹K) x`.
    fn apply_rw(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let (c, v) = self.row(i);
            let s: f64 = c.iter().zip(v).map(|(j, w)| w * x[*j as usize]).sum();
            *yi = x[i] - s / self.degrees[i];
        }
    }

    fn dense_i_minus_s(&self) -> DMatrix<f64> {
        let m = self.len();
        let mut a = DMatrix::<f64>::identity(m, m);
        for i in 0..m {
            let (c, v) = self.row(i);
            for (j, w) in c.iter().zip(v) {
                let j = *j as usize;
                a[(i, j)] -= w * self.isd[i] * self.isd[j];
            }
        }
        a
    }

    /// Unit null vector of `I - S`: `D^{1/2} 1`.
    fn null_vector(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.degrees.iter().map(|d| d.sqrt()).collect();
        normalize(&mut v);
        v
    }

    /// Reverse Cuthill–McKee ordering, new index → local index.
    fn rcm_order(&self) -> Vec<usize> {
        let m = self.len();
        let deg: Vec<usize> = (0..m).map(|i| self.row_ptr[i + 1] - self.row_ptr[i]).collect();
        let bfs = |start: usize| -> (Vec<usize>, Vec<usize>) {
            let mut level = vec![usize::MAX; m];
            let mut order = vec![start];
            level[start] = 0;
            let mut head = 0;
            let mut nbrs = Vec::new();
            while head < order.len() {
                let u = order[head];
                head += 1;
                nbrs.clear();
                nbrs.extend(self.row(u).0.iter().map(|&v| v as usize).filter(|&v| level[v] == usize::MAX));
                nbrs.sort_by_key(|&v| (deg[v], v));
                for &v in &nbrs {
                    level[v] = level[u] + 1;
                    order.push(v);
                }
            }
            (order, level)
        };
        // pseudo-peripheral start: restart from a minimum-degree node of the
        // deepest level while the eccentricity keeps growing
        let start = (0..m).min_by_key(|&i| (deg[i], i)).unwrap();
        let (mut order, mut level) = bfs(start);
        for _ in 0..8 {
            let depth = level[*order.last().unwrap()];
            let cand = order
                .iter()
                .rev()
                .take_while(|&&v| level[v] == depth)
                .copied()
                .min_by_key(|&v| (deg[v], v))
                .unwrap();
            let (o2, l2) = bfs(cand);
            if l2[*o2.last().unwrap()] <= depth {
                break;
            }
            order = o2;
            level = l2;
        }
        order.reverse();
        order
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn normalize(a: &mut [f64]) -> f64 {
    let n = norm(a);
    if n > 0.0 {
        a.iter_mut().for_each(|x| *x /= n);
    }
    n
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    y.iter_mut().zip(x).for_each(|(yi, xi)| *yi += alpha * xi);
}

fn orthogonalize(w: &mut [f64], basis: &[Vec<f64>]) {
    for _ in 0..2 {
        for b in basis {
            let c = dot(b, w);
            axpy(-c, b, w);
        }
    }
}

/// Cholesky factor of a symmetric positive definite matrix stored by rows
/// over its envelope: row `i` holds columns `first[i]..=i`.
struct EnvelopeCholesky {
    first: Vec<usize>,
    ptr: Vec<usize>,
    data: Vec<f64>,
}

impl EnvelopeCholesky {
    fn envelope_work(g: &LocalGraph, order: &[usize]) -> f64 {
        let mut pos = vec![0usize; order.len()];
        for (k, &l) in order.iter().enumerate() {
            pos[l] = k;
        }
        order
            .iter()
            .enumerate()
            .map(|(i, &l)| {
                let f = g.row(l).0.iter().map(|&j| pos[j as usize]).min().unwrap_or(i).min(i);
                let w = (i - f) as f64;
                w * w
            })
            .sum()
    }

    /// Factor `(1+θ)I - S` in the given ordering.
    fn factor(g: &LocalGraph, order: &[usize], theta: f64) -> Result<Self> {
        let m = order.len();
        let mut pos = vec![0usize; m];
        for (k, &l) in order.iter().enumerate() {
            pos[l] = k;
        }
        let mut first = Vec::with_capacity(m);
        let mut ptr = Vec::with_capacity(m + 1);
        ptr.push(0);
        for (i, &l) in order.iter().enumerate() {
            let f = g.row(l).0.iter().map(|&j| pos[j as usize]).filter(|&k| k <= i).min().unwrap_or(i);
            first.push(f);
            ptr.push(ptr[i] + (i - f + 1));
        }
        let mut data = vec![0.0; ptr[m]];
        for (i, &l) in order.iter().enumerate() {
            let (c, v) = g.row(l);
            for (j, w) in c.iter().zip(v) {
                let k = pos[*j as usize];
                if k <= i {
                    data[ptr[i] + k - first[i]] -= w * g.isd[l] * g.isd[*j as usize];
                }
            }
            data[ptr[i] + i - first[i]] += 1.0 + theta;
        }
        for i in 0..m {
            let fi = first[i];
            for j in fi..i {
                let fj = first[j];
                let k0 = fi.max(fj);
                let (lo, hi) = data.split_at_mut(ptr[i]);
                let row_i = &mut hi[..i - fi + 1];
                let row_j = &lo[ptr[j]..ptr[j + 1]];
                let s = dot(&row_i[k0 - fi..j - fi], &row_j[k0 - fj..j - fj]);
                row_i[j - fi] = (row_i[j - fi] - s) / row_j[j - fj];
            }
            let row_i = &mut data[ptr[i]..ptr[i + 1]];
            let (off, diag) = row_i.split_at_mut(i - fi);
            let d = diag[0] - dot(off, off);
            if !(d > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "shifted Laplacian not positive definite at pivot {i} (value {d:e})"
                )));
            }
            diag[0] = d.sqrt();
        }
        Ok(Self { first, ptr, data })
    }

    /// In-place solve `L Lᵀ x = b` in factor ordering.
    fn solve(&self, x: &mut [f64]) {
        let m = self.first.len();
        for i in 0..m {
            let row = &self.data[self.ptr[i]..self.ptr[i + 1]];
            let w = i - self.first[i];
            let s = dot(&row[..w], &x[self.first[i]..i]);
            x[i] = (x[i] - s) / row[w];
        }
        for i in (0..m).rev() {
            let row = &self.data[self.ptr[i]..self.ptr[i + 1]];
            let w = i - self.first[i];
            x[i] /= row[w];
            let xi = x[i];
            axpy(-xi, &row[..w], &mut x[self.first[i]..i]);
        }
    }
}

/// Largest eigenpairs of a symmetric operator by Lanczos with full
/// reorthogonalization, locking and explicit restarts. `locked` holds
/// pairs already known exactly; they are deflated and kept in front.
struct LanczosDriver<'a> {
    apply: Box<dyn FnMut(&[f64], &mut [f64]) + 'a>,
    n: usize,
    rng: ChaCha8Rng,
    max_restarts: usize,
    rel_tol: f64,
}

struct Pass {
    values: Vec<f64>,
    residuals: Vec<f64>,
    vectors: Vec<Vec<f64>>,
}

impl LanczosDriver<'_> {
    fn random_vector(&mut self) -> Vec<f64> {
        (0..self.n).map(|_| self.rng.random::<f64>() - 0.5).collect()
    }

    /// One Lanczos run of at most `m` steps; returns Ritz pairs, largest first.
    fn pass(&mut self, start: Vec<f64>, m: usize, locked: &[Vec<f64>], scale_hint: f64) -> Pass {
        let mut q = start;
        orthogonalize(&mut q, locked);
        if normalize(&mut q) == 0.0 {
            return Pass { values: vec![], residuals: vec![], vectors: vec![] };
        }
        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m);
        let mut alpha = Vec::with_capacity(m);
        let mut beta: Vec<f64> = Vec::with_capacity(m);
        let mut w = vec![0.0; self.n];
        let mut breakdown = false;
        for j in 0..m {
            (self.apply)(&q, &mut w);
            let a = dot(&q, &w);
            axpy(-a, &q, &mut w);
            if j > 0 {
                axpy(-beta[j - 1], &basis[j - 1], &mut w);
            }
            basis.push(q);
            orthogonalize(&mut w, &basis);
            orthogonalize(&mut w, locked);
            let b = norm(&w);
            alpha.push(a);
            beta.push(b);
            let s = alpha.iter().fold(scale_hint, |acc, v| acc.max(v.abs()));
            if b <= 1e-13 * s || basis.len() + locked.len() >= self.n {
                breakdown = true;
                break;
            }
            q = w.iter().map(|x| x / b).collect();
        }
        let k = alpha.len();
        let mut t = DMatrix::<f64>::zeros(k, k);
        for i in 0..k {
            t[(i, i)] = alpha[i];
            if i + 1 < k {
                t[(i, i + 1)] = beta[i];
                t[(i + 1, i)] = beta[i];
            }
        }
        let eig = SymmetricEigen::new(t);
        let mut idx: Vec<usize> = (0..k).collect();
        idx.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let last_beta = if breakdown { 0.0 } else { *beta.last().unwrap() };
        let mut out = Pass { values: vec![], residuals: vec![], vectors: vec![] };
        for &i in &idx {
            let s = eig.eigenvectors.column(i);
            let mut y = vec![0.0; self.n];
            for (j, bj) in basis.iter().enumerate() {
                axpy(s[j], bj, &mut y);
            }
            out.values.push(eig.eigenvalues[i]);
            out.residuals.push((last_beta * s[k - 1]).abs());
            out.vectors.push(y);
        }
        out
    }

    /// Extend `locked` (values and vectors) to `total` pairs.
    fn run(
        &mut self,
        total: usize,
        locked_vals: &mut Vec<f64>,
        locked_vecs: &mut Vec<Vec<f64>>,
        scale_hint: f64,
    ) -> bool {
        let total = total.min(self.n);
        let mut restarts = 0;
        let mut start: Option<Vec<f64>> = None;
        let mut verified = false;
        let mut extra = 0usize;
        while !verified {
            let target = (total + extra).min(self.n);
            while locked_vals.len() < target {
                let need = target - locked_vals.len();
                let avail = self.n - locked_vals.len();
                // passes lengthen while restarts fail to converge
                let m = avail.min((2 * need + 30).max(40) << restarts.min(6));
                let s = start.take().unwrap_or_else(|| self.random_vector());
                let pass = self.pass(s, m, locked_vecs, scale_hint);
                if pass.values.is_empty() {
                    restarts += 1;
                    if restarts > self.max_restarts {
                        return false;
                    }
                    continue;
                }
                let spread = pass.values.iter().fold(scale_hint, |a, v| a.max(v.abs()));
                let tol = self.rel_tol * spread;
                let mut accepted = 0;
                for i in 0..need.min(pass.values.len()) {
                    if pass.residuals[i] > tol {
                        break;
                    }
                    let mut y = pass.vectors[i].clone();
                    orthogonalize(&mut y, locked_vecs);
                    if normalize(&mut y) < 0.5 {
                        break;
                    }
                    locked_vals.push(pass.values[i]);
                    locked_vecs.push(y);
                    accepted += 1;
                }
                if accepted < need {
                    restarts += 1;
                    if restarts > self.max_restarts {
                        return false;
                    }
                    // restart from the wanted, not yet converged Ritz vectors
                    let mut s = vec![0.0; self.n];
                    for v in pass.vectors.iter().skip(accepted).take(need - accepted) {
                        axpy(1.0, v, &mut s);
                    }
                    start = Some(s);
                }
            }
            // A missed eigenvalue larger than the smallest locked one would show
            // up as a large Ritz value of a fresh deflated run.
            let min_locked = locked_vals.iter().copied().fold(f64::INFINITY, f64::min);
            let avail = self.n - locked_vals.len();
            if avail == 0 {
                break;
            }
            let r = self.random_vector();
            let check = self.pass(r, avail.min(40), locked_vecs, scale_hint);
            let spread = check.values.iter().fold(scale_hint, |a, v| a.max(v.abs()));
            match check.values.first() {
                Some(&top) if top > min_locked + 1e-10 * spread && extra < 16 => {
                    extra += 1;
                    start = Some(check.vectors[0].clone());
                }
                _ => verified = true,
            }
        }
        // keep the `total` largest
        let mut idx: Vec<usize> = (0..locked_vals.len()).collect();
        idx.sort_by(|&a, &b| locked_vals[b].total_cmp(&locked_vals[a]));
        idx.truncate(total);
        let vals: Vec<f64> = idx.iter().map(|&i| locked_vals[i]).collect();
        let vecs: Vec<Vec<f64>> = idx.iter().map(|&i| locked_vecs[i].clone()).collect();
        *locked_vals = vals;
        *locked_vecs = vecs;
        true
    }
}

/// Rayleigh–Ritz of `I - S` on an orthonormalized basis; returns ascending
/// values of `I - S` with their vectors.
fn rayleigh_ritz(g: &LocalGraph, vecs: Vec<Vec<f64>>) -> (Vec<f64>, Vec<Vec<f64>>) {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(vecs.len());
    for mut v in vecs {
        orthogonalize(&mut v, &basis);
        if normalize(&mut v) > 1e-8 {
            basis.push(v);
        }
    }
    let k = basis.len();
    let n = g.len();
    let mut images = Vec::with_capacity(k);
    for b in &basis {
        let mut w = vec![0.0; n];
        g.apply_s(b, &mut w);
        w.iter_mut().zip(b).for_each(|(wi, bi)| *wi = bi - *wi);
        images.push(w);
    }
    let mut h = DMatrix::<f64>::zeros(k, k);
    for i in 0..k {
        for j in 0..=i {
            let v = 0.5 * (dot(&basis[i], &images[j]) + dot(&basis[j], &images[i]));
            h[(i, j)] = v;
            h[(j, i)] = v;
        }
    }
    let eig = SymmetricEigen::new(h);
    let mut idx: Vec<usize> = (0..k).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let mut vals = Vec::with_capacity(k);
    let mut out = Vec::with_capacity(k);
    for &i in &idx {
        let s = eig.eigenvectors.column(i);
        let mut y = vec![0.0; n];
        for (j, b) in basis.iter().enumerate() {
            axpy(s[j], b, &mut y);
        }
        normalize(&mut y);
        vals.push(eig.eigenvalues[i]);
        out.push(y);
    }
    (vals, out)
}

/// Spectrum of one component in unscaled `L_rw` units (ascending), with
/// symmetric-form eigenvectors.
struct ComponentSpectrum {
    values: Vec<f64>,
    vectors: Vec<Vec<f64>>,
    complete: bool,
    solver: SolverKind,
}

impl ComponentSpectrum {
    fn max_value(&self) -> f64 {
        self.values.last().copied().unwrap_or(f64::NEG_INFINITY)
    }
}

fn solve_dense(g: &LocalGraph) -> ComponentSpectrum {
    let m = g.len();
    if m == 1 {
        return ComponentSpectrum { values: vec![0.0], vectors: vec![vec![1.0]], complete: true, solver: SolverKind::Dense };
    }
    let eig = SymmetricEigen::new(g.dense_i_minus_s());
    let mut idx: Vec<usize> = (0..m).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = idx.iter().map(|&i| eig.eigenvectors.column(i).iter().copied().collect()).collect();
    ComponentSpectrum { values, vectors, complete: true, solver: SolverKind::Dense }
}

fn solve_lanczos(g: &LocalGraph, k: usize, theta: f64, opts: &SolverOptions, seed: u64) -> Result<ComponentSpectrum> {
    let m = g.len();
    let k = k.min(m);
    let order = g.rcm_order();
    let use_shift = match opts.mode {
        LanczosMode::Plain => false,
        LanczosMode::ShiftInvert => true,
        LanczosMode::Auto => EnvelopeCholesky::envelope_work(g, &order) <= opts.envelope_work_limit,
    };
    let null = g.null_vector();
    let mut vals;
    let mut vecs = vec![null];
    let ok;
    let solver;
    if use_shift {
        let chol = EnvelopeCholesky::factor(g, &order, theta)?;
        let mut buf = vec![0.0; m];
        let apply = move |x: &[f64], y: &mut [f64]| {
            for (k, &l) in order.iter().enumerate() {
                buf[k] = x[l];
            }
            chol.solve(&mut buf);
            for (k, &l) in order.iter().enumerate() {
                y[l] = buf[k];
            }
        };
        let mut driver = LanczosDriver {
            apply: Box::new(apply),
            n: m,
            rng: ChaCha8Rng::seed_from_u64(seed),
            max_restarts: opts.max_restarts,
            rel_tol: 1e-13,
        };
        vals = vec![1.0 / theta];
        ok = driver.run(k, &mut vals, &mut vecs, 1.0 / theta);
        // One step of subspace iteration sharpens the basis before Rayleigh–Ritz.
        let mut images = Vec::with_capacity(vecs.len());
        for v in &vecs {
            let mut w = vec![0.0; m];
            (driver.apply)(v, &mut w);
            images.push(w);
        }
        vecs = images;
        solver = SolverKind::LanczosShiftInvert;
    } else {
        let mut driver = LanczosDriver {
            apply: Box::new(|x: &[f64], y: &mut [f64]| g.apply_s(x, y)),
            n: m,
            rng: ChaCha8Rng::seed_from_u64(seed),
            max_restarts: opts.max_restarts,
            rel_tol: 1e-14,
        };
        vals = vec![1.0];
        ok = driver.run(k, &mut vals, &mut vecs, 1.0);
        solver = SolverKind::Lanczos;
    }
    if !ok {
        return Err(Error::SolverNonConvergence { converged: vals.len(), requested: k });
    }
    let (values, vectors) = rayleigh_ritz(g, vecs);
    Ok(ComponentSpectrum { values, vectors, complete: k == m, solver })
}

struct Decomposition {
    graphs: Vec<LocalGraph>,
}

impl Decomposition {
    fn new(op: &LaplacianOperator) -> Self {
        let mut local_of = vec![usize::MAX; op.n()];
        let graphs = op.affinity.components().into_iter().map(|c| LocalGraph::extract(op, c, &mut local_of)).collect();
        Self { graphs }
    }
}

/// Scaled residual `‖𝐋v - λv‖/‖v‖` for `v = D^{-1/2} y`.
fn residual(g: &LocalGraph, y: &[f64], value_unscaled: f64, scale: f64) -> (Vec<f64>, f64) {
    let v: Vec<f64> = y.iter().zip(&g.isd).map(|(a, b)| a * b).collect();
    let mut w = vec![0.0; v.len()];
    g.apply_rw(&v, &mut w);
    let nv = norm(&v);
    let r = w.iter().zip(&v).map(|(a, b)| (a - value_unscaled * b).powi(2)).sum::<f64>().sqrt();
    (v, scale * r / nv)
}

struct Merged {
    /// (scaled value, component, local index)
    entries: Vec<(f64, usize, usize)>,
    /// Number of leading entries that are certainly the smallest of the whole graph.
    valid: usize,
    bound: f64,
}

fn merge(spectra: &[ComponentSpectrum], scale: f64) -> Merged {
    let mut entries: Vec<(f64, usize, usize)> = spectra
        .iter()
        .enumerate()
        .flat_map(|(c, s)| s.values.iter().enumerate().map(move |(i, v)| (floor_zero(v * scale), c, i)))
        .collect();
    entries.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let bound = spectra
        .iter()
        .filter(|s| !s.complete)
        .map(|s| floor_zero(s.max_value() * scale))
        .fold(f64::INFINITY, f64::min);
    let valid = entries.iter().take_while(|e| e.0 <= bound).count();
    Merged { entries, valid, bound }
}

fn solver_kind(spectra: &[ComponentSpectrum]) -> SolverKind {
    if spectra.iter().any(|s| s.solver == SolverKind::LanczosShiftInvert) {
        SolverKind::LanczosShiftInvert
    } else if spectra.iter().any(|s| s.solver == SolverKind::Lanczos) {
        SolverKind::Lanczos
    } else {
        SolverKind::Dense
    }
}

fn pairs_from(decomp: &Decomposition, spectra: &[ComponentSpectrum], merged: &Merged, count: usize, op: &LaplacianOperator) -> Vec<EigenPair> {
    merged.entries[..count]
        .iter()
        .map(|&(value, c, i)| {
            let g = &decomp.graphs[c];
            let (v, res) = residual(g, &spectra[c].vectors[i], spectra[c].values[i], op.scale);
            let mut vector = vec![0.0; op.n()];
            let nv = norm(&v);
            for (l, &gi) in g.members.iter().enumerate() {
                vector[gi] = v[l] / nv;
            }
            EigenPair { value, vector, residual: res, component: c }
        })
        .collect()
}

fn solve_component(g: &LocalGraph, k: usize, theta: f64, opts: &SolverOptions, idx: usize) -> Result<ComponentSpectrum> {
    if g.len() <= opts.dense_max || k >= g.len() {
        Ok(solve_dense(g))
    } else {
        solve_lanczos(g, k, theta, opts, opts.seed ^ (idx as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15))
    }
}

/// The `count` smallest eigenpairs of the scaled `L_rw`, ascending.
pub fn smallest_eigs(op: &LaplacianOperator, count: usize, opts: &SolverOptions) -> Result<EigenSolve> {
    let n = op.n();
    if count > n {
        return Err(Error::InvalidParameter(format!("requested {count} eigenvalues of a {n}-vertex graph")));
    }
    let theta = opts.shift.unwrap_or(0.25) / op.scale;
    let decomp = Decomposition::new(op);
    let spectra = decomp
        .graphs
        .iter()
        .enumerate()
        .map(|(c, g)| solve_component(g, count, theta, opts, c))
        .collect::<Result<Vec<_>>>()?;
    let merged = merge(&spectra, op.scale);
    let pairs = pairs_from(&decomp, &spectra, &merged, count.min(merged.valid), op);
    Ok(EigenSolve { converged: pairs.len() == count, pairs, solver: solver_kind(&spectra) })
}

/// Grow the computed spectrum until `K0` is determined and `K0 + M`
/// eigenvalues are known, then assemble the result.
pub fn adaptive_spectrum(op: &LaplacianOperator, policy: &DeltaPolicy, m: usize, opts: &SolverOptions) -> Result<SpectrumResult> {
    policy.require_ok()?;
    if m == 0 {
        return Err(Error::InvalidParameter("M must be at least 1".into()));
    }
    let start = Instant::now();
    let theta = opts.shift.unwrap_or(0.5 * policy.delta) / op.scale;
    let decomp = Decomposition::new(op);
    let mut wanted: Vec<usize> = decomp.graphs.iter().map(|g| (m + 8).min(g.len())).collect();
    let mut spectra: Vec<Option<ComponentSpectrum>> = decomp.graphs.iter().map(|_| None).collect();
    let mut rounds = 0;
    loop {
        for (c, g) in decomp.graphs.iter().enumerate() {
            let stale = spectra[c].as_ref().is_none_or(|s| !s.complete && s.values.len() < wanted[c]);
            if stale {
                spectra[c] = Some(solve_component(g, wanted[c], theta, opts, c)?);
            }
        }
        let done: Vec<ComponentSpectrum> = spectra.iter_mut().map(|s| s.take().unwrap()).collect();
        let merged = merge(&done, op.scale);
        let valid: Vec<f64> = merged.entries[..merged.valid].iter().map(|e| e.0).collect();
        let k0 = valid.iter().take_while(|&&v| v <= policy.delta).count();
        if k0 < valid.len() && valid.len() >= k0 + m {
            let count = k0 + m;
            let pairs = pairs_from(&decomp, &done, &merged, count, op);
            let eigenvalues: Vec<f64> = pairs.iter().map(|p| p.value).collect();
            let residuals: Vec<f64> = pairs.iter().map(|p| p.residual).collect();
            return Ok(SpectrumResult {
                edge: edge_eigenvalues(&eigenvalues, k0, m)?,
                k0,
                delta: policy.delta,
                residual_max: residuals.iter().copied().fold(0.0, f64::max),
                residuals,
                eigenvalues,
                solver: solver_kind(&done),
                wall_time_s: start.elapsed().as_secs_f64(),
                components: decomp.graphs.len(),
                growth_rounds: rounds,
            });
        }
        // grow every partial component whose largest computed value limits the valid prefix
        let mut grew = false;
        for (c, s) in done.iter().enumerate() {
            if !s.complete && floor_zero(s.max_value() * op.scale) <= merged.bound {
                let next = (2 * wanted[c]).min(decomp.graphs[c].len());
                if next > opts.growth_cap {
                    return Err(Error::GrowthCapReached { cap: opts.growth_cap, k0_lower_bound: k0 });
                }
                if next > wanted[c] {
                    wanted[c] = next;
                    grew = true;
                }
            }
        }
        if !grew {
            return Err(Error::InsufficientSpectrum { computed: valid.len() });
        }
        spectra = done.into_iter().map(Some).collect();
        rounds += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_hard_affinity, build_laplacian, GraphSpec};
    use crate::kernels::KernelSpec;
    use crate::sampling::{MetricOrder, PointCloud};

    fn path_op() -> LaplacianOperator {
        let c = PointCloud::from_scalars(&[0.0, 1.0, 2.0]).unwrap();
        let a = build_hard_affinity(&c, &GraphSpec::hard(1.0, MetricOrder::L2, KernelSpec::ConstantOne)).unwrap();
        build_laplacian(a, 1.0).unwrap()
    }

    #[test]
    fn three_point_path() {
        let s = smallest_eigs(&path_op(), 3, &SolverOptions::default()).unwrap();
        let v: Vec<f64> = s.pairs.iter().map(|p| p.value).collect();
        assert!(v[0].abs() < 1e-12);
        assert!((v[1] - 0.5).abs() < 1e-12);
        assert!((v[2] - 7.0 / 6.0).abs() < 1e-12);
        assert!(s.pairs.iter().all(|p| p.residual < 1e-12));
    }

    #[test]
    fn k0_counts_and_errors() {
        let p = DeltaPolicy::unchecked(0.5).unwrap();
        assert_eq!(compute_k0(&[0.0, 0.001, 2.1, 3.9], &p).unwrap(), 2);
        assert!(matches!(compute_k0(&[0.0, 0.4, 0.45], &p), Err(Error::InsufficientSpectrum { .. })));
        let sigma = SigmaDiag::new(vec![1.0]).unwrap();
        let bad = DeltaPolicy::checked(1.5, &sigma).unwrap();
        assert!(matches!(compute_k0(&[0.0, 3.0], &bad), Err(Error::DeltaViolatesConstraint { .. })));
    }

    #[test]
    fn edge_slice() {
        assert_eq!(edge_eigenvalues(&[0.0, 2.05, 4.1, 6.2], 1, 2).unwrap(), vec![2.05, 4.1]);
        assert!(edge_eigenvalues(&[0.0, 2.0], 1, 2).is_err());
    }

    #[test]
    fn default_delta_is_half_bound() {
        let sigma = SigmaDiag::new(vec![1.0, 4.0]).unwrap();
        let p = DeltaPolicy::for_sigma(&sigma);
        assert_eq!(p.delta, 0.125);
        assert!(p.constraint_ok);
    }

    #[test]
    fn envelope_cholesky_solves() {
        let c = PointCloud::from_scalars(&(0..60).map(|i| (i as f64 * 0.37).sin() * 3.0).collect::<Vec<_>>()).unwrap();
        let a = build_hard_affinity(&c, &GraphSpec::hard(1.5, MetricOrder::L2, KernelSpec::ConstantOne)).unwrap();
        let op = build_laplacian(a, 1.0).unwrap();
        let d = Decomposition::new(&op);
        let g = &d.graphs[0];
        let order = g.rcm_order();
        let mut sorted = order.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..g.len()).collect::<Vec<_>>());
        let chol = EnvelopeCholesky::factor(g, &order, 0.1).unwrap();
        let b: Vec<f64> = (0..g.len()).map(|i| (i as f64).cos()).collect();
        let mut x: Vec<f64> = order.iter().map(|&l| b[l]).collect();
        chol.solve(&mut x);
        let mut sol = vec![0.0; g.len()];
        for (k, &l) in order.iter().enumerate() {
            sol[l] = x[k];
        }
        let mut s = vec![0.0; g.len()];
        g.apply_s(&sol, &mut s);
        for i in 0..g.len() {
            let lhs = 1.1 * sol[i] - s[i];
            assert!((lhs - b[i]).abs() < 1e-10);
        }
    }
}
