//! Repetition drivers for the convergence, radius-sweep, detection, bias and
//! theory runs, with their CSV/JSON/SVG artifacts and pass/fail checks.

pub mod config;
pub mod svg;

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use config::{DeltaSetting, ExperimentConfig, Mode, Radius};
pub use svg::{emit_svg, LineSeries, PlotTable, ViolinGroup};

use crate::continuum::{enumerate_spectrum, ContinuumSpectrum, EigenFunction};
use crate::eigen::{adaptive_spectrum, DeltaPolicy, SolverOptions, SpectrumResult};
use crate::error::{Error, Result};
use crate::graph::{build_hard_affinity, build_laplacian, GraphSpec};
use crate::kernels::{compute_moments, MomentPair};
use crate::operators::{bias_slope_check, BiasReport, DeterministicOperator};
use crate::quadrature::{integrate_interval, Tolerance};
use crate::sampling::{sample_gaussian_rep, sample_signal_plus_noise_rep, Embedding, PointCloud, SignalModel};
use crate::sturm::{signal_density_for, solve_weighted_neumann};

/// Outcome of one repetition: edge eigenvalues or the failure message.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RepOutcome {
    pub repetition: u64,
    #[serde(rename = "K0")]
    pub k0: Option<usize>,
    pub edge: Option<Vec<f64>>,
    pub error: Option<String>,
    pub wall_time_s: f64,
}

impl RepOutcome {
    fn from_result(repetition: u64, res: Result<SpectrumResult>) -> Self {
        match res {
            Ok(s) => Self { repetition, k0: Some(s.k0), edge: Some(s.edge), error: None, wall_time_s: s.wall_time_s },
            Err(e) => {
                warn!("repetition {repetition} failed: {e}");
                Self { repetition, k0: None, edge: None, error: Some(e.to_string()), wall_time_s: 0.0 }
            }
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub sd: f64,
    pub q05: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub q95: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let sd = if v.len() > 1 { (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() } else { 0.0 };
        Some(Self {
            mean,
            sd,
            q05: quantile(&v, 0.05),
            q25: quantile(&v, 0.25),
            median: quantile(&v, 0.5),
            q75: quantile(&v, 0.75),
            q95: quantile(&v, 0.95),
        })
    }
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    if i + 1 < sorted.len() {
        sorted[i] + frac * (sorted[i + 1] - sorted[i])
    } else {
        sorted[i]
    }
}

/// Pass/fail line produced by `--check`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckOutcome {
    fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self { name: name.into(), passed, detail: detail.into() }
    }
}

impl std::fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[{}] {}: {}", if self.passed { "PASS" } else { "FAIL" }, self.name, self.detail)
    }
}

/// `Σ_k |λ_k - μ_k| / (M μ_k)`.
pub fn relative_error(edge: &[f64], theory: &[f64]) -> f64 {
    let m = edge.len() as f64;
    edge.iter().zip(theory).map(|(l, mu)| (l - mu).abs() / (m * mu)).sum()
}

/// `𝕋 = Σ_k |λ_k - ν_k| / M`.
pub fn detection_statistic(edge: &[f64], reference: &[f64]) -> f64 {
    let m = edge.len() as f64;
    edge.iter().zip(reference).map(|(l, nu)| (l - nu).abs() / m).sum()
}

fn delta_policy(config: &ExperimentConfig) -> Result<DeltaPolicy> {
    let sigma = config.sigma_diag()?;
    match config.delta {
        DeltaSetting::Auto => Ok(DeltaPolicy::for_sigma(&sigma)),
        DeltaSetting::Fixed(v) => DeltaPolicy::checked(v, &sigma),
    }
}

/// Hard-kernel edge spectrum of one cloud.
pub fn edge_spectrum(
    cloud: &PointCloud,
    spec: &GraphSpec,
    moments: &MomentPair,
    policy: &DeltaPolicy,
    m: usize,
    opts: &SolverOptions,
) -> Result<SpectrumResult> {
    let aff = build_hard_affinity(cloud, spec)?;
    let op = build_laplacian(aff, moments.scale_factor(spec.radius))?;
    adaptive_spectrum(&op, policy, m, opts)
}

/// `μ_2, …, μ_{M+1}`.
pub fn theory_edge(config: &ExperimentConfig) -> Result<Vec<f64>> {
    Ok(enumerate_spectrum(&config.sigma_diag()?, config.m + 1).values[1..=config.m].to_vec())
}

fn gaussian_reps(config: &ExperimentConfig, radius: f64, seed: u64) -> Result<Vec<RepOutcome>> {
    let sigma = config.sigma_diag()?;
    let moments = compute_moments(config.d, config.p, &config.kernel)?;
    let policy = delta_policy(config)?;
    let spec = config.graph_spec(radius);
    let opts = config.solver_options();
    Ok((0..config.repetitions as u64)
        .into_par_iter()
        .map(|rep| {
            let res = sample_gaussian_rep(config.n, &sigma, seed, rep)
                .and_then(|cloud| edge_spectrum(&cloud, &spec, &moments, &policy, config.m, &opts));
            RepOutcome::from_result(rep, res)
        })
        .collect())
}

/// Distinct seed per sweep cell, so cells do not share samples.
fn cell_seed(seed: u64, cell: u64) -> u64 {
    if cell == 0 {
        return seed;
    }
    let mut z = seed ^ cell.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConvergenceTable {
    pub radius: f64,
    #[serde(rename = "M")]
    pub m: usize,
    pub n: usize,
    /// `μ_{k+1}` for `k = 1..M`.
    pub theory: Vec<f64>,
    pub reps: Vec<RepOutcome>,
    pub failed: usize,
    /// Per-`k` statistics over successful repetitions.
    pub summary: Vec<Option<Summary>>,
    pub max_k0: Option<usize>,
}

impl ConvergenceTable {
    pub fn edge_matrix(&self) -> Vec<&Vec<f64>> {
        self.reps.iter().filter_map(|r| r.edge.as_ref()).collect()
    }

    pub fn column(&self, k: usize) -> Vec<f64> {
        self.edge_matrix().iter().map(|e| e[k]).collect()
    }
}

pub fn run_convergence(config: &ExperimentConfig) -> Result<ConvergenceTable> {
    let radius = config.r_n.values()[0];
    let reps = gaussian_reps(config, radius, config.seed)?;
    let mut table = ConvergenceTable {
        radius,
        m: config.m,
        n: config.n,
        theory: theory_edge(config)?,
        failed: reps.iter().filter(|r| r.edge.is_none()).count(),
        max_k0: reps.iter().filter_map(|r| r.k0).max(),
        reps,
        summary: vec![],
    };
    table.summary = (0..config.m).map(|k| Summary::of(&table.column(k))).collect();
    Ok(table)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepRow {
    pub r_n: f64,
    pub mean_rel_error: f64,
    pub sd_rel_error: f64,
    pub successful: usize,
    pub failed: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    pub theory: Vec<f64>,
}

pub fn run_radius_sweep(config: &ExperimentConfig) -> Result<SweepTable> {
    let theory = theory_edge(config)?;
    let mut rows = Vec::new();
    for (i, r) in config.r_n.values().into_iter().enumerate() {
        let reps = gaussian_reps(config, r, cell_seed(config.seed, i as u64))?;
        let errs: Vec<f64> = reps.iter().filter_map(|o| o.edge.as_ref()).map(|e| relative_error(e, &theory)).collect();
        let s = Summary::of(&errs);
        rows.push(SweepRow {
            r_n: r,
            mean_rel_error: s.as_ref().map_or(f64::NAN, |s| s.mean),
            sd_rel_error: s.as_ref().map_or(f64::NAN, |s| s.sd),
            successful: errs.len(),
            failed: reps.len() - errs.len(),
        });
    }
    Ok(SweepTable { rows, theory })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DetectionCell {
    pub model: String,
    pub noise_sigma: f64,
    /// Mean of `𝕋` over successful repetitions.
    #[serde(rename = "T")]
    pub t_value: f64,
    #[serde(rename = "T_sd")]
    pub t_sd: f64,
    /// `Σ |2k/σ̂² - ν_{k+1}| / M` with `σ̂² = Var ι(z) + σ²`.
    pub prediction: f64,
    pub delta: f64,
    pub reps: Vec<RepOutcome>,
    pub failed: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DetectionReport {
    #[serde(rename = "M")]
    pub m: usize,
    /// `ν_{k+1}` for `k = 1..M`, per model.
    pub references: BTreeMap<String, Vec<f64>>,
    pub cells: Vec<DetectionCell>,
}

pub fn model_name(e: &Embedding) -> String {
    match e {
        Embedding::Identity => "identity".into(),
        Embedding::Sine => "sine".into(),
        Embedding::Tabulated(_) => "tabulated".into(),
    }
}

/// `Var ι(Z)` for `Z ~ Unif[0, 1]`.
pub fn embedding_variance(e: &Embedding) -> Result<f64> {
    let tol = Tolerance::with_rel(1e-12);
    let m1 = integrate_interval(|z| e.apply(z), 0.0, 1.0, tol)?.value;
    let m2 = integrate_interval(|z| e.apply(z).powi(2), 0.0, 1.0, tol)?.value;
    Ok(m2 - m1 * m1)
}

/// `ν_2, …, ν_{M+1}` of the clean signal density.
pub fn reference_spectrum(e: &Embedding, m: usize, nodes: usize) -> Result<Vec<f64>> {
    let w = signal_density_for(e, nodes)?;
    let nu = solve_weighted_neumann(&w, m + 1)?;
    Ok(nu[1..].to_vec())
}

/// `Σ |2k/σ̂² - ν_{k+1}| / M`.
pub fn large_noise_prediction(noise_var: f64, reference: &[f64]) -> f64 {
    let m = reference.len() as f64;
    reference.iter().enumerate().map(|(k, nu)| (2.0 * (k + 1) as f64 / noise_var - nu).abs() / m).sum()
}

pub fn run_detection(config: &ExperimentConfig) -> Result<DetectionReport> {
    run_detection_with(config, None)
}

/// As [`run_detection`], optionally with caller-supplied reference spectra
/// keyed by model name.
pub fn run_detection_with(config: &ExperimentConfig, supplied: Option<&BTreeMap<String, Vec<f64>>>) -> Result<DetectionReport> {
    let moments = compute_moments(1, config.p, &config.kernel)?;
    let radius = config.r_n.values()[0];
    let spec = config.graph_spec(radius);
    let opts = config.solver_options();
    let mut references = BTreeMap::new();
    let mut cells = Vec::new();
    for (mi, model) in config.detect.models.iter().enumerate() {
        let name = model_name(model);
        let nu = match supplied {
            Some(map) => map.get(&name).cloned().ok_or_else(|| Error::MissingReference(name.clone()))?,
            None => reference_spectrum(model, config.m, config.detect.reference_nodes)?,
        };
        if nu.len() < config.m {
            return Err(Error::MissingReference(format!("{name}: {} values for M = {}", nu.len(), config.m)));
        }
        let signal_var = embedding_variance(model)?;
        for (si, &noise) in config.detect.noise_sigmas.iter().enumerate() {
            let var = signal_var + noise * noise;
            let delta = match config.delta {
                DeltaSetting::Auto => 0.5 * (1.0 / var).min(nu[0]),
                DeltaSetting::Fixed(v) => v,
            };
            let policy = DeltaPolicy::unchecked(delta)?;
            let sm = SignalModel::new(model.clone(), noise)?;
            let seed = cell_seed(config.seed, (mi * 1000 + si) as u64 + 1);
            let reps: Vec<RepOutcome> = (0..config.repetitions as u64)
                .into_par_iter()
                .map(|rep| {
                    let res = sample_signal_plus_noise_rep(config.n, &sm, seed, rep)
                        .and_then(|cloud| edge_spectrum(&cloud, &spec, &moments, &policy, config.m, &opts));
                    RepOutcome::from_result(rep, res)
                })
                .collect();
            let ts: Vec<f64> =
                reps.iter().filter_map(|r| r.edge.as_ref()).map(|e| detection_statistic(e, &nu[..config.m])).collect();
            let s = Summary::of(&ts);
            cells.push(DetectionCell {
                model: name.clone(),
                noise_sigma: noise,
                t_value: s.as_ref().map_or(f64::NAN, |s| s.mean),
                t_sd: s.as_ref().map_or(f64::NAN, |s| s.sd),
                prediction: large_noise_prediction(var, &nu[..config.m]),
                delta,
                failed: reps.len() - ts.len(),
                reps,
            });
        }
        references.insert(name, nu[..config.m].to_vec());
    }
    Ok(DetectionReport { m: config.m, references, cells })
}

pub fn run_theory(config: &ExperimentConfig) -> Result<ContinuumSpectrum> {
    Ok(enumerate_spectrum(&config.sigma_diag()?, config.theory.count))
}

pub fn run_bias(config: &ExperimentConfig) -> Result<BiasReport> {
    let sigma = config.sigma_diag()?;
    let radii = &config.bias.radii;
    let op = DeterministicOperator::new(sigma.clone(), config.graph_spec(radii[0]))?;
    let phi = EigenFunction::new(config.bias.index.clone(), sigma)?;
    bias_slope_check(&op, &phi, radii, config.bias.bulk_n)
}

/// Every value of `{Σ 2kᵢ/σᵢ²}` up to the `count`-th, by exhaustive listing.
fn brute_force_spectrum(config: &ExperimentConfig, count: usize) -> Result<Vec<f64>> {
    let sigma = config.sigma_diag()?;
    let w: Vec<f64> = sigma.variances().iter().map(|v| 2.0 / v).collect();
    let w_min = w.iter().copied().fold(f64::INFINITY, f64::min);
    // the count-th value is at most (count - 1)·w_min, attained along the smallest axis
    let cap = (count.saturating_sub(1)) as f64 * w_min;
    let mut out = Vec::new();
    let mut idx = vec![0usize; w.len()];
    loop {
        let v: f64 = idx.iter().zip(&w).map(|(k, wi)| *k as f64 * wi).sum();
        if v <= cap * (1.0 + 1e-12) {
            out.push(v);
        }
        let mut i = 0;
        loop {
            if i == idx.len() {
                out.sort_by(f64::total_cmp);
                out.truncate(count);
                return Ok(out);
            }
            idx[i] += 1;
            if idx[i] as f64 * w[i] <= cap * (1.0 + 1e-12) {
                break;
            }
            idx[i] = 0;
            i += 1;
        }
    }
}

pub fn check_theory(config: &ExperimentConfig, spectrum: &ContinuumSpectrum) -> Result<Vec<CheckOutcome>> {
    let oracle = brute_force_spectrum(config, spectrum.values.len())?;
    let passed = oracle.len() == spectrum.values.len()
        && oracle.iter().zip(&spectrum.values).all(|(a, b)| (a - b).abs() <= 1e-12 * a.max(1.0));
    Ok(vec![CheckOutcome::new(
        "continuum spectrum matches exhaustive listing",
        passed,
        format!("{} values, exact arithmetic: {}", spectrum.values.len(), spectrum.exact),
    )])
}

pub fn check_convergence(table: &ConvergenceTable) -> Vec<CheckOutcome> {
    let mut out = Vec::new();
    for (k, (s, mu)) in table.summary.iter().zip(&table.theory).enumerate() {
        let (passed, detail) = match s {
            Some(s) => {
                let rel = (s.mean - mu).abs() / mu;
                (rel <= 0.10, format!("mean {:.4} vs {mu:.4} (rel {:.2}%)", s.mean, 100.0 * rel))
            }
            None => (false, "no successful repetitions".into()),
        };
        out.push(CheckOutcome::new(format!("edge eigenvalue k={} within 10% of theory", k + 1), passed, detail));
    }
    let bound = (table.n as f64).powf(0.78);
    out.push(CheckOutcome::new(
        "K0 <= n^0.78",
        table.max_k0.is_some_and(|k| k as f64 <= bound),
        format!("max K0 {:?}, bound {bound:.1}", table.max_k0),
    ));
    out
}

/// Some interior radius beats both ends of the sweep.
pub fn check_sweep(table: &SweepTable) -> Vec<CheckOutcome> {
    let rows = &table.rows;
    if rows.len() < 3 {
        return vec![CheckOutcome::new("sweep U-shape", false, "need at least 3 radii")];
    }
    let (first, last) = (rows[0].mean_rel_error, rows[rows.len() - 1].mean_rel_error);
    let best = rows[1..rows.len() - 1].iter().min_by(|a, b| a.mean_rel_error.total_cmp(&b.mean_rel_error)).unwrap();
    vec![CheckOutcome::new(
        "sweep U-shape",
        best.mean_rel_error < first && best.mean_rel_error < last,
        format!(
            "r={}: {:.4} vs r={}: {:.4}, r={}: {:.4}",
            best.r_n,
            best.mean_rel_error,
            rows[0].r_n,
            first,
            rows[rows.len() - 1].r_n,
            last
        ),
    )]
}

pub fn check_detection(report: &DetectionReport) -> Vec<CheckOutcome> {
    let mut out = Vec::new();
    for name in report.references.keys() {
        let cells: Vec<&DetectionCell> = report.cells.iter().filter(|c| &c.model == name).collect();
        let at = |s: f64| cells.iter().find(|c| c.noise_sigma == s);
        if let (Some(c0), Some(c1)) = (at(0.0), at(1.0)) {
            out.push(CheckOutcome::new(
                format!("{name}: T(0) < 0.5 T(1)"),
                c0.t_value < 0.5 * c1.t_value,
                format!("T(0) = {:.4}, T(1) = {:.4}", c0.t_value, c1.t_value),
            ));
        }
        if let Some(big) = cells.iter().filter(|c| c.noise_sigma >= 3.0).max_by(|a, b| a.noise_sigma.total_cmp(&b.noise_sigma)) {
            let rel = (big.t_value - big.prediction).abs() / big.prediction;
            out.push(CheckOutcome::new(
                format!("{name}: T(sigma={}) within 15% of large-noise prediction", big.noise_sigma),
                rel <= 0.15,
                format!("T = {:.4}, prediction {:.4} (rel {:.2}%)", big.t_value, big.prediction, 100.0 * rel),
            ));
        }
    }
    out
}

pub fn check_bias(report: &BiasReport) -> Vec<CheckOutcome> {
    match report.slope {
        None => vec![CheckOutcome::new("bias slope", report.exact_zero, "residual is exactly zero")],
        Some(s) => vec![CheckOutcome::new("bias log-log slope in [1.7, 2.3]", (1.7..=2.3).contains(&s), format!("slope {s:.4}"))],
    }
}

fn fmt_f(v: f64) -> String {
    format!("{v:.12e}")
}

pub fn write_convergence_csv(table: &ConvergenceTable, w: impl std::io::Write) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let mut head = vec!["row".to_string(), "K0".to_string()];
    head.extend((1..=table.m).map(|k| format!("lambda_{k}")));
    head.push("status".into());
    wtr.write_record(&head)?;
    let mut theory = vec!["theory".to_string(), String::new()];
    theory.extend(table.theory.iter().map(|v| fmt_f(*v)));
    theory.push("theory".into());
    wtr.write_record(&theory)?;
    for r in &table.reps {
        let mut rec = vec![r.repetition.to_string(), r.k0.map(|k| k.to_string()).unwrap_or_default()];
        match &r.edge {
            Some(e) => {
                rec.extend(e.iter().map(|v| fmt_f(*v)));
                rec.push("ok".into());
            }
            None => {
                rec.extend((0..table.m).map(|_| String::new()));
                rec.push("failed".into());
            }
        }
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_sweep_csv(table: &SweepTable, w: impl std::io::Write) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["r_n", "mean_rel_error", "sd_rel_error", "successful", "failed"])?;
    for r in &table.rows {
        wtr.write_record([
            r.r_n.to_string(),
            fmt_f(r.mean_rel_error),
            fmt_f(r.sd_rel_error),
            r.successful.to_string(),
            r.failed.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_detection_csv(report: &DetectionReport, w: impl std::io::Write) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["model", "noise_sigma", "T", "T_sd", "prediction", "delta", "successful", "failed"])?;
    for c in &report.cells {
        wtr.write_record([
            c.model.clone(),
            c.noise_sigma.to_string(),
            fmt_f(c.t_value),
            fmt_f(c.t_sd),
            fmt_f(c.prediction),
            fmt_f(c.delta),
            (c.reps.len() - c.failed).to_string(),
            c.failed.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_bias_csv(report: &BiasReport, w: impl std::io::Write) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["r", "e_r"])?;
    for (r, e) in report.radii.iter().zip(&report.errors) {
        wtr.write_record([r.to_string(), fmt_f(*e)])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn convergence_plot(table: &ConvergenceTable) -> PlotTable {
    PlotTable::Violin {
        title: format!("Edge eigenvalues, n={}, r={}", table.n, table.radius),
        y_label: "eigenvalue".into(),
        groups: (0..table.m)
            .map(|k| ViolinGroup { label: format!("k={}", k + 1), samples: table.column(k), marker: Some(table.theory[k]) })
            .collect(),
    }
}

pub fn sweep_plot(table: &SweepTable) -> PlotTable {
    PlotTable::Line {
        title: "Mean relative error against radius".into(),
        x_label: "r_n".into(),
        y_label: "relative error".into(),
        log_x: true,
        log_y: false,
        series: vec![LineSeries {
            label: "mean relative error".into(),
            points: table.rows.iter().map(|r| (r.r_n, r.mean_rel_error)).collect(),
            dashed: false,
        }],
    }
}

pub fn detection_plot(report: &DetectionReport) -> PlotTable {
    let mut series = Vec::new();
    for name in report.references.keys() {
        let cells: Vec<&DetectionCell> = report.cells.iter().filter(|c| &c.model == name).collect();
        series.push(LineSeries {
            label: format!("T, {name}"),
            points: cells.iter().map(|c| (c.noise_sigma, c.t_value)).collect(),
            dashed: false,
        });
        series.push(LineSeries {
            label: format!("prediction, {name}"),
            points: cells.iter().filter(|c| c.noise_sigma > 0.0).map(|c| (c.noise_sigma, c.prediction)).collect(),
            dashed: true,
        });
    }
    PlotTable::Line {
        title: "Detection statistic against noise level".into(),
        x_label: "noise sigma".into(),
        y_label: "T".into(),
        log_x: false,
        log_y: false,
        series,
    }
}

pub fn bias_plot(report: &BiasReport) -> PlotTable {
    PlotTable::Line {
        title: "Operator bias against radius".into(),
        x_label: "r".into(),
        y_label: "e(r)".into(),
        log_x: true,
        log_y: true,
        series: vec![LineSeries {
            label: "e(r)".into(),
            points: report.radii.iter().copied().zip(report.errors.iter().copied()).collect(),
            dashed: false,
        }],
    }
}

/// Result of one run, ready to be written.
#[derive(Clone, Debug)]
pub enum RunOutput {
    Converge(ConvergenceTable),
    Sweep(SweepTable),
    Detect(DetectionReport),
    Bias(BiasReport),
    Theory(ContinuumSpectrum),
}

pub struct RunRecord {
    pub output: RunOutput,
    pub checks: Vec<CheckOutcome>,
    pub wall_time_s: f64,
}

pub fn run(config: &ExperimentConfig) -> Result<RunRecord> {
    config.validate()?;
    let start = Instant::now();
    let (output, checks) = match config.mode {
        Mode::Converge => {
            let t = run_convergence(config)?;
            let c = check_convergence(&t);
            (RunOutput::Converge(t), c)
        }
        Mode::SweepR => {
            let t = run_radius_sweep(config)?;
            let c = check_sweep(&t);
            (RunOutput::Sweep(t), c)
        }
        Mode::Detect => {
            let t = run_detection(config)?;
            let c = check_detection(&t);
            (RunOutput::Detect(t), c)
        }
        Mode::Bias => {
            let t = run_bias(config)?;
            let c = check_bias(&t);
            (RunOutput::Bias(t), c)
        }
        Mode::Theory => {
            let t = run_theory(config)?;
            let c = check_theory(config, &t)?;
            (RunOutput::Theory(t), c)
        }
    };
    Ok(RunRecord { output, checks, wall_time_s: start.elapsed().as_secs_f64() })
}

#[derive(Serialize)]
struct Environment {
    crate_version: &'static str,
    os: &'static str,
    arch: &'static str,
    threads: usize,
}

/// Write the mode's CSV, an SVG sibling when `svg` is set, and `run.json`.
pub fn write_outputs(config: &ExperimentConfig, record: &RunRecord, dir: &Path, svg: bool) -> Result<Vec<std::path::PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut emit = |name: &str, bytes: Vec<u8>| -> Result<()> {
        let path = dir.join(name);
        std::fs::write(&path, bytes)?;
        written.push(path);
        Ok(())
    };
    let mut buf = Vec::new();
    let (csv_name, plot, details) = match &record.output {
        RunOutput::Converge(t) => {
            write_convergence_csv(t, &mut buf)?;
            ("edge_eigs.csv", Some(convergence_plot(t)), serde_json::to_value(t)?)
        }
        RunOutput::Sweep(t) => {
            write_sweep_csv(t, &mut buf)?;
            ("sweep.csv", Some(sweep_plot(t)), serde_json::to_value(t)?)
        }
        RunOutput::Detect(t) => {
            write_detection_csv(t, &mut buf)?;
            ("detect.csv", Some(detection_plot(t)), serde_json::to_value(t)?)
        }
        RunOutput::Bias(t) => {
            write_bias_csv(t, &mut buf)?;
            ("bias.csv", Some(bias_plot(t)), serde_json::to_value(t)?)
        }
        RunOutput::Theory(s) => {
            s.write_csv(&mut buf)?;
            ("spectrum.csv", None, serde_json::json!({ "values": s.values, "exact": s.exact }))
        }
    };
    emit(csv_name, buf)?;
    if let RunOutput::Detect(t) = &record.output {
        for (name, nu) in &t.references {
            let mut b = Vec::new();
            let mut wtr = csv::Writer::from_writer(&mut b);
            wtr.write_record(["k", "nu_k"])?;
            for (k, v) in nu.iter().enumerate() {
                wtr.write_record([(k + 2).to_string(), fmt_f(*v)])?;
            }
            wtr.flush()?;
            drop(wtr);
            emit(&format!("reference_{name}.csv"), b)?;
        }
    }
    if let RunOutput::Bias(t) = &record.output {
        emit("bias.json", serde_json::to_vec_pretty(&serde_json::json!({ "slope": t.slope, "exact_zero": t.exact_zero, "ratios": t.ratios }))?)?;
    }
    if svg {
        if let Some(p) = plot {
            emit(&csv_name.replace(".csv", ".svg"), emit_svg(&p)?.into_bytes())?;
        }
    }
    let run_json = serde_json::json!({
        "config": config,
        "environment": Environment {
            crate_version: env!("CARGO_PKG_VERSION"),
            os: std::env::consts::OS,
            arch: std::env::consts::ARCH,
            threads: rayon::current_num_threads(),
        },
        "wall_time_s": record.wall_time_s,
        "checks": record.checks,
        "result": details,
    });
    emit("run.json", serde_json::to_vec_pretty(&run_json)?)?;
    Ok(written)
}
