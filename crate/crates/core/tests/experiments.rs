use std::collections::BTreeMap;

use rgg_edge::experiments::{
    self, check_sweep, convergence_plot, detection_statistic, edge_spectrum, emit_svg, relative_error, run_convergence,
    run_detection_with, run_radius_sweep, run_theory, sweep_plot, write_convergence_csv, write_outputs, write_sweep_csv,
    DeltaSetting, PlotTable, Radius, ViolinGroup,
};
use rgg_edge::sampling::sample_gaussian_rep;
use rgg_edge::{compute_moments, DeltaPolicy, Embedding, Error, ExperimentConfig, Mode};

fn small(mode: Mode) -> ExperimentConfig {
    let mut c = ExperimentConfig::preset("fig1", mode).unwrap();
    c.n = 600;
    c.r_n = Radius::Single(0.15);
    c.repetitions = 4;
    c
}

fn csv_bytes(c: &ExperimentConfig) -> Vec<u8> {
    let mut buf = Vec::new();
    write_convergence_csv(&run_convergence(c).unwrap(), &mut buf).unwrap();
    buf
}

#[test]
fn same_config_gives_identical_csv() {
    let c = small(Mode::Converge);
    assert_eq!(csv_bytes(&c), csv_bytes(&c));
    let mut s = small(Mode::SweepR);
    s.r_n = Radius::Sweep(vec![0.1, 0.2, 0.4]);
    s.repetitions = 2;
    let write = |s: &ExperimentConfig| {
        let mut b = Vec::new();
        write_sweep_csv(&run_radius_sweep(s).unwrap(), &mut b).unwrap();
        b
    };
    assert_eq!(write(&s), write(&s));
    let mut other = c.clone();
    other.seed += 1;
    assert_ne!(csv_bytes(&c), csv_bytes(&other));
}

#[test]
fn repetitions_do_not_depend_on_execution_order() {
    let c = small(Mode::Converge);
    let table = run_convergence(&c).unwrap();
    let sigma = c.sigma_diag().unwrap();
    let moments = compute_moments(c.d, c.p, &c.kernel).unwrap();
    let policy = DeltaPolicy::for_sigma(&sigma);
    let spec = c.graph_spec(0.15);
    for rep in (0..c.repetitions as u64).rev() {
        let cloud = sample_gaussian_rep(c.n, &sigma, c.seed, rep).unwrap();
        let alone = edge_spectrum(&cloud, &spec, &moments, &policy, c.m, &c.solver_options()).unwrap();
        let stored = &table.reps[rep as usize];
        assert_eq!(stored.repetition, rep);
        assert_eq!(stored.k0, Some(alone.k0));
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(stored.edge.as_ref().unwrap()), bits(&alone.edge));
    }
    // fewer repetitions reproduce a prefix
    let mut fewer = c.clone();
    fewer.repetitions = 2;
    let head = run_convergence(&fewer).unwrap();
    for (a, b) in head.reps.iter().zip(&table.reps) {
        assert_eq!(a.edge, b.edge);
    }
}

#[test]
fn relative_error_recovers_injected_perturbation() {
    let theory: Vec<f64> = (1..=6).map(|k| 2.0 * k as f64).collect();
    for eps in [0.0, 1e-6, 0.03, 0.25] {
        let edge: Vec<f64> = theory.iter().map(|mu| mu * (1.0 + eps)).collect();
        // forming μ(1+ε) rounds at the scale of μ, so the error is absolute
        assert!((relative_error(&edge, &theory) - eps).abs() <= 8.0 * f64::EPSILON);
    }
    let mixed: Vec<f64> = theory.iter().enumerate().map(|(k, mu)| if k % 2 == 0 { mu * 1.1 } else { mu * 0.9 }).collect();
    assert!((relative_error(&mixed, &theory) - 0.1).abs() < 1e-15);
}

#[test]
fn detection_statistic_vanishes_on_reference() {
    let nu = [3.1, 7.4, 12.0, 19.5];
    assert_eq!(detection_statistic(&nu, &nu), 0.0);
    let shifted: Vec<f64> = nu.iter().map(|v| v + 0.5).collect();
    assert!((detection_statistic(&shifted, &nu) - 0.5).abs() < 1e-15);
}

#[test]
fn tiny_connected_run_has_one_column() {
    let mut c = small(Mode::Converge);
    c.n = 50;
    c.m = 1;
    c.r_n = Radius::Single(1.0);
    c.repetitions = 3;
    let t = run_convergence(&c).unwrap();
    assert_eq!(t.failed, 0);
    assert_eq!(t.theory, vec![2.0]);
    assert!(t.edge_matrix().iter().all(|e| e.len() == 1));
    assert_eq!(t.summary.len(), 1);
}

#[test]
fn single_radius_single_rep_gives_one_row() {
    let mut c = small(Mode::SweepR);
    c.r_n = Radius::Single(0.2);
    c.repetitions = 1;
    let t = run_radius_sweep(&c).unwrap();
    assert_eq!(t.rows.len(), 1);
    assert_eq!((t.rows[0].successful, t.rows[0].failed), (1, 0));
    assert!(!check_sweep(&t)[0].passed);
}

#[test]
fn theory_reference_spectra() {
    let mut c = ExperimentConfig::preset("fig1", Mode::Theory).unwrap();
    c.theory.count = 7;
    assert_eq!(run_theory(&c).unwrap().values, vec![0.0, 2.0, 4.0, 6.0, 8.0, 10.0, 12.0]);
    c.d = 2;
    c.sigma = vec![1.0];
    c.theory.count = 10;
    let s = run_theory(&c).unwrap();
    assert_eq!(s.groups.iter().map(|g| g.multiplicity).collect::<Vec<_>>(), vec![1, 2, 3, 4]);
    c.sigma = vec![1.0, 2f64.sqrt()];
    c.theory.count = 12;
    let s = run_theory(&c).unwrap();
    assert_eq!(s.values, vec![0.0, 1.0, 2.0, 2.0, 3.0, 3.0, 4.0, 4.0, 4.0, 5.0, 5.0, 5.0]);
    for g in &s.groups {
        assert_eq!(g.multiplicity, (g.value as usize) / 2 + 1);
    }
    c.theory.count = 1;
    assert_eq!(run_theory(&c).unwrap().values, vec![0.0]);
}

#[test]
fn config_round_trips_through_toml() {
    for mode in [Mode::Converge, Mode::SweepR, Mode::Detect, Mode::Bias, Mode::Theory] {
        let c = ExperimentConfig::preset("fig1", mode).unwrap();
        let text = c.to_toml_string().unwrap();
        assert_eq!(ExperimentConfig::from_toml_str(&text).unwrap(), c);
    }
    let text = r#"
mode = "converge"
n = 800
d = 2
sigma = [1.0, 1.5]
r_n = 0.1
M = 3
delta = 0.2
repetitions = 5
seed = 9
"#;
    let c = ExperimentConfig::from_toml_str(text).unwrap();
    assert_eq!(c.delta, DeltaSetting::Fixed(0.2));
    assert_eq!(c.sigma_diag().unwrap().variances(), &[1.0, 2.25]);
    assert!(ExperimentConfig::from_toml_str(&text.replace("M = 3", "M = 0")).is_err());
    assert!(ExperimentConfig::from_toml_str(&text.replace("repetitions = 5", "repetitions = 0")).is_err());
    assert!(ExperimentConfig::from_toml_str(&text.replace("r_n = 0.1", "r_n = [0.1, 0.3, 0.2]")).is_err());
    assert!(ExperimentConfig::from_toml_str(&format!("{text}\nbogus = 1\n")).is_err());
}

#[test]
fn svg_structure_and_determinism() {
    let c = small(Mode::Converge);
    let t = run_convergence(&c).unwrap();
    let a = emit_svg(&convergence_plot(&t)).unwrap();
    let b = emit_svg(&convergence_plot(&t)).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.matches(r#"<g class="violin">"#).count(), c.m);
    assert!(a.starts_with("<svg") && a.trim_end().ends_with("</svg>"));

    let mut s = small(Mode::SweepR);
    s.r_n = Radius::Sweep(vec![0.1, 0.2, 0.4]);
    s.repetitions = 1;
    let line = emit_svg(&sweep_plot(&run_radius_sweep(&s).unwrap())).unwrap();
    assert_eq!(line.matches("<polyline").count(), 1);
}

#[test]
fn empty_tables_are_rejected() {
    let empty = PlotTable::Violin { title: "t".into(), y_label: "y".into(), groups: vec![] };
    assert!(matches!(emit_svg(&empty), Err(Error::EmptyTable)));
    let hollow = PlotTable::Violin {
        title: "t".into(),
        y_label: "y".into(),
        groups: vec![ViolinGroup { label: "a".into(), samples: vec![], marker: None }],
    };
    assert!(matches!(emit_svg(&hollow), Err(Error::EmptyTable)));
    let no_lines = PlotTable::Line {
        title: "t".into(),
        x_label: "x".into(),
        y_label: "y".into(),
        log_x: false,
        log_y: false,
        series: vec![],
    };
    assert!(matches!(emit_svg(&no_lines), Err(Error::EmptyTable)));
}

#[test]
fn detection_requires_every_reference() {
    let mut c = ExperimentConfig::preset("fig1", Mode::Detect).unwrap();
    c.n = 300;
    c.repetitions = 1;
    c.detect.models = vec![Embedding::Identity, Embedding::Sine];
    c.detect.noise_sigmas = vec![0.0];
    let mut refs = BTreeMap::new();
    refs.insert("identity".to_string(), vec![1.0; c.m]);
    assert!(matches!(run_detection_with(&c, Some(&refs)), Err(Error::MissingReference(_))));
    refs.insert("sine".to_string(), vec![1.0; c.m - 1]);
    assert!(matches!(run_detection_with(&c, Some(&refs)), Err(Error::MissingReference(_))));
    refs.insert("sine".to_string(), vec![1.0; c.m]);
    let report = run_detection_with(&c, Some(&refs)).unwrap();
    assert_eq!(report.cells.len(), 2);
    assert!(report.cells.iter().all(|cell| cell.t_value >= 0.0));
}

#[test]
fn outputs_land_in_the_directory() {
    let dir = tempfile::tempdir().unwrap();
    let c = small(Mode::Converge);
    let record = experiments::run(&c).unwrap();
    let written = write_outputs(&c, &record, dir.path(), true).unwrap();
    for name in ["edge_eigs.csv", "edge_eigs.svg", "run.json"] {
        assert!(written.iter().any(|p| p.ends_with(name)), "{name} missing");
    }
    let json: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("run.json")).unwrap()).unwrap();
    assert_eq!(json["config"]["n"], 600);
    let csv = std::fs::read_to_string(dir.path().join("edge_eigs.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2 + c.repetitions);
    assert!(csv.lines().nth(1).unwrap().starts_with("theory,"));
}
