//! Lists the smallest eigenvalues of one n=5000 Gaussian graph together with
//! the share of each eigenvector's mass sitting in the tails `|x| > 2.5`.
//!
//! `cargo run --release -p rgg-edge --example tail_localization -- [r] [seed]`

use rgg_edge::sampling::sample_gaussian_rep;
use rgg_edge::*;

fn main() -> Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let r: f64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(0.05);
    let seed: u64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(42);
    let sigma = SigmaDiag::new(vec![1.0])?;
    let moments = compute_moments(1, MetricOrder::L2, &KernelSpec::ConstantOne)?;
    let spec = GraphSpec::hard(r, MetricOrder::L2, KernelSpec::ConstantOne);
    let cloud = sample_gaussian_rep(5000, &sigma, seed, 0)?;
    let op = build_laplacian(build_hard_affinity(&cloud, &spec)?, moments.scale_factor(r))?;
    let solve = smallest_eigs(&op, 40, &SolverOptions::default())?;
    println!("{:>10} {:>6} {:>10} {:>8}", "lambda", "comp", "tail mass", "peak x");
    for p in &solve.pairs {
        let total: f64 = p.vector.iter().map(|x| x * x).sum();
        let tail: f64 = p
            .vector
            .iter()
            .enumerate()
            .filter(|(i, _)| cloud.point(*i)[0].abs() > 2.5)
            .map(|(_, x)| x * x)
            .sum();
        let peak = (0..p.vector.len()).max_by(|&a, &b| p.vector[a].abs().total_cmp(&p.vector[b].abs())).unwrap_or(0);
        println!("{:>10.4} {:>6} {:>10.3} {:>+8.3}", p.value, p.component, tail / total, cloud.point(peak)[0]);
    }
    Ok(())
}
