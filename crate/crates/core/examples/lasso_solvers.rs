//! Solves one random Lasso instance with each proximal scheme and compares
//! iterations to a common target.

use epnet::solver::{run, Algorithm, LassoInstance, SolverConfig};
use nalgebra::DVector;

fn main() -> epnet::Result<()> {
    let inst = LassoInstance::random(20, 50, 0.1, 3)?;
    let problem = inst.problem()?;
    let step = 1.0 / inst.lipschitz();
    let cfg = SolverConfig {
        max_iters: 20_000,
        rel_tol: 1e-14,
        ..SolverConfig::default()
    };
    let x0 = DVector::zeros(50);
    let traces: Vec<_> = [Algorithm::Ista, Algorithm::Fista, Algorithm::Epg, Algorithm::Aepg]
        .into_iter()
        .map(|a| run(a, &problem, &x0, step, &cfg).map(|t| (a, t)))
        .collect::<epnet::Result<_>>()?;
    let best = traces.iter().map(|(_, t)| t.best_objective()).fold(f64::INFINITY, f64::min);
    for (algo, t) in &traces {
        let hit = t.iterations_to(best, 1e-6).map_or("never".to_string(), |k| k.to_string());
        println!(
            "{:<6} F = {:.10}  iterations {:>6}  within 1e-6 at {hit}",
            format!("{algo:?}").to_lowercase(),
            t.final_objective(),
            t.entries.len() - 1
        );
    }
    Ok(())
}
