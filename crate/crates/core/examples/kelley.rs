//! Kelley's cutting-plane method on a built-in piecewise-linear function.
//!
//! cargo run --example kelley -- kink 2 0.05

use msddp::kelley::{builtin, kelley_solve, min_pairwise_distance};

fn main() -> msddp::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let name = args.first().map_or("shifted-linf", String::as_str);
    let n: usize = args.get(1).map_or(Ok(2), |s| s.parse()).expect("dimension");
    let eps: f64 = args.get(2).map_or(Ok(0.05), |s| s.parse()).expect("eps");

    let prob = builtin(name, n)?;
    let bound = prob.iteration_bound(eps);
    let res = kelley_solve(&prob, &prob.upper.clone(), eps, bound as usize + 1)?;

    println!("{name} on [-1, 1]^{n}, M = {}, eps = {eps}", prob.lipschitz);
    for r in &res.records {
        println!(
            "k={:<3} f={:>9.5} lb={:>9.5} ub={:>9.5} next={:?}",
            r.k, r.f, r.lb, r.ub, r.x
        );
    }
    println!("iterations {} <= bound {bound}", res.iterations);
    let pre = res.pre_termination_iterates();
    if pre.len() > 1 {
        println!(
            "closest pair of iterates {:.4} > eps/M = {:.4}",
            min_pairwise_distance(pre)?,
            eps / prob.lipschitz
        );
    }
    println!("best point {:?}, value {:.6}", res.x_best, res.ub);
    Ok(())
}
