//! Building, versioning and persisting a cut pool by hand.
//!
//! cargo run --example cut_pool

use msddp::cutmodel::{average_cuts, load_pools, save_pools};
use msddp::{Cut, CutPool};

fn main() -> msddp::Result<()> {
    let mut pool = CutPool::new(2, 1, -10.0);
    // |x - 0.5| sampled at two points, one cut per iteration
    pool.push(Cut::new(vec![0.0], 0.5, vec![-1.0], 1))?;
    pool.push(Cut::new(vec![1.0], 0.5, vec![1.0], 2))?;
    for x in [0.0, 0.25, 0.5, 1.0] {
        println!(
            "x={x:<4} version 0: {:>6.2}  version 1: {:>6.2}  latest: {:>6.2}",
            pool.eval_at_version(&[x], 0)?,
            pool.eval_at_version(&[x], 1)?,
            pool.eval(&[x])?
        );
    }

    let a = Cut::new(vec![0.3], 1.0, vec![2.0], 3);
    let b = Cut::new(vec![0.3], 3.0, vec![-2.0], 3);
    let avg = average_cuts(&[a, b], 3)?;
    println!(
        "average of two realization cuts: value {} slope {:?}",
        avg.intercept, avg.gradient
    );

    let path = std::env::temp_dir().join("msddp-example-pools.json");
    save_pools(&[pool.clone()], &path)?;
    assert_eq!(load_pools(&path)?, vec![pool]);
    println!("round-tripped through {}", path.display());
    Ok(())
}
