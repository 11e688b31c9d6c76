//! Brute-force dynamic programming over a fine state grid, independent of
//! the simplex code, compared against the deterministic-equivalent oracle.

use msddp::generate::{generate_instance, GeneratorSpec};
use msddp::oracle::{exact_value, extensive_form_value};
use msddp::{Instance, Realization};

const H: f64 = 1e-3;

fn feasible(real: &Realization, chi: &[f64], x: f64) -> bool {
    assert!(
        real.A.is_empty(),
        "grid check only covers inequality-linked stages"
    );
    real.G
        .iter()
        .zip(&real.Q)
        .zip(&real.q)
        .all(|((g, q_row), q)| {
            let rhs: f64 = q_row.iter().zip(chi).map(|(a, c)| a * c).sum::<f64>() + q;
            g[0] * x <= rhs + 1e-12
        })
}

/// `V_t` on the grid of stage `t - 1` states, restricted to grid decisions.
fn grid_values(inst: &Instance, grid: &[f64]) -> Vec<Vec<f64>> {
    let t_max = inst.num_stages;
    let mut values = vec![Vec::new(); t_max + 2];
    values[t_max + 1] = vec![0.0; grid.len()];
    for t in (2..=t_max).rev() {
        let reals = inst.realizations(t);
        values[t] = grid
            .iter()
            .map(|&chi| {
                let total: f64 = reals
                    .iter()
                    .map(|real| {
                        grid.iter()
                            .enumerate()
                            .filter(|(_, &x)| feasible(real, &[chi], x))
                            .map(|(j, &x)| real.c[0] * x + inst.lambda * values[t + 1][j])
                            .fold(f64::INFINITY, f64::min)
                    })
                    .sum();
                total / reals.len() as f64
            })
            .collect();
    }
    values
}

fn check(inst: &Instance) {
    let steps = (1.0 / H).round() as usize;
    let grid: Vec<f64> = (0..=steps).map(|j| j as f64 * H).collect();
    let values = grid_values(inst, &grid);
    let c1 = inst.realizations(1)[0].c[0];
    let brute = grid
        .iter()
        .enumerate()
        .map(|(j, &x)| c1 * x + inst.lambda * values[2][j])
        .fold(f64::INFINITY, f64::min);
    let exact = extensive_form_value(inst, 1e-9).unwrap().value;
    // grid policies are feasible, and movement limits lose at most H per stage
    let slack: f64 = (1..=inst.num_stages).map(|t| t as f64 * H * 2.0).sum();
    assert!(exact <= brute + 1e-9, "exact {exact} above grid {brute}");
    assert!(
        brute - exact <= slack,
        "grid {brute} exceeds exact {exact} by more than {slack}"
    );
    for (j, &chi) in grid.iter().enumerate().step_by(97) {
        let v = exact_value(inst, 2, &[chi], 1e-9).unwrap();
        assert!(v <= values[2][j] + 1e-9);
        assert!(values[2][j] - v <= slack);
    }
}

#[test]
fn deterministic_inventory_matches_grid_dp() {
    for seed in 0..4 {
        for t in [2, 3] {
            check(&generate_instance(&GeneratorSpec::inventory(t, vec![1; t], 1, seed)).unwrap());
        }
    }
}

#[test]
fn stochastic_inventory_matches_grid_dp() {
    for seed in 0..3 {
        check(&generate_instance(&GeneratorSpec::inventory(3, vec![1, 2, 3], 1, seed)).unwrap());
    }
}
