use serde::{Deserialize, Serialize};

use crate::error::{input, Result};
use crate::network::NeuronState;

pub const DEFAULT_ASSIGNMENT_CAP: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Wasserstein {
    /// `W₂²`: optimal mean squared transport cost.
    pub squared: f64,
    pub distance: f64,
}

/// Exact `W₂` between two equal-size empirical measures on R⁵.
pub fn wasserstein2(a: &[NeuronState], b: &[NeuronState]) -> Result<Wasserstein> {
    wasserstein2_capped(a, b, DEFAULT_ASSIGNMENT_CAP)
}

pub fn wasserstein2_capped(a: &[NeuronState], b: &[NeuronState], cap: usize) -> Result<Wasserstein> {
    if a.len() != b.len() {
        return input(format!(
            "samples must have equal size, got {} and {} (subsample the larger one)",
            a.len(),
            b.len()
        ));
    }
    if a.is_empty() {
        return input("empty samples");
    }
    if a.len() > cap {
        return input(format!("sample size {} exceeds the assignment cap {cap}", a.len()));
    }
    let n = a.len();
    let cost: Vec<f64> = a
        .iter()
        .flat_map(|x| b.iter().map(move |y| x.distance_sq(y)))
        .collect();
    let assignment = min_cost_assignment(&cost, n);
    let total: f64 = assignment
        .iter()
        .enumerate()
        .map(|(i, &j)| cost[i * n + j])
        .sum();
    let squared = total / n as f64;
    Ok(Wasserstein {
        squared,
        distance: squared.sqrt(),
    })
}

/// Shortest augmenting path assignment with row/column potentials, O(n³).
/// `cost` is row-major `n × n`; returns the column assigned to each row.
fn min_cost_assignment(cost: &[f64], n: usize) -> Vec<usize> {
    // 1-based arrays; column 0 is the virtual source
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut row_of = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut min_to = vec![0.0; n + 1];
    let mut used = vec![false; n + 1];
    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0;
        min_to.fill(f64::INFINITY);
        used.fill(false);
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let reduced = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                    if reduced < min_to[j] {
                        min_to[j] = reduced;
                        way[j] = j0;
                    }
                    if min_to[j] < delta {
                        delta = min_to[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    min_to[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut col_of = vec![0usize; n];
    for j in 1..=n {
        col_of[row_of[j] - 1] = j - 1;
    }
    col_of
}
