//! Independent exact LP oracle for the slot problem, used only by the
//! acceptance suite: a dense primal simplex with Bland's rule solving
//!
//! ```text
//! min c^T x   s.t.   0 <= x_j <= 1,   sum_j x_j <= budget_units
//! ```
//!
//! deliberately sharing no code with the production greedy solver.

/// Returns the optimal objective value.
pub fn solve_box_knapsack_lp(costs: &[f64], budget_units: f64) -> f64 {
    let n = costs.len();
    let rows = n + 1; // n box rows plus the budget row
    let cols = n + rows + 1; // structural + slack + rhs
    let rhs = cols - 1;

    // tableau[r][c]; basis starts as the slack of each row
    let mut t = vec![vec![0.0f64; cols]; rows];
    for (j, row) in t.iter_mut().enumerate().take(n) {
        row[j] = 1.0;
        row[n + j] = 1.0;
        row[rhs] = 1.0;
    }
    t[n][..n].fill(1.0);
    t[n][n + n] = 1.0;
    t[n][rhs] = budget_units.max(0.0);

    let mut basis: Vec<usize> = (n..n + rows).collect();
    // reduced-cost row for min c^T x (zeros for slacks)
    let mut z = vec![0.0f64; cols];
    z[..n].copy_from_slice(costs);

    for _ in 0..20_000 {
        // Bland: entering = lowest-index column with negative reduced cost
        let Some(enter) = (0..cols - 1).find(|&j| z[j] < -1e-12) else {
            // optimal; objective is -z[rhs]
            return -z[rhs];
        };
        // ratio test, Bland tie-break on basis variable index
        let mut leave: Option<usize> = None;
        let mut best_ratio = f64::INFINITY;
        for r in 0..rows {
            if t[r][enter] > 1e-12 {
                let ratio = t[r][rhs] / t[r][enter];
                if ratio < best_ratio - 1e-12
                    || (ratio < best_ratio + 1e-12
                        && leave.is_some_and(|l| basis[r] < basis[l]))
                {
                    best_ratio = ratio;
                    leave = Some(r);
                }
            }
        }
        let leave = leave.expect("bounded feasible region cannot be unbounded");
        // pivot
        let pivot = t[leave][enter];
        for cell in t[leave].iter_mut() {
            *cell /= pivot;
        }
        let pivot_row = t[leave].clone();
        for (r, row) in t.iter_mut().enumerate() {
            if r != leave && row[enter].abs() > 0.0 {
                let factor = row[enter];
                for (cell, &p) in row.iter_mut().zip(&pivot_row) {
                    *cell -= factor * p;
                }
            }
        }
        let factor = z[enter];
        if factor.abs() > 0.0 {
            for (cell, &p) in z.iter_mut().zip(&pivot_row) {
                *cell -= factor * p;
            }
        }
        basis[leave] = enter;
    }
    panic!("simplex did not terminate");
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_instances() {
        // cache the two most negative, budget 2
        let v = solve_box_knapsack_lp(&[-5.0, -3.0, -1.0], 2.0);
        assert!((v - (-8.0)).abs() < 1e-12);
        // fractional marginal fill
        let v = solve_box_knapsack_lp(&[-5.0, -3.0], 1.5);
        assert!((v - (-6.5)).abs() < 1e-12);
        // nothing worth caching
        let v = solve_box_knapsack_lp(&[0.5, 2.0], 2.0);
        assert!(v.abs() < 1e-12);
    }
}
