//! Self-contained dense two-phase simplex for small equality-form LPs.
//!
//! Solves `max c.x  s.t.  A x = b, x >= 0` with Bland's anti-cycling pivot
//! rule, so runs are deterministic and finite. Problem sizes here are tiny
//! (tens of rows), so a dense tableau is the right tool.

use thiserror::Error;

const EPS: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum LpError {
    #[error("dimension mismatch between A, b, and c")]
    DimensionMismatch,
    #[error("objective is unbounded above")]
    Unbounded,
}

#[derive(Debug, Clone)]
pub enum LpOutcome {
    Optimal { x: Vec<f64>, objective: f64 },
    Infeasible,
}

/// Dense tableau with an explicit basis.
struct Tableau {
    /// m rows, each of length n_total + 1 (last entry is the rhs).
    rows: Vec<Vec<f64>>,
    basis: Vec<usize>,
    n_total: usize,
}

impl Tableau {
    fn pivot(&mut self, row: usize, col: usize) {
        let piv = self.rows[row][col];
        for v in self.rows[row].iter_mut() {
            *v /= piv;
        }
        let pivot_row = self.rows[row].clone();
        for (i, r) in self.rows.iter_mut().enumerate() {
            if i == row {
                continue;
            }
            let factor = r[col];
            if factor != 0.0 {
                for (v, p) in r.iter_mut().zip(&pivot_row) {
                    *v -= factor * p;
                }
            }
        }
        self.basis[row] = col;
    }

    /// Reduced costs for minimizing `obj` over the current basis.
    fn reduced_costs(&self, obj: &[f64]) -> Vec<f64> {
        let mut red = obj.to_vec();
        for (row, &bi) in self.rows.iter().zip(&self.basis) {
            let cb = obj[bi];
            if cb != 0.0 {
                for (r, &a) in red.iter_mut().zip(row.iter().take(self.n_total)) {
                    *r -= cb * a;
                }
            }
        }
        red
    }

    /// One phase of the simplex method, minimizing `obj`. Bland's rule:
    /// entering column is the lowest admissible index, leaving row breaks
    /// ratio ties by the lowest basis index.
    fn run(&mut self, obj: &[f64], allowed: usize) -> Result<(), LpError> {
        loop {
            let red = self.reduced_costs(obj);
            let entering = (0..allowed).find(|&j| red[j] < -EPS);
            let Some(col) = entering else { return Ok(()) };
            let mut leave: Option<(usize, f64)> = None;
            for (i, row) in self.rows.iter().enumerate() {
                let a = row[col];
                if a > EPS {
                    let ratio = row[self.n_total] / a;
                    let better = match leave {
                        None => true,
                        Some((li, lr)) => {
                            ratio < lr - EPS
                                || (ratio < lr + EPS && self.basis[i] < self.basis[li])
                        }
                    };
                    if better {
                        leave = Some((i, ratio));
                    }
                }
            }
            let Some((row, _)) = leave else { return Err(LpError::Unbounded) };
            self.pivot(row, col);
        }
    }

    fn objective_value(&self, obj: &[f64]) -> f64 {
        self.rows
            .iter()
            .zip(&self.basis)
            .map(|(row, &bi)| obj[bi] * row[self.n_total])
            .sum()
    }
}

/// Solve `max c.x  s.t.  A x = b, x >= 0`.
pub fn solve_lp_max(a: &[Vec<f64>], b: &[f64], c: &[f64]) -> Result<LpOutcome, LpError> {
    let m = a.len();
    if b.len() != m || a.iter().any(|row| row.len() != c.len()) {
        return Err(LpError::DimensionMismatch);
    }
    let n = c.len();
    let n_total = n + m; // structural + artificial

    let mut rows = Vec::with_capacity(m);
    for i in 0..m {
        let sign = if b[i] < 0.0 { -1.0 } else { 1.0 };
        let mut row = vec![0.0; n_total + 1];
        for j in 0..n {
            row[j] = sign * a[i][j];
        }
        row[n + i] = 1.0;
        row[n_total] = sign * b[i];
        rows.push(row);
    }
    let mut tab = Tableau { rows, basis: (n..n_total).collect(), n_total };

    // Phase 1: minimize the sum of artificials.
    let mut phase1 = vec![0.0; n_total];
    for v in phase1.iter_mut().skip(n) {
        *v = 1.0;
    }
    tab.run(&phase1, n_total)?;
    if tab.objective_value(&phase1) > 1e-7 {
        return Ok(LpOutcome::Infeasible);
    }
    // Drive any remaining artificials out of the basis (degenerate rows).
    for i in 0..m {
        if tab.basis[i] >= n {
            if let Some(col) = (0..n).find(|&j| tab.rows[i][j].abs() > EPS) {
                tab.pivot(i, col);
            }
        }
    }

    // Phase 2: minimize -c.x over structural columns only.
    let mut phase2 = vec![0.0; n_total];
    for j in 0..n {
        phase2[j] = -c[j];
    }
    tab.run(&phase2, n)?;

    let mut x = vec![0.0; n];
    for (row, &bi) in tab.rows.iter().zip(&tab.basis) {
        if bi < n {
            x[bi] = row[tab.n_total];
        }
    }
    let objective = x.iter().zip(c).map(|(xi, ci)| xi * ci).sum();
    Ok(LpOutcome::Optimal { x, objective })
}
