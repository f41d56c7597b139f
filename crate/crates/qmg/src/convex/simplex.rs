//! Self-contained dense two-phase primal simplex.
//!
//! Solves `maximize cᵀz` subject to mixed `≤` / `=` rows and `z ≥ 0`, the
//! normal form every caller in this crate reduces to.  Bland's rule (lowest
//! eligible index enters, lowest basic index leaves on ties) guarantees
//! termination and makes every pivot sequence — and therefore every reported
//! solution — deterministic.  Problem sizes stay in the "few thousand rows ×
//! few hundred columns" range, where a dense tableau is perfectly adequate.

use nalgebra::DVector;

/// Reduced-cost / pivot threshold.
const EPS: f64 = 1e-9;
/// Ratio-test denominator threshold.
const RATIO_EPS: f64 = 1e-10;
/// Residual infeasibility accepted at the end of phase 1.
const FEAS_EPS: f64 = 1e-7;
/// Basic values may dip this far below zero so the ratio test can choose
/// large pivots (two-pass Harris rule); keeps near-parallel rows from
/// forcing pivots on cancellation noise.
const FEAS_SLACK: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RowKind {
    Le,
    Eq,
}

/// One constraint row `coeffs·z (≤ or =) rhs`.
#[derive(Clone, Debug)]
pub struct Row {
    pub coeffs: DVector<f64>,
    pub rhs: f64,
    pub kind: RowKind,
}

#[derive(Clone, Debug)]
pub enum LpOutcome {
    /// Optimal value and primal point.
    Optimal { value: f64, point: DVector<f64> },
    Infeasible,
    Unbounded,
}

/// Maximize `objective·z` over `z ≥ 0` under `rows`.
pub fn solve(objective: &DVector<f64>, rows: &[Row]) -> LpOutcome {
    Tableau::build(objective, rows).solve()
}

struct Tableau {
    /// `m × n_total` coefficient matrix in equality form (slacks, surplus,
    /// and artificial columns appended), RHS kept nonnegative.
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
    /// Objective over structural + slack columns (zero on artificials).
    cost: Vec<f64>,
    basis: Vec<usize>,
    n_struct: usize,
    n_total: usize,
    first_artificial: usize,
}

impl Tableau {
    fn build(objective: &DVector<f64>, rows: &[Row]) -> Self {
        let m = rows.len();
        let n = objective.len();
        // Column layout: structural 0..n, then one slack per Le row, then
        // one artificial per row that needs it.
        let n_slack = rows.iter().filter(|r| r.kind == RowKind::Le).count();
        let mut a: Vec<Vec<f64>> = Vec::with_capacity(m);
        let mut b = Vec::with_capacity(m);
        let mut basis = vec![usize::MAX; m];
        let mut slack_idx = n;
        let first_artificial = n + n_slack;
        let mut next_artificial = first_artificial;

        for (i, row) in rows.iter().enumerate() {
            // Scale the row so coefficients are O(1); keeps EPS meaningful.
            let scale = row
                .coeffs
                .iter()
                .fold(row.rhs.abs(), |acc, &v| acc.max(v.abs()))
                .max(1.0);
            let mut flip = 1.0 / scale;
            let mut rhs = row.rhs / scale;
            // Keep RHS nonnegative; a flipped Le row becomes Ge and needs a
            // surplus/artificial pair, handled below via the slack sign.
            let mut kind = row.kind;
            if rhs < 0.0 {
                flip = -flip;
                rhs = -rhs;
                kind = match kind {
                    RowKind::Eq => RowKind::Eq,
                    RowKind::Le => RowKind::Le, // becomes Ge; mark via negative slack
                };
            }
            let flipped = flip < 0.0 && row.kind == RowKind::Le;

            let mut coeffs = vec![0.0; first_artificial];
            for j in 0..n {
                coeffs[j] = row.coeffs[j] * flip;
            }
            match (kind, flipped) {
                (RowKind::Le, false) => {
                    // a·z + s = b, slack basic.
                    coeffs[slack_idx] = 1.0;
                    basis[i] = slack_idx;
                    slack_idx += 1;
                }
                (RowKind::Le, true) => {
                    // a·z − s = b: surplus, artificial needed.
                    coeffs[slack_idx] = -1.0;
                    slack_idx += 1;
                }
                (RowKind::Eq, _) => {}
            }
            a.push(coeffs);
            b.push(rhs);
        }

        // Artificial columns for rows without a basic slack.
        let n_art = basis.iter().filter(|&&x| x == usize::MAX).count();
        let n_total = first_artificial + n_art;
        for row in a.iter_mut() {
            row.resize(n_total, 0.0);
        }
        for i in 0..m {
            if basis[i] == usize::MAX {
                a[i][next_artificial] = 1.0;
                basis[i] = next_artificial;
                next_artificial += 1;
            }
        }

        let mut cost = vec![0.0; n_total];
        for j in 0..n {
            cost[j] = objective[j];
        }
        Tableau { a, b, cost, basis, n_struct: n, n_total, first_artificial }
    }

    fn solve(mut self) -> LpOutcome {
        let m = self.a.len();
        if self.basis.iter().any(|&j| j >= self.first_artificial) {
            // Phase 1: maximize −Σ artificials.
            let mut phase1 = vec![0.0; self.n_total];
            for j in self.first_artificial..self.n_total {
                phase1[j] = -1.0;
            }
            if !self.run(&phase1, self.n_total) {
                return LpOutcome::Unbounded; // cannot happen: phase 1 is bounded
            }
            let infeas: f64 = (0..m)
                .filter(|&i| self.basis[i] >= self.first_artificial)
                .map(|i| self.b[i])
                .sum();
            if infeas > FEAS_EPS {
                return LpOutcome::Infeasible;
            }
            // Pivot residual artificials out of the basis where a healthy
            // pivot exists; otherwise the row is (near-)redundant and its
            // artificial stays basic at level ≤ FEAS_EPS, which phase 2
            // cannot increase (entering columns are restricted).
            for i in 0..m {
                if self.basis[i] >= self.first_artificial {
                    let j_best = (0..self.first_artificial)
                        .max_by(|&p, &q| {
                            self.a[i][p]
                                .abs()
                                .partial_cmp(&self.a[i][q].abs())
                                .unwrap()
                        })
                        .filter(|&j| {
                            let mag = self.a[i][j].abs();
                            mag >= 1e-6 && self.b[i] <= 1e-6 * mag
                        });
                    if let Some(j) = j_best {
                        self.pivot(i, j);
                    }
                }
            }
        }
        // Phase 2 over structural + slack columns only.
        let cost = self.cost.clone();
        if !self.run(&cost, self.first_artificial) {
            return LpOutcome::Unbounded;
        }
        let mut point = DVector::zeros(self.n_struct);
        for i in 0..m {
            if self.basis[i] < self.n_struct {
                point[self.basis[i]] = self.b[i];
            }
        }
        let value = (0..self.n_struct).map(|j| cost[j] * point[j]).sum();
        LpOutcome::Optimal { value, point }
    }

    /// Run simplex iterations with the given cost over columns `0..limit`.
    /// Returns false when unbounded.
    fn run(&mut self, cost: &[f64], limit: usize) -> bool {
        let m = self.a.len();
        loop {
            // Reduced costs r_j = c_j − c_B·column_j; Bland: first positive.
            let mut entering = None;
            for j in 0..limit {
                if self.basis.contains(&j) {
                    continue;
                }
                let mut r = cost[j];
                for i in 0..m {
                    let cb = cost[self.basis[i]];
                    if cb != 0.0 {
                        r -= cb * self.a[i][j];
                    }
                }
                if r > EPS {
                    entering = Some(j);
                    break;
                }
            }
            let Some(j) = entering else { return true };
            // Two-pass ratio test.  Pass 1 finds the largest step that keeps
            // every basic value above −FEAS_SLACK; pass 2 picks, among rows
            // whose exact ratio fits inside that step, the one with the
            // largest pivot element (ties by smallest basic index, for
            // determinism).  Tiny pivots amplify cancellation noise from
            // near-parallel rows into real infeasibility, so magnitude wins
            // over the textbook minimum ratio.
            let mut t_max = f64::INFINITY;
            for i in 0..m {
                let aij = self.a[i][j];
                if aij > RATIO_EPS {
                    t_max = t_max.min((self.b[i] + FEAS_SLACK) / aij);
                }
            }
            if t_max.is_infinite() {
                return false;
            }
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..m {
                let aij = self.a[i][j];
                if aij > RATIO_EPS && self.b[i] / aij <= t_max {
                    let better = match leave {
                        None => true,
                        Some((bi, bp)) => {
                            aij > bp + RATIO_EPS
                                || (aij > bp - RATIO_EPS && self.basis[i] < self.basis[bi])
                        }
                    };
                    if better {
                        leave = Some((i, aij));
                    }
                }
            }
            let Some((i, _)) = leave else { return false };
            self.pivot(i, j);
        }
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let m = self.a.len();
        let piv = self.a[row][col];
        debug_assert!(piv.abs() > RATIO_EPS);
        let inv = 1.0 / piv;
        for j in 0..self.n_total {
            self.a[row][j] *= inv;
        }
        self.b[row] *= inv;
        for i in 0..m {
            if i != row {
                let factor = self.a[i][col];
                if factor != 0.0 {
                    for j in 0..self.n_total {
                        self.a[i][j] -= factor * self.a[row][j];
                    }
                    self.b[i] -= factor * self.b[row];
                    if self.b[i].abs() < 1e-13 {
                        self.b[i] = 0.0;
                    }
                }
            }
        }
        self.basis[row] = col;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn le(coeffs: &[f64], rhs: f64) -> Row {
        Row { coeffs: DVector::from_row_slice(coeffs), rhs, kind: RowKind::Le }
    }

    fn eq(coeffs: &[f64], rhs: f64) -> Row {
        Row { coeffs: DVector::from_row_slice(coeffs), rhs, kind: RowKind::Eq }
    }

    fn optimal(outcome: LpOutcome) -> (f64, DVector<f64>) {
        match outcome {
            LpOutcome::Optimal { value, point } => (value, point),
            other => panic!("expected optimal, got {other:?}"),
        }
    }

    #[test]
    fn box_corner() {
        let c = DVector::from_row_slice(&[1.0, 1.0]);
        let rows = vec![le(&[1.0, 0.0], 1.0), le(&[0.0, 1.0], 2.0)];
        let (v, z) = optimal(solve(&c, &rows));
        assert!((v - 3.0).abs() < 1e-9);
        assert!((z[0] - 1.0).abs() < 1e-9 && (z[1] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn classic_two_variable_lp() {
        // max 3x + 5y s.t. x ≤ 4, 2y ≤ 12, 3x + 2y ≤ 18 → 36 at (2, 6).
        let c = DVector::from_row_slice(&[3.0, 5.0]);
        let rows = vec![
            le(&[1.0, 0.0], 4.0),
            le(&[0.0, 2.0], 12.0),
            le(&[3.0, 2.0], 18.0),
        ];
        let (v, z) = optimal(solve(&c, &rows));
        assert!((v - 36.0).abs() < 1e-9);
        assert!((z[0] - 2.0).abs() < 1e-9 && (z[1] - 6.0).abs() < 1e-9);
    }

    #[test]
    fn equality_constraint() {
        // max x + 2y s.t. x + y = 1 → 2 at (0, 1).
        let c = DVector::from_row_slice(&[1.0, 2.0]);
        let rows = vec![eq(&[1.0, 1.0], 1.0)];
        let (v, z) = optimal(solve(&c, &rows));
        assert!((v - 2.0).abs() < 1e-9);
        assert!(z[0].abs() < 1e-9 && (z[1] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn negative_rhs_le_becomes_ge() {
        // max −x s.t. −x ≤ −2 (i.e. x ≥ 2) → −2.
        let c = DVector::from_row_slice(&[-1.0]);
        let rows = vec![le(&[-1.0], -2.0)];
        let (v, z) = optimal(solve(&c, &rows));
        assert!((v + 2.0).abs() < 1e-9);
        assert!((z[0] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn detects_infeasible() {
        let c = DVector::from_row_slice(&[1.0]);
        let rows = vec![le(&[1.0], 1.0), le(&[-1.0], -2.0)];
        assert!(matches!(solve(&c, &rows), LpOutcome::Infeasible));
    }

    #[test]
    fn detects_unbounded() {
        let c = DVector::from_row_slice(&[1.0, 0.0]);
        let rows = vec![le(&[0.0, 1.0], 1.0)];
        assert!(matches!(solve(&c, &rows), LpOutcome::Unbounded));
    }

    #[test]
    fn redundant_equalities_are_tolerated() {
        // x + y = 1 stated twice plus its double.
        let c = DVector::from_row_slice(&[1.0, 0.0]);
        let rows = vec![eq(&[1.0, 1.0], 1.0), eq(&[1.0, 1.0], 1.0), eq(&[2.0, 2.0], 2.0)];
        let (v, _) = optimal(solve(&c, &rows));
        assert!((v - 1.0).abs() < 1e-9);
    }

    #[test]
    fn degenerate_vertices_terminate() {
        // Multiple constraints through the same vertex; Bland's rule must
        // not cycle.
        let c = DVector::from_row_slice(&[1.0, 1.0, 1.0]);
        let rows = vec![
            le(&[1.0, 1.0, 0.0], 1.0),
            le(&[1.0, 0.0, 1.0], 1.0),
            le(&[0.0, 1.0, 1.0], 1.0),
            le(&[1.0, 1.0, 1.0], 1.0),
        ];
        let (v, _) = optimal(solve(&c, &rows));
        assert!((v - 1.0).abs() < 1e-9);
    }

    #[test]
    fn deterministic_resolve() {
        let c = DVector::from_row_slice(&[1.3, -0.2, 0.7]);
        let rows = vec![
            le(&[1.0, 2.0, -1.0], 2.5),
            le(&[-1.0, 1.0, 1.0], 1.0),
            eq(&[1.0, 1.0, 1.0], 1.5),
        ];
        let (v1, z1) = optimal(solve(&c, &rows));
        let (v2, z2) = optimal(solve(&c, &rows));
        assert_eq!(v1.to_bits(), v2.to_bits());
        assert_eq!(z1, z2);
    }
}
