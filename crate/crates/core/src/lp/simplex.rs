//! Two-phase revised simplex with an explicit dense basis inverse.
//!
//! Pricing is Dantzig's rule; after `5 * rows` degenerate pivots the solver
//! switches to Bland's rule for the rest of the phase. Every choice is a
//! deterministic function of the input, so identical programs give
//! bit-identical solutions.

use super::{LinearProgram, LpSolution, LpStatus, FEAS_TOL, OPT_TOL};
use crate::error::{Error, Result};

const PIVOT_TOL: f64 = 1e-9;
const BREAKDOWN_TOL: f64 = 1e-12;
const DEGENERATE_STEP: f64 = 1e-12;
const REFACTOR_EVERY: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Structural,
    Slack,
    Artificial,
}

struct Tableau {
    m: usize,
    cols: Vec<Vec<(usize, f64)>>,
    kinds: Vec<Kind>,
    /// Variables that may never enter the basis.
    barred: Vec<bool>,
    b: Vec<f64>,
    basis: Vec<usize>,
    in_basis: Vec<Option<usize>>,
    binv: Vec<f64>,
    x_b: Vec<f64>,
    iterations: usize,
    since_refactor: usize,
}

enum Step {
    Optimal,
    Unbounded(usize, Vec<f64>),
    Pivoted,
}

impl Tableau {
    fn y(&self, cost: &[f64]) -> Vec<f64> {
        let m = self.m;
        let mut y = vec![0.0; m];
        for (i, &bv) in self.basis.iter().enumerate() {
            let cb = cost[bv];
            if cb != 0.0 {
                let row = &self.binv[i * m..(i + 1) * m];
                for (yk, &r) in y.iter_mut().zip(row) {
                    *yk += cb * r;
                }
            }
        }
        y
    }

    fn reduced_cost(&self, cost: &[f64], y: &[f64], j: usize) -> f64 {
        cost[j] - self.cols[j].iter().map(|&(k, a)| y[k] * a).sum::<f64>()
    }

    /// `B^{-1} A_j`.
    fn ftran(&self, j: usize) -> Vec<f64> {
        let m = self.m;
        let mut u = vec![0.0; m];
        for &(k, a) in &self.cols[j] {
            for (i, ui) in u.iter_mut().enumerate() {
                *ui += self.binv[i * m + k] * a;
            }
        }
        u
    }

    fn pivot(&mut self, r: usize, q: usize, u: &[f64], theta: f64) -> Result<()> {
        let m = self.m;
        let piv = u[r];
        if piv.abs() < BREAKDOWN_TOL {
            return Err(Error::NumericalBreakdown(format!("pivot {piv:e} in row {r}")));
        }
        for (i, xi) in self.x_b.iter_mut().enumerate() {
            if i != r {
                *xi -= theta * u[i];
            }
        }
        self.x_b[r] = theta;
        let (before, rest) = self.binv.split_at_mut(r * m);
        let (row_r, after) = rest.split_at_mut(m);
        for v in row_r.iter_mut() {
            *v /= piv;
        }
        for (i, chunk) in before.chunks_mut(m).chain(after.chunks_mut(m)).enumerate() {
            let ui = if i < r { u[i] } else { u[i + 1] };
            if ui != 0.0 {
                for (v, &p) in chunk.iter_mut().zip(row_r.iter()) {
                    *v -= ui * p;
                }
            }
        }
        let leaving = self.basis[r];
        self.in_basis[leaving] = None;
        self.basis[r] = q;
        self.in_basis[q] = Some(r);
        self.iterations += 1;
        self.since_refactor += 1;
        if self.since_refactor >= REFACTOR_EVERY {
            self.refactor()?;
        }
        Ok(())
    }

    /// Recomputes `B^{-1}` by Gauss–Jordan elimination with partial pivoting.
    fn refactor(&mut self) -> Result<()> {
        let m = self.m;
        let mut a = vec![0.0; m * m];
        for (i, &bv) in self.basis.iter().enumerate() {
            for &(k, v) in &self.cols[bv] {
                a[k * m + i] = v;
            }
        }
        let mut inv = vec![0.0; m * m];
        for i in 0..m {
            inv[i * m + i] = 1.0;
        }
        for c in 0..m {
            let p = (c..m)
                .max_by(|&i, &k| a[i * m + c].abs().total_cmp(&a[k * m + c].abs()).then(k.cmp(&i)))
                .expect("nonempty range");
            let pv = a[p * m + c];
            if pv.abs() < BREAKDOWN_TOL {
                return Err(Error::NumericalBreakdown(format!("basis matrix is singular at column {c}")));
            }
            if p != c {
                for k in 0..m {
                    a.swap(p * m + k, c * m + k);
                    inv.swap(p * m + k, c * m + k);
                }
            }
            for k in 0..m {
                a[c * m + k] /= pv;
                inv[c * m + k] /= pv;
            }
            for i in 0..m {
                if i == c {
                    continue;
                }
                let f = a[i * m + c];
                if f != 0.0 {
                    for k in 0..m {
                        a[i * m + k] -= f * a[c * m + k];
                        inv[i * m + k] -= f * inv[c * m + k];
                    }
                }
            }
        }
        self.binv = inv;
        for i in 0..m {
            self.x_b[i] = (0..m).map(|k| self.binv[i * m + k] * self.b[k]).sum();
        }
        self.since_refactor = 0;
        Ok(())
    }

    /// One pricing + ratio test + pivot.
    fn step(&mut self, cost: &[f64], bland: bool, phase_two: bool) -> Result<(Step, bool)> {
        let y = self.y(cost);
        let n = self.cols.len();
        let mut entering: Option<(usize, f64)> = None;
        for j in 0..n {
            if self.barred[j] || self.in_basis[j].is_some() {
                continue;
            }
            let d = self.reduced_cost(cost, &y, j);
            if d < -OPT_TOL * 1e-2 {
                match entering {
                    None => entering = Some((j, d)),
                    Some((_, best)) if !bland && d < best => entering = Some((j, d)),
                    _ => {}
                }
                if bland {
                    break;
                }
            }
        }
        let Some((q, _)) = entering else {
            return Ok((Step::Optimal, false));
        };
        let u = self.ftran(q);

        let mut leave: Option<(usize, f64)> = None;
        for i in 0..self.m {
            let bv = self.basis[i];
            let ratio = if phase_two && self.kinds[bv] == Kind::Artificial && u[i].abs() > PIVOT_TOL {
                0.0
            } else if u[i] > PIVOT_TOL {
                self.x_b[i].max(0.0) / u[i]
            } else {
                continue;
            };
            leave = match leave {
                None => Some((i, ratio)),
                Some((r, best)) => {
                    let tie = (ratio - best).abs() <= 1e-12 * (1.0 + best.abs());
                    let better = if tie {
                        if bland {
                            bv < self.basis[r]
                        } else {
                            u[i].abs() > u[r].abs()
                        }
                    } else {
                        ratio < best
                    };
                    if better {
                        Some((i, ratio))
                    } else {
                        Some((r, best))
                    }
                }
            };
        }
        let Some((r, theta)) = leave else {
            return Ok((Step::Unbounded(q, u), false));
        };
        self.pivot(r, q, &u, theta)?;
        Ok((Step::Pivoted, theta <= DEGENERATE_STEP))
    }

    fn run_phase(&mut self, cost: &[f64], phase_two: bool, max_iter: usize) -> Result<Step> {
        let mut degenerate = 0usize;
        let mut bland = false;
        loop {
            if self.iterations >= max_iter {
                return Err(Error::NumericalBreakdown(format!("iteration limit {max_iter} reached")));
            }
            let (step, degen) = self.step(cost, bland, phase_two)?;
            match step {
                Step::Pivoted => {
                    if degen {
                        degenerate += 1;
                        if degenerate >= 5 * self.m.max(1) {
                            bland = true;
                        }
                    }
                }
                other => return Ok(other),
            }
        }
    }

    fn primal(&self) -> Vec<f64> {
        let mut x = vec![0.0; self.cols.len()];
        for (i, &bv) in self.basis.iter().enumerate() {
            x[bv] = self.x_b[i];
        }
        x
    }
}

/// Solves `lp` by the two-phase revised simplex method.
pub fn simplex_solve(lp: &LinearProgram) -> Result<LpSolution> {
    lp.validate()?;
    let n = lp.num_vars();
    let m_eq = lp.equalities.len();
    let m = m_eq + lp.inequalities.len();

    let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    let mut b = vec![0.0; m];
    let mut sign = vec![1.0; m];
    for (i, row) in lp.equalities.iter().chain(&lp.inequalities).enumerate() {
        if row.rhs < 0.0 {
            sign[i] = -1.0;
        }
        b[i] = sign[i] * row.rhs;
        for &(j, a) in &row.coeffs {
            if a != 0.0 {
                cols[j].push((i, sign[i] * a));
            }
        }
    }
    for c in &mut cols {
        c.sort_by_key(|&(i, _)| i);
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(c.len());
        for &(i, a) in c.iter() {
            match merged.last_mut() {
                Some(last) if last.0 == i => last.1 += a,
                _ => merged.push((i, a)),
            }
        }
        *c = merged;
    }
    let mut kinds = vec![Kind::Structural; n];
    let mut barred = vec![false; n];
    for &j in &lp.fixed_zero {
        barred[j] = true;
    }
    let mut basis = vec![usize::MAX; m];
    for i in m_eq..m {
        cols.push(vec![(i, sign[i])]);
        kinds.push(Kind::Slack);
        barred.push(false);
        if sign[i] > 0.0 {
            basis[i] = cols.len() - 1;
        }
    }
    for (i, slot) in basis.iter_mut().enumerate() {
        if *slot == usize::MAX {
            cols.push(vec![(i, 1.0)]);
            kinds.push(Kind::Artificial);
            barred.push(false);
            *slot = cols.len() - 1;
        }
    }
    let total = cols.len();
    let mut in_basis = vec![None; total];
    for (i, &bv) in basis.iter().enumerate() {
        in_basis[bv] = Some(i);
    }
    let mut binv = vec![0.0; m * m];
    for i in 0..m {
        binv[i * m + i] = 1.0;
    }
    let mut t =
        Tableau { m, cols, kinds, barred, x_b: b.clone(), b, basis, in_basis, binv, iterations: 0, since_refactor: 0 };
    let max_iter = 50 * (m + total) + 1000;

    // Phase 1: minimize the sum of artificials.
    let phase1_cost: Vec<f64> = t.kinds.iter().map(|&k| if k == Kind::Artificial { 1.0 } else { 0.0 }).collect();
    let has_artificials = t.kinds.contains(&Kind::Artificial);
    if has_artificials {
        t.run_phase(&phase1_cost, false, max_iter)?;
        t.refactor()?;
        let infeas: f64 = t
            .basis
            .iter()
            .zip(&t.x_b)
            .filter(|(&bv, _)| t.kinds[bv] == Kind::Artificial)
            .map(|(_, &v)| v.max(0.0))
            .sum();
        let scale = t.b.iter().fold(1.0f64, |acc, v| acc.max(v.abs()));
        if infeas > FEAS_TOL * scale {
            return Ok(LpSolution {
                status: LpStatus::Infeasible,
                objective: f64::NAN,
                x: vec![0.0; n],
                duals_eq: vec![0.0; m_eq],
                duals_in: vec![0.0; m - m_eq],
                reduced_costs: vec![0.0; n],
                iterations: t.iterations,
                ray: None,
            });
        }
        // Drive zero-level artificials out of the basis where possible.
        for r in 0..m {
            let bv = t.basis[r];
            if t.kinds[bv] != Kind::Artificial {
                continue;
            }
            let row: Vec<f64> = t.binv[r * m..(r + 1) * m].to_vec();
            let candidate = (0..total).find(|&j| {
                t.kinds[j] != Kind::Artificial
                    && !t.barred[j]
                    && t.in_basis[j].is_none()
                    && t.cols[j].iter().map(|&(k, a)| row[k] * a).sum::<f64>().abs() > PIVOT_TOL
            });
            if let Some(q) = candidate {
                let u = t.ftran(q);
                let theta = t.x_b[r] / u[r];
                t.pivot(r, q, &u, theta)?;
            }
        }
        for j in 0..total {
            if t.kinds[j] == Kind::Artificial {
                t.barred[j] = true;
            }
        }
    }

    // Phase 2.
    let mut cost = vec![0.0; total];
    cost[..n].copy_from_slice(&lp.objective);
    let outcome = t.run_phase(&cost, true, max_iter)?;
    t.refactor()?;
    let x_full = t.primal();
    let x: Vec<f64> = x_full[..n].iter().map(|&v| if v.abs() < 1e-14 { 0.0 } else { v }).collect();

    if let Step::Unbounded(q, u) = outcome {
        let mut ray = vec![0.0; n];
        if q < n {
            ray[q] = 1.0;
        }
        for (i, &bv) in t.basis.iter().enumerate() {
            if bv < n {
                ray[bv] = -u[i];
            }
        }
        return Ok(LpSolution {
            status: LpStatus::Unbounded,
            objective: f64::NEG_INFINITY,
            x,
            duals_eq: vec![0.0; m_eq],
            duals_in: vec![0.0; m - m_eq],
            reduced_costs: vec![0.0; n],
            iterations: t.iterations,
            ray: Some(ray),
        });
    }

    let y_norm = t.y(&cost);
    let y: Vec<f64> = y_norm.iter().zip(&sign).map(|(v, s)| v * s).collect();
    let mut reduced = lp.objective.clone();
    for (row, &yi) in lp.equalities.iter().chain(&lp.inequalities).zip(&y) {
        for &(j, a) in &row.coeffs {
            reduced[j] -= yi * a;
        }
    }
    Ok(LpSolution {
        status: LpStatus::Optimal,
        objective: lp.objective_value(&x),
        x,
        duals_eq: y[..m_eq].to_vec(),
        duals_in: y[m_eq..].to_vec(),
        reduced_costs: reduced,
        iterations: t.iterations,
        ray: None,
    })
}
