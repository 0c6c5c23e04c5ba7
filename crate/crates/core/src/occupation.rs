//! Problem P in its finite form: the occupation-measure LP over feasible
//! triples, and the solved [`OccupationMeasure`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::{simplex_solve, Constraint, LinearProgram, LpSolution, LpStatus, Residuals};
use crate::model::{ensure_valid, FiniteInstance, StateId};

/// Variable name of a feasible triple.
pub fn var_name(inst: &FiniteInstance, row: usize) -> String {
    let r = &inst.rows[row];
    format!("mu_{}_{}_{}", r.state, r.interior, r.boundary)
}

/// `min sum (Lf_0 + Hr_0) mu` subject to the balance rows `bal_j` and the cost rows `con_i`.
pub fn assemble_problem_p(inst: &FiniteInstance) -> Result<LinearProgram> {
    ensure_valid(inst)?;
    let s = inst.num_states();
    let n_rows = inst.rows.len();
    let mut balance: Vec<Vec<(usize, f64)>> = vec![Vec::new(); s];
    for (v, row) in inst.rows.iter().enumerate() {
        balance[row.state.0].push((v, 1.0));
        for &(p, g) in &row.g {
            balance[p.0].push((v, -g));
        }
    }
    let equalities = balance
        .into_iter()
        .enumerate()
        .map(|(j, mut coeffs)| {
            coeffs.sort_by_key(|&(v, _)| v);
            let mut merged: Vec<(usize, f64)> = Vec::with_capacity(coeffs.len());
            for (v, a) in coeffs {
                match merged.last_mut() {
                    Some(last) if last.0 == v => last.1 += a,
                    _ => merged.push((v, a)),
                }
            }
            Constraint::new(format!("bal_{j}"), merged, inst.nu0[j])
        })
        .collect();
    let inequalities = (1..inst.num_costs())
        .map(|i| {
            let coeffs = (0..n_rows).map(|v| (v, inst.rows[v].stage_cost(i))).filter(|&(_, c)| c != 0.0).collect();
            Constraint::new(format!("con_{i}"), coeffs, inst.limits[i - 1])
        })
        .collect();
    Ok(LinearProgram {
        var_names: (0..n_rows).map(|v| var_name(inst, v)).collect(),
        objective: inst.rows.iter().map(|r| r.stage_cost(0)).collect(),
        equalities,
        inequalities,
        fixed_zero: Vec::new(),
        free_rows: Vec::new(),
    })
}

/// Nonnegative weights on the feasible triples, in the instance's row order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupationMeasure {
    pub weights: Vec<f64>,
    /// Marginal on states, `sum_{k,i} mu_{j,k,i}`.
    pub marginal: Vec<f64>,
}

impl OccupationMeasure {
    pub fn from_weights(inst: &FiniteInstance, weights: Vec<f64>) -> Self {
        let mut marginal = vec![0.0; inst.num_states()];
        for (row, &w) in inst.rows.iter().zip(&weights) {
            marginal[row.state.0] += w;
        }
        OccupationMeasure { weights, marginal }
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// `sum (Lf_i + Hr_i) mu` for every cost index.
    pub fn cost_values(&self, inst: &FiniteInstance) -> Vec<f64> {
        (0..inst.num_costs())
            .map(|i| inst.rows.iter().zip(&self.weights).map(|(r, w)| r.stage_cost(i) * w).sum())
            .collect()
    }

    /// `mu~_j - nu0_j - (G' mu)_j` for every state.
    pub fn balance_residuals(&self, inst: &FiniteInstance) -> Vec<f64> {
        let mut r: Vec<f64> = self.marginal.iter().zip(&inst.nu0).map(|(m, n)| m - n).collect();
        for (row, &w) in inst.rows.iter().zip(&self.weights) {
            for &(p, g) in &row.g {
                r[p.0] -= g * w;
            }
        }
        r
    }

    pub fn state_weight(&self, j: StateId) -> f64 {
        self.marginal[j.0]
    }
}

/// Optimal solution of Problem P with its attained values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdmpSolution {
    pub lp: LpSolution,
    pub measure: OccupationMeasure,
    pub objective: f64,
    /// `sum (Lf_i + Hr_i) mu` for `i = 1..=n`.
    pub constraint_values: Vec<f64>,
    pub balance_residuals: Vec<f64>,
    pub kkt: Residuals,
}

/// Solves Problem P. Infeasible and unbounded programs become errors.
pub fn solve_constrained_pdmp(inst: &FiniteInstance) -> Result<PdmpSolution> {
    let lp = assemble_problem_p(inst)?;
    let sol = simplex_solve(&lp)?;
    match sol.status {
        LpStatus::Infeasible => return Err(Error::Infeasible),
        LpStatus::Unbounded => return Err(Error::Unbounded { ray: sol.ray.unwrap_or_default() }),
        LpStatus::Optimal => {}
    }
    let weights: Vec<f64> = sol.x.iter().map(|&v| v.max(0.0)).collect();
    let measure = OccupationMeasure::from_weights(inst, weights);
    let values = measure.cost_values(inst);
    let kkt = sol.residuals(&lp);
    Ok(PdmpSolution {
        objective: sol.objective,
        constraint_values: values[1..].to_vec(),
        balance_residuals: measure.balance_residuals(inst),
        measure,
        lp: sol,
        kkt,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::tests::two_state_cycle;

    #[test]
    fn cycle_program_structure() {
        let lp = assemble_problem_p(&two_state_cycle()).unwrap();
        assert_eq!(lp.num_vars(), 2);
        assert_eq!(lp.equalities.len(), 2);
        assert!(lp.inequalities.is_empty());
        assert_eq!(lp.var_names, vec!["mu_0_0_1", "mu_1_0_1"]);
        assert_eq!(lp.equalities[0].coeffs, vec![(0, 1.0), (1, -0.5)]);
    }

    #[test]
    fn cycle_value_matches_geometric_series() {
        let sol = solve_constrained_pdmp(&two_state_cycle()).unwrap();
        // beta = 1/2: mu_1 = 1/(1 - beta^2), mu_2 = beta/(1 - beta^2).
        let beta: f64 = 0.5;
        assert!((sol.measure.weights[0] - 1.0 / (1.0 - beta * beta)).abs() < 1e-12);
        assert!((sol.measure.weights[1] - beta / (1.0 - beta * beta)).abs() < 1e-12);
        assert!((sol.objective - 1.0).abs() < 1e-12);
        assert!(sol.balance_residuals.iter().all(|r| r.abs() < 1e-12));
    }

    #[test]
    fn zero_limit_on_positive_cost_is_infeasible() {
        let mut inst = two_state_cycle();
        inst.limits = vec![0.0];
        for r in &mut inst.rows {
            r.lf.push(0.25);
            r.hr.push(0.0);
        }
        assert!(matches!(solve_constrained_pdmp(&inst), Err(Error::Infeasible)));
        inst.limits = vec![1e6];
        let sol = solve_constrained_pdmp(&inst).unwrap();
        assert!((sol.objective - 1.0).abs() < 1e-12);
        assert!((sol.constraint_values[0] - 0.5).abs() < 1e-12);
    }
}
