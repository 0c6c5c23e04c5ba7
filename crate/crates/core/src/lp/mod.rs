//! Small dense linear programs: the [`LinearProgram`] container, a revised
//! simplex solver, and MPS text export/import.

mod mps;
mod simplex;

use serde::{Deserialize, Serialize};

pub use mps::{read_mps, write_mps};
pub use simplex::simplex_solve;

use crate::error::{Error, Result};

/// Feasibility tolerance on primal rows.
pub const FEAS_TOL: f64 = 1e-9;
/// Optimality tolerance on reduced costs.
pub const OPT_TOL: f64 = 1e-9;

/// One linear row `sum_j a_j x_j (= or <=) rhs`, stored sparsely.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub name: String,
    pub coeffs: Vec<(usize, f64)>,
    pub rhs: f64,
}

impl Constraint {
    pub fn new(name: impl Into<String>, coeffs: Vec<(usize, f64)>, rhs: f64) -> Self {
        Constraint { name: name.into(), coeffs, rhs }
    }

    pub fn activity(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().map(|&(j, a)| a * x[j]).sum()
    }
}

/// `min c'x` subject to `A_eq x = b_eq`, `A_in x <= b_in`, `x >= 0`.
///
/// Variables listed in `fixed_zero` are pinned at 0. `free_rows` are carried for
/// export only and never constrain the solution.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LinearProgram {
    pub var_names: Vec<String>,
    pub objective: Vec<f64>,
    pub equalities: Vec<Constraint>,
    pub inequalities: Vec<Constraint>,
    #[serde(default)]
    pub fixed_zero: Vec<usize>,
    #[serde(default)]
    pub free_rows: Vec<Constraint>,
}

impl LinearProgram {
    pub fn num_vars(&self) -> usize {
        self.var_names.len()
    }

    /// Checks dimensions, indices and finiteness.
    pub fn validate(&self) -> Result<()> {
        let n = self.num_vars();
        if self.objective.len() != n {
            return Err(Error::InvalidModel(format!(
                "objective has {} entries for {n} variables",
                self.objective.len()
            )));
        }
        if self.objective.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidModel("objective has non-finite entries".into()));
        }
        for row in self.equalities.iter().chain(&self.inequalities).chain(&self.free_rows) {
            if !row.rhs.is_finite() {
                return Err(Error::InvalidModel(format!("row {} has non-finite rhs", row.name)));
            }
            for &(j, a) in &row.coeffs {
                if j >= n || !a.is_finite() {
                    return Err(Error::InvalidModel(format!("row {} has a bad entry ({j}, {a})", row.name)));
                }
            }
        }
        if let Some(&j) = self.fixed_zero.iter().find(|&&j| j >= n) {
            return Err(Error::InvalidModel(format!("fixed variable {j} out of range")));
        }
        Ok(())
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

/// Result of [`simplex_solve`]. Duals follow the convention
/// `reduced_costs = c - A_eq' y_eq - A_in' y_in`, so `y_in <= 0` at an optimum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpSolution {
    pub status: LpStatus,
    pub objective: f64,
    pub x: Vec<f64>,
    pub duals_eq: Vec<f64>,
    pub duals_in: Vec<f64>,
    pub reduced_costs: Vec<f64>,
    pub iterations: usize,
    /// Improving direction over the structural variables when unbounded.
    pub ray: Option<Vec<f64>>,
}

/// Largest violations of the optimality conditions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    pub primal: f64,
    pub dual: f64,
    pub complementarity: f64,
}

impl LpSolution {
    /// Primal feasibility, dual feasibility and complementary slackness residuals.
    pub fn residuals(&self, lp: &LinearProgram) -> Residuals {
        let mut primal: f64 = self.x.iter().map(|&v| (-v).max(0.0)).fold(0.0, f64::max);
        for &j in &lp.fixed_zero {
            primal = primal.max(self.x[j].abs());
        }
        for row in &lp.equalities {
            primal = primal.max((row.activity(&self.x) - row.rhs).abs());
        }
        for row in &lp.inequalities {
            primal = primal.max((row.activity(&self.x) - row.rhs).max(0.0));
        }
        let mut dual: f64 = self.duals_in.iter().map(|&y| y.max(0.0)).fold(0.0, f64::max);
        let mut comp: f64 = 0.0;
        let frozen: Vec<bool> = {
            let mut f = vec![false; lp.num_vars()];
            for &j in &lp.fixed_zero {
                f[j] = true;
            }
            f
        };
        for (j, &d) in self.reduced_costs.iter().enumerate() {
            if frozen[j] {
                continue;
            }
            dual = dual.max((-d).max(0.0));
            comp = comp.max((d * self.x[j]).abs());
        }
        for (row, &y) in lp.inequalities.iter().zip(&self.duals_in) {
            comp = comp.max((y * (row.rhs - row.activity(&self.x))).abs());
        }
        Residuals { primal, dual, complementarity: comp }
    }
}
