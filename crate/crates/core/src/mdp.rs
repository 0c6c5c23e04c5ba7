//! Constrained total-cost MDP with state-dependent action sets, and the
//! augmentation of a tabulated PDMP instance by a cemetery state `Delta`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::{simplex_solve, Constraint, LinearProgram, LpSolution, LpStatus};
use crate::model::{ensure_valid, FiniteInstance};

const ROW_SUM_TOL: f64 = 1e-12;

/// One admissible action of a state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdpAction {
    pub label: String,
    /// `T(x, a; .)`, summing to one.
    pub transitions: Vec<(usize, f64)>,
    /// `C_0 .. C_{q+1}` at this pair.
    pub costs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstrainedMdp {
    pub states: Vec<String>,
    /// `A(x)` for every state.
    pub actions: Vec<Vec<MdpAction>>,
    /// Limits on `C_1 .. C_{q+1}`.
    pub limits: Vec<f64>,
    pub initial: Vec<f64>,
    /// Absorbing state whose visits are not counted: the total cost is what
    /// accrues before absorption.
    pub cemetery: Option<usize>,
}

impl ConstrainedMdp {
    pub fn validate(&self) -> Result<()> {
        let s = self.states.len();
        let bad = |msg: String| Err(Error::InvalidModel(msg));
        if self.actions.len() != s || self.initial.len() != s {
            return bad("action lists and initial law must cover every state".into());
        }
        for (x, acts) in self.actions.iter().enumerate() {
            if acts.is_empty() {
                return bad(format!("state {x} has no admissible action"));
            }
            for a in acts {
                let sum: f64 = a.transitions.iter().map(|&(_, p)| p).sum();
                if (sum - 1.0).abs() > ROW_SUM_TOL || a.transitions.iter().any(|&(y, p)| y >= s || p < 0.0) {
                    return bad(format!("T({x}, {}) is not a probability vector (sum {sum})", a.label));
                }
                if a.costs.len() != self.limits.len() + 1 || a.costs.iter().any(|&c| !(c >= 0.0) || !c.is_finite()) {
                    return bad(format!(
                        "costs at ({x}, {}) must be {} nonnegative reals",
                        a.label,
                        self.limits.len() + 1
                    ));
                }
            }
        }
        if let Some(d) = self.cemetery {
            let absorbing =
                d < s && self.actions[d].iter().all(|a| a.transitions.iter().all(|&(y, p)| y == d || p == 0.0));
            if !absorbing {
                return bad(format!("cemetery {d} is not absorbing"));
            }
        }
        Ok(())
    }

    /// `(state, action index)` of every LP variable, in order.
    fn pairs(&self) -> Vec<(usize, usize)> {
        self.actions.iter().enumerate().flat_map(|(x, acts)| (0..acts.len()).map(move |a| (x, a))).collect()
    }
}

/// Adds `Delta` with `T(x, a; {Delta}) = 1 - G(x, a; E)`, `T(Delta, Delta; {Delta}) = 1`,
/// costs `C_i = Lf_i + Hr_i` (zero at Delta) and the indicator cost `C_{n+1}` of
/// `(Delta, Delta)` with limit 0.
pub fn augment_delta(inst: &FiniteInstance) -> Result<ConstrainedMdp> {
    ensure_valid(inst)?;
    let s = inst.num_states();
    let n_costs = inst.num_costs();
    let offsets = inst.row_offsets();
    let mut actions = Vec::with_capacity(s + 1);
    for j in 0..s {
        let acts = inst.rows[offsets[j]..offsets[j + 1]]
            .iter()
            .map(|row| {
                let mut transitions: Vec<(usize, f64)> = row.g.iter().map(|&(p, g)| (p.0, g)).collect();
                let killed = (1.0 - row.g_mass()).max(0.0);
                if killed > 0.0 {
                    transitions.push((s, killed));
                }
                let mut costs: Vec<f64> = (0..n_costs).map(|i| row.stage_cost(i)).collect();
                costs.push(0.0);
                MdpAction {
                    label: format!("{}/{}", inst.actions[row.interior.0], inst.actions[row.boundary.0]),
                    transitions,
                    costs,
                }
            })
            .collect();
        actions.push(acts);
    }
    let mut delta_costs = vec![0.0; n_costs];
    delta_costs.push(1.0);
    actions.push(vec![MdpAction { label: "DELTA".into(), transitions: vec![(s, 1.0)], costs: delta_costs }]);

    let mut states = inst.states.clone();
    states.push("DELTA".into());
    let mut limits = inst.limits.clone();
    limits.push(0.0);
    let mut initial = inst.nu0.clone();
    initial.push(0.0);
    Ok(ConstrainedMdp { states, actions, limits, initial, cemetery: Some(s) })
}

/// Total-cost occupation LP: balance `gamma(x) = nu(x) + sum gamma T(.; x)` and
/// `gamma(C_i) <= R_i`. The cemetery (if any) keeps its variable fixed at zero and
/// its balance row free.
pub fn total_cost_lp(mdp: &ConstrainedMdp) -> Result<LinearProgram> {
    mdp.validate()?;
    let s = mdp.states.len();
    let pairs = mdp.pairs();
    let name = |x: usize, a: usize| -> String {
        if Some(x) == mdp.cemetery {
            "mu_DELTA".into()
        } else {
            format!("mu_{x}_{a}")
        }
    };
    let row_name = |x: usize| -> String {
        if Some(x) == mdp.cemetery {
            "bal_DELTA".into()
        } else {
            format!("bal_{x}")
        }
    };
    let mut balance: Vec<Vec<(usize, f64)>> = vec![Vec::new(); s];
    for (v, &(x, a)) in pairs.iter().enumerate() {
        let mut coeff: Vec<(usize, f64)> = vec![(x, 1.0)];
        coeff.extend(mdp.actions[x][a].transitions.iter().map(|&(y, p)| (y, -p)));
        coeff.sort_by_key(|&(y, _)| y);
        let mut merged: Vec<(usize, f64)> = Vec::new();
        for (y, c) in coeff {
            match merged.last_mut() {
                Some(last) if last.0 == y => last.1 += c,
                _ => merged.push((y, c)),
            }
        }
        for (y, c) in merged {
            if c != 0.0 {
                balance[y].push((v, c));
            }
        }
    }
    let mut lp = LinearProgram {
        var_names: pairs.iter().map(|&(x, a)| name(x, a)).collect(),
        objective: pairs.iter().map(|&(x, a)| mdp.actions[x][a].costs[0]).collect(),
        ..Default::default()
    };
    for (x, coeffs) in balance.into_iter().enumerate() {
        let row = Constraint::new(row_name(x), coeffs, mdp.initial[x]);
        if Some(x) == mdp.cemetery {
            lp.free_rows.push(row);
        } else {
            lp.equalities.push(row);
        }
    }
    for (i, &limit) in mdp.limits.iter().enumerate() {
        let coeffs = pairs
            .iter()
            .enumerate()
            .map(|(v, &(x, a))| (v, mdp.actions[x][a].costs[i + 1]))
            .filter(|&(_, c)| c != 0.0)
            .collect();
        lp.inequalities.push(Constraint::new(format!("con_{}", i + 1), coeffs, limit));
    }
    lp.fixed_zero = pairs.iter().enumerate().filter(|(_, &(x, _))| Some(x) == mdp.cemetery).map(|(v, _)| v).collect();
    Ok(lp)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TotalCostSolution {
    pub value: f64,
    /// `gamma(x, a)` per state and action.
    pub occupation: Vec<Vec<f64>>,
    /// Mass absorbed into the cemetery, `sum gamma T(.; {Delta})`.
    pub cemetery_inflow: f64,
    pub lp: LpSolution,
}

/// Solves the total-cost LP of `mdp`.
pub fn solve_total_cost_lp(mdp: &ConstrainedMdp) -> Result<TotalCostSolution> {
    let lp = total_cost_lp(mdp)?;
    let sol = simplex_solve(&lp)?;
    match sol.status {
        LpStatus::Infeasible => return Err(Error::Infeasible),
        LpStatus::Unbounded => return Err(Error::Unbounded { ray: sol.ray.unwrap_or_default() }),
        LpStatus::Optimal => {}
    }
    let mut occupation: Vec<Vec<f64>> = mdp.actions.iter().map(|a| vec![0.0; a.len()]).collect();
    let mut inflow = 0.0;
    for (v, &(x, a)) in mdp.pairs().iter().enumerate() {
        let g = sol.x[v].max(0.0);
        occupation[x][a] = g;
        if let Some(d) = mdp.cemetery {
            if x != d {
                inflow +=
                    g * mdp.actions[x][a].transitions.iter().filter(|&&(y, _)| y == d).map(|&(_, p)| p).sum::<f64>();
            }
        }
    }
    Ok(TotalCostSolution { value: sol.objective, occupation, cemetery_inflow: inflow, lp: sol })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::tests::two_state_cycle;

    #[test]
    fn delta_collects_killed_mass() {
        let mdp = augment_delta(&two_state_cycle()).unwrap();
        assert_eq!(mdp.states.len(), 3);
        assert_eq!(mdp.actions[0][0].transitions, vec![(1, 0.5), (2, 0.5)]);
        assert_eq!(mdp.actions[2][0].transitions, vec![(2, 1.0)]);
        assert_eq!(mdp.actions[2][0].costs, vec![0.0, 1.0]);
        assert_eq!(mdp.limits, vec![0.0]);
    }

    #[test]
    fn full_mass_rows_never_reach_delta() {
        let mut inst = two_state_cycle();
        inst.alpha = 1e-300;
        for r in &mut inst.rows {
            r.g[0].1 = 1.0;
        }
        let mdp = augment_delta(&inst).unwrap();
        assert_eq!(mdp.actions[0][0].transitions, vec![(1, 1.0)]);
    }

    #[test]
    fn augmented_cycle_matches_direct_value() {
        let sol = solve_total_cost_lp(&augment_delta(&two_state_cycle()).unwrap()).unwrap();
        assert!((sol.value - 1.0).abs() < 1e-12);
        assert_eq!(sol.occupation[2], vec![0.0]);
        // Everything is eventually absorbed.
        assert!((sol.cemetery_inflow - 1.0).abs() < 1e-12);
    }

    fn route_to_trap(trap_cost: f64) -> ConstrainedMdp {
        ConstrainedMdp {
            states: vec!["start".into(), "trap".into()],
            actions: vec![
                vec![MdpAction { label: "go".into(), transitions: vec![(1, 1.0)], costs: vec![1.0, 0.0] }],
                vec![MdpAction { label: "stay".into(), transitions: vec![(1, 1.0)], costs: vec![0.0, trap_cost] }],
            ],
            limits: vec![0.0],
            initial: vec![1.0, 0.0],
            cemetery: None,
        }
    }

    #[test]
    fn indicator_limit_makes_forced_routing_infeasible() {
        assert!(matches!(solve_total_cost_lp(&route_to_trap(1.0)), Err(Error::Infeasible)));
    }

    #[test]
    fn zero_costs_give_zero_value() {
        let mut inst = two_state_cycle();
        for r in &mut inst.rows {
            r.lf = vec![0.0];
        }
        let sol = solve_total_cost_lp(&augment_delta(&inst).unwrap()).unwrap();
        assert_eq!(sol.value, 0.0);
    }

    #[test]
    fn substochastic_rows_are_rejected() {
        let mut mdp = route_to_trap(0.0);
        mdp.actions[0][0].transitions = vec![(1, 0.9)];
        assert!(mdp.validate().is_err());
    }

    #[test]
    fn exported_names_follow_convention() {
        let lp = total_cost_lp(&augment_delta(&two_state_cycle()).unwrap()).unwrap();
        assert_eq!(lp.var_names.last().unwrap(), "mu_DELTA");
        assert_eq!(lp.free_rows[0].name, "bal_DELTA");
        assert_eq!(lp.fixed_zero, vec![2]);
    }
}
