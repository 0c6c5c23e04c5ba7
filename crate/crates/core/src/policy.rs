//! Stationary randomized strategies: disintegration of an occupation measure
//! and exact evaluation through the linear system `(I - G_phi') mu~ = nu0`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ActionId, FeasibleSet, FiniteInstance, StateId};
use crate::occupation::OccupationMeasure;

/// States whose marginal is at most this are treated as unvisited.
pub const ZERO_MARGINAL: f64 = 1e-12;
const DIVERGENCE_MARGIN: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    FromMeasure,
    DefaultFill,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyEntry {
    pub interior_action: ActionId,
    pub boundary_action: ActionId,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatePolicy {
    pub state: StateId,
    #[serde(default)]
    pub label: String,
    pub provenance: Provenance,
    pub actions: Vec<PolicyEntry>,
}

/// Per-state distribution over feasible action pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationaryPolicy {
    pub states: Vec<StatePolicy>,
}

impl StationaryPolicy {
    /// Point mass on one pair per state.
    pub fn deterministic(inst: &FiniteInstance, choice: &[(ActionId, ActionId)]) -> Self {
        let states = choice
            .iter()
            .enumerate()
            .map(|(j, &(k, i))| StatePolicy {
                state: StateId(j),
                label: inst.states[j].clone(),
                provenance: Provenance::FromMeasure,
                actions: vec![PolicyEntry { interior_action: k, boundary_action: i, probability: 1.0 }],
            })
            .collect();
        StationaryPolicy { states }
    }

    /// Checks that the policy covers every state of `inst` with feasible pairs
    /// and per-state probabilities summing to one.
    pub fn check_compatible(&self, inst: &FiniteInstance) -> Result<()> {
        if self.states.len() != inst.num_states() {
            return Err(Error::Incompatible(format!(
                "policy has {} states, instance has {}",
                self.states.len(),
                inst.num_states()
            )));
        }
        for (j, sp) in self.states.iter().enumerate() {
            if sp.state.0 != j {
                return Err(Error::Incompatible(format!("policy entry {j} is for state {}", sp.state)));
            }
            let mut sum = 0.0;
            for e in &sp.actions {
                if inst.row_index(sp.state, e.interior_action, e.boundary_action).is_none() {
                    return Err(Error::Incompatible(format!(
                        "state {j}: pair ({}, {}) is not feasible",
                        e.interior_action, e.boundary_action
                    )));
                }
                if !(e.probability >= 0.0) {
                    return Err(Error::Incompatible(format!("state {j}: negative probability")));
                }
                sum += e.probability;
            }
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::Incompatible(format!("state {j}: probabilities sum to {sum}")));
            }
        }
        Ok(())
    }

    /// `(row index, probability)` pairs of state `j` in `inst`.
    pub fn rows(&self, inst: &FiniteInstance, j: StateId) -> Vec<(usize, f64)> {
        self.states[j.0]
            .actions
            .iter()
            .filter_map(|e| inst.row_index(j, e.interior_action, e.boundary_action).map(|r| (r, e.probability)))
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&PolicyFile { schema: 1, states: self.states.clone() })?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: PolicyFile = serde_json::from_str(text)?;
        if f.schema != 1 {
            return Err(Error::Parse(format!("unsupported policy schema {}", f.schema)));
        }
        Ok(StationaryPolicy { states: f.states })
    }
}

#[derive(Serialize, Deserialize)]
struct PolicyFile {
    schema: u32,
    states: Vec<StatePolicy>,
}

/// Lexicographically smallest feasible pair.
pub fn smallest_pair(set: &FeasibleSet) -> (ActionId, ActionId) {
    let k = *set.interior.iter().min().expect("nonempty interior set");
    let i = *set.boundary.iter().min().expect("nonempty boundary set");
    (k, i)
}

/// `phi(z_j; (k, i)) = mu_{j,k,i} / mu~_j`, filling unvisited states with the smallest pair.
pub fn disintegrate(mu: &OccupationMeasure, inst: &FiniteInstance) -> StationaryPolicy {
    disintegrate_with(mu, inst, smallest_pair)
}

/// [`disintegrate`] with a caller-chosen pair for unvisited states.
pub fn disintegrate_with<F>(mu: &OccupationMeasure, inst: &FiniteInstance, fill: F) -> StationaryPolicy
where
    F: Fn(&FeasibleSet) -> (ActionId, ActionId),
{
    let offsets = inst.row_offsets();
    let states = (0..inst.num_states())
        .map(|j| {
            let rows = offsets[j]..offsets[j + 1];
            let weights: Vec<f64> = mu.weights[rows.clone()].iter().map(|w| w.max(0.0)).collect();
            let total: f64 = weights.iter().sum();
            let label = inst.states[j].clone();
            if total <= ZERO_MARGINAL {
                let (k, i) = fill(&inst.feasible[j]);
                return StatePolicy {
                    state: StateId(j),
                    label,
                    provenance: Provenance::DefaultFill,
                    actions: vec![PolicyEntry { interior_action: k, boundary_action: i, probability: 1.0 }],
                };
            }
            let actions = rows
                .zip(&weights)
                .filter(|(_, &w)| w > 0.0)
                .map(|(r, &w)| PolicyEntry {
                    interior_action: inst.rows[r].interior,
                    boundary_action: inst.rows[r].boundary,
                    probability: w / total,
                })
                .collect();
            StatePolicy { state: StateId(j), label, provenance: Provenance::FromMeasure, actions }
        })
        .collect();
    StationaryPolicy { states }
}

/// Exact discounted costs of a stationary policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyEvaluation {
    /// `D_0..D_n`.
    pub costs: Vec<f64>,
    /// The occupation measure the policy induces, row by row.
    pub measure: OccupationMeasure,
    /// `V_i(j)`: cost `i` starting from `z_j`.
    pub state_values: Vec<Vec<f64>>,
    /// Expected `sum_k e^{-alpha T_k}` starting from `z_j`.
    pub state_mass: Vec<f64>,
    /// Upper bound on the spectral radius of `G_phi`.
    pub spectral_bound: f64,
}

/// Spectral radius of `g`, with the max row sum used when it already certifies convergence.
fn spectral_bound(g: &DMatrix<f64>) -> f64 {
    let norm = (0..g.nrows()).map(|i| g.row(i).iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
    if norm < 1.0 - DIVERGENCE_MARGIN {
        return norm;
    }
    g.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Solves `(I - G_phi') mu~ = nu0` and returns `mu~' (Lf_i + Hr_i)(., phi)` for every `i`.
pub fn evaluate_policy_exact(phi: &StationaryPolicy, inst: &FiniteInstance) -> Result<PolicyEvaluation> {
    phi.check_compatible(inst)?;
    let s = inst.num_states();
    let n_costs = inst.num_costs();
    let mut g = DMatrix::<f64>::zeros(s, s);
    let mut c = DMatrix::<f64>::zeros(s, n_costs + 1);
    let mut state_rows = Vec::with_capacity(s);
    for j in 0..s {
        let rows = phi.rows(inst, StateId(j));
        for &(r, p) in &rows {
            let row = &inst.rows[r];
            for &(t, q) in &row.g {
                g[(j, t.0)] += p * q;
            }
            for i in 0..n_costs {
                c[(j, i)] += p * row.stage_cost(i);
            }
            c[(j, n_costs)] += p;
        }
        state_rows.push(rows);
    }
    let radius = spectral_bound(&g);
    if radius >= 1.0 - DIVERGENCE_MARGIN {
        return Err(Error::SeriesDivergence(radius));
    }
    let a = DMatrix::<f64>::identity(s, s) - &g;
    let lu = a.clone().lu();
    let values = lu.solve(&c).ok_or(Error::SeriesDivergence(radius))?;
    let marginal =
        a.transpose().lu().solve(&DVector::from_column_slice(&inst.nu0)).ok_or(Error::SeriesDivergence(radius))?;

    let mut weights = vec![0.0; inst.rows.len()];
    for (j, rows) in state_rows.iter().enumerate() {
        for &(r, p) in rows {
            weights[r] = p * marginal[j];
        }
    }
    let measure = OccupationMeasure::from_weights(inst, weights);
    let costs = measure.cost_values(inst);
    Ok(PolicyEvaluation {
        costs,
        measure,
        state_values: (0..n_costs).map(|i| values.column(i).iter().copied().collect()).collect(),
        state_mass: values.column(n_costs).iter().copied().collect(),
        spectral_bound: radius,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::tests::two_state_cycle;
    use crate::model::Row;
    use crate::occupation::solve_constrained_pdmp;

    #[test]
    fn single_pair_gives_point_mass() {
        let inst = two_state_cycle();
        let mu = OccupationMeasure::from_weights(&inst, vec![4.0 / 3.0, 2.0 / 3.0]);
        let phi = disintegrate(&mu, &inst);
        for sp in &phi.states {
            assert_eq!(sp.actions.len(), 1);
            assert_eq!(sp.actions[0].probability, 1.0);
            assert_eq!(sp.provenance, Provenance::FromMeasure);
        }
    }

    fn two_pair_instance() -> FiniteInstance {
        let mut inst = two_state_cycle();
        inst.feasible[0].interior = vec![ActionId(0), ActionId(1)];
        let mut extra = inst.rows[0].clone();
        extra.interior = ActionId(1);
        extra.g = vec![(StateId(1), 0.25)];
        extra.cal_l = 0.75;
        extra.lf = vec![0.75];
        inst.rows.insert(1, extra);
        inst
    }

    #[test]
    fn weights_are_normalized() {
        let inst = two_pair_instance();
        let mu = OccupationMeasure::from_weights(&inst, vec![0.3, 0.1, 0.0]);
        let phi = disintegrate(&mu, &inst);
        let p: Vec<f64> = phi.states[0].actions.iter().map(|e| e.probability).collect();
        assert!((p[0] - 0.75).abs() < 1e-15 && (p[1] - 0.25).abs() < 1e-15);
        assert_eq!(phi.states[1].provenance, Provenance::DefaultFill);
        assert_eq!(phi.states[1].actions[0].interior_action, ActionId(0));
    }

    #[test]
    fn cycle_policy_cost_is_one() {
        let inst = two_state_cycle();
        let phi = StationaryPolicy::deterministic(&inst, &[(ActionId(0), ActionId(1)); 2]);
        let ev = evaluate_policy_exact(&phi, &inst).unwrap();
        assert!((ev.costs[0] - 1.0).abs() < 1e-14);
        assert!((ev.measure.total_mass() - 2.0).abs() < 1e-14);
        // From z_2 the roles swap, so the value is also 1 by symmetry.
        assert!((ev.state_values[0][1] - 1.0).abs() < 1e-14);
        assert!((ev.spectral_bound - 0.5).abs() < 1e-15);
    }

    #[test]
    fn zero_costs_evaluate_to_zero() {
        let mut inst = two_state_cycle();
        for r in &mut inst.rows {
            r.lf = vec![0.0];
        }
        let phi = StationaryPolicy::deterministic(&inst, &[(ActionId(0), ActionId(1)); 2]);
        assert_eq!(evaluate_policy_exact(&phi, &inst).unwrap().costs, vec![0.0]);
    }

    #[test]
    fn round_trip_reproduces_lp_value() {
        let inst = two_pair_instance();
        let sol = solve_constrained_pdmp(&inst).unwrap();
        let phi = disintegrate(&sol.measure, &inst);
        let ev = evaluate_policy_exact(&phi, &inst).unwrap();
        assert!((ev.costs[0] - sol.objective).abs() < 1e-12);
    }

    #[test]
    fn unreachable_fill_does_not_change_costs() {
        let mut inst = two_pair_instance();
        // Add an unreachable third state with two pairs.
        inst.states.push("z3".into());
        inst.nu0.push(0.0);
        inst.feasible.push(FeasibleSet { interior: vec![ActionId(0), ActionId(1)], boundary: vec![ActionId(1)] });
        for k in 0..2 {
            inst.rows.push(Row {
                state: StateId(2),
                interior: ActionId(k),
                boundary: ActionId(1),
                g: vec![(StateId(0), 0.5)],
                lf: vec![0.5 + k as f64],
                hr: vec![0.0],
                cal_l: 0.5,
                cal_h: 0.0,
                diagnostics: None,
            });
        }
        let sol = solve_constrained_pdmp(&inst).unwrap();
        let a = disintegrate(&sol.measure, &inst);
        let b = disintegrate_with(&sol.measure, &inst, |set| (*set.interior.iter().max().unwrap(), set.boundary[0]));
        assert_ne!(a, b);
        let ca = evaluate_policy_exact(&a, &inst).unwrap().costs;
        let cb = evaluate_policy_exact(&b, &inst).unwrap().costs;
        assert_eq!(ca, cb);
    }

    #[test]
    fn divergent_kernel_is_rejected() {
        let mut inst = two_state_cycle();
        for r in &mut inst.rows {
            r.g[0].1 = 1.0;
            r.cal_l = 0.0;
        }
        let phi = StationaryPolicy::deterministic(&inst, &[(ActionId(0), ActionId(1)); 2]);
        assert!(matches!(evaluate_policy_exact(&phi, &inst), Err(Error::SeriesDivergence(_))));
    }

    #[test]
    fn json_round_trip_and_mismatch() {
        let inst = two_state_cycle();
        let phi = StationaryPolicy::deterministic(&inst, &[(ActionId(0), ActionId(1)); 2]);
        let text = phi.to_json().unwrap();
        assert!(text.contains("\"interior_action\": 0"));
        let back = StationaryPolicy::from_json(&text).unwrap();
        assert_eq!(back, phi);
        let wrong = StationaryPolicy::deterministic(&inst, &[(ActionId(1), ActionId(1)); 2]);
        assert!(matches!(wrong.check_compatible(&inst), Err(Error::Incompatible(_))));
    }
}
