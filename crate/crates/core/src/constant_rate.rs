//! Pure-jump models: every post-jump point is a fixed state with no flow, the
//! boundary is never reached, and the rate, jump law and running costs are
//! constants per (state, action). The one-stage operators have closed forms.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ActionId, FeasibleSet, FiniteInstance, Jump, PdmpModel, Row, StateId};
use crate::operators::RowDiagnostics;

/// Label of the placeholder boundary action appended to the action list.
pub const NO_BOUNDARY: &str = "none";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: String,
    pub action: String,
    pub rate: f64,
    /// Post-jump distribution by state label.
    pub jump: BTreeMap<String, f64>,
    /// Running costs `f_0..f_n`.
    pub cost: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantRateSpec {
    pub alpha: f64,
    pub states: Vec<String>,
    pub actions: Vec<String>,
    pub transitions: Vec<Transition>,
    pub initial: BTreeMap<String, f64>,
    #[serde(default)]
    pub limits: Vec<f64>,
}

#[derive(Debug, Clone)]
struct Entry {
    rate: f64,
    jump: Vec<(StateId, f64)>,
    cost: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ConstantRateModel {
    spec: ConstantRateSpec,
    points: Vec<usize>,
    /// Interior actions plus the boundary placeholder.
    actions: Vec<usize>,
    entries: HashMap<(usize, usize), Entry>,
    feasible: Vec<FeasibleSet>,
    nu0: Vec<f64>,
    n_costs: usize,
}

impl ConstantRateModel {
    pub fn new(spec: ConstantRateSpec) -> Result<Self> {
        let bad = |m: String| Err(Error::InvalidModel(m));
        if !(spec.alpha.is_finite() && spec.alpha > 0.0) {
            return bad(format!("alpha must be positive, got {}", spec.alpha));
        }
        let state_of: HashMap<&str, usize> = spec.states.iter().enumerate().map(|(j, s)| (s.as_str(), j)).collect();
        let action_of: HashMap<&str, usize> = spec.actions.iter().enumerate().map(|(k, a)| (a.as_str(), k)).collect();
        if state_of.len() != spec.states.len() || action_of.len() != spec.actions.len() {
            return bad("state and action labels must be unique".into());
        }
        if action_of.contains_key(NO_BOUNDARY) {
            return bad(format!("action label {NO_BOUNDARY:?} is reserved"));
        }
        let find = |map: &HashMap<&str, usize>, what: &str, key: &str| {
            map.get(key).copied().ok_or_else(|| Error::InvalidModel(format!("unknown {what} {key:?}")))
        };
        let n_costs = spec.limits.len() + 1;
        let mut entries = HashMap::new();
        let mut interior = vec![Vec::new(); spec.states.len()];
        for t in &spec.transitions {
            let j = find(&state_of, "state", &t.state)?;
            let k = find(&action_of, "action", &t.action)?;
            if !(t.rate.is_finite() && t.rate > 0.0) {
                return bad(format!("rate of ({}, {}) must be positive, got {}", t.state, t.action, t.rate));
            }
            if t.cost.len() != n_costs {
                return bad(format!("({}, {}) has {} costs, expected {n_costs}", t.state, t.action, t.cost.len()));
            }
            let mut jump = Vec::new();
            for (label, &p) in &t.jump {
                if !(p.is_finite() && p >= 0.0) {
                    return bad(format!("jump probability {p} to {label:?} is invalid"));
                }
                jump.push((StateId(find(&state_of, "state", label)?), p));
            }
            let mass: f64 = jump.iter().map(|e| e.1).sum();
            if (mass - 1.0).abs() > 1e-12 {
                return bad(format!("jump law of ({}, {}) sums to {mass}", t.state, t.action));
            }
            jump.sort_by_key(|e| e.0);
            if entries.insert((j, k), Entry { rate: t.rate, jump, cost: t.cost.clone() }).is_some() {
                return bad(format!("duplicate transition ({}, {})", t.state, t.action));
            }
            interior[j].push(ActionId(k));
        }
        let none = ActionId(spec.actions.len());
        let feasible: Vec<FeasibleSet> = interior
            .into_iter()
            .map(|mut v| {
                v.sort();
                FeasibleSet { interior: v, boundary: vec![none] }
            })
            .collect();
        let mut nu0 = vec![0.0; spec.states.len()];
        for (label, &p) in &spec.initial {
            nu0[find(&state_of, "state", label)?] = p;
        }
        Ok(ConstantRateModel {
            points: (0..spec.states.len()).collect(),
            actions: (0..=spec.actions.len()).collect(),
            spec,
            entries,
            feasible,
            nu0,
            n_costs,
        })
    }

    fn entry(&self, j: usize, k: usize) -> &Entry {
        &self.entries[&(j, k)]
    }

    /// Exact rows: `G = lam / (alpha + lam) Q`, `Lf = f / (alpha + lam)`, `calL = 1 / (alpha + lam)`.
    pub fn instance(&self) -> FiniteInstance {
        let alpha = self.spec.alpha;
        let rows = self
            .feasible
            .iter()
            .enumerate()
            .flat_map(|(j, set)| set.pairs().map(move |(k, i)| (j, k, i)))
            .map(|(j, k, i)| {
                let e = self.entry(j, k.0);
                let cal_l = 1.0 / (alpha + e.rate);
                Row {
                    state: StateId(j),
                    interior: k,
                    boundary: i,
                    g: e.jump.iter().map(|&(s, p)| (s, p * e.rate * cal_l)).collect(),
                    lf: e.cost.iter().map(|c| c * cal_l).collect(),
                    hr: vec![0.0; self.n_costs],
                    cal_l,
                    cal_h: 0.0,
                    diagnostics: Some(RowDiagnostics { l_lambda_alpha: 1.0, ..Default::default() }),
                }
            })
            .collect();
        FiniteInstance {
            states: self.spec.states.clone(),
            actions: self.spec.actions.iter().cloned().chain([NO_BOUNDARY.to_string()]).collect(),
            feasible: self.feasible.clone(),
            alpha,
            rows,
            nu0: self.nu0.clone(),
            limits: self.spec.limits.clone(),
        }
    }
}

impl PdmpModel for ConstantRateModel {
    type Point = usize;
    type Action = usize;
    type Control = usize;

    fn alpha(&self) -> f64 {
        self.spec.alpha
    }

    fn states(&self) -> &[usize] {
        &self.points
    }

    fn state_label(&self, j: StateId) -> String {
        self.spec.states[j.0].clone()
    }

    fn actions(&self) -> &[usize] {
        &self.actions
    }

    fn action_label(&self, a: ActionId) -> String {
        self.spec.actions.get(a.0).cloned().unwrap_or_else(|| NO_BOUNDARY.into())
    }

    fn feasible(&self, j: StateId) -> FeasibleSet {
        self.feasible[j.0].clone()
    }

    fn flow(&self, x: &usize, _t: f64) -> usize {
        *x
    }

    fn t_star(&self, _x: &usize) -> f64 {
        f64::INFINITY
    }

    fn rate(&self, y: &usize, control: &usize) -> f64 {
        self.entry(*y, *control).rate
    }

    fn rate_lower(&self, y: &usize) -> Option<f64> {
        self.feasible[*y].interior.iter().map(|k| self.entry(*y, k.0).rate).reduce(f64::min)
    }

    fn rate_upper(&self, y: &usize) -> Option<f64> {
        self.feasible[*y].interior.iter().map(|k| self.entry(*y, k.0).rate).reduce(f64::max)
    }

    fn control(&self, _x: &usize, a: &usize, _t: f64) -> usize {
        *a
    }

    fn ell_breakpoints(&self, _x: &usize, _a: &usize) -> Vec<f64> {
        Vec::new()
    }

    fn jump(&self, y: &usize, jump: Jump<'_, usize, usize>) -> Vec<(StateId, f64)> {
        match jump {
            Jump::Interior(k) => self.entry(*y, *k).jump.clone(),
            Jump::Boundary(_) => Vec::new(),
        }
    }

    fn num_costs(&self) -> usize {
        self.n_costs
    }

    fn running_cost(&self, i: usize, y: &usize, a: &usize) -> f64 {
        self.entries.get(&(*y, *a)).map_or(0.0, |e| e.cost[i])
    }

    fn boundary_cost(&self, _i: usize, _z: &usize, _a: &usize) -> f64 {
        0.0
    }

    fn running_cost_bound(&self, i: usize) -> Option<f64> {
        Some(self.entries.values().map(|e| e.cost[i].abs()).fold(0.0, f64::max))
    }

    fn initial(&self) -> Vec<f64> {
        self.nu0.clone()
    }

    fn limits(&self) -> Vec<f64> {
        self.spec.limits.clone()
    }
}

/// Two states jumping into each other at rate 1 with `alpha = 1` and unit running cost.
pub fn two_state_cycle() -> ConstantRateModel {
    let t = |from: &str, to: &str| Transition {
        state: from.into(),
        action: "go".into(),
        rate: 1.0,
        jump: BTreeMap::from([(to.to_string(), 1.0)]),
        cost: vec![1.0],
    };
    ConstantRateModel::new(ConstantRateSpec {
        alpha: 1.0,
        states: vec!["z1".into(), "z2".into()],
        actions: vec!["go".into()],
        transitions: vec![t("z1", "z2"), t("z2", "z1")],
        initial: BTreeMap::from([("z1".to_string(), 1.0)]),
        limits: vec![],
    })
    .expect("fixture is valid")
}
