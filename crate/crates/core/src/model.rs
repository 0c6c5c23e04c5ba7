//! Problem data: the behavioral PDMP description ([`PdmpModel`]) and the
//! tabulated [`FiniteInstance`] the occupation-measure LP consumes.
//!
//! A finite instance lists the post-jump points `z_1..z_s`, the global action
//! list `u_1..u_r`, and for every state the interior and boundary action index
//! sets. Every feasible triple `(j, kappa, iota)` owns one [`Row`] holding the
//! one-stage quantities: the kernel row `G`, the running and boundary cost
//! integrals `Lf_i`, `Hr_i`, and the scalars `calL = L1`, `calH = H1`.

use std::collections::BTreeMap;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::operators::{self, QuadratureConfig, RowDiagnostics};

/// Index into the instance's state list `z_1..z_s`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StateId(pub usize);

/// Index into the instance's action list `u_1..u_r`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ActionId(pub usize);

impl fmt::Display for StateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for ActionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Interior and boundary action index sets of one state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibleSet {
    pub interior: Vec<ActionId>,
    pub boundary: Vec<ActionId>,
}

impl FeasibleSet {
    /// Feasible pairs in canonical (interior-major) order.
    pub fn pairs(&self) -> impl Iterator<Item = (ActionId, ActionId)> + '_ {
        self.interior.iter().flat_map(move |&k| self.boundary.iter().map(move |&i| (k, i)))
    }

    pub fn len(&self) -> usize {
        self.interior.len() * self.boundary.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// One-stage data of a feasible triple `(state, interior, boundary)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub state: StateId,
    pub interior: ActionId,
    pub boundary: ActionId,
    /// Sparse kernel row `G(z_j, u_kappa, u_iota; {z_p})`, sorted by state.
    #[serde(with = "sparse_row")]
    pub g: Vec<(StateId, f64)>,
    /// `L f_i` for `i = 0..=n`.
    pub lf: Vec<f64>,
    /// `H r_i` for `i = 0..=n`.
    pub hr: Vec<f64>,
    pub cal_l: f64,
    pub cal_h: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<RowDiagnostics>,
}

impl Row {
    pub fn g_mass(&self) -> f64 {
        self.g.iter().map(|&(_, p)| p).sum()
    }

    /// `Lf_i + Hr_i`.
    pub fn stage_cost(&self, i: usize) -> f64 {
        self.lf[i] + self.hr[i]
    }

    pub fn g_to(&self, target: StateId) -> f64 {
        self.g.binary_search_by_key(&target, |&(s, _)| s).map(|k| self.g[k].1).unwrap_or(0.0)
    }
}

/// Tabulated constrained PDMP problem in the finite post-jump/finite action regime.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteInstance {
    pub states: Vec<String>,
    pub actions: Vec<String>,
    pub feasible: Vec<FeasibleSet>,
    pub alpha: f64,
    pub rows: Vec<Row>,
    pub nu0: Vec<f64>,
    /// Constraint limits `d_1..d_n`.
    pub limits: Vec<f64>,
}

impl FiniteInstance {
    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn num_actions(&self) -> usize {
        self.actions.len()
    }

    /// Number of cost functions `n + 1` (objective plus constraints).
    pub fn num_costs(&self) -> usize {
        self.limits.len() + 1
    }

    /// Offset of each state's first row, plus a final sentinel equal to `rows.len()`.
    pub fn row_offsets(&self) -> Vec<usize> {
        let mut offsets = Vec::with_capacity(self.feasible.len() + 1);
        let mut acc = 0;
        for set in &self.feasible {
            offsets.push(acc);
            acc += set.len();
        }
        offsets.push(acc);
        offsets
    }

    /// Rows belonging to state `j`.
    pub fn state_rows(&self, j: StateId) -> std::ops::Range<usize> {
        let offsets = self.row_offsets();
        offsets[j.0]..offsets[j.0 + 1]
    }

    /// Row index of a feasible triple, if it is feasible.
    pub fn row_index(&self, j: StateId, interior: ActionId, boundary: ActionId) -> Option<usize> {
        let set = self.feasible.get(j.0)?;
        let k = set.interior.iter().position(|&a| a == interior)?;
        let i = set.boundary.iter().position(|&a| a == boundary)?;
        let offset: usize = self.feasible[..j.0].iter().map(FeasibleSet::len).sum();
        Some(offset + k * set.boundary.len() + i)
    }
}

/// A failed structural check on a [`FiniteInstance`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    /// Offending triple `(state, interior, boundary)`, when the rule is row-level.
    pub triple: Option<(usize, usize, usize)>,
    pub rule: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.triple {
            Some((j, k, i)) => write!(f, "row ({j},{k},{i}): {}", self.rule),
            None => write!(f, "{}", self.rule),
        }
    }
}

const PROB_TOL: f64 = 1e-12;
/// Tolerance on `G(E) + alpha * calL = 1` for stored instances.
pub const IDENTITY_TOL: f64 = 1e-8;

/// Checks every structural invariant of a finite instance. Empty means valid.
pub fn validate_instance(inst: &FiniteInstance) -> Vec<Violation> {
    let mut out = Vec::new();
    let global = |rule: String| Violation { triple: None, rule };
    let s = inst.num_states();
    let r = inst.num_actions();

    if !(inst.alpha > 0.0 && inst.alpha.is_finite()) {
        out.push(global(format!("alpha must be positive and finite, got {}", inst.alpha)));
    }
    if inst.feasible.len() != s {
        out.push(global(format!("feasible sets listed for {} states, expected {s}", inst.feasible.len())));
    }
    if inst.nu0.len() != s {
        out.push(global(format!("nu0 has {} entries, expected {s}", inst.nu0.len())));
    }
    let nu_mass: f64 = inst.nu0.iter().sum();
    if inst.nu0.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) || (nu_mass - 1.0).abs() > PROB_TOL {
        out.push(global(format!("nu0 not a probability vector (mass {nu_mass})")));
    }
    for (i, &d) in inst.limits.iter().enumerate() {
        if !(d >= 0.0) || !d.is_finite() {
            out.push(global(format!("limit d_{} must be a nonnegative real, got {d}", i + 1)));
        }
    }

    for (j, set) in inst.feasible.iter().enumerate() {
        for (name, ids) in [("interior", &set.interior), ("boundary", &set.boundary)] {
            if ids.is_empty() {
                out.push(global(format!("state {j}: {name} action set is empty")));
            }
            let mut seen = ids.clone();
            seen.sort();
            seen.dedup();
            if seen.len() != ids.len() {
                out.push(global(format!("state {j}: {name} action set has duplicates")));
            }
            if let Some(a) = ids.iter().find(|a| a.0 >= r) {
                out.push(global(format!("state {j}: {name} action {a} out of range (r = {r})")));
            }
        }
    }

    // Rows must enumerate the feasible triples in canonical order.
    let expected: Vec<(usize, usize, usize)> =
        inst.feasible.iter().enumerate().flat_map(|(j, set)| set.pairs().map(move |(k, i)| (j, k.0, i.0))).collect();
    let actual: Vec<(usize, usize, usize)> =
        inst.rows.iter().map(|row| (row.state.0, row.interior.0, row.boundary.0)).collect();
    if expected != actual {
        out.push(global(format!(
            "rows do not enumerate the feasible triples in canonical order ({} rows, {} triples)",
            actual.len(),
            expected.len()
        )));
    }

    let n_costs = inst.num_costs();
    for row in &inst.rows {
        let triple = Some((row.state.0, row.interior.0, row.boundary.0));
        let mut push = |rule: String| out.push(Violation { triple, rule });
        if row.lf.len() != n_costs || row.hr.len() != n_costs {
            push(format!("cost vectors must have {n_costs} entries"));
        }
        if row.lf.iter().chain(&row.hr).any(|&c| !(c >= 0.0) || !c.is_finite()) {
            push("costs must be finite and nonnegative".into());
        }
        if !(row.cal_l >= 0.0 && row.cal_l.is_finite()) || !(row.cal_h >= 0.0 && row.cal_h <= 1.0 + PROB_TOL) {
            push(format!("calL = {} / calH = {} out of range", row.cal_l, row.cal_h));
        }
        let mut prev: Option<StateId> = None;
        for &(target, p) in &row.g {
            if target.0 >= s {
                push(format!("G targets state {target} out of range"));
            }
            if !(-PROB_TOL..=1.0 + PROB_TOL).contains(&p) {
                push(format!("G entry {p} for state {target} outside [0, 1]"));
            }
            if prev.is_some_and(|q| q >= target) {
                push("G row is not sorted by state or repeats a state".into());
            }
            prev = Some(target);
        }
        let mass = row.g_mass();
        if mass > 1.0 + PROB_TOL {
            push(format!("G row mass {mass} exceeds 1"));
        }
        let identity = mass + inst.alpha * row.cal_l - 1.0;
        if identity.abs() > IDENTITY_TOL {
            push(format!("G(E) + alpha*calL - 1 = {identity:e} exceeds {IDENTITY_TOL:e}"));
        }
    }
    out
}

/// Returns the instance back if it validates, otherwise an error listing the violations.
pub fn ensure_valid(inst: &FiniteInstance) -> Result<()> {
    let violations = validate_instance(inst);
    if violations.is_empty() {
        Ok(())
    } else {
        let msg: Vec<String> = violations.iter().take(8).map(|v| v.to_string()).collect();
        Err(Error::InvalidInstance(format!("{} violation(s): {}", violations.len(), msg.join("; "))))
    }
}

/// Which transition measure governs a jump.
#[derive(Debug, Clone, Copy)]
pub enum Jump<'a, C, A> {
    /// Spontaneous jump from an interior point, governed by the rate control `ell`.
    Interior(&'a C),
    /// Forced jump at the boundary point `phi(x, t*(x))`, governed by the boundary action.
    Boundary(&'a A),
}

/// Behavioral description of a controlled PDMP with finitely many post-jump points.
///
/// All callbacks must be pure: tabulation and simulation call them from several
/// threads at once.
pub trait PdmpModel: Sync {
    type Point: Clone + fmt::Debug + Send + Sync;
    type Action: Clone + fmt::Debug + Send + Sync;
    type Control: Clone + fmt::Debug + PartialEq + Send + Sync;

    fn alpha(&self) -> f64;

    /// Post-jump points `z_1..z_s`.
    fn states(&self) -> &[Self::Point];
    fn state_label(&self, j: StateId) -> String {
        format!("{:?}", self.states()[j.0])
    }

    /// Action list `u_1..u_r`.
    fn actions(&self) -> &[Self::Action];
    fn action_label(&self, a: ActionId) -> String {
        format!("{:?}", self.actions()[a.0])
    }

    /// Interior and boundary feasible sets of state `j`.
    fn feasible(&self, j: StateId) -> FeasibleSet;

    fn flow(&self, x: &Self::Point, t: f64) -> Self::Point;

    /// Time to reach the boundary; `f64::INFINITY` if the flow never does.
    fn t_star(&self, x: &Self::Point) -> f64;

    fn rate(&self, y: &Self::Point, control: &Self::Control) -> f64;

    /// Positive lower bound on the jump rate along the forward flow from `y`.
    fn rate_lower(&self, _y: &Self::Point) -> Option<f64> {
        None
    }

    /// Upper bound on the jump rate along the forward flow from `y`.
    fn rate_upper(&self, _y: &Self::Point) -> Option<f64> {
        None
    }

    /// Bound `K_lambda` on `int_0^{t*} exp(-int_0^t lam_lower) dt`, when declared.
    fn rate_integral_bound(&self) -> Option<f64> {
        None
    }

    /// The control parametrization `ell(x, a, t)`.
    fn control(&self, x: &Self::Point, a: &Self::Action, t: f64) -> Self::Control;

    /// Times in `(0, t*(x))` where `ell(x, a, .)` is discontinuous.
    fn ell_breakpoints(&self, x: &Self::Point, a: &Self::Action) -> Vec<f64>;

    /// Times in `(0, t*(x))` where the interior jump target changes along the flow.
    fn kernel_breakpoints(&self, _x: &Self::Point, _a: &Self::Action) -> Vec<f64> {
        Vec::new()
    }

    /// Post-jump distribution: interior rows use `Q(y, control)`, boundary rows `Q(z, a_bd)`.
    fn jump(&self, point: &Self::Point, jump: Jump<'_, Self::Control, Self::Action>) -> Vec<(StateId, f64)>;

    /// Number of cost functions `n + 1`.
    fn num_costs(&self) -> usize;

    /// Running cost `f_i(y, a)`.
    fn running_cost(&self, i: usize, y: &Self::Point, a: &Self::Action) -> f64;

    /// Boundary cost `r_i(z, a_bd)`. Never evaluated when `t* = inf`.
    fn boundary_cost(&self, i: usize, z: &Self::Point, a: &Self::Action) -> f64;

    /// Supremum of `f_i` along reachable flow points, when known.
    fn running_cost_bound(&self, _i: usize) -> Option<f64> {
        None
    }

    fn initial(&self) -> Vec<f64>;

    /// Constraint limits `d_1..d_n`.
    fn limits(&self) -> Vec<f64>;
}

/// All breakpoints of the integrands along the flow from `x` under action `a`,
/// sorted, deduplicated and restricted to `(0, t_star)`.
pub fn merged_breakpoints<M: PdmpModel>(model: &M, x: &M::Point, a: &M::Action, t_star: f64) -> Vec<f64> {
    let mut bps: Vec<f64> = model
        .ell_breakpoints(x, a)
        .into_iter()
        .chain(model.kernel_breakpoints(x, a))
        .filter(|&t| t > 0.0 && t < t_star && t.is_finite())
        .collect();
    bps.sort_by(f64::total_cmp);
    bps.dedup_by(|a, b| (*a - *b).abs() <= 1e-14 * b.abs().max(1.0));
    bps
}

/// Evaluates the one-stage operators at every feasible triple of `model`.
///
/// Rows are computed in parallel; each row is independent, so the result is
/// identical for identical inputs.
pub fn tabulate<M: PdmpModel>(model: &M, quad: &QuadratureConfig) -> Result<FiniteInstance> {
    quad.validate()?;
    let s = model.states().len();
    let feasible: Vec<FeasibleSet> = (0..s).map(|j| model.feasible(StateId(j))).collect();
    let triples: Vec<(StateId, ActionId, ActionId)> =
        feasible.iter().enumerate().flat_map(|(j, set)| set.pairs().map(move |(k, i)| (StateId(j), k, i))).collect();
    let rows =
        triples
            .par_iter()
            .map(|&(j, k, i)| {
                let x = &model.states()[j.0];
                let eval = operators::evaluate_row(model, x, &model.actions()[k.0], &model.actions()[i.0], quad)
                    .map_err(|e| match e {
                        Error::UnboundedHorizon { .. } => Error::UnboundedHorizon { state: model.state_label(j) },
                        other => other,
                    })?;
                Ok(Row {
                    state: j,
                    interior: k,
                    boundary: i,
                    g: eval.g,
                    lf: eval.lf,
                    hr: eval.hr,
                    cal_l: eval.cal_l,
                    cal_h: eval.cal_h,
                    diagnostics: Some(eval.diagnostics),
                })
            })
            .collect::<Result<Vec<Row>>>()?;
    Ok(FiniteInstance {
        states: (0..s).map(|j| model.state_label(StateId(j))).collect(),
        actions: (0..model.actions().len()).map(|a| model.action_label(ActionId(a))).collect(),
        feasible,
        alpha: model.alpha(),
        rows,
        nu0: model.initial(),
        limits: model.limits(),
    })
}

/// Accumulates a sparse distribution, merging repeated targets and sorting by state.
pub(crate) fn normalize_sparse(entries: impl IntoIterator<Item = (StateId, f64)>) -> Vec<(StateId, f64)> {
    let mut map: BTreeMap<StateId, f64> = BTreeMap::new();
    for (s, p) in entries {
        *map.entry(s).or_insert(0.0) += p;
    }
    map.into_iter().filter(|&(_, p)| p != 0.0).collect()
}

mod sparse_row {
    use super::*;

    pub fn serialize<S: Serializer>(row: &[(StateId, f64)], ser: S) -> std::result::Result<S::Ok, S::Error> {
        // Emitted in state order; a string-keyed BTreeMap would put "10" before "2".
        use serde::ser::SerializeMap;
        let mut m = ser.serialize_map(Some(row.len()))?;
        for &(s, p) in row {
            m.serialize_entry(&s.0.to_string(), &p)?;
        }
        m.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> std::result::Result<Vec<(StateId, f64)>, D::Error> {
        let map: BTreeMap<String, f64> = BTreeMap::deserialize(de)?;
        let mut out = Vec::with_capacity(map.len());
        for (k, p) in map {
            let s: usize =
                k.parse().map_err(|_| serde::de::Error::custom(format!("G key {k:?} is not a state index")))?;
            out.push((StateId(s), p));
        }
        out.sort_by_key(|&(s, _)| s);
        Ok(out)
    }
}
