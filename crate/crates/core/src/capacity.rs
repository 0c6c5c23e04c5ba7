//! Capacity expansion: a facility is built at investment rate `gamma_j` while
//! demand arrives at constant rate `lam`; completing the project serves one unit
//! of demand and the planner picks the next construction rate.
//!
//! State `(s, m, j)`: investment so far, outstanding demand, current rate index
//! (`j = 0` means idle). Demand is capped at `M` and the post-jump investment
//! coordinate lives on a finite grid, so the model fits the finite regime.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::assumptions::{AssumptionReport, GrowthCertificate, InequalityReport, ProbeSet};
use crate::error::{Error, Result};
use crate::model::{ActionId, FeasibleSet, FiniteInstance, Jump, PdmpModel, Row, StateId};
use crate::operators::{RowDiagnostics, RowEvaluation};

const GRID_MERGE: f64 = 1e-12;

/// Cost `f(y) = constant + demand * m + rate[j]` on the flow and `start[a_bd]` at completion.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CapacityCost {
    #[serde(default)]
    pub constant: f64,
    #[serde(default)]
    pub demand: f64,
    /// Indexed by mode `0..=kappa`; empty means zero.
    #[serde(default)]
    pub rate: Vec<f64>,
    /// Cost of starting mode `a_bd` at completion, indexed `0..=kappa`; empty means zero.
    #[serde(default)]
    pub start: Vec<f64>,
}

impl CapacityCost {
    fn rate_of(&self, j: usize) -> f64 {
        self.rate.get(j).copied().unwrap_or(0.0)
    }

    fn start_of(&self, j: usize) -> f64 {
        self.start.get(j).copied().unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CapacityPoint {
    pub s: f64,
    pub m: usize,
    pub j: usize,
}

fn default_depth() -> usize {
    2
}

fn default_sa_grid() -> usize {
    5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityParams {
    pub lambda: f64,
    pub tau: f64,
    /// Construction rates `gamma_1..gamma_kappa`; `gamma_0 = 0` is implicit.
    pub gamma: Vec<f64>,
    pub demand_cap: usize,
    pub alpha: f64,
    /// `f_0, r_0` first, then one entry per constraint.
    pub costs: Vec<CapacityCost>,
    #[serde(default)]
    pub limits: Vec<f64>,
    /// Levels of the investment-grid closure.
    #[serde(default = "default_depth")]
    pub depth: usize,
    /// Number of switch points offered on `[s, tau]`.
    #[serde(default = "default_sa_grid")]
    pub sa_grid: usize,
    /// Starting point; defaults to `(0, 0, 0)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<CapacityPoint>,
    /// Largest tolerated snap distance of the investment coordinate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_snap: Option<f64>,
}

impl CapacityParams {
    pub fn kappa(&self) -> usize {
        self.gamma.len()
    }

    /// `gamma_j`, with `gamma_0 = 0`.
    pub fn speed(&self, j: usize) -> f64 {
        if j == 0 {
            0.0
        } else {
            self.gamma[j - 1]
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidModel(msg));
        for (name, v) in [("lambda", self.lambda), ("tau", self.tau), ("alpha", self.alpha)] {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be positive and finite, got {v}"));
            }
        }
        if self.gamma.is_empty() {
            return bad("at least one construction rate is required".into());
        }
        for (k, &g) in self.gamma.iter().enumerate() {
            if !(g.is_finite() && g > 0.0) {
                return bad(format!("gamma_{} must be positive, got {g}", k + 1));
            }
            if self.gamma[..k].contains(&g) {
                return bad(format!("construction rates must be distinct, {g} repeats"));
            }
        }
        if self.demand_cap < 1 {
            return bad("demand_cap must be at least 1".into());
        }
        if self.sa_grid < 2 {
            return bad("sa_grid must be at least 2".into());
        }
        if self.costs.is_empty() {
            return bad("at least the objective cost is required".into());
        }
        if self.limits.len() + 1 != self.costs.len() {
            return bad(format!(
                "{} costs need {} limits, got {}",
                self.costs.len(),
                self.costs.len() - 1,
                self.limits.len()
            ));
        }
        let width = self.kappa() + 1;
        for (i, c) in self.costs.iter().enumerate() {
            for (name, v) in [("rate", &c.rate), ("start", &c.start)] {
                if !v.is_empty() && v.len() != width {
                    return bad(format!("cost {i}: {name} needs {width} entries, got {}", v.len()));
                }
            }
            let all = [c.constant, c.demand].into_iter().chain(c.rate.iter().copied()).chain(c.start.iter().copied());
            if all.into_iter().any(|v| !v.is_finite()) {
                return bad(format!("cost {i} has a non-finite entry"));
            }
        }
        Ok(())
    }

    /// `alpha' = alpha / lambda`.
    pub fn alpha_prime(&self) -> f64 {
        self.alpha / self.lambda
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum CapacityAction {
    /// Boundary action: start mode `next_mode` on the next project.
    Complete { next_mode: usize },
    /// Placeholder boundary action of idle states, which never reach the boundary.
    Idle,
    /// Interior action: keep the current rate until investment reaches
    /// `switch_at`, then a later arrival moves to `next_mode`.
    Invest { switch_at: f64, next_mode: usize },
}

/// Investment grid and how far arrivals are moved to reach it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapReport {
    pub grid: Vec<f64>,
    /// Supremum of `|s - snap(s)|` over `[0, tau)`.
    pub max_snap_distance: f64,
}

#[derive(Debug, Clone)]
pub struct CapacityModel {
    params: CapacityParams,
    grid: Vec<f64>,
    states: Vec<CapacityPoint>,
    index: HashMap<(usize, usize, usize), StateId>,
    actions: Vec<CapacityAction>,
    feasible: Vec<FeasibleSet>,
    snap: SnapReport,
}

/// Closure of `{0}` under `p -> p + i (tau - p) / (n - 1)`, `i < n - 1`, to the given depth.
pub fn investment_grid(tau: f64, n: usize, depth: usize) -> Vec<f64> {
    let mut grid = vec![0.0];
    for _ in 0..depth {
        let mut next = grid.clone();
        for &p in &grid {
            next.extend((1..n - 1).map(|i| p + i as f64 * (tau - p) / (n - 1) as f64));
        }
        next.sort_by(f64::total_cmp);
        next.dedup_by(|a, b| (*a - *b).abs() <= GRID_MERGE * tau);
        grid = next;
    }
    grid
}

/// Index of the grid point nearest to `s`, ties to the lower point.
fn nearest(grid: &[f64], s: f64) -> usize {
    let k = grid.partition_point(|&g| g <= s);
    if k == 0 {
        return 0;
    }
    if k == grid.len() {
        return k - 1;
    }
    if s - grid[k - 1] <= grid[k] - s {
        k - 1
    } else {
        k
    }
}

pub fn build_capacity_model(params: CapacityParams) -> Result<CapacityModel> {
    params.validate()?;
    let tau = params.tau;
    let kappa = params.kappa();
    let cap = params.demand_cap;
    let grid = investment_grid(tau, params.sa_grid, params.depth);

    let mut max_snap = tau - grid[grid.len() - 1];
    for w in grid.windows(2) {
        max_snap = max_snap.max(0.5 * (w[1] - w[0]));
    }
    if let Some(limit) = params.max_snap {
        if max_snap > limit {
            return Err(Error::GridTooCoarse(format!(
                "investment grid of {} points moves arrivals by up to {max_snap:.3e} > {limit:.3e}; raise depth or sa_grid",
                grid.len()
            )));
        }
    }

    let mut states = Vec::new();
    let mut index = HashMap::new();
    for (si, &s) in grid.iter().enumerate() {
        for m in 0..=cap {
            for j in 0..=kappa {
                // With no demand a project cannot be under way.
                if m == 0 && j > 0 {
                    continue;
                }
                index.insert((si, m, j), StateId(states.len()));
                states.push(CapacityPoint { s, m, j });
            }
        }
    }

    // Switch points snap to the grid or to tau.
    let mut switch_points = grid.clone();
    switch_points.push(tau);
    let sa = |s: f64| -> Vec<f64> {
        let n = params.sa_grid;
        let mut v: Vec<f64> =
            (0..n).map(|i| switch_points[nearest(&switch_points, s + i as f64 * (tau - s) / (n - 1) as f64)]).collect();
        v.dedup();
        v
    };

    let mut actions: Vec<CapacityAction> = (0..=kappa).map(|a| CapacityAction::Complete { next_mode: a }).collect();
    actions.push(CapacityAction::Idle);
    let idle = ActionId(kappa + 1);
    let mut invest: Vec<(f64, usize)> =
        grid.iter().flat_map(|&s| sa(s)).flat_map(|p| (0..=kappa).map(move |j| (p, j))).collect();
    invest.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    invest.dedup();
    let mut action_index = HashMap::new();
    for (p, j) in invest {
        action_index.insert((p.to_bits(), j), ActionId(actions.len()));
        actions.push(CapacityAction::Invest { switch_at: p, next_mode: j });
    }

    let feasible = states
        .iter()
        .map(|x| {
            if x.j == 0 {
                FeasibleSet {
                    interior: (0..=kappa).map(|ja| action_index[&(x.s.to_bits(), ja)]).collect(),
                    boundary: vec![idle],
                }
            } else {
                let mut interior: Vec<ActionId> = sa(x.s)
                    .into_iter()
                    .flat_map(|p| (0..=kappa).filter(|&ja| ja != x.j).map(move |ja| (p, ja)))
                    .map(|(p, ja)| action_index[&(p.to_bits(), ja)])
                    .collect();
                interior.sort();
                // Completing the last unit of demand leaves nothing to build for.
                let boundary = if x.m >= 2 { (0..=kappa).map(ActionId).collect() } else { vec![ActionId(0)] };
                FeasibleSet { interior, boundary }
            }
        })
        .collect();

    let model = CapacityModel {
        snap: SnapReport { grid: grid.clone(), max_snap_distance: max_snap },
        params,
        grid,
        states,
        index,
        actions,
        feasible,
    };
    let start = model.params.initial.unwrap_or(CapacityPoint { s: 0.0, m: 0, j: 0 });
    model.lookup(&start).ok_or_else(|| {
        Error::InvalidModel(format!("initial point {} is not an enumerated state", point_label(&start)))
    })?;
    Ok(model)
}

fn point_label(x: &CapacityPoint) -> String {
    format!("({},{},{})", x.s, x.m, x.j)
}

impl CapacityModel {
    pub fn params(&self) -> &CapacityParams {
        &self.params
    }

    pub fn snap_report(&self) -> &SnapReport {
        &self.snap
    }

    /// State of an exact grid point.
    pub fn lookup(&self, x: &CapacityPoint) -> Option<StateId> {
        let si = self.grid.iter().position(|&g| (g - x.s).abs() <= GRID_MERGE * self.params.tau)?;
        self.index.get(&(si, x.m, x.j)).copied()
    }

    fn target(&self, s: f64, m: usize, j: usize) -> StateId {
        let si = nearest(&self.grid, s);
        *self.index.get(&(si, m, j)).unwrap_or_else(|| panic!("post-jump point ({s},{m},{j}) has no enumerated state"))
    }

    /// Grid cell boundaries strictly inside `(lo, hi)`.
    fn cell_boundaries(&self, lo: f64, hi: f64) -> impl Iterator<Item = f64> + '_ {
        self.grid.windows(2).map(|w| 0.5 * (w[0] + w[1])).filter(move |&c| c > lo && c < hi)
    }

    fn arrival_demand(&self, m: usize) -> usize {
        (m + 1).min(self.params.demand_cap)
    }

    /// `K_lambda` over states with finite `t*`: `(1 - exp(-lam tau / gamma_min)) / lam`.
    pub fn k_lambda_finite(&self) -> f64 {
        let p = &self.params;
        let g_min = p.gamma.iter().copied().fold(f64::INFINITY, f64::min);
        -(-p.lambda * p.tau / g_min).exp_m1() / p.lambda
    }

    /// The exact row from the constant-rate closed forms.
    pub fn closed_form_row(&self, j: StateId, k: ActionId, i: ActionId) -> RowEvaluation {
        let p = &self.params;
        let x = &self.states[j.0];
        let a = &self.actions[k.0];
        let beta = p.alpha + p.lambda;
        let n_costs = p.costs.len();
        let f: Vec<f64> = (0..n_costs).map(|c| self.running_cost(c, x, a)).collect();

        if x.j == 0 {
            let ctrl = self.control(x, a, 0.0);
            let g = vec![(self.target(x.s, self.arrival_demand(x.m), ctrl), p.lambda / beta)];
            let cal_l = 1.0 / beta;
            return RowEvaluation {
                g,
                lf: f.iter().map(|v| v * cal_l).collect(),
                hr: vec![0.0; n_costs],
                cal_l,
                cal_h: 0.0,
                diagnostics: RowDiagnostics { l_lambda_alpha: 1.0, ..Default::default() },
            };
        }

        let gamma = p.speed(x.j);
        let dt = (p.tau - x.s) / gamma;
        let mut cuts = vec![0.0, dt];
        cuts.extend(self.ell_breakpoints(x, a).into_iter().filter(|&t| t > 0.0 && t < dt));
        cuts.extend(self.kernel_breakpoints(x, a));
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        let mut g = Vec::new();
        let m_next = self.arrival_demand(x.m);
        for w in cuts.windows(2) {
            let (t0, t1) = (w[0], w[1]);
            let mid = 0.5 * (t0 + t1);
            let ctrl = self.control(x, a, mid);
            let mass = -p.lambda / beta * (-beta * t0).exp() * (-beta * (t1 - t0)).exp_m1();
            g.push((self.target(x.s + gamma * mid, m_next, ctrl), mass));
        }
        let cal_h = (-beta * dt).exp();
        let a_bd = &self.actions[i.0];
        g.extend(self.jump(&self.flow(x, dt), Jump::Boundary(a_bd)).into_iter().map(|(s, q)| (s, q * cal_h)));
        let cal_l = -(-beta * dt).exp_m1() / beta;
        let z = self.flow(x, dt);
        RowEvaluation {
            g: crate::model::normalize_sparse(g),
            lf: f.iter().map(|v| v * cal_l).collect(),
            hr: (0..n_costs).map(|c| self.boundary_cost(c, &z, a_bd) * cal_h).collect(),
            cal_l,
            cal_h,
            diagnostics: RowDiagnostics { l_lambda_alpha: beta * cal_l, ..Default::default() },
        }
    }

    /// The finite instance built from closed-form rows, in the same layout as [`crate::model::tabulate`].
    pub fn closed_form_instance(&self) -> FiniteInstance {
        let rows = self
            .feasible
            .iter()
            .enumerate()
            .flat_map(|(j, set)| set.pairs().map(move |(k, i)| (StateId(j), k, i)))
            .map(|(j, k, i)| {
                let e = self.closed_form_row(j, k, i);
                Row {
                    state: j,
                    interior: k,
                    boundary: i,
                    g: e.g,
                    lf: e.lf,
                    hr: e.hr,
                    cal_l: e.cal_l,
                    cal_h: e.cal_h,
                    diagnostics: Some(e.diagnostics),
                }
            })
            .collect();
        FiniteInstance {
            states: (0..self.states.len()).map(|j| self.state_label(StateId(j))).collect(),
            actions: (0..self.actions.len()).map(|a| self.action_label(ActionId(a))).collect(),
            feasible: self.feasible.clone(),
            alpha: self.params.alpha,
            rows,
            nu0: self.initial(),
            limits: self.params.limits.clone(),
        }
    }

    /// `v = lam exp(a1 m)`, `b = 0`, `c = -rho alpha` with `exp(a1) = 1 + alpha' rho`.
    pub fn growth_certificate(&self, rho: f64) -> GrowthCertificate<CapacityPoint> {
        let lam = self.params.lambda;
        let a1 = (self.params.alpha_prime() * rho).ln_1p();
        GrowthCertificate::new(
            move |y: &CapacityPoint| lam * (a1 * y.m as f64).exp(),
            |_| 0.0,
            -rho * self.params.alpha,
        )
        .with_derivative(|_| 0.0)
    }

    /// Probe check of the certificate plus its reduction to `g(rho) >= 0`.
    ///
    /// Enumerated states carry a project only when demand is positive, so the
    /// boundary inequality is sampled from `m = 1` up; the reduced condition
    /// covers the untruncated demand range, including completion at zero demand.
    pub fn check_certificate(&self, rho: f64, probes: &ProbeSet) -> AssumptionReport {
        let mut report = crate::assumptions::check_growth(self, &self.growth_certificate(rho), probes);
        report.push(InequalityReport::scalar(
            "reduced condition g(rho)",
            growth_quadratic(self.params.alpha_prime(), rho),
        ));
        report
    }
}

/// `g(rho) = alpha' rho^2 + (2 - alpha') rho - 1`; the certificate holds iff `g(rho) >= 0`.
pub fn growth_quadratic(alpha_prime: f64, rho: f64) -> f64 {
    alpha_prime * rho * rho + (2.0 - alpha_prime) * rho - 1.0
}

/// Smallest admissible `rho`, the positive root of `g`.
pub fn growth_threshold(alpha_prime: f64) -> f64 {
    let b = 2.0 - alpha_prime;
    (-b + (b * b + 4.0 * alpha_prime).sqrt()) / (2.0 * alpha_prime)
}

impl PdmpModel for CapacityModel {
    type Point = CapacityPoint;
    type Action = CapacityAction;
    type Control = usize;

    fn alpha(&self) -> f64 {
        self.params.alpha
    }

    fn states(&self) -> &[CapacityPoint] {
        &self.states
    }

    fn state_label(&self, j: StateId) -> String {
        point_label(&self.states[j.0])
    }

    fn actions(&self) -> &[CapacityAction] {
        &self.actions
    }

    fn action_label(&self, a: ActionId) -> String {
        match self.actions[a.0] {
            CapacityAction::Complete { next_mode } => format!("complete({next_mode})"),
            CapacityAction::Idle => "idle".into(),
            CapacityAction::Invest { switch_at, next_mode } => format!("invest({switch_at},{next_mode})"),
        }
    }

    fn feasible(&self, j: StateId) -> FeasibleSet {
        self.feasible[j.0].clone()
    }

    fn flow(&self, x: &CapacityPoint, t: f64) -> CapacityPoint {
        CapacityPoint { s: x.s + self.params.speed(x.j) * t, ..*x }
    }

    fn t_star(&self, x: &CapacityPoint) -> f64 {
        if x.j == 0 {
            f64::INFINITY
        } else {
            (self.params.tau - x.s) / self.params.speed(x.j)
        }
    }

    fn rate(&self, _y: &CapacityPoint, _c: &usize) -> f64 {
        self.params.lambda
    }

    fn rate_lower(&self, _y: &CapacityPoint) -> Option<f64> {
        Some(self.params.lambda)
    }

    fn rate_upper(&self, _y: &CapacityPoint) -> Option<f64> {
        Some(self.params.lambda)
    }

    fn rate_integral_bound(&self) -> Option<f64> {
        Some(1.0 / self.params.lambda)
    }

    fn control(&self, x: &CapacityPoint, a: &CapacityAction, t: f64) -> usize {
        match *a {
            CapacityAction::Invest { switch_at, next_mode } => {
                if x.s + self.params.speed(x.j) * t < switch_at {
                    x.j
                } else {
                    next_mode
                }
            }
            _ => x.j,
        }
    }

    fn ell_breakpoints(&self, x: &CapacityPoint, a: &CapacityAction) -> Vec<f64> {
        match *a {
            CapacityAction::Invest { switch_at, .. } if x.j > 0 && switch_at > x.s => {
                vec![(switch_at - x.s) / self.params.speed(x.j)]
            }
            _ => Vec::new(),
        }
    }

    fn kernel_breakpoints(&self, x: &CapacityPoint, _a: &CapacityAction) -> Vec<f64> {
        if x.j == 0 {
            return Vec::new();
        }
        let g = self.params.speed(x.j);
        self.cell_boundaries(x.s, self.params.tau).map(|c| (c - x.s) / g).collect()
    }

    fn jump(&self, y: &CapacityPoint, jump: Jump<'_, usize, CapacityAction>) -> Vec<(StateId, f64)> {
        match jump {
            Jump::Interior(&mode) => vec![(self.target(y.s, self.arrival_demand(y.m), mode), 1.0)],
            Jump::Boundary(CapacityAction::Complete { next_mode }) => {
                vec![(self.target(0.0, y.m.saturating_sub(1), *next_mode), 1.0)]
            }
            Jump::Boundary(_) => Vec::new(),
        }
    }

    fn num_costs(&self) -> usize {
        self.params.costs.len()
    }

    fn running_cost(&self, i: usize, y: &CapacityPoint, _a: &CapacityAction) -> f64 {
        let c = &self.params.costs[i];
        c.constant + c.demand * y.m as f64 + c.rate_of(y.j)
    }

    fn boundary_cost(&self, i: usize, _z: &CapacityPoint, a: &CapacityAction) -> f64 {
        match *a {
            CapacityAction::Complete { next_mode } => self.params.costs[i].start_of(next_mode),
            _ => 0.0,
        }
    }

    fn running_cost_bound(&self, i: usize) -> Option<f64> {
        let c = &self.params.costs[i];
        let rate = c.rate.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        Some(c.constant.abs() + c.demand.abs() * self.params.demand_cap as f64 + rate)
    }

    fn initial(&self) -> Vec<f64> {
        let start = self.params.initial.unwrap_or(CapacityPoint { s: 0.0, m: 0, j: 0 });
        let mut nu = vec![0.0; self.states.len()];
        nu[self.lookup(&start).expect("initial state checked at build").0] = 1.0;
        nu
    }

    fn limits(&self) -> Vec<f64> {
        self.params.limits.clone()
    }
}
