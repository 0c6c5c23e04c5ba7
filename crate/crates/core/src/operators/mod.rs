//! One-stage operators evaluated along the flow: the cumulative rate, `L`, `H`,
//! the kernel `G`, and the scalars `calL = L 1`, `calH = H 1`.
//!
//! Every integral has the form `int_0^{t*} exp(-alpha s - Lambda(s)) g(s) ds`.
//! The integration interval is split at every breakpoint the model declares;
//! when `t* = inf` it is truncated at
//! `T_max = -ln(tail_epsilon) / (alpha + lam_lower)`.

mod cumulative;
pub(crate) mod quadrature;

use serde::{Deserialize, Serialize};

pub use cumulative::{CumulativeRate, INVERSION_TOL};

use crate::error::{Error, Result};
use crate::model::{merged_breakpoints, normalize_sparse, Jump, PdmpModel, StateId};
use quadrature::{integrate, kronrod_nodes, split_segments};

/// Tolerances for every quadrature in the crate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureConfig {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_subdivisions: usize,
    /// Truncation threshold on the survival-discount weight when `t* = inf`.
    pub tail_epsilon: f64,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        QuadratureConfig { abs_tol: 1e-10, rel_tol: 1e-10, max_subdivisions: 2000, tail_epsilon: 1e-12 }
    }
}

impl QuadratureConfig {
    /// Same scheme with both tolerances set to `tol`.
    pub fn with_tol(tol: f64) -> Self {
        QuadratureConfig { abs_tol: tol, rel_tol: tol, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.abs_tol >= 1e-13 && self.rel_tol >= 1e-13) {
            return Err(Error::InvalidModel(format!(
                "quadrature tolerances must be >= 1e-13 (abs {}, rel {})",
                self.abs_tol, self.rel_tol
            )));
        }
        if !(self.tail_epsilon > 0.0 && self.tail_epsilon < 1.0) {
            return Err(Error::InvalidModel(format!("tail_epsilon must lie in (0, 1), got {}", self.tail_epsilon)));
        }
        if self.max_subdivisions == 0 {
            return Err(Error::InvalidModel("max_subdivisions must be positive".into()));
        }
        Ok(())
    }

    /// Tolerances halved, other settings unchanged.
    pub fn halved(&self) -> Self {
        QuadratureConfig { abs_tol: (self.abs_tol / 2.0).max(1e-13), rel_tol: (self.rel_tol / 2.0).max(1e-13), ..*self }
    }

    /// Bound the identities of a tabulated row are expected to meet.
    pub fn identity_tolerance(&self) -> f64 {
        10.0 * (self.abs_tol + self.rel_tol)
    }

    fn profile_tol(&self) -> f64 {
        0.1 * self.abs_tol
    }
}

/// Per-row quadrature metadata.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RowDiagnostics {
    /// Largest component error estimate (including the cumulative-rate grid).
    pub error_estimate: f64,
    /// Truncation horizon when `t* = inf`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncated_at: Option<f64>,
    /// Certified bound on the neglected tail, when every integrand has a declared bound.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tail_bound: Option<f64>,
    /// `L(lambda + alpha)`, kept so the second identity is checkable from the instance.
    pub l_lambda_alpha: f64,
}

/// Value of a single `L` integral with its metadata.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: f64,
    pub error: f64,
    pub truncated_at: Option<f64>,
    /// `None` when truncated and no bound on the integrand was supplied.
    pub tail_bound: Option<f64>,
}

/// Integration window for one post-jump point.
#[derive(Debug, Clone, Copy)]
struct Horizon {
    t_star: f64,
    end: f64,
    lam_lower: Option<f64>,
}

impl Horizon {
    fn new<M: PdmpModel>(model: &M, x: &M::Point, quad: &QuadratureConfig) -> Result<Self> {
        let t_star = model.t_star(x);
        if t_star.is_finite() {
            if !(t_star > 0.0) {
                return Err(Error::InvalidModel(format!("t*({x:?}) = {t_star} must be positive")));
            }
            return Ok(Horizon { t_star, end: t_star, lam_lower: model.rate_lower(x) });
        }
        let lam_lower = model
            .rate_lower(x)
            .filter(|l| *l > 0.0 && l.is_finite())
            .ok_or_else(|| Error::UnboundedHorizon { state: format!("{x:?}") })?;
        let end = -quad.tail_epsilon.ln() / (model.alpha() + lam_lower);
        Ok(Horizon { t_star, end, lam_lower: Some(lam_lower) })
    }

    fn truncated(&self) -> bool {
        !self.t_star.is_finite()
    }

    /// `int_T^inf exp(-(alpha + lam_lower) s) ds`.
    fn tail_weight(&self, alpha: f64) -> f64 {
        match (self.truncated(), self.lam_lower) {
            (true, Some(l)) => (-(alpha + l) * self.end).exp() / (alpha + l),
            _ => 0.0,
        }
    }
}

/// Rate along the flow from `x` under interior action `a`.
fn rate_along<'a, M: PdmpModel>(model: &'a M, x: &'a M::Point, a: &'a M::Action) -> impl Fn(f64) -> f64 + 'a {
    move |t| model.rate(&model.flow(x, t), &model.control(x, a, t))
}

/// Builds the cumulative-rate profile from `x` under `a` over `[0, end]`.
pub fn rate_profile<M: PdmpModel>(
    model: &M,
    x: &M::Point,
    a: &M::Action,
    end: f64,
    quad: &QuadratureConfig,
) -> Result<CumulativeRate> {
    let t_star = model.t_star(x);
    let bps = merged_breakpoints(model, x, a, t_star);
    let segs = split_segments(0.0, &bps, end);
    CumulativeRate::build(&rate_along(model, x, a), &segs, quad.profile_tol())
}

/// `Lambda^a(x, t)`, the cumulative jump rate up to a finite `t <= t*(x)`.
pub fn cumulative_rate<M: PdmpModel>(
    model: &M,
    x: &M::Point,
    a: &M::Action,
    t: f64,
    quad: &QuadratureConfig,
) -> Result<f64> {
    let t_star = model.t_star(x);
    if !(t >= 0.0 && t.is_finite() && t <= t_star) {
        return Err(Error::InvalidModel(format!("cumulative rate requested at t = {t} outside [0, t*]")));
    }
    Ok(rate_profile(model, x, a, t, quad)?.value(t))
}

/// `L g (x, (a, .))`: the survival-discounted integral of `g(phi(x,s), a)` up to `t*`.
///
/// `g_bound`, when given, bounds `g` along the flow and certifies the tail for `t* = inf`.
pub fn operator_l<M, G>(
    model: &M,
    x: &M::Point,
    a: &M::Action,
    g: G,
    g_bound: Option<f64>,
    quad: &QuadratureConfig,
) -> Result<Integral>
where
    M: PdmpModel,
    G: Fn(&M::Point, &M::Action) -> f64,
{
    quad.validate()?;
    let hz = Horizon::new(model, x, quad)?;
    let alpha = model.alpha();
    let bps = merged_breakpoints(model, x, a, hz.t_star);
    let segs = split_segments(0.0, &bps, hz.end);
    let profile = CumulativeRate::build(&rate_along(model, x, a), &segs, quad.profile_tol())?;
    let mut f = |t: f64, out: &mut [f64]| {
        let w = (-alpha * t - profile.value(t)).exp();
        out[0] = w * g(&model.flow(x, t), a);
    };
    let r = integrate(&mut f, &segs, 1, quad.abs_tol, quad.rel_tol, quad.max_subdivisions)?;
    let tail_bound = if hz.truncated() { g_bound.map(|b| b * hz.tail_weight(alpha)) } else { Some(0.0) };
    Ok(Integral {
        value: r.value[0],
        error: r.error[0] + profile.error_estimate(),
        truncated_at: hz.truncated().then_some(hz.end),
        tail_bound,
    })
}

/// `H w (x, (a, a_bd))`: the boundary term weighted by survival and discount.
/// Zero when `t* = inf`.
pub fn operator_h<M, W>(
    model: &M,
    x: &M::Point,
    a: &M::Action,
    a_bd: &M::Action,
    w: W,
    quad: &QuadratureConfig,
) -> Result<f64>
where
    M: PdmpModel,
    W: Fn(&M::Point, &M::Action) -> f64,
{
    let t_star = model.t_star(x);
    if !t_star.is_finite() {
        return Ok(0.0);
    }
    let lambda = cumulative_rate(model, x, a, t_star, quad)?;
    let weight = (-model.alpha() * t_star - lambda).exp();
    Ok(weight * w(&model.flow(x, t_star), a_bd))
}

/// Every one-stage quantity of a triple.
#[derive(Debug, Clone, PartialEq)]
pub struct RowEvaluation {
    pub g: Vec<(StateId, f64)>,
    pub lf: Vec<f64>,
    pub hr: Vec<f64>,
    pub cal_l: f64,
    pub cal_h: f64,
    pub diagnostics: RowDiagnostics,
}

impl RowEvaluation {
    pub fn g_mass(&self) -> f64 {
        self.g.iter().map(|&(_, p)| p).sum()
    }
}

/// The kernel row `G(x, (a, a_bd); .)` over the post-jump states.
pub fn operator_g<M: PdmpModel>(
    model: &M,
    x: &M::Point,
    a: &M::Action,
    a_bd: &M::Action,
    quad: &QuadratureConfig,
) -> Result<Vec<(StateId, f64)>> {
    Ok(evaluate_row(model, x, a, a_bd, quad)?.g)
}

/// Evaluates `G`, `Lf_i`, `Hr_i`, `calL`, `calH` for one triple with a shared
/// cumulative-rate profile.
pub fn evaluate_row<M: PdmpModel>(
    model: &M,
    x: &M::Point,
    a: &M::Action,
    a_bd: &M::Action,
    quad: &QuadratureConfig,
) -> Result<RowEvaluation> {
    quad.validate()?;
    let alpha = model.alpha();
    let hz = Horizon::new(model, x, quad)?;
    let n_costs = model.num_costs();
    let bps = merged_breakpoints(model, x, a, hz.t_star);
    let segs = split_segments(0.0, &bps, hz.end);
    let profile = CumulativeRate::build(&rate_along(model, x, a), &segs, quad.profile_tol())?;

    // Components: [calL, L lambda, Lf_0 .. Lf_n].
    let dim = 2 + n_costs;
    let mut f = |t: f64, out: &mut [f64]| {
        let y = model.flow(x, t);
        let c = model.control(x, a, t);
        let w = (-alpha * t - profile.value(t)).exp();
        out[0] = w;
        out[1] = w * model.rate(&y, &c);
        for i in 0..n_costs {
            out[2 + i] = w * model.running_cost(i, &y, a);
        }
    };
    let r = integrate(&mut f, &segs, dim, quad.abs_tol, quad.rel_tol, quad.max_subdivisions)?;

    // Interior part of G: same accepted panels, sparse targets.
    let mut interior = Vec::new();
    for p in &r.panels {
        for (t, wt) in kronrod_nodes(p.a, p.b) {
            let y = model.flow(x, t);
            let c = model.control(x, a, t);
            let w = wt * (-alpha * t - profile.value(t)).exp() * model.rate(&y, &c);
            if w == 0.0 {
                continue;
            }
            for (target, q) in model.jump(&y, Jump::Interior(&c)) {
                interior.push((target, w * q));
            }
        }
    }

    let mut hr = vec![0.0; n_costs];
    let mut cal_h = 0.0;
    let mut boundary = Vec::new();
    if hz.t_star.is_finite() {
        cal_h = (-alpha * hz.t_star - profile.total()).exp();
        let z = model.flow(x, hz.t_star);
        for (i, h) in hr.iter_mut().enumerate() {
            *h = cal_h * model.boundary_cost(i, &z, a_bd);
        }
        for (target, q) in model.jump(&z, Jump::Boundary(a_bd)) {
            boundary.push((target, cal_h * q));
        }
    }
    let g = normalize_sparse(interior.into_iter().chain(boundary));

    let tail_bound = if hz.truncated() {
        let weight = hz.tail_weight(alpha);
        let lam_up = model.rate_upper(x);
        let cost_bounds: Option<Vec<f64>> = (0..n_costs).map(|i| model.running_cost_bound(i)).collect();
        match (lam_up, cost_bounds) {
            (Some(l), Some(c)) => {
                let sup = c.into_iter().fold(l.max(1.0), f64::max);
                Some(weight * sup)
            }
            _ => None,
        }
    } else {
        None
    };

    let cal_l = r.value[0];
    Ok(RowEvaluation {
        g,
        lf: r.value[2..].to_vec(),
        hr,
        cal_l,
        cal_h,
        diagnostics: RowDiagnostics {
            error_estimate: r.max_error() + profile.error_estimate(),
            truncated_at: hz.truncated().then_some(hz.end),
            tail_bound,
            l_lambda_alpha: r.value[1] + alpha * cal_l,
        },
    })
}

/// `int_0^upto exp(-alpha u) f_i(phi(x,u), a) du` for every cost index, the
/// running cost accrued over one simulated stage.
pub fn discounted_running_costs<M: PdmpModel>(
    model: &M,
    x: &M::Point,
    a: &M::Action,
    upto: f64,
    quad: &QuadratureConfig,
) -> Result<Vec<f64>> {
    let n_costs = model.num_costs();
    if upto <= 0.0 {
        return Ok(vec![0.0; n_costs]);
    }
    let alpha = model.alpha();
    let bps = merged_breakpoints(model, x, a, model.t_star(x));
    let segs = split_segments(0.0, &bps, upto);
    let mut f = |t: f64, out: &mut [f64]| {
        let y = model.flow(x, t);
        let w = (-alpha * t).exp();
        for (i, o) in out.iter_mut().enumerate() {
            *o = w * model.running_cost(i, &y, a);
        }
    };
    Ok(integrate(&mut f, &segs, n_costs, quad.abs_tol, quad.rel_tol, quad.max_subdivisions)?.value)
}
