//! Numerical checks of the standing assumptions on a model: jump-rate bounds
//! and the expected-growth certificate `(v, b, c)`.
//!
//! Every check is a finite sample of a statement over a continuum, so a PASS
//! means "verified on probes", never a proof.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::{merged_breakpoints, ActionId, FiniteInstance, Jump, PdmpModel, StateId};
use crate::occupation::OccupationMeasure;
use crate::operators::quadrature::{integrate_scalar, split_segments};
use crate::operators::{CumulativeRate, QuadratureConfig};

/// Margins at or above this pass.
pub const MARGIN_TOL: f64 = -1e-8;
/// Default number of Chebyshev points per smooth flow segment.
pub const DEFAULT_PROBES: usize = 33;

type PointFn<P> = Box<dyn Fn(&P) -> f64 + Send + Sync>;

/// Candidate `(v, b, c)` for the expected-growth condition, with an optional
/// analytic derivative of `v` along the flow.
pub struct GrowthCertificate<P> {
    pub v: PointFn<P>,
    pub b: PointFn<P>,
    pub c: f64,
    pub xv: Option<PointFn<P>>,
}

impl<P> GrowthCertificate<P> {
    pub fn new(
        v: impl Fn(&P) -> f64 + Send + Sync + 'static,
        b: impl Fn(&P) -> f64 + Send + Sync + 'static,
        c: f64,
    ) -> Self {
        GrowthCertificate { v: Box::new(v), b: Box::new(b), c, xv: None }
    }

    pub fn with_derivative(mut self, xv: impl Fn(&P) -> f64 + Send + Sync + 'static) -> Self {
        self.xv = Some(Box::new(xv));
        self
    }
}

/// A time along the flow from a post-jump state under an interior action.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowProbe {
    pub state: StateId,
    pub interior: ActionId,
    pub t: f64,
}

/// The boundary point reached from a state, with one boundary action.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryProbe {
    pub state: StateId,
    pub boundary: ActionId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeSet {
    pub flow: Vec<FlowProbe>,
    pub boundary: Vec<BoundaryProbe>,
}

/// Chebyshev points of the first kind on `[a, b]`.
fn chebyshev(a: f64, b: f64, n: usize) -> impl Iterator<Item = f64> {
    (0..n).map(move |k| {
        let x = ((2 * k + 1) as f64 * std::f64::consts::PI / (2 * n) as f64).cos();
        0.5 * (a + b) - 0.5 * (b - a) * x
    })
}

/// Time span probed when the flow never reaches the boundary.
fn open_horizon<M: PdmpModel>(model: &M, x: &M::Point) -> f64 {
    let decay = model.alpha() + model.rate_lower(x).unwrap_or(0.0);
    20.0 / decay
}

impl ProbeSet {
    /// Per flow segment, `per_segment` Chebyshev times plus every breakpoint and
    /// both endpoints; one boundary probe per state with finite `t*` and boundary action.
    pub fn build<M: PdmpModel>(model: &M, per_segment: usize) -> Self {
        let mut flow = Vec::new();
        let mut boundary = Vec::new();
        for (j, x) in model.states().iter().enumerate() {
            let state = StateId(j);
            let set = model.feasible(state);
            let t_star = model.t_star(x);
            let end = if t_star.is_finite() { t_star } else { open_horizon(model, x) };
            for &k in &set.interior {
                let a = &model.actions()[k.0];
                let bps = merged_breakpoints(model, x, a, end);
                let mut times = vec![0.0];
                for (s0, s1) in split_segments(0.0, &bps, end) {
                    times.extend(chebyshev(s0, s1, per_segment));
                    times.push(s1);
                }
                times.sort_by(f64::total_cmp);
                times.dedup();
                flow.extend(times.into_iter().map(|t| FlowProbe { state, interior: k, t }));
            }
            if t_star.is_finite() {
                boundary.extend(set.boundary.iter().map(|&i| BoundaryProbe { state, boundary: i }));
            }
        }
        ProbeSet { flow, boundary }
    }
}

/// Where a minimum margin was attained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeLocation {
    pub state: StateId,
    pub state_label: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub action: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
}

/// Minimum margin of one inequality over its probes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InequalityReport {
    pub name: String,
    /// `None` when no probe applies.
    pub min_margin: Option<f64>,
    pub argmin: Option<ProbeLocation>,
    pub probes: usize,
    pub pass: bool,
}

impl InequalityReport {
    fn from_margins(name: &str, margins: Vec<(f64, ProbeLocation)>) -> Self {
        let probes = margins.len();
        let mut best: Option<(f64, ProbeLocation)> = None;
        for (m, loc) in margins {
            // NaN margins are failures.
            let m = if m.is_nan() { f64::NEG_INFINITY } else { m };
            if best.as_ref().is_none_or(|(b, _)| m < *b) {
                best = Some((m, loc));
            }
        }
        let (min_margin, argmin) = match best {
            Some((m, loc)) => (Some(m), Some(loc)),
            None => (None, None),
        };
        InequalityReport {
            name: name.to_string(),
            pass: min_margin.is_none_or(|m| m >= MARGIN_TOL),
            min_margin,
            argmin,
            probes,
        }
    }

    /// A single scalar condition `margin >= 0`.
    pub fn scalar(name: &str, margin: f64) -> Self {
        InequalityReport {
            name: name.to_string(),
            min_margin: Some(margin),
            argmin: None,
            probes: 1,
            pass: margin >= MARGIN_TOL,
        }
    }
}

/// Verdict over a list of inequalities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub inequalities: Vec<InequalityReport>,
    pub pass: bool,
    pub scope: String,
}

impl AssumptionReport {
    pub fn new(inequalities: Vec<InequalityReport>) -> Self {
        AssumptionReport { pass: inequalities.iter().all(|r| r.pass), inequalities, scope: "verified on probes".into() }
    }

    pub fn push(&mut self, r: InequalityReport) {
        self.pass &= r.pass;
        self.inequalities.push(r);
    }

    /// Smallest margin over all inequalities.
    pub fn min_margin(&self) -> Option<f64> {
        self.inequalities.iter().filter_map(|r| r.min_margin).reduce(f64::min)
    }

    pub fn get(&self, name: &str) -> Option<&InequalityReport> {
        self.inequalities.iter().find(|r| r.name == name)
    }
}

fn location<M: PdmpModel>(model: &M, state: StateId, action: ActionId, t: Option<f64>) -> ProbeLocation {
    ProbeLocation { state, state_label: model.state_label(state), action: Some(model.action_label(action)), t }
}

fn expect_v<M: PdmpModel>(model: &M, v: &PointFn<M::Point>, targets: &[(StateId, f64)]) -> f64 {
    targets.iter().map(|&(k, p)| p * v(&model.states()[k.0])).sum()
}

/// Derivative of `t -> v(phi(x, t))` by second-order finite differences with
/// step `h = h_scale * (1 + |t|)`; one-sided near `0` and `t*`.
pub fn flow_derivative<M: PdmpModel>(model: &M, v: &PointFn<M::Point>, x: &M::Point, t: f64, h_scale: f64) -> f64 {
    let h = h_scale * (1.0 + t.abs());
    let t_star = model.t_star(x);
    let at = |s: f64| v(&model.flow(x, s));
    if t - h >= 0.0 && t + h <= t_star {
        (at(t + h) - at(t - h)) / (2.0 * h)
    } else if t - h < 0.0 {
        (-3.0 * at(t) + 4.0 * at(t + h) - at(t + 2.0 * h)) / (2.0 * h)
    } else {
        (3.0 * at(t) - 4.0 * at(t - h) + at(t - 2.0 * h)) / (2.0 * h)
    }
}

/// Finite-difference step scale used by [`check_growth`].
pub const FD_STEP: f64 = 1e-5;

/// Evaluates the three growth inequalities at every probe:
/// (i) `Xv + c v - lam [v - Qv] <= b` along the flow,
/// (ii) `lam + b / (c + alpha) <= v`,
/// (iii) `v(phi(x, t*)) >= Qv(., a_bd) + c + alpha` at finite boundaries.
pub fn check_growth<M: PdmpModel>(
    model: &M,
    cert: &GrowthCertificate<M::Point>,
    probes: &ProbeSet,
) -> AssumptionReport {
    let alpha = model.alpha();
    let c_alpha = cert.c + alpha;
    let flow: Vec<((f64, f64), ProbeLocation)> = probes
        .flow
        .par_iter()
        .map(|p| {
            let x = &model.states()[p.state.0];
            let a = &model.actions()[p.interior.0];
            let y = model.flow(x, p.t);
            let ctrl = model.control(x, a, p.t);
            let lam = model.rate(&y, &ctrl);
            let vy = (cert.v)(&y);
            let by = (cert.b)(&y);
            let xv = match &cert.xv {
                Some(f) => f(&y),
                None => flow_derivative(model, &cert.v, x, p.t, FD_STEP),
            };
            let qv = expect_v(model, &cert.v, &model.jump(&y, Jump::Interior(&ctrl)));
            let drift = by - (xv + cert.c * vy - lam * (vy - qv));
            let dominance = vy - lam - by / c_alpha;
            ((drift, dominance), location(model, p.state, p.interior, Some(p.t)))
        })
        .collect();
    let boundary: Vec<(f64, ProbeLocation)> = probes
        .boundary
        .par_iter()
        .map(|p| {
            let x = &model.states()[p.state.0];
            let z = model.flow(x, model.t_star(x));
            let a_bd = &model.actions()[p.boundary.0];
            let qv = expect_v(model, &cert.v, &model.jump(&z, Jump::Boundary(a_bd)));
            ((cert.v)(&z) - qv - c_alpha, location(model, p.state, p.boundary, None))
        })
        .collect();

    let (drift, dominance): (Vec<_>, Vec<_>) =
        flow.into_iter().map(|((d, m), loc)| ((d, loc.clone()), (m, loc))).unzip();
    let mut report = AssumptionReport::new(vec![
        InequalityReport::from_margins("drift", drift),
        InequalityReport::from_margins("dominance", dominance),
        InequalityReport::from_margins("boundary", boundary),
    ]);
    report.push(InequalityReport::scalar("c + alpha > 0", c_alpha));
    let v_min: Vec<(f64, ProbeLocation)> = model
        .states()
        .iter()
        .enumerate()
        .map(|(j, x)| {
            let loc =
                ProbeLocation { state: StateId(j), state_label: model.state_label(StateId(j)), action: None, t: None };
            ((cert.v)(x), loc)
        })
        .collect();
    report.push(InequalityReport::from_margins("v positive", v_min));
    report
}

/// `sum mu <= nu0(v) / (c + alpha) + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MassBoundReport {
    pub total_mass: f64,
    pub bound: f64,
    pub pass: bool,
}

pub fn mass_bound<M: PdmpModel>(
    model: &M,
    cert: &GrowthCertificate<M::Point>,
    inst: &FiniteInstance,
    mu: &OccupationMeasure,
) -> MassBoundReport {
    mass_bound_value(model, cert, inst, mu.total_mass())
}

/// [`mass_bound`] for a total mass obtained elsewhere (e.g. a Monte Carlo mean).
pub fn mass_bound_value<M: PdmpModel>(
    model: &M,
    cert: &GrowthCertificate<M::Point>,
    inst: &FiniteInstance,
    total_mass: f64,
) -> MassBoundReport {
    let nu_v: f64 =
        inst.nu0.iter().zip(model.states()).map(|(p, x)| if *p > 0.0 { p * (cert.v)(x) } else { 0.0 }).sum();
    let bound = nu_v / (cert.c + model.alpha()) + 1.0;
    MassBoundReport { total_mass, bound, pass: total_mass <= bound + 1e-7 }
}

/// Jump-rate bound checks and the `K_lambda` integrals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateBoundsReport {
    pub bounds: AssumptionReport,
    /// Largest `int_0^{t*} exp(-int_0^t lam_lower) dt` over states with finite `t*`.
    pub k_lambda_finite: Option<f64>,
    /// Largest such integral over all states.
    pub k_lambda_max: Option<f64>,
    pub k_lambda_declared: Option<f64>,
    pub pass: bool,
}

/// `int_0^{t*(x)} exp(-int_0^t lam_lower(phi(x,s)) ds) dt`, `None` without a declared lower bound.
pub fn k_lambda_integral<M: PdmpModel>(model: &M, x: &M::Point, quad: &QuadratureConfig) -> Result<Option<f64>> {
    let lower = |t: f64| model.rate_lower(&model.flow(x, t));
    let Some(l0) = lower(0.0) else {
        return Ok(None);
    };
    let t_star = model.t_star(x);
    let (end, tail) = if t_star.is_finite() {
        (t_star, 0.0)
    } else if l0 > 0.0 {
        let end = -quad.tail_epsilon.ln() / l0;
        (end, (-l0 * end).exp() / l0)
    } else {
        return Ok(Some(f64::INFINITY));
    };
    let rate = |t: f64| lower(t).unwrap_or(0.0);
    let profile = CumulativeRate::build(&rate, &[(0.0, end)], 0.1 * quad.abs_tol)?;
    let (v, _) = integrate_scalar(
        |t| (-profile.value(t)).exp(),
        &[(0.0, end)],
        quad.abs_tol,
        quad.rel_tol,
        quad.max_subdivisions,
    )?;
    Ok(Some(v + tail))
}

/// Checks `lam_lower <= lam <= lam_upper` at every flow probe, `lam_lower > 0`
/// where `t* = inf`, and `int exp(-int lam_lower) <= K_lambda`.
pub fn check_rate_bounds<M: PdmpModel>(
    model: &M,
    probes: &ProbeSet,
    quad: &QuadratureConfig,
) -> Result<RateBoundsReport> {
    let rows: Vec<(Option<f64>, Option<f64>, ProbeLocation)> = probes
        .flow
        .par_iter()
        .map(|p| {
            let x = &model.states()[p.state.0];
            let a = &model.actions()[p.interior.0];
            let y = model.flow(x, p.t);
            let lam = model.rate(&y, &model.control(x, a, p.t));
            let lower = model.rate_lower(&y).map(|l| lam - l);
            let upper = model.rate_upper(&y).map(|u| u - lam);
            (lower, upper, location(model, p.state, p.interior, Some(p.t)))
        })
        .collect();
    let lower: Vec<_> = rows.iter().filter_map(|(l, _, loc)| l.map(|m| (m, loc.clone()))).collect();
    let upper: Vec<_> = rows.iter().filter_map(|(_, u, loc)| u.map(|m| (m, loc.clone()))).collect();
    let positive: Vec<(f64, ProbeLocation)> = model
        .states()
        .iter()
        .enumerate()
        .filter(|(_, x)| !model.t_star(x).is_finite())
        .map(|(j, x)| {
            let loc =
                ProbeLocation { state: StateId(j), state_label: model.state_label(StateId(j)), action: None, t: None };
            // A missing bound counts as zero.
            let l = model.rate_lower(x).unwrap_or(0.0);
            (if l > 0.0 { l } else { f64::NEG_INFINITY }, loc)
        })
        .collect();
    let bounds = AssumptionReport::new(vec![
        InequalityReport::from_margins("rate above lower bound", lower),
        InequalityReport::from_margins("rate below upper bound", upper),
        InequalityReport::from_margins("positive lower bound where t* is infinite", positive),
    ]);

    let integrals: Vec<(bool, Option<f64>)> = model
        .states()
        .par_iter()
        .map(|x| Ok((model.t_star(x).is_finite(), k_lambda_integral(model, x, quad)?)))
        .collect::<Result<_>>()?;
    let max_of = |it: &mut dyn Iterator<Item = f64>| it.reduce(f64::max);
    let k_lambda_finite = max_of(&mut integrals.iter().filter(|(f, _)| *f).filter_map(|(_, v)| *v));
    let k_lambda_max = max_of(&mut integrals.iter().filter_map(|(_, v)| *v));
    let declared = model.rate_integral_bound();
    let k_ok = match (declared, k_lambda_max) {
        (Some(k), Some(v)) => v <= k + quad.identity_tolerance(),
        _ => true,
    };
    Ok(RateBoundsReport {
        pass: bounds.pass && k_ok,
        bounds,
        k_lambda_finite,
        k_lambda_max,
        k_lambda_declared: declared,
    })
}

/// `w = c0 + Lf_0 + Hr_0 > 0` on every row and `w0 = min over pairs > 0` on every state.
pub fn check_w_positivity(inst: &FiniteInstance, c0: f64) -> InequalityReport {
    let offsets = inst.row_offsets();
    let margins = (0..inst.num_states())
        .map(|j| {
            let w0 = inst.rows[offsets[j]..offsets[j + 1]]
                .iter()
                .map(|r| c0 + r.stage_cost(0))
                .fold(f64::INFINITY, f64::min);
            let loc = ProbeLocation { state: StateId(j), state_label: inst.states[j].clone(), action: None, t: None };
            (w0, loc)
        })
        .collect();
    let mut r = InequalityReport::from_margins("w0 positive", margins);
    // Strict positivity: a zero margin fails.
    r.pass = r.min_margin.is_none_or(|m| m > 0.0);
    r
}
