//! Monte Carlo sampling of controlled trajectories under a stationary policy,
//! with discounted cost and occupation estimates for checking the LP.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ActionId, FiniteInstance, Jump, PdmpModel, StateId};
use crate::occupation::OccupationMeasure;
use crate::operators::{discounted_running_costs, rate_profile, CumulativeRate, QuadratureConfig};
use crate::policy::{evaluate_policy_exact, StationaryPolicy};

/// Largest value of `-ln u` for `u` in `(0, 1]` drawn from 53-bit floats is about 36.7.
const SURVIVAL_CAP: f64 = 37.5;
/// Trajectories per accumulation chunk; fixed so results do not depend on the thread count.
const CHUNK: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_traj: usize,
    /// Stop a trajectory once `exp(-alpha T_k) < eps_disc`.
    pub eps_disc: f64,
    pub seed: u64,
    pub quad: QuadratureConfig,
    /// Guard against explosive jump sequences.
    pub max_jumps: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig { n_traj: 100_000, eps_disc: 1e-8, seed: 0, quad: QuadratureConfig::default(), max_jumps: 1_000_000 }
    }
}

/// Stream of trajectory `index` under master seed `seed`.
pub fn trajectory_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Uniform on `(0, 1]`.
fn open_uniform<R: Rng>(rng: &mut R) -> f64 {
    1.0 - rng.gen::<f64>()
}

/// Inverse-transform sampler of the first jump time from `x` under `a`.
#[derive(Debug, Clone)]
pub struct InterjumpSampler {
    profile: CumulativeRate,
    t_star: f64,
    /// `Lambda(t*)`, or infinity when the boundary is never reached.
    at_boundary: f64,
}

impl InterjumpSampler {
    pub fn new<M: PdmpModel>(model: &M, x: &M::Point, a: &M::Action, quad: &QuadratureConfig) -> Result<Self> {
        let t_star = model.t_star(x);
        if t_star.is_finite() {
            let profile = rate_profile(model, x, a, t_star, quad)?;
            return Ok(InterjumpSampler { at_boundary: profile.total(), profile, t_star });
        }
        let lam = model
            .rate_lower(x)
            .filter(|l| *l > 0.0 && l.is_finite())
            .ok_or_else(|| Error::UnboundedHorizon { state: format!("{x:?}") })?;
        let last_break = crate::model::merged_breakpoints(model, x, a, t_star).last().copied().unwrap_or(0.0);
        let end = (1.05 * SURVIVAL_CAP / lam).max(last_break);
        let mut profile = rate_profile(model, x, a, end, quad)?;
        let rate = |t: f64| model.rate(&model.flow(x, t), &model.control(x, a, t));
        profile.extend_until(&rate, SURVIVAL_CAP, 4.0 * end)?;
        Ok(InterjumpSampler { profile, t_star, at_boundary: f64::INFINITY })
    }

    /// Probability of reaching the boundary before a spontaneous jump.
    pub fn boundary_probability(&self) -> f64 {
        (-self.at_boundary).exp()
    }

    pub fn cumulative(&self, t: f64) -> f64 {
        self.profile.value(t.min(self.profile.horizon()))
    }

    /// `(time, hit_boundary)`.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> (f64, bool) {
        let e = -open_uniform(rng).ln();
        if e >= self.at_boundary {
            return (self.t_star, true);
        }
        let t = self.profile.invert(e).expect("profile covers every finite draw");
        (t.min(self.t_star), false)
    }
}

/// One draw of the first jump time; builds a fresh profile, so prefer
/// [`InterjumpSampler`] for repeated draws.
pub fn sample_interjump<M: PdmpModel, R: Rng>(
    model: &M,
    x: &M::Point,
    a: &M::Action,
    rng: &mut R,
    quad: &QuadratureConfig,
) -> Result<(f64, bool)> {
    Ok(InterjumpSampler::new(model, x, a, quad)?.sample(rng))
}

fn categorical<R: Rng>(entries: &[(StateId, f64)], rng: &mut R) -> Option<StateId> {
    let total: f64 = entries.iter().map(|e| e.1).sum();
    let u = rng.gen::<f64>() * total;
    let mut acc = 0.0;
    for &(s, p) in entries {
        acc += p;
        if u < acc {
            return Some(s);
        }
    }
    entries.iter().rev().find(|e| e.1 > 0.0).map(|e| e.0)
}

/// Categorical draw from `Q(point, .)` of the given jump kind.
pub fn sample_postjump<M: PdmpModel, R: Rng>(
    model: &M,
    point: &M::Point,
    jump: Jump<'_, M::Control, M::Action>,
    rng: &mut R,
) -> Result<StateId> {
    let q = model.jump(point, jump);
    categorical(&q, rng).ok_or_else(|| Error::InvalidModel(format!("empty jump law at {point:?}")))
}

/// One simulated path, truncated at the discount cutoff.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    /// `T_0 = 0 < T_1 < ...`.
    pub jump_times: Vec<f64>,
    pub states: Vec<StateId>,
    /// Instance row of `(Z_k, Theta_k)`.
    pub rows: Vec<usize>,
    /// Whether the jump at `T_k` came from the boundary (`false` for `k = 0`).
    pub boundary_hits: Vec<bool>,
    /// Accumulated discounted costs.
    pub costs: Vec<f64>,
    /// `exp(-alpha T_K)` at the cutoff.
    pub residual_discount: f64,
}

struct Context<'a, M: PdmpModel> {
    model: &'a M,
    inst: &'a FiniteInstance,
    policy_rows: Vec<Vec<(usize, f64)>>,
    samplers: HashMap<(StateId, ActionId), InterjumpSampler>,
    cfg: &'a SimConfig,
}

/// Per-trajectory sums, laid out as costs, mass, jumps, hits, rows, balance.
struct Layout {
    n_costs: usize,
    n_rows: usize,
    n_states: usize,
}

impl Layout {
    const MASS: usize = 0;
    const JUMPS: usize = 1;
    const HITS: usize = 2;

    fn cost(&self, i: usize) -> usize {
        3 + i
    }
    fn row(&self, r: usize) -> usize {
        3 + self.n_costs + r
    }
    fn balance(&self, j: usize) -> usize {
        3 + self.n_costs + self.n_rows + j
    }
    fn dim(&self) -> usize {
        3 + self.n_costs + self.n_rows + self.n_states
    }
}

fn pick<R: Rng>(rows: &[(usize, f64)], rng: &mut R) -> usize {
    let u = rng.gen::<f64>();
    let mut acc = 0.0;
    for &(r, p) in rows {
        acc += p;
        if u < acc {
            return r;
        }
    }
    rows.iter().rev().find(|e| e.1 > 0.0).map_or(rows[0].0, |e| e.0)
}

impl<'a, M: PdmpModel> Context<'a, M> {
    fn new(model: &'a M, inst: &'a FiniteInstance, phi: &StationaryPolicy, cfg: &'a SimConfig) -> Result<Self> {
        phi.check_compatible(inst)?;
        if model.states().len() != inst.num_states() || model.num_costs() != inst.num_costs() {
            return Err(Error::Incompatible("model and instance describe different problems".into()));
        }
        if !(cfg.eps_disc > 0.0 && cfg.eps_disc < 1.0) {
            return Err(Error::InvalidInstance(format!("eps_disc must be in (0, 1), got {}", cfg.eps_disc)));
        }
        let policy_rows: Vec<Vec<(usize, f64)>> = (0..inst.num_states()).map(|j| phi.rows(inst, StateId(j))).collect();
        let mut keys: Vec<(StateId, ActionId)> = policy_rows
            .iter()
            .flatten()
            .filter(|e| e.1 > 0.0)
            .map(|&(r, _)| (inst.rows[r].state, inst.rows[r].interior))
            .collect();
        keys.sort();
        keys.dedup();
        let built: Vec<InterjumpSampler> = keys
            .par_iter()
            .map(|&(j, k)| InterjumpSampler::new(model, &model.states()[j.0], &model.actions()[k.0], &cfg.quad))
            .collect::<Result<_>>()?;
        Ok(Context { model, inst, policy_rows, samplers: keys.into_iter().zip(built).collect(), cfg })
    }

    fn initial<R: Rng>(&self, rng: &mut R) -> Result<StateId> {
        let nu: Vec<(StateId, f64)> = self.inst.nu0.iter().enumerate().map(|(j, &p)| (StateId(j), p)).collect();
        categorical(&nu, rng).ok_or_else(|| Error::InvalidInstance("initial distribution is empty".into()))
    }

    /// Runs trajectory `index`, adding its sums into `acc` when given.
    fn run(&self, index: u64, layout: &Layout, acc: Option<&mut [f64]>, record: bool) -> Result<TrajectorySample> {
        let model = self.model;
        let alpha = model.alpha();
        let mut rng = trajectory_rng(self.cfg.seed, index);
        let mut sample = TrajectorySample {
            jump_times: Vec::new(),
            states: Vec::new(),
            rows: Vec::new(),
            boundary_hits: Vec::new(),
            costs: vec![0.0; layout.n_costs],
            residual_discount: 1.0,
        };
        let mut scratch = acc;
        let mut z = self.initial(&mut rng)?;
        if let Some(v) = scratch.as_deref_mut() {
            for (j, &p) in self.inst.nu0.iter().enumerate() {
                v[layout.balance(j)] -= p;
            }
        }
        let mut t = 0.0;
        let mut hit_last = false;
        for k in 0.. {
            let disc = (-alpha * t).exp();
            if disc < self.cfg.eps_disc {
                sample.residual_discount = disc;
                break;
            }
            if k >= self.cfg.max_jumps {
                return Err(Error::NumericalBreakdown(format!(
                    "trajectory {index} exceeded {} jumps before the discount cutoff",
                    self.cfg.max_jumps
                )));
            }
            let r = pick(&self.policy_rows[z.0], &mut rng);
            let row = &self.inst.rows[r];
            if record {
                sample.jump_times.push(t);
                sample.states.push(z);
                sample.rows.push(r);
                sample.boundary_hits.push(hit_last);
            }
            if let Some(v) = scratch.as_deref_mut() {
                v[Layout::MASS] += disc;
                v[Layout::JUMPS] += 1.0;
                v[layout.row(r)] += disc;
                v[layout.balance(z.0)] += disc;
                for &(p, g) in &row.g {
                    v[layout.balance(p.0)] -= disc * g;
                }
            }
            let x = &model.states()[z.0];
            let a = &model.actions()[row.interior.0];
            let (dt, hit) = self.samplers[&(z, row.interior)].sample(&mut rng);
            let running = discounted_running_costs(model, x, a, dt, &self.cfg.quad)?;
            for (c, f) in sample.costs.iter_mut().zip(&running) {
                *c += disc * f;
            }
            let y = model.flow(x, dt);
            z = if hit {
                let a_bd = &model.actions()[row.boundary.0];
                let w = disc * (-alpha * dt).exp();
                for (i, c) in sample.costs.iter_mut().enumerate() {
                    *c += w * model.boundary_cost(i, &y, a_bd);
                }
                if let Some(v) = scratch.as_deref_mut() {
                    v[Layout::HITS] += 1.0;
                }
                sample_postjump(model, &y, Jump::Boundary(a_bd), &mut rng)?
            } else {
                let ctrl = model.control(x, a, dt);
                sample_postjump(model, &y, Jump::Interior(&ctrl), &mut rng)?
            };
            hit_last = hit;
            t += dt;
        }
        if let Some(v) = scratch {
            for (i, c) in sample.costs.iter().enumerate() {
                v[layout.cost(i)] += c;
            }
        }
        Ok(sample)
    }
}

/// Running mean and sum of squared deviations, mergeable across chunks.
#[derive(Debug, Clone)]
struct Moments {
    n: f64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Moments {
    fn new(dim: usize) -> Self {
        Moments { n: 0.0, mean: vec![0.0; dim], m2: vec![0.0; dim] }
    }

    fn push(&mut self, x: &[f64]) {
        self.n += 1.0;
        for ((m, s), &v) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(x) {
            let d = v - *m;
            *m += d / self.n;
            *s += d * (v - *m);
        }
    }

    fn merge(a: Moments, b: Moments) -> Moments {
        if a.n == 0.0 {
            return b;
        }
        if b.n == 0.0 {
            return a;
        }
        let n = a.n + b.n;
        let mut out = Moments::new(a.mean.len());
        out.n = n;
        for k in 0..a.mean.len() {
            let d = b.mean[k] - a.mean[k];
            out.mean[k] = a.mean[k] + d * b.n / n;
            out.m2[k] = a.m2[k] + b.m2[k] + d * d * a.n * b.n / n;
        }
        out
    }

    fn estimate(&self, k: usize, bias_bound: Option<f64>) -> McEstimate {
        let var = if self.n > 1.0 { self.m2[k] / (self.n - 1.0) } else { 0.0 };
        McEstimate { mean: self.mean[k], std_error: (var.max(0.0) / self.n).sqrt(), count: self.n as usize, bias_bound }
    }
}

/// Pairwise reduction in a fixed order.
fn merge_all(mut parts: Vec<Moments>, dim: usize) -> Moments {
    while parts.len() > 1 {
        let mut next = Vec::with_capacity(parts.len().div_ceil(2));
        let mut it = parts.into_iter();
        while let Some(a) = it.next() {
            next.push(match it.next() {
                Some(b) => Moments::merge(a, b),
                None => a,
            });
        }
        parts = next;
    }
    parts.pop().unwrap_or_else(|| Moments::new(dim))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub count: usize,
    /// Bound on the bias from the discount cutoff; `None` when no bound is certified.
    pub bias_bound: Option<f64>,
}

impl McEstimate {
    /// Distance to `reference` in standard errors, after removing the certified
    /// truncation bias: `sign(d) max(|d| - bias, 0) / SE` with `d = mean - reference`.
    pub fn z_score(&self, reference: f64) -> f64 {
        let d = self.mean - reference;
        let excess = (d.abs() - self.bias_bound.unwrap_or(0.0) - 1e-12).max(0.0);
        if excess == 0.0 {
            0.0
        } else if self.std_error > 0.0 {
            d.signum() * excess / self.std_error
        } else {
            d.signum() * f64::INFINITY
        }
    }

    /// `|mean - reference| <= 3 SE + bias bound`.
    pub fn consistent_with(&self, reference: f64) -> bool {
        self.z_score(reference).abs() <= 3.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub n_traj: usize,
    pub seed: u64,
    pub eps_disc: f64,
    /// `D_0..D_n`.
    pub costs: Vec<McEstimate>,
    /// `sum_k exp(-alpha T_k)`.
    pub mass: McEstimate,
    /// Jumps before the cutoff.
    pub jumps: McEstimate,
    pub boundary_hits: McEstimate,
    /// Per instance row.
    pub occupation: Vec<McEstimate>,
    /// `mu~_j - nu0_j - (G' mu)_j` per state.
    pub balance_residuals: Vec<McEstimate>,
}

impl SimulationReport {
    /// Empirical occupation measure from the row means.
    pub fn occupation_measure(&self, inst: &FiniteInstance) -> OccupationMeasure {
        OccupationMeasure::from_weights(inst, self.occupation.iter().map(|e| e.mean).collect())
    }
}

/// Simulates `cfg.n_traj` trajectories of `phi` and estimates costs, mass,
/// occupation weights and balance residuals.
///
/// Truncation bias bounds come from the exact policy values `V_i(j)`: stopping
/// at `exp(-alpha T_K) < eps` drops at most `eps * max_j V_i(j)` when stage
/// costs are nonnegative. With negative stage costs the bound is omitted.
pub fn simulate<M: PdmpModel>(
    model: &M,
    inst: &FiniteInstance,
    phi: &StationaryPolicy,
    cfg: &SimConfig,
) -> Result<SimulationReport> {
    let ctx = Context::new(model, inst, phi, cfg)?;
    let layout = Layout { n_costs: inst.num_costs(), n_rows: inst.rows.len(), n_states: inst.num_states() };
    let dim = layout.dim();
    let n_chunks = cfg.n_traj.div_ceil(CHUNK);
    let parts: Vec<Moments> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut m = Moments::new(dim);
            let mut v = vec![0.0; dim];
            for n in c * CHUNK..((c + 1) * CHUNK).min(cfg.n_traj) {
                v.iter_mut().for_each(|x| *x = 0.0);
                ctx.run(n as u64, &layout, Some(&mut v), false)?;
                m.push(&v);
            }
            Ok(m)
        })
        .collect::<Result<_>>()?;
    let m = merge_all(parts, dim);

    let exact = evaluate_policy_exact(phi, inst).ok();
    let max_of = |v: &[f64]| v.iter().copied().fold(0.0, f64::max);
    let mass_bias = exact.as_ref().map(|e| cfg.eps_disc * max_of(&e.state_mass));
    let cost_bias = |i: usize| {
        let nonneg = inst.rows.iter().all(|r| r.stage_cost(i) >= 0.0);
        exact.as_ref().filter(|_| nonneg).map(|e| cfg.eps_disc * max_of(&e.state_values[i]))
    };
    Ok(SimulationReport {
        n_traj: cfg.n_traj,
        seed: cfg.seed,
        eps_disc: cfg.eps_disc,
        costs: (0..layout.n_costs).map(|i| m.estimate(layout.cost(i), cost_bias(i))).collect(),
        mass: m.estimate(Layout::MASS, mass_bias),
        jumps: m.estimate(Layout::JUMPS, None),
        boundary_hits: m.estimate(Layout::HITS, None),
        occupation: (0..layout.n_rows).map(|r| m.estimate(layout.row(r), mass_bias)).collect(),
        // Each residual drops at most the mass beyond the cutoff plus its G image.
        balance_residuals: (0..layout.n_states)
            .map(|j| m.estimate(layout.balance(j), mass_bias.map(|b| 2.0 * b)))
            .collect(),
    })
}

/// Records trajectories `0..count` of the same streams [`simulate`] uses.
pub fn sample_trajectories<M: PdmpModel>(
    model: &M,
    inst: &FiniteInstance,
    phi: &StationaryPolicy,
    cfg: &SimConfig,
    count: usize,
) -> Result<Vec<TrajectorySample>> {
    let ctx = Context::new(model, inst, phi, cfg)?;
    let layout = Layout { n_costs: inst.num_costs(), n_rows: inst.rows.len(), n_states: inst.num_states() };
    (0..count as u64).into_par_iter().map(|n| ctx.run(n, &layout, None, true)).collect()
}

/// Trajectory dump with header `traj_id,k,T_k,Z_k,theta_k,theta_partial_k,boundary_hit`.
pub fn write_trajectories_csv<W: std::io::Write>(
    out: W,
    inst: &FiniteInstance,
    samples: &[TrajectorySample],
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["traj_id", "k", "T_k", "Z_k", "theta_k", "theta_partial_k", "boundary_hit"])?;
    for (n, s) in samples.iter().enumerate() {
        for k in 0..s.jump_times.len() {
            let row = &inst.rows[s.rows[k]];
            w.write_record([
                n.to_string(),
                k.to_string(),
                format!("{:.17e}", s.jump_times[k]),
                inst.states[s.states[k].0].clone(),
                inst.actions[row.interior.0].clone(),
                inst.actions[row.boundary.0].clone(),
                u8::from(s.boundary_hits[k]).to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Kolmogorov–Smirnov distance between a sample and a distribution with
/// right-continuous CDF `cdf` and left limits `cdf_left` (equal where continuous).
pub fn ks_statistic(samples: &mut [f64], cdf: impl Fn(f64) -> f64, cdf_left: impl Fn(f64) -> f64) -> f64 {
    samples.sort_by(f64::total_cmp);
    let n = samples.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in samples.iter().enumerate() {
        d = d.max((i + 1) as f64 / n - cdf(x)).max(cdf_left(x) - i as f64 / n);
    }
    d
}

/// Asymptotic critical value `sqrt(-ln(level / 2) / 2) / sqrt(n)`.
pub fn ks_critical(n: usize, level: f64) -> f64 {
    (-(level / 2.0).ln() / 2.0).sqrt() / (n as f64).sqrt()
}
