//! Cached cumulative jump rate `Lambda^a(x, t) = int_0^t lambda(phi(x,s), ell(x,a,s)) ds`.
//!
//! The profile is a piecewise cubic Hermite interpolant on an adaptive grid:
//! knot values come from Gauss–Kronrod integration of the rate, knot slopes
//! are the rate itself (one-sided at breakpoints), and each panel's slopes are
//! limited so the interpolant stays monotone.

use super::quadrature::gk15;
use crate::error::{Error, Result};

/// Accuracy floor on `t` when inverting the profile.
pub const INVERSION_TOL: f64 = 1e-10;

const MAX_PANELS: usize = 200_000;

#[derive(Debug, Clone)]
struct HermitePanel {
    t0: f64,
    t1: f64,
    v0: f64,
    v1: f64,
    d0: f64,
    d1: f64,
}

impl HermitePanel {
    fn eval(&self, t: f64) -> f64 {
        let h = self.t1 - self.t0;
        if h <= 0.0 {
            return self.v0;
        }
        let s = ((t - self.t0) / h).clamp(0.0, 1.0);
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        h00 * self.v0 + h10 * h * self.d0 + h01 * self.v1 + h11 * h * self.d1
    }
}

/// Monotone piecewise-cubic representation of the cumulative rate.
#[derive(Debug, Clone)]
pub struct CumulativeRate {
    panels: Vec<HermitePanel>,
    /// Tolerance used for each panel's interpolation and integration error.
    tol: f64,
    /// Largest error estimate seen while building.
    error: f64,
}

impl CumulativeRate {
    /// Builds the profile over consecutive smooth `segments` starting at 0.
    pub fn build<R>(rate: &R, segments: &[(f64, f64)], tol: f64) -> Result<Self>
    where
        R: Fn(f64) -> f64,
    {
        let mut profile = CumulativeRate { panels: Vec::new(), tol, error: 0.0 };
        let mut value = 0.0;
        for &(a, b) in segments {
            value = profile.push_segment(rate, a, b, value)?;
        }
        Ok(profile)
    }

    /// Right end of the covered interval.
    pub fn horizon(&self) -> f64 {
        self.panels.last().map_or(0.0, |p| p.t1)
    }

    /// Value at the horizon.
    pub fn total(&self) -> f64 {
        self.panels.last().map_or(0.0, |p| p.v1)
    }

    pub fn error_estimate(&self) -> f64 {
        self.error
    }

    /// Extends the last smooth segment to `new_end`, using panels that double in length.
    pub fn extend<R>(&mut self, rate: &R, new_end: f64) -> Result<()>
    where
        R: Fn(f64) -> f64,
    {
        let mut start = self.horizon();
        let mut value = self.total();
        let mut width = self.panels.last().map_or(1.0, |p| (p.t1 - p.t0).max(1e-3));
        while start < new_end {
            let end = (start + width).min(new_end);
            value = self.push_segment(rate, start, end, value)?;
            start = end;
            width *= 2.0;
        }
        Ok(())
    }

    /// Extends until `Lambda >= target`, or fails once `max_time` is passed.
    pub fn extend_until<R>(&mut self, rate: &R, target: f64, max_time: f64) -> Result<()>
    where
        R: Fn(f64) -> f64,
    {
        let mut width = self.panels.last().map_or(1.0, |p| (p.t1 - p.t0).max(1e-3));
        while self.total() < target {
            let start = self.horizon();
            if start >= max_time {
                return Err(Error::UnboundedHorizon {
                    state: format!("cumulative rate {} < {target} at t = {start}", self.total()),
                });
            }
            let end = (start + width).min(max_time);
            let v = self.total();
            self.push_segment(rate, start, end, v)?;
            width *= 2.0;
        }
        Ok(())
    }

    /// `Lambda(t)` for `0 <= t <= horizon`.
    pub fn value(&self, t: f64) -> f64 {
        if self.panels.is_empty() || t <= 0.0 {
            return 0.0;
        }
        let k = self.panels.partition_point(|p| p.t1 < t);
        match self.panels.get(k) {
            Some(p) => p.eval(t),
            None => self.total(),
        }
    }

    /// Smallest `t` with `Lambda(t) >= y`, to [`INVERSION_TOL`] by bisection.
    /// `None` if `y` exceeds the value at the horizon.
    pub fn invert(&self, y: f64) -> Option<f64> {
        if y <= 0.0 {
            return Some(0.0);
        }
        if y > self.total() {
            return None;
        }
        let k = self.panels.partition_point(|p| p.v1 < y);
        let p = self.panels.get(k)?;
        let (mut lo, mut hi) = (p.t0, p.t1);
        while hi - lo > INVERSION_TOL {
            let mid = 0.5 * (lo + hi);
            if p.eval(mid) < y {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Some(0.5 * (lo + hi))
    }

    fn push_segment<R>(&mut self, rate: &R, a: f64, b: f64, v_start: f64) -> Result<f64>
    where
        R: Fn(f64) -> f64,
    {
        if b <= a {
            return Ok(v_start);
        }
        let mut rate1 = |t: f64, out: &mut [f64]| out[0] = rate(t);
        // Work stack of panels still to be accepted, processed left to right.
        let mut stack = vec![(a, b)];
        let mut value = v_start;
        while let Some((t0, t1)) = stack.pop() {
            if self.panels.len() >= MAX_PANELS {
                return Err(Error::QuadratureFailure("cumulative rate grid exceeded its panel budget".into()));
            }
            let h = t1 - t0;
            let whole = gk15(&mut rate1, t0, t1, 1);
            let delta = 1e-9 * h;
            let d0 = rate(t0 + delta).max(0.0);
            let d1 = rate(t1 - delta).max(0.0);
            let mut panel = HermitePanel { t0, t1, v0: value, v1: value + whole.value[0].max(0.0), d0, d1 };
            limit_monotone(&mut panel);
            let mid = 0.5 * (t0 + t1);
            let left = gk15(&mut rate1, t0, mid, 1);
            let interp_err = (panel.eval(mid) - (value + left.value[0])).abs();
            let err = whole.error[0].max(interp_err);
            let panel_tol = self.tol * h.min(1.0).max(1e-6);
            let splittable = mid > t0 && mid < t1 && h > 1e-12 * t1.abs().max(1.0);
            if err > panel_tol && splittable {
                stack.push((mid, t1));
                stack.push((t0, mid));
                continue;
            }
            self.error = self.error.max(err);
            value = panel.v1;
            self.panels.push(panel);
        }
        Ok(value)
    }
}

/// Fritsch–Carlson slope limiting on a single panel.
fn limit_monotone(p: &mut HermitePanel) {
    let h = p.t1 - p.t0;
    let m = (p.v1 - p.v0) / h;
    if m <= 0.0 {
        p.d0 = 0.0;
        p.d1 = 0.0;
        return;
    }
    let a = p.d0 / m;
    let b = p.d1 / m;
    let r = a * a + b * b;
    if r > 9.0 {
        let tau = 3.0 / r.sqrt();
        p.d0 = tau * a * m;
        p.d1 = tau * b * m;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_rate_is_linear() {
        let prof = CumulativeRate::build(&|_| 2.0, &[(0.0, 3.0)], 1e-12).unwrap();
        assert!((prof.value(3.0) - 6.0).abs() < 1e-13);
        assert!((prof.value(1.25) - 2.5).abs() < 1e-13);
        assert!((prof.invert(5.0).unwrap() - 2.5).abs() < 2e-10);
    }

    #[test]
    fn zero_rate_stays_zero() {
        let prof = CumulativeRate::build(&|_| 0.0, &[(0.0, 2.0)], 1e-12).unwrap();
        assert_eq!(prof.value(1.7), 0.0);
        assert_eq!(prof.invert(0.1), None);
    }

    #[test]
    fn smooth_rate_matches_closed_form() {
        let rate = |t: f64| 1.0 + (3.0 * t).sin().powi(2);
        let prof = CumulativeRate::build(&rate, &[(0.0, 2.0)], 1e-11).unwrap();
        let exact = |t: f64| 1.5 * t - (6.0 * t).sin() / 12.0;
        for k in 0..=40 {
            let t = 2.0 * k as f64 / 40.0;
            assert!((prof.value(t) - exact(t)).abs() < 1e-10, "t = {t}");
        }
    }

    #[test]
    fn rate_jump_at_breakpoint() {
        let rate = |t: f64| if t < 1.0 { 1.0 } else { 3.0 };
        let prof = CumulativeRate::build(&rate, &[(0.0, 1.0), (1.0, 2.0)], 1e-12).unwrap();
        assert!((prof.value(1.5) - 2.5).abs() < 1e-12);
        assert!((prof.invert(2.5).unwrap() - 1.5).abs() < 2e-10);
    }

    #[test]
    fn extension_reaches_target_or_fails() {
        let mut prof = CumulativeRate::build(&|_| 0.5, &[(0.0, 1.0)], 1e-12).unwrap();
        prof.extend_until(&|_| 0.5, 40.0, 1e6).unwrap();
        assert!(prof.total() >= 40.0);
        assert!((prof.value(50.0) - 25.0).abs() < 1e-10);

        let mut flat = CumulativeRate::build(&|_| 0.0, &[(0.0, 1.0)], 1e-12).unwrap();
        assert!(matches!(flat.extend_until(&|_| 0.0, 1.0, 100.0), Err(Error::UnboundedHorizon { .. })));
    }
}
