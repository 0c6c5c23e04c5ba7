//! Adaptive Gauss–Kronrod (7/15) quadrature for vector-valued integrands.

use crate::error::{Error, Result};

/// Kronrod abscissae on [-1, 1] (nonnegative half, descending).
pub(crate) const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_5,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_48,
    0.0,
];

pub(crate) const WGK: [f64; 8] = [
    0.022_935_322_010_529_224,
    0.063_092_092_629_978_56,
    0.104_790_010_322_250_19,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_42,
    0.204_432_940_075_298_89,
    0.209_482_141_084_727_82,
];

/// Gauss weights for the odd-indexed Kronrod abscissae (XGK[1], XGK[3], XGK[5], XGK[7]).
const WG: [f64; 4] =
    [0.129_484_966_168_869_7, 0.279_705_391_489_276_64, 0.381_830_050_505_118_9, 0.417_959_183_673_469_4];

/// The 15 Kronrod nodes mapped to `[a, b]` with their weights (already scaled by the half-width).
pub(crate) fn kronrod_nodes(a: f64, b: f64) -> [(f64, f64); 15] {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut out = [(0.0, 0.0); 15];
    let mut n = 0;
    for k in 0..7 {
        out[n] = (c - h * XGK[k], h * WGK[k]);
        out[n + 1] = (c + h * XGK[k], h * WGK[k]);
        n += 2;
    }
    out[14] = (c, h * WGK[7]);
    out
}

#[derive(Debug, Clone)]
pub(crate) struct Panel {
    pub a: f64,
    pub b: f64,
    pub value: Vec<f64>,
    pub error: Vec<f64>,
}

/// One G7/K15 application on `[a, b]`; the error is `|K15 - G7|` per component.
pub(crate) fn gk15<F>(f: &mut F, a: f64, b: f64, dim: usize) -> Panel
where
    F: FnMut(f64, &mut [f64]),
{
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut kron = vec![0.0; dim];
    let mut gauss = vec![0.0; dim];
    let mut buf = vec![0.0; dim];

    f(c, &mut buf);
    for d in 0..dim {
        kron[d] = WGK[7] * buf[d];
        gauss[d] = WG[3] * buf[d];
    }
    for k in 0..7 {
        let dx = h * XGK[k];
        for x in [c - dx, c + dx] {
            f(x, &mut buf);
            for d in 0..dim {
                kron[d] += WGK[k] * buf[d];
                if k % 2 == 1 {
                    gauss[d] += WG[k / 2] * buf[d];
                }
            }
        }
    }
    let value: Vec<f64> = kron.iter().map(|v| v * h).collect();
    let error: Vec<f64> = kron.iter().zip(&gauss).map(|(k, g)| ((k - g) * h).abs()).collect();
    Panel { a, b, value, error }
}

#[derive(Debug, Clone)]
pub(crate) struct Adaptive {
    /// Accepted panels sorted by left endpoint.
    pub panels: Vec<Panel>,
    pub value: Vec<f64>,
    pub error: Vec<f64>,
}

impl Adaptive {
    pub fn max_error(&self) -> f64 {
        self.error.iter().cloned().fold(0.0, f64::max)
    }
}

/// Globally adaptive integration over consecutive segments.
///
/// Refines the panel with the largest tolerance-relative error until every
/// component meets `max(abs_tol, rel_tol * |I_c|)`.
pub(crate) fn integrate<F>(
    f: &mut F,
    segments: &[(f64, f64)],
    dim: usize,
    abs_tol: f64,
    rel_tol: f64,
    max_panels: usize,
) -> Result<Adaptive>
where
    F: FnMut(f64, &mut [f64]),
{
    let mut panels: Vec<Panel> = segments.iter().filter(|(a, b)| b > a).map(|&(a, b)| gk15(f, a, b, dim)).collect();

    loop {
        let mut value = vec![0.0; dim];
        let mut error = vec![0.0; dim];
        for p in &panels {
            for d in 0..dim {
                value[d] += p.value[d];
                error[d] += p.error[d];
            }
        }
        let tol: Vec<f64> = value.iter().map(|v| abs_tol.max(rel_tol * v.abs())).collect();
        if (0..dim).all(|d| error[d] <= tol[d]) {
            panels.sort_by(|p, q| p.a.total_cmp(&q.a));
            return Ok(Adaptive { panels, value, error });
        }
        if panels.len() >= max_panels {
            return Err(Error::QuadratureFailure(format!(
                "tolerance not met after {} panels (error {:e})",
                panels.len(),
                error.iter().cloned().fold(0.0, f64::max)
            )));
        }
        let worst = panels
            .iter()
            .enumerate()
            .map(|(k, p)| {
                let score = (0..dim).map(|d| p.error[d] / tol[d]).fold(0.0, f64::max);
                (k, score)
            })
            .max_by(|x, y| x.1.total_cmp(&y.1).then(y.0.cmp(&x.0)))
            .map(|(k, _)| k)
            .expect("at least one panel");
        let p = panels.swap_remove(worst);
        let mid = 0.5 * (p.a + p.b);
        if !(mid > p.a && mid < p.b) {
            return Err(Error::QuadratureFailure(format!("panel [{}, {}] cannot be bisected further", p.a, p.b)));
        }
        panels.push(gk15(f, p.a, mid, dim));
        panels.push(gk15(f, mid, p.b, dim));
    }
}

/// Scalar convenience wrapper around [`integrate`].
pub(crate) fn integrate_scalar<F>(
    mut f: F,
    segments: &[(f64, f64)],
    abs_tol: f64,
    rel_tol: f64,
    max_panels: usize,
) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> f64,
{
    let mut g = |t: f64, out: &mut [f64]| out[0] = f(t);
    let r = integrate(&mut g, segments, 1, abs_tol, rel_tol, max_panels)?;
    Ok((r.value[0], r.error[0]))
}

/// Consecutive segments `[p_k, p_{k+1}]` covering `[start, end]` split at `breaks`.
pub(crate) fn split_segments(start: f64, breaks: &[f64], end: f64) -> Vec<(f64, f64)> {
    let mut pts = vec![start];
    pts.extend(breaks.iter().copied().filter(|&t| t > start && t < end));
    pts.push(end);
    pts.windows(2).map(|w| (w[0], w[1])).filter(|(a, b)| b > a).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomials_up_to_degree_22_are_exact_on_one_panel() {
        let mut f = |x: f64, out: &mut [f64]| {
            out[0] = x.powi(22);
            out[1] = 1.0;
        };
        let p = gk15(&mut f, 0.0, 1.0, 2);
        assert!((p.value[0] - 1.0 / 23.0).abs() < 1e-15);
        assert!((p.value[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn adaptive_exponential_over_long_interval() {
        let (v, e) = integrate_scalar(|t| (-2.0 * t).exp(), &[(0.0, 30.0)], 1e-12, 1e-12, 1000).unwrap();
        let exact = 0.5 * (1.0 - (-60.0f64).exp());
        assert!((v - exact).abs() < 1e-12, "{v} vs {exact}, err {e}");
    }

    #[test]
    fn discontinuity_handled_by_split() {
        let f = |t: f64| if t < 0.3 { 1.0 } else { 2.0 };
        let segs = split_segments(0.0, &[0.3], 1.0);
        let (v, _) = integrate_scalar(f, &segs, 1e-13, 1e-13, 10).unwrap();
        assert!((v - (0.3 + 1.4)).abs() < 1e-14);
    }

    #[test]
    fn panel_budget_exhaustion_is_an_error() {
        let f = |t: f64| (1.0 / (t + 1e-9)).sqrt();
        assert!(matches!(integrate_scalar(f, &[(0.0, 1.0)], 1e-13, 1e-13, 3), Err(Error::QuadratureFailure(_))));
    }

    #[test]
    fn kronrod_nodes_integrate_constants() {
        let s: f64 = kronrod_nodes(2.0, 5.0).iter().map(|&(_, w)| w).sum();
        assert!((s - 3.0).abs() < 1e-14);
    }
}
