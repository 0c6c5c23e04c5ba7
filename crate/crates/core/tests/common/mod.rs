#![allow(dead_code)]

use std::path::PathBuf;

use pdmp_lp::model::{ActionId, FeasibleSet, FiniteInstance, Row, StateId};
use rand::Rng;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
pub fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
        a.swap(c, p);
        b.swap(c, p);
        for r in c + 1..n {
            let f = a[r][c] / a[c][c];
            for k in c..n {
                a[r][k] -= f * a[c][k];
            }
            b[r] -= f * b[c];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| a[r][k] * x[k]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}

/// Costs of the deterministic policy choosing row `choice[j]` in state `j`:
/// `V = c + G V` from every state, then averaged over `nu0`.
pub fn oracle_policy_costs(inst: &FiniteInstance, choice: &[usize]) -> Vec<f64> {
    let s = inst.num_states();
    let mut a = vec![vec![0.0; s]; s];
    for j in 0..s {
        a[j][j] += 1.0;
        for &(p, g) in &inst.rows[choice[j]].g {
            a[j][p.0] -= g;
        }
    }
    (0..inst.num_costs())
        .map(|i| {
            let c: Vec<f64> = choice.iter().map(|&r| inst.rows[r].lf[i] + inst.rows[r].hr[i]).collect();
            let v = gauss_solve(a.clone(), c);
            v.iter().zip(&inst.nu0).map(|(v, p)| v * p).sum()
        })
        .collect()
}

/// Every deterministic stationary policy as one row index per state.
pub fn all_deterministic(inst: &FiniteInstance) -> Vec<Vec<usize>> {
    let offsets = inst.row_offsets();
    let mut out = vec![Vec::new()];
    for j in 0..inst.num_states() {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                (offsets[j]..offsets[j + 1]).map(move |r| {
                    let mut p = prefix.clone();
                    p.push(r);
                    p
                })
            })
            .collect();
    }
    out
}

/// A random valid instance with `1..=max_states` states, `1..=max_pairs`
/// pairs per state and `n_constraints` limits that some policy satisfies.
pub fn random_instance<R: Rng>(
    rng: &mut R,
    max_states: usize,
    max_pairs: usize,
    n_constraints: usize,
) -> FiniteInstance {
    let s = rng.gen_range(1..=max_states);
    let alpha = rng.gen_range(0.2..2.0);
    let n_interior = 2;
    let n_boundary = 2;
    let mut rows = Vec::new();
    let mut feasible = Vec::new();
    for j in 0..s {
        let ki = rng.gen_range(1..=max_pairs.min(n_interior));
        let kb = rng.gen_range(1..=(max_pairs / ki).min(n_boundary));
        let interior: Vec<ActionId> = (0..ki).map(ActionId).collect();
        let boundary: Vec<ActionId> = (0..kb).map(|i| ActionId(n_interior + i)).collect();
        // The feasible set is a product, so keep every combination.
        for &k in &interior {
            for &i in &boundary {
                let mass = rng.gen_range(0.2..0.95);
                let mut w: Vec<f64> = (0..s).map(|_| rng.gen_range(0.0..1.0)).collect();
                let total: f64 = w.iter().sum();
                w.iter_mut().for_each(|v| *v *= mass / total);
                let cal_l = (1.0 - mass) / alpha;
                let cal_h = rng.gen_range(0.0..mass);
                rows.push(Row {
                    state: StateId(j),
                    interior: k,
                    boundary: i,
                    g: w.into_iter().enumerate().map(|(p, v)| (StateId(p), v)).collect(),
                    lf: (0..=n_constraints).map(|_| rng.gen_range(0.0..1.0) * cal_l).collect(),
                    hr: (0..=n_constraints).map(|_| rng.gen_range(0.0..1.0) * cal_h).collect(),
                    cal_l,
                    cal_h,
                    diagnostics: None,
                });
            }
        }
        feasible.push(FeasibleSet { interior, boundary });
    }
    let mut nu0: Vec<f64> = (0..s).map(|_| rng.gen_range(0.0..1.0)).collect();
    let total: f64 = nu0.iter().sum();
    nu0.iter_mut().for_each(|v| *v /= total);
    let mut inst = FiniteInstance {
        states: (0..s).map(|j| format!("z{j}")).collect(),
        actions: vec!["a".into(), "b".into(), "p".into(), "q".into()],
        feasible,
        alpha,
        rows,
        nu0,
        limits: vec![0.0; n_constraints],
    };
    // Limits just above the costs of a random deterministic policy.
    let offsets = inst.row_offsets();
    let choice: Vec<usize> = (0..s).map(|j| rng.gen_range(offsets[j]..offsets[j + 1])).collect();
    let costs = oracle_policy_costs(&inst, &choice);
    for i in 0..n_constraints {
        inst.limits[i] = costs[i + 1] * rng.gen_range(1.0..1.1);
    }
    inst
}
