mod common;

use std::sync::OnceLock;

use pdmp_lp::capacity::{investment_grid, CapacityModel};
use pdmp_lp::io::{load_instance, LoadedInstance};
use pdmp_lp::mdp::{augment_delta, solve_total_cost_lp};
use pdmp_lp::model::{PdmpModel, StateId};
use pdmp_lp::occupation::solve_constrained_pdmp;
use pdmp_lp::operators::{evaluate_row, QuadratureConfig};
use pdmp_lp::policy::{disintegrate, evaluate_policy_exact};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{all_deterministic, fixture, oracle_policy_costs, random_instance};

fn capacity() -> &'static CapacityModel {
    static M: OnceLock<CapacityModel> = OnceLock::new();
    M.get_or_init(|| match load_instance(&fixture("capacity.json")).unwrap() {
        LoadedInstance::Capacity(m) => m,
        _ => unreachable!(),
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn lp_value_matches_extracted_policy(seed in any::<u64>(), n in 0usize..=2) {
        let inst = random_instance(&mut ChaCha8Rng::seed_from_u64(seed), 5, 4, n);
        let sol = solve_constrained_pdmp(&inst).unwrap();
        let ev = evaluate_policy_exact(&disintegrate(&sol.measure, &inst), &inst).unwrap();
        prop_assert!((ev.costs[0] - sol.objective).abs() <= 1e-7);
        for (c, d) in ev.costs[1..].iter().zip(&inst.limits) {
            prop_assert!(*c <= d + 1e-7);
        }
        prop_assert!((sol.measure.total_mass() - sol.measure.marginal.iter().sum::<f64>()).abs() <= 1e-9);
    }

    #[test]
    fn augmented_program_has_same_value(seed in any::<u64>(), n in 0usize..=2) {
        let inst = random_instance(&mut ChaCha8Rng::seed_from_u64(seed), 5, 4, n);
        let direct = solve_constrained_pdmp(&inst).unwrap().objective;
        let aug = solve_total_cost_lp(&augment_delta(&inst).unwrap()).unwrap().value;
        prop_assert!((direct - aug).abs() <= 1e-7);
    }

    #[test]
    fn unconstrained_lp_is_best_deterministic(seed in any::<u64>()) {
        let inst = random_instance(&mut ChaCha8Rng::seed_from_u64(seed), 3, 3, 0);
        let lp = solve_constrained_pdmp(&inst).unwrap().objective;
        let best = all_deterministic(&inst)
            .iter()
            .map(|c| oracle_policy_costs(&inst, c)[0])
            .fold(f64::INFINITY, f64::min);
        prop_assert!((lp - best).abs() <= 1e-9);
    }

    #[test]
    fn capacity_flow_is_a_semigroup(j in 0usize..144, a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let m = capacity();
        let x = m.states()[j % m.states().len()];
        let t_star = m.t_star(&x).min(3.0);
        let (s, t) = (a * t_star / 2.0, b * t_star / 2.0);
        let lhs = m.flow(&m.flow(&x, s), t);
        let rhs = m.flow(&x, s + t);
        prop_assert!((lhs.s - rhs.s).abs() <= 1e-12);
        prop_assert_eq!((lhs.m, lhs.j), (rhs.m, rhs.j));
        prop_assert_eq!(m.flow(&x, 0.0), x);
    }

    #[test]
    fn capacity_rows_satisfy_identities(j in 0usize..144, ki in any::<prop::sample::Index>(), bi in any::<prop::sample::Index>()) {
        let m = capacity();
        let j = StateId(j % m.states().len());
        let set = m.feasible(j);
        let k = *ki.get(&set.interior);
        let i = *bi.get(&set.boundary);
        let r = evaluate_row(m, &m.states()[j.0], &m.actions()[k.0], &m.actions()[i.0], &QuadratureConfig::default()).unwrap();
        prop_assert!((r.g_mass() + m.alpha() * r.cal_l - 1.0).abs() <= 1e-8);
        prop_assert!(r.g.iter().all(|&(_, p)| p >= 0.0));
        let c = m.closed_form_row(j, k, i);
        prop_assert!((c.cal_l - r.cal_l).abs() <= 1e-9 && (c.cal_h - r.cal_h).abs() <= 1e-9);
    }

    #[test]
    fn investment_grid_is_closed_under_refinement(tau in 0.1f64..5.0, n in 2usize..6, depth in 1usize..3) {
        let grid = investment_grid(tau, n, depth);
        prop_assert_eq!(grid[0], 0.0);
        prop_assert!(grid.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(grid.iter().all(|&p| p < tau));
        let coarse = if depth > 1 { investment_grid(tau, n, depth - 1) } else { vec![0.0] };
        for p in coarse {
            for i in 0..n - 1 {
                let q = p + i as f64 * (tau - p) / (n - 1) as f64;
                prop_assert!(grid.iter().any(|g| (g - q).abs() <= 1e-12 * tau.max(1.0)), "{q} missing");
            }
        }
    }
}
