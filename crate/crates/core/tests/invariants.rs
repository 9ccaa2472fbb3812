use lme_core::accounting::build_ledger;
use lme_core::combined::{emissions_at, lme, solve_combined};
use lme_core::dispatch::solve_dcopf;
use lme_core::fixtures::{self, RandomSpec};
use lme_core::multiperiod::{solve_storage_combined, solve_storage_dcopf, storage_ledger};
use proptest::prelude::*;

fn small() -> RandomSpec {
    RandomSpec {
        nodes: (2, 7),
        generators: (2, 9),
        ..Default::default()
    }
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn footprint_identity_holds(seed in any::<u64>()) {
        let net = fixtures::random_feasible_network(&small(), seed);
        let r = solve_combined(&net).unwrap();
        let ledger = build_ledger(&net, &r);
        prop_assert!(ledger.is_balanced(), "residual {}", ledger.footprint_residual);
        prop_assert!(close(ledger.total_emissions, r.emissions, 1e-9));
    }

    #[test]
    fn combined_keeps_dispatch_cost(seed in any::<u64>()) {
        let net = fixtures::random_feasible_network(&small(), seed);
        let base = solve_dcopf(&net).unwrap();
        let r = solve_combined(&net).unwrap();
        prop_assert!(close(r.dispatch.cost, base.cost, 1e-8), "{} vs {}", r.dispatch.cost, base.cost);
        prop_assert!(r.emissions <= base.emissions(&net) + 1e-7 * (1.0 + base.emissions(&net)));
    }

    #[test]
    fn lme_identity_per_node(seed in any::<u64>()) {
        let net = fixtures::random_feasible_network(&small(), seed);
        let r = solve_combined(&net).unwrap();
        let l = lme(&r).0;
        for (i, v) in l.iter().enumerate() {
            prop_assert!(close(*v, r.outer.p_pi[i] + r.p_o * r.dispatch.lmp[i], 1e-12));
        }
    }

    #[test]
    fn reorderings_keep_optimal_values(seed in any::<u64>(), perm in any::<u64>()) {
        let net = fixtures::random_feasible_network(&small(), seed);
        let shuffled = fixtures::permute(&net, perm);
        let a = solve_combined(&net).unwrap();
        let b = solve_combined(&shuffled).unwrap();
        prop_assert!(close(a.dispatch.cost, b.dispatch.cost, 1e-8));
        prop_assert!(close(a.emissions, b.emissions, 1e-7));
    }

    #[test]
    fn reference_choice_keeps_optimal_values(seed in any::<u64>(), pick in any::<prop::sample::Index>()) {
        let net = fixtures::random_feasible_network(&small(), seed);
        let id = net.nodes()[pick.index(net.num_nodes())].id.clone();
        let moved = net.with_reference(&id);
        let a = solve_combined(&net).unwrap();
        let b = solve_combined(&moved).unwrap();
        prop_assert!(close(a.dispatch.cost, b.dispatch.cost, 1e-8));
        prop_assert!(close(a.emissions, b.emissions, 1e-7));
        for (x, y) in a.dispatch.lmp.iter().zip(&b.dispatch.lmp) {
            prop_assert!(close(*x, *y, 1e-7));
        }
    }

    #[test]
    fn combined_matches_lexicographic(seed in any::<u64>()) {
        let net = fixtures::random_feasible_network(&small(), seed);
        let r = solve_combined(&net).unwrap();
        prop_assert!(close(r.emissions, emissions_at(&net, &net.demands()).unwrap(), 1e-7));
    }

    #[test]
    fn dispatch_respects_limits(seed in any::<u64>()) {
        let net = fixtures::random_feasible_network(&small(), seed);
        let r = solve_combined(&net).unwrap().dispatch;
        for (g, p) in net.generators().iter().zip(&r.generation) {
            prop_assert!(*p >= g.p_min - 1e-7 && *p <= g.p_max + 1e-7);
        }
        for (l, f) in net.lines().iter().zip(&r.flow) {
            prop_assert!(f.abs() <= l.f_max * (1.0 + 1e-9) + 1e-7);
        }
        let supply: f64 = r.generation.iter().sum();
        prop_assert!(close(supply, net.total_demand(), 1e-9));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn storage_ledger_balances(seed in any::<u64>()) {
        let (net, h) = fixtures::random_storage_case(seed);
        let r = solve_storage_combined(&net, &h).unwrap();
        let ledger = storage_ledger(&net, &h, &r);
        prop_assert!(ledger.is_balanced(), "residual {}", ledger.footprint_residual);
        let base = solve_storage_dcopf(&net, &h).unwrap();
        prop_assert!(close(r.dispatch.cost, base.cost, 1e-8));
        for t in 0..h.periods() {
            for s in 0..net.num_storages() {
                let cap = net.storages()[s].e_max;
                let e = r.dispatch.soc[s][t + 1];
                prop_assert!(e >= -1e-7 && e <= cap + 1e-7);
            }
        }
    }
}
