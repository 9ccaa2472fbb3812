//! Acceptance suite. Each test prints one PASS/FAIL line and then asserts.

use lme_core::accounting::build_ledger;
use lme_core::combined::{emissions_at, lme, sci, solve_combined};
use lme_core::fixtures::{self, RandomSpec};
use lme_core::lp::SolverOptions;
use lme_core::multiperiod::{check_storage_equilibrium, solve_storage_combined, storage_ledger, Horizon};
use lme_core::network::Network;
use lme_core::replay::{ledger_csv, lme_csv, solve_scenario_period, summarize};
use lme_core::verify::{check_generator_equilibrium, fd_lme, ptdf_lme, sweep_emissions};
use std::time::{Duration, Instant};

fn report(id: u32, title: &str, pass: bool, detail: String) {
    println!(
        "criterion {id:>2} [{}] {title}: {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / (1.0 + b.abs())
}

/// 200 random connected networks; every fourth draw forces a duplicated
/// generator.
fn random_suite() -> Vec<Network> {
    (0..200u64)
        .map(|seed| {
            let spec = RandomSpec {
                force_duplicate: seed % 4 == 0,
                ..Default::default()
            };
            fixtures::random_feasible_network(&spec, seed)
        })
        .collect()
}

#[test]
fn criterion_01_transmission_constrained_example() {
    let start = Instant::now();
    let net = fixtures::two_bus_transmission();
    let r = solve_combined(&net).unwrap();
    let l = lme(&r).0;
    let ledger = build_ledger(&net, &r);
    let elapsed = start.elapsed();
    let lme_ok = l[0].abs() <= 1e-6 && (l[1] - 1.0).abs() <= 1e-6;
    let ledger_ok = ledger.load[0][0].abs() <= 1e-6
        && (ledger.load[0][1] - 250.0).abs() <= 1e-6
        && (ledger.line[0][0] + 100.0).abs() <= 1e-6
        && ledger.generator[0].iter().all(|v| v.abs() <= 1e-6);
    let residual_ok = ledger.footprint_residual <= 1e-9;
    let fast = elapsed < Duration::from_millis(100);
    let pass = lme_ok && ledger_ok && residual_ok && fast;
    report(
        1,
        "transmission-constrained two-bus",
        pass,
        format!(
            "LME={l:?} load={:?} line={:?} gens={:?} residual={:e} time={elapsed:?}",
            ledger.load[0], ledger.line[0], ledger.generator[0], ledger.footprint_residual
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_02_capacity_constrained_example() {
    let start = Instant::now();
    let net = fixtures::two_bus_generation();
    let r = solve_combined(&net).unwrap();
    let l = lme(&r).0;
    let ledger = build_ledger(&net, &r);
    let elapsed = start.elapsed();
    let lme_ok = (l[0] - 1.0).abs() <= 1e-6 && (l[1] - 1.0).abs() <= 1e-6;
    let load_node = net.node_index("bus1").unwrap();
    let other_load = 1 - load_node;
    let ledger_ok = (ledger.load[0][load_node] - 250.0).abs() <= 1e-6
        && ledger.load[0][other_load].abs() <= 1e-6
        && (ledger.generator[0][0] + 200.0).abs() <= 1e-6
        && ledger.generator[0][1].abs() <= 1e-6
        && ledger.line[0][0].abs() <= 1e-6;
    let fast = elapsed < Duration::from_millis(100);
    let pass = lme_ok && ledger_ok && fast;
    report(
        2,
        "capacity-constrained two-bus",
        pass,
        format!(
            "LME={l:?} load={:?} gens={:?} line={:?} time={elapsed:?}",
            ledger.load[0], ledger.generator[0], ledger.line[0]
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_03_copper_plate_sweep() {
    let net = fixtures::copper_plate(0.0);
    let curve = sweep_emissions(&net, 0, (0.0, 3.0), 31).unwrap();
    let slopes: Vec<f64> = curve.segments.iter().map(|s| s.slope).collect();
    let expected_slopes = [0.0, 2.0, 0.5];
    let expected_breaks = [1.0, 2.0];
    let pass = slopes.len() == 3
        && slopes.iter().zip(expected_slopes).all(|(a, b)| (a - b).abs() <= 1e-6)
        && curve.breakpoints.len() == 2
        && curve
            .breakpoints
            .iter()
            .zip(expected_breaks)
            .all(|(a, b)| (a - b).abs() <= 1e-6)
        && curve.continuous;
    report(
        3,
        "copper-plate emissions sweep",
        pass,
        format!(
            "slopes={slopes:?} breakpoints={:?} continuous={} max_jump={:e}",
            curve.breakpoints, curve.continuous, curve.max_residual_jump
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_04_footprint_identity_on_random_networks() {
    let nets = random_suite();
    let start = Instant::now();
    let mut worst = 0.0_f64;
    let mut failures = Vec::new();
    let mut duplicated = 0;
    for (seed, net) in nets.iter().enumerate() {
        let g = net.generators();
        if (0..g.len()).any(|a| (0..a).any(|b| g[a].cost == g[b].cost && g[a].emission_rate == g[b].emission_rate)) {
            duplicated += 1;
        }
        let r = solve_combined(net).unwrap();
        let ledger = build_ledger(net, &r);
        let residual = ledger.footprint_residual / (1.0 + ledger.total_emissions.abs());
        worst = worst.max(residual);
        if residual > 1e-6 {
            failures.push(seed);
        }
    }
    let elapsed = start.elapsed();
    let pass = failures.is_empty() && elapsed < Duration::from_secs(60) && duplicated >= 50;
    report(
        4,
        "footprint identity on 200 random networks",
        pass,
        format!(
            "worst relative residual={worst:e} failures={failures:?} duplicated-generator instances={duplicated} time={elapsed:?}"
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_05_combined_matches_lexicographic() {
    let mut worst = 0.0_f64;
    let mut failures = Vec::new();
    for (seed, net) in random_suite().iter().enumerate() {
        let combined = solve_combined(net).unwrap().emissions;
        let lex = emissions_at(net, &net.demands()).unwrap();
        let d = rel(combined, lex);
        worst = worst.max(d);
        if d > 1e-6 {
            failures.push(seed);
        }
    }
    let pass = failures.is_empty();
    report(
        5,
        "combined vs lexicographic emissions",
        pass,
        format!("worst relative gap={worst:e} failures={failures:?}"),
    );
    assert!(pass);
}

#[test]
fn criterion_06_lme_matches_finite_differences() {
    let mut smooth = 0;
    let mut total = 0;
    let mut worst = 0.0_f64;
    let mut failures = Vec::new();
    for (seed, net) in random_suite().iter().enumerate() {
        let l = lme(&solve_combined(net).unwrap()).0;
        for (i, &li) in l.iter().enumerate() {
            total += 1;
            let fd = fd_lme(net, i, None).unwrap();
            if !fd.smooth {
                continue;
            }
            smooth += 1;
            let slope = fd.central.unwrap();
            let err = (li - slope).abs() / (1.0 + slope.abs());
            worst = worst.max(err);
            if err > 1e-5 {
                failures.push((seed, i, li, slope));
            }
        }
    }
    let majority = 2 * smooth > total;
    let pass = failures.is_empty() && majority;
    report(
        6,
        "LME vs finite-difference slope at smooth nodes",
        pass,
        format!(
            "smooth nodes={smooth}/{total} worst relative error={worst:e} failures={:?}",
            &failures[..failures.len().min(5)]
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_07_ptdf_equivalence() {
    let mut accepted = 0;
    let mut worst = 0.0_f64;
    let mut failures = Vec::new();
    let nets = random_suite();
    for (seed, net) in nets.iter().enumerate() {
        let r = solve_combined(net).unwrap();
        let l = lme(&r).0;
        for (i, &li) in l.iter().enumerate() {
            if let Ok(v) = ptdf_lme(net, &r.dispatch, i) {
                accepted += 1;
                let err = rel(v, li);
                worst = worst.max(err);
                if err > 1e-6 {
                    failures.push((seed, i, v, li));
                }
            }
        }
    }
    let pass = failures.is_empty() && accepted > 0;
    report(
        7,
        "PTDF marginal emissions on accepted instances",
        pass,
        format!(
            "accepted node instances={accepted} worst relative error={worst:e} failures={:?}",
            &failures[..failures.len().min(5)]
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_08_generator_equilibrium() {
    let mut violations = Vec::new();
    for (seed, net) in random_suite().iter().enumerate() {
        let r = solve_combined(net).unwrap();
        let rep = check_generator_equilibrium(net, &r, 1e-6).unwrap();
        if !rep.is_clean() {
            violations.push((seed, rep.violations));
        }
    }
    let mut tied_fixtures = 0;
    let mut selections = 0;
    let mut tied_violations = Vec::new();
    for seed in 0..40u64 {
        let net = fixtures::tied_network(seed);
        let r = solve_combined(&net).unwrap();
        let rep = check_generator_equilibrium(&net, &r, 1e-6).unwrap();
        if rep.selections > 0 {
            tied_fixtures += 1;
            selections += rep.selections;
        }
        if !rep.is_clean() {
            tied_violations.push((seed, rep.violations));
        }
    }
    let pass = violations.is_empty() && tied_violations.is_empty() && tied_fixtures >= 20;
    report(
        8,
        "generator best responses",
        pass,
        format!(
            "random violations={} tied fixtures with enumerated selections={tied_fixtures} selections={selections} tied violations={}",
            violations.len(),
            tied_violations.len()
        ),
    );
    if !pass {
        println!("  random: {:?}", &violations[..violations.len().min(3)]);
        println!("  tied: {:?}", &tied_violations[..tied_violations.len().min(3)]);
    }
    assert!(pass);
}

#[test]
fn criterion_09_storage_suite() {
    let (net, horizon) = fixtures::two_bus_storage();
    let r = solve_storage_combined(&net, &horizon).unwrap();
    let all_ones = r.lme.iter().flatten().all(|v| (v - 1.0).abs() <= 1e-6);
    let flow_zero = r.dispatch.periods[1].flow[0].abs() <= 1e-6;

    let base_net = net.without_storage();
    let base_h = Horizon {
        initial_soc: vec![],
        ..horizon.clone()
    };
    let base = solve_storage_combined(&base_net, &base_h).unwrap();
    let baseline = base.lme[0][0].abs() <= 1e-6 && (base.lme[0][1] - 1.0).abs() <= 1e-6;

    let mut worst = 0.0_f64;
    let mut unclean = Vec::new();
    let mut unbalanced = Vec::new();
    for seed in 0..50u64 {
        let (net, h) = fixtures::random_storage_case(seed);
        let r = solve_storage_combined(&net, &h).unwrap();
        let ledger = storage_ledger(&net, &h, &r);
        worst = worst.max(ledger.footprint_residual / (1.0 + ledger.total_emissions.abs()));
        for t in 0..ledger.periods() {
            worst = worst.max(ledger.period_residual(t) / (1.0 + ledger.period_emissions[t].abs()));
        }
        if !ledger.is_balanced() {
            unbalanced.push(seed);
        }
        let rep = check_storage_equilibrium(&net, &h, &r, 1e-6).unwrap();
        if !rep.is_clean() {
            unclean.push((seed, rep.violations));
        }
    }
    let golden_rep = check_storage_equilibrium(&net, &horizon, &r, 1e-6).unwrap();
    let pass =
        all_ones && flow_zero && baseline && unbalanced.is_empty() && unclean.is_empty() && golden_rep.is_clean();
    report(
        9,
        "storage variant",
        pass,
        format!(
            "LME={:?} period-2 flow={:e} baseline period-1 LME={:?} worst residual={worst:e} unbalanced={unbalanced:?} equilibrium violations={}",
            r.lme,
            r.dispatch.periods[1].flow[0],
            base.lme[0],
            unclean.len()
        ),
    );
    if !unclean.is_empty() {
        println!("  {:?}", &unclean[..unclean.len().min(3)]);
    }
    assert!(pass);
}

#[test]
fn criterion_10_solar_diurnal_scenario() {
    let (net, scenario) = fixtures::solar_diurnal();
    let run = || {
        let outcomes: Vec<_> = (0..scenario.periods.len())
            .map(|k| solve_scenario_period(&net, &scenario, k, &SolverOptions::default()))
            .collect();
        let summary = summarize(&net, &outcomes, 24).unwrap();
        let bytes = [
            lme_csv(&net, &outcomes),
            ledger_csv(&net, &outcomes),
            summary.hourly_csv(&net),
            summary.monthly_csv(&net),
            summary.accounts.to_csv(),
        ]
        .concat();
        (summary, bytes)
    };
    let (summary, first) = run();
    let (_, second) = run();
    let load = net.node_index("load").unwrap();
    let bucket_mean =
        |hours: &[usize]| hours.iter().map(|&h| summary.hourly_lme[h][load].unwrap()).sum::<f64>() / hours.len() as f64;
    let midday = bucket_mean(&[11, 12, 13]);
    let night = bucket_mean(&[0, 1, 2, 3, 4]);
    let pass = summary.failures.is_empty() && midday < night && first == second;
    report(
        10,
        "solar-diurnal scenario",
        pass,
        format!(
            "midday mean LME={midday} night mean LME={night} failures={} identical output={}",
            summary.failures.len(),
            first == second
        ),
    );
    assert!(pass);
}

#[test]
fn sci_vanishes_on_uncongested_random_networks() {
    for seed in 0..40u64 {
        let net = fixtures::random_feasible_network(
            &RandomSpec {
                line_limit: (50.0, 60.0),
                ..Default::default()
            },
            seed,
        );
        let r = solve_combined(&net).unwrap();
        assert!(sci(&r).0.iter().all(|s| s.abs() < 1e-9), "seed {seed}");
        let l = lme(&r).0;
        assert!(
            l.iter().all(|v| (v - l[0]).abs() <= 1e-7 * (1.0 + l[0].abs())),
            "seed {seed}"
        );
    }
}
