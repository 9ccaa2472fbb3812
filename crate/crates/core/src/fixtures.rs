//! Small reference networks and seeded random instance generators used by
//! tests, the CLI's verification sweep and the browser demo.

use crate::dispatch::solve_dcopf;
use crate::multiperiod::{solve_storage_dcopf, Horizon};
use crate::network::{Generator, GeneratorKind, Line, Network, Node, Scenario, ScenarioPeriod, StorageUnit};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn node(id: &str, demand: f64) -> Node {
    Node { id: id.into(), demand }
}

fn line(id: &str, from: &str, to: &str, susceptance: f64, f_max: f64) -> Line {
    Line {
        id: id.into(),
        from: from.into(),
        to: to.into(),
        susceptance,
        f_max,
    }
}

fn gen(id: &str, at: &str, cost: f64, emission_rate: f64, p_max: f64, kind: GeneratorKind) -> Generator {
    Generator {
        id: id.into(),
        node: at.into(),
        cost,
        emission_rate,
        p_min: 0.0,
        p_max,
        kind: Some(kind),
    }
}

/// Cheap clean unit behind a 100 MW line, expensive emitting unit at the load.
pub fn two_bus_transmission() -> Network {
    Network::new(
        vec![node("bus1", 0.0), node("bus2", 250.0)],
        vec![line("L1", "bus1", "bus2", 10.0, 100.0)],
        vec![
            gen("G1", "bus1", 5.0, 0.0, 200.0, GeneratorKind::Wind),
            gen("G2", "bus2", 50.0, 1.0, 200.0, GeneratorKind::Gas),
        ],
        vec![],
        "bus1",
    )
    .expect("valid fixture")
}

/// Clean unit at the load limited by its own capacity; the line is slack.
pub fn two_bus_generation() -> Network {
    Network::new(
        vec![node("bus1", 250.0), node("bus2", 0.0)],
        vec![line("L1", "bus2", "bus1", 10.0, 100.0)],
        vec![
            gen("G1", "bus1", 5.0, 0.0, 200.0, GeneratorKind::Wind),
            gen("G2", "bus2", 50.0, 1.0, 200.0, GeneratorKind::Gas),
        ],
        vec![],
        "bus1",
    )
    .expect("valid fixture")
}

/// Single node, three 1 MW units in merit order with rates 0, 2 and 0.5.
///
/// Total emissions are 0 on [0, 1], rise with slope 2 on [1, 2] and with
/// slope 0.5 on [2, 3]: continuous, piecewise linear and not convex.
pub fn copper_plate(demand: f64) -> Network {
    Network::new(
        vec![node("n1", demand)],
        vec![],
        vec![
            gen("clean", "n1", 10.0, 0.0, 1.0, GeneratorKind::Wind),
            gen("dirty", "n1", 20.0, 2.0, 1.0, GeneratorKind::Coal),
            gen("medium", "n1", 30.0, 0.5, 1.0, GeneratorKind::Gas),
        ],
        vec![],
        "n1",
    )
    .expect("valid fixture")
}

/// Two periods, storage at the clean bus; the clean unit is unavailable in
/// the second period.
pub fn two_bus_storage() -> (Network, Horizon) {
    let net = Network::new(
        vec![node("bus1", 50.0), node("bus2", 150.0)],
        vec![line("L1", "bus1", "bus2", 10.0, 100.0)],
        vec![
            gen("G1", "bus1", 5.0, 0.0, 200.0, GeneratorKind::Solar),
            gen("G2", "bus2", 50.0, 1.0, 300.0, GeneratorKind::Gas),
        ],
        vec![StorageUnit {
            id: "S1".into(),
            node: "bus1".into(),
            e_max: 1.0e4,
            efficiency: 1.0,
            power_cap: None,
        }],
        "bus1",
    )
    .expect("valid fixture");
    let horizon = Horizon {
        demands: vec![vec![50.0, 150.0], vec![50.0, 150.0]],
        capacity_factors: vec![vec![1.0, 1.0], vec![0.0, 1.0]],
        initial_soc: vec![0.0],
    };
    (net, horizon)
}

/// `n` buses on a ring, one generator and one load per bus.
pub fn ring(n: usize) -> Network {
    assert!(n >= 3);
    let ids: Vec<String> = (0..n).map(|i| format!("r{i}")).collect();
    let nodes = ids
        .iter()
        .enumerate()
        .map(|(i, id)| node(id, 20.0 + 10.0 * i as f64))
        .collect();
    let lines = (0..n)
        .map(|i| line(&format!("ring{i}"), &ids[i], &ids[(i + 1) % n], 10.0 + i as f64, 80.0))
        .collect();
    let gens = ids
        .iter()
        .enumerate()
        .map(|(i, id)| {
            gen(
                &format!("g{i}"),
                id,
                10.0 + 7.0 * i as f64,
                100.0 * i as f64,
                150.0,
                GeneratorKind::Other,
            )
        })
        .collect();
    Network::new(nodes, lines, gens, vec![], ids[0].clone()).expect("valid fixture")
}

/// Three buses with two equal-cost units of different emission rates, so the
/// cost-optimal split is not unique.
pub fn duplicated_generators() -> Network {
    Network::new(
        vec![node("a", 30.0), node("b", 120.0), node("c", 0.0)],
        vec![line("ab", "a", "b", 10.0, 200.0), line("bc", "b", "c", 8.0, 200.0)],
        vec![
            gen("coal_a", "a", 20.0, 900.0, 100.0, GeneratorKind::Coal),
            gen("wind_b", "b", 2.0, 0.0, 50.0, GeneratorKind::Wind),
            gen("gas_c", "c", 20.0, 400.0, 100.0, GeneratorKind::Gas),
        ],
        vec![],
        "a",
    )
    .expect("valid fixture")
}

/// Same network with the generator list reversed.
pub fn reverse_generators(net: &Network) -> Network {
    net.rebuild(|_, _, g, _| g.reverse())
        .expect("reordering keeps validity")
}

/// Same network with nodes, lines and generators each shuffled.
pub fn permute(net: &Network, seed: u64) -> Network {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    net.rebuild(|n, l, g, s| {
        n.shuffle(&mut rng);
        l.shuffle(&mut rng);
        g.shuffle(&mut rng);
        s.shuffle(&mut rng);
    })
    .expect("reordering keeps validity")
}

/// Parameters of the random network generator.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomSpec {
    pub nodes: (usize, usize),
    pub generators: (usize, usize),
    /// Extra lines beyond the spanning tree, as a fraction of the bus count.
    pub extra_lines: f64,
    /// Probability that a generator is a copy of an earlier one.
    pub duplicate_prob: f64,
    /// Force at least one duplicated generator.
    pub force_duplicate: bool,
    /// Line limits are drawn from this range times half the total demand.
    pub line_limit: (f64, f64),
    /// Probability that a generator has a positive minimum output.
    pub p_min_prob: f64,
}

impl Default for RandomSpec {
    fn default() -> Self {
        Self {
            nodes: (3, 12),
            generators: (2, 20),
            extra_lines: 0.4,
            duplicate_prob: 0.2,
            force_duplicate: false,
            line_limit: (0.25, 1.2),
            p_min_prob: 0.1,
        }
    }
}

const KINDS: [GeneratorKind; 5] = [
    GeneratorKind::Coal,
    GeneratorKind::Gas,
    GeneratorKind::Wind,
    GeneratorKind::Solar,
    GeneratorKind::Nuclear,
];

fn random_unit(rng: &mut ChaCha8Rng, id: String, at: String) -> Generator {
    let kind = *KINDS.choose(rng).unwrap();
    // Integer costs make price ties, and hence dual degeneracy, common.
    let (cost, sigma): (f64, f64) = match kind {
        GeneratorKind::Coal => (rng.gen_range(18..=30) as f64, rng.gen_range(900..=1100) as f64),
        GeneratorKind::Gas => (rng.gen_range(25..=60) as f64, rng.gen_range(350..=550) as f64),
        GeneratorKind::Nuclear => (rng.gen_range(8..=12) as f64, 0.0),
        _ => (rng.gen_range(0..=5) as f64, 0.0),
    };
    Generator {
        id,
        node: at,
        cost,
        emission_rate: sigma,
        p_min: 0.0,
        p_max: rng.gen_range(20..=150) as f64,
        kind: Some(kind),
    }
}

/// A random connected network. May be infeasible; see
/// [`random_feasible_network`].
pub fn random_network(spec: &RandomSpec, seed: u64) -> Network {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(spec.nodes.0..=spec.nodes.1);
    let ids: Vec<String> = (0..n).map(|i| format!("n{i}")).collect();
    let nodes: Vec<Node> = ids
        .iter()
        .map(|id| {
            let demand = if rng.gen_bool(0.7) {
                (rng.gen_range(10.0..100.0_f64) * 10.0).round() / 10.0
            } else {
                0.0
            };
            node(id, demand)
        })
        .collect();
    let total: f64 = nodes.iter().map(|n| n.demand).sum::<f64>().max(10.0);

    let mut edges: Vec<(usize, usize)> = (1..n).map(|k| (rng.gen_range(0..k), k)).collect();
    let extra = (spec.extra_lines * n as f64).round() as usize;
    for _ in 0..extra {
        let a = rng.gen_range(0..n);
        let b = rng.gen_range(0..n);
        let (a, b) = (a.min(b), a.max(b));
        if a != b && !edges.iter().any(|&(x, y)| (x.min(y), x.max(y)) == (a, b)) {
            edges.push((a, b));
        }
    }
    let lines = edges
        .iter()
        .enumerate()
        .map(|(k, &(a, b))| {
            let (from, to) = if rng.gen_bool(0.5) { (a, b) } else { (b, a) };
            let limit = rng.gen_range(spec.line_limit.0..spec.line_limit.1) * total / 2.0;
            line(
                &format!("l{k}"),
                &ids[from],
                &ids[to],
                (rng.gen_range(5.0..25.0_f64) * 10.0).round() / 10.0,
                limit.round().max(1.0),
            )
        })
        .collect();

    let m = rng.gen_range(spec.generators.0.max(2)..=spec.generators.1.max(2));
    let mut gens: Vec<Generator> = Vec::with_capacity(m);
    for k in 0..m {
        let at = ids[rng.gen_range(0..n)].clone();
        let copy = k > 0 && (rng.gen_bool(spec.duplicate_prob) || (spec.force_duplicate && k == m - 1));
        let mut g = if copy {
            let src = gens[rng.gen_range(0..k)].clone();
            Generator { node: at, ..src }
        } else {
            random_unit(&mut rng, String::new(), at)
        };
        g.id = format!("g{k}");
        if rng.gen_bool(spec.p_min_prob) {
            g.p_min = (0.2 * g.p_max).round();
        }
        gens.push(g);
    }
    // Keep aggregate capacity above demand so most draws are feasible.
    let cap: f64 = gens.iter().map(|g| g.p_max).sum();
    if cap < 1.3 * total {
        let at = ids[rng.gen_range(0..n)].clone();
        gens.push(Generator {
            id: format!("g{m}"),
            node: at,
            cost: 80.0,
            emission_rate: 600.0,
            p_min: 0.0,
            p_max: (1.3 * total - cap).ceil(),
            kind: Some(GeneratorKind::Gas),
        });
    }
    let reference = ids[rng.gen_range(0..n)].clone();
    Network::new(nodes, lines, gens, vec![], reference).expect("generator emits valid networks")
}

/// First feasible draw from a deterministic sequence of sub-seeds.
pub fn random_feasible_network(spec: &RandomSpec, seed: u64) -> Network {
    for attempt in 0..1000u64 {
        let net = random_network(spec, seed.wrapping_mul(7919).wrapping_add(attempt << 32));
        if solve_dcopf(&net).is_ok() {
            return net;
        }
    }
    panic!("no feasible network found for seed {seed}");
}

/// A random uncongested network whose marginal capacity is split across two
/// or three exact copies of one unit, so their best responses are tied in
/// both price and emission rate.
pub fn tied_network(seed: u64) -> Network {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(3..=6);
    let ids: Vec<String> = (0..n).map(|i| format!("t{i}")).collect();
    let nodes: Vec<Node> = ids.iter().map(|id| node(id, rng.gen_range(10..=60) as f64)).collect();
    let total: f64 = nodes.iter().map(|n| n.demand).sum();
    let lines = (1..n)
        .map(|k| {
            let limit = if rng.gen_bool(0.3) { 0.4 * total } else { 3.0 * total };
            line(
                &format!("l{k}"),
                &ids[rng.gen_range(0..k)],
                &ids[k],
                rng.gen_range(5..=20) as f64,
                limit.round(),
            )
        })
        .collect();
    let mut gens = vec![gen(
        "clean",
        &ids[rng.gen_range(0..n)],
        0.0,
        0.0,
        (rng.gen_range(0.1..0.45) * total).round(),
        GeneratorKind::Wind,
    )];
    let copies = rng.gen_range(2..=3);
    let cost = rng.gen_range(20..=40) as f64;
    let sigma = rng.gen_range(300..=900) as f64;
    for k in 0..copies {
        gens.push(gen(
            &format!("twin{k}"),
            &ids[rng.gen_range(0..n)],
            cost,
            sigma,
            (0.6 * total).round(),
            GeneratorKind::Gas,
        ));
    }
    gens.push(gen(
        "peaker",
        &ids[rng.gen_range(0..n)],
        90.0,
        700.0,
        total,
        GeneratorKind::Gas,
    ));
    Network::new(nodes, lines, gens, vec![], ids[0].clone()).expect("valid fixture")
}

/// A random 3-bus, 4-period storage case with one or two storage units.
pub fn random_storage_case(seed: u64) -> (Network, Horizon) {
    for attempt in 0..1000u64 {
        let case = draw_storage_case(seed.wrapping_mul(104_729).wrapping_add(attempt << 32));
        if solve_storage_dcopf(&case.0, &case.1).is_ok() {
            return case;
        }
    }
    panic!("no feasible storage case found for seed {seed}");
}

fn draw_storage_case(seed: u64) -> (Network, Horizon) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ids = ["s0", "s1", "s2"];
    let nodes: Vec<Node> = ids.iter().map(|id| node(id, rng.gen_range(10..=80) as f64)).collect();
    let mut lines = vec![
        line(
            "l0",
            "s0",
            "s1",
            rng.gen_range(5..=20) as f64,
            rng.gen_range(30..=120) as f64,
        ),
        line(
            "l1",
            "s1",
            "s2",
            rng.gen_range(5..=20) as f64,
            rng.gen_range(30..=120) as f64,
        ),
    ];
    if rng.gen_bool(0.5) {
        lines.push(line(
            "l2",
            "s2",
            "s0",
            rng.gen_range(5..=20) as f64,
            rng.gen_range(30..=120) as f64,
        ));
    }
    let m = rng.gen_range(2..=4);
    let mut gens: Vec<Generator> = (0..m)
        .map(|k| {
            let at = ids[rng.gen_range(0..3)].to_string();
            random_unit(&mut rng, format!("g{k}"), at)
        })
        .collect();
    gens.push(Generator {
        id: "backstop".into(),
        node: ids[rng.gen_range(0..3)].into(),
        cost: 90.0,
        emission_rate: 700.0,
        p_min: 0.0,
        p_max: 300.0,
        kind: Some(GeneratorKind::Gas),
    });
    let etas = [0.81, 0.9, 1.0];
    let storages = (0..rng.gen_range(1..=2))
        .map(|k| StorageUnit {
            id: format!("st{k}"),
            node: ids[rng.gen_range(0..3)].into(),
            e_max: rng.gen_range(20..=100) as f64,
            efficiency: *etas.choose(&mut rng).unwrap(),
            power_cap: None,
        })
        .collect::<Vec<_>>();
    let net = Network::new(nodes, lines, gens, storages, "s0").expect("valid storage case");
    let periods = 4;
    let base = net.demands();
    let demands = (0..periods)
        .map(|_| {
            let scale = rng.gen_range(0.5..1.4);
            base.iter().map(|d| (d * scale * 10.0).round() / 10.0).collect()
        })
        .collect();
    let capacity_factors = (0..periods)
        .map(|_| {
            net.generators()
                .iter()
                .map(|g| match g.kind {
                    Some(GeneratorKind::Solar | GeneratorKind::Wind) => {
                        (rng.gen_range(0.0..1.0_f64) * 100.0).round() / 100.0
                    }
                    _ => 1.0,
                })
                .collect()
        })
        .collect();
    let initial_soc = vec![0.0; net.num_storages()];
    (
        net,
        Horizon {
            demands,
            capacity_factors,
            initial_soc,
        },
    )
}

/// Solar capacity factor for an hour of day: a half-sine from 06:00 to 18:00.
pub fn solar_profile(hour: usize) -> f64 {
    let h = (hour % 24) as f64;
    if (6.0..=18.0).contains(&h) {
        let v = (std::f64::consts::PI * (h - 6.0) / 12.0).sin();
        (v * 1e6).round() / 1e6
    } else {
        0.0
    }
}

/// A two-bus system whose load bus hosts a large solar plant and a gas unit,
/// fed from a remote coal unit, plus 48 hourly periods of solar output and a
/// mild evening load peak.
pub fn solar_diurnal() -> (Network, Scenario) {
    let net = Network::new(
        vec![node("load", 200.0), node("remote", 0.0)],
        vec![line("tie", "remote", "load", 10.0, 120.0)],
        vec![
            gen("solar", "load", 0.0, 0.0, 400.0, GeneratorKind::Solar),
            gen("gas", "load", 40.0, 450.0, 400.0, GeneratorKind::Gas),
            gen("coal", "remote", 20.0, 1000.0, 300.0, GeneratorKind::Coal),
        ],
        vec![],
        "remote",
    )
    .expect("valid fixture");
    let periods = (0..48)
        .map(|t| {
            let hour = t % 24;
            let mut p = ScenarioPeriod {
                label: t as i64,
                ..Default::default()
            };
            let evening = if (17..=21).contains(&hour) { 1.1 } else { 1.0 };
            p.load_scale.insert("load".into(), evening);
            p.capacity_factor.insert("solar".into(), solar_profile(hour));
            p
        })
        .collect();
    (net, Scenario { periods })
}
