use crate::inputs;
use crate::{Artifact, CliError, Outcome, RunConfig, VerifyArgs};
use lme_core::accounting::{aggregate_ledgers, build_ledger, fmt_num, CarbonLedger};
use lme_core::combined::{lme as nodal_lme, sci as line_sci, solve_combined};
use lme_core::dispatch::solve_dcopf;
use lme_core::fixtures::{random_feasible_network, RandomSpec};
use lme_core::lp::SolverOptions;
use lme_core::multiperiod::{solve_storage_combined, storage_ledger, Horizon};
use lme_core::network::{Network, NetworkError, Scenario};
use lme_core::replay::{self, PeriodOutcome};
use lme_core::verify::{verify_network, VerificationReport, VerifyOptions};
use rayon::prelude::*;
use serde_json::{json, Map, Value};
use std::fmt::Write as _;

fn to_json<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("result serializes")
}

fn keyed<'a>(ids: impl Iterator<Item = &'a str>, values: &[f64]) -> Value {
    Value::Object(
        ids.zip(values)
            .map(|(id, v)| (id.to_string(), json!(v)))
            .collect::<Map<_, _>>(),
    )
}

fn node_ids(net: &Network) -> impl Iterator<Item = &str> {
    net.nodes().iter().map(|n| n.id.as_str())
}

fn line_ids(net: &Network) -> impl Iterator<Item = &str> {
    net.lines().iter().map(|l| l.id.as_str())
}

fn pool(workers: usize) -> Result<rayon::ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Input(format!("worker pool: {e}")))
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn validate(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let header = "status,entity_kind,entity_id,message\n";
    match inputs::network(cfg) {
        Ok(net) => {
            let summary = format!(
                "{} nodes, {} lines, {} generators, {} storage units",
                net.num_nodes(),
                net.num_lines(),
                net.num_generators(),
                net.num_storages()
            );
            Ok(Outcome {
                artifacts: vec![Artifact::primary(
                    "validation",
                    format!(
                        "{header}ok,network,{},{}\n",
                        csv_field(net.reference_id()),
                        csv_field(&summary)
                    ),
                    json!({
                        "valid": true,
                        "nodes": net.num_nodes(),
                        "lines": net.num_lines(),
                        "generators": net.num_generators(),
                        "storages": net.num_storages(),
                        "reference_node": net.reference_id(),
                    }),
                )],
                notes: vec![format!("valid: {summary}")],
                exit_code: 0,
            })
        }
        Err(CliError::Network(e)) => {
            let (kind, id, message) = match &e {
                NetworkError::Schema(m) => ("schema", String::new(), m.clone()),
                NetworkError::Semantic { kind, id, message } => (*kind, id.clone(), message.clone()),
            };
            Ok(Outcome {
                artifacts: vec![Artifact::primary(
                    "validation",
                    format!("{header}error,{kind},{},{}\n", csv_field(&id), csv_field(&message)),
                    json!({"valid": false, "entity_kind": kind, "entity_id": id, "message": message}),
                )],
                notes: vec![format!("invalid: {e}")],
                exit_code: 2,
            })
        }
        Err(e) => Err(e),
    }
}

pub fn dispatch(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let net = inputs::network_with_demand(cfg)?;
    let r = solve_dcopf(&net)?;
    let mut csv = String::from("entity_kind,entity_id,node_id,dispatch_mw,lmp\n");
    let mut gens = Vec::new();
    for (g, unit) in net.generators().iter().enumerate() {
        let node = net.generator_node(g);
        let (p, price) = (r.generation[g], r.lmp[node]);
        let _ = writeln!(
            csv,
            "generator,{},{},{},{}",
            unit.id,
            unit.node,
            fmt_num(p),
            fmt_num(price)
        );
        gens.push(json!({"id": unit.id, "node": unit.node, "dispatch_mw": p, "lmp": price}));
    }
    let mut lines = Vec::new();
    for (l, line) in net.lines().iter().enumerate() {
        let _ = writeln!(csv, "line,{},,{},", line.id, fmt_num(r.flow[l]));
        lines.push(json!({"id": line.id, "flow_mw": r.flow[l]}));
    }
    let mut nodes = Vec::new();
    for (i, node) in net.nodes().iter().enumerate() {
        let _ = writeln!(
            csv,
            "node,{},{},{},{}",
            node.id,
            node.id,
            fmt_num(node.demand),
            fmt_num(r.lmp[i])
        );
        nodes.push(json!({"id": node.id, "demand_mw": node.demand, "lmp": r.lmp[i]}));
    }
    let json = json!({"cost": r.cost, "generators": gens, "lines": lines, "nodes": nodes});
    Ok(Outcome {
        artifacts: vec![Artifact::primary("dispatch", csv, json)],
        notes: vec![format!("dispatch cost {}", fmt_num(r.cost))],
        exit_code: 0,
    })
}

fn lme_artifacts(net: &Network, lme: &[f64], lmp: &[f64], sci: &[f64], flow: &[f64]) -> Vec<Artifact> {
    let mut lme_csv = String::from("node_id,lme_kgco2_per_mwh,lmp\n");
    for (i, node) in net.nodes().iter().enumerate() {
        let _ = writeln!(lme_csv, "{},{},{}", node.id, fmt_num(lme[i]), fmt_num(lmp[i]));
    }
    let mut sci_csv = String::from("line_id,sci_kgco2_per_mwh,flow_mw\n");
    for (l, line) in net.lines().iter().enumerate() {
        let _ = writeln!(sci_csv, "{},{},{}", line.id, fmt_num(sci[l]), fmt_num(flow[l]));
    }
    vec![
        Artifact::primary(
            "lme",
            lme_csv,
            json!({"lme": keyed(node_ids(net), lme), "lmp": keyed(node_ids(net), lmp)}),
        ),
        Artifact::primary(
            "sci",
            sci_csv,
            json!({"sci": keyed(line_ids(net), sci), "flow": keyed(line_ids(net), flow)}),
        ),
    ]
}

pub fn lme(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let net = inputs::network_with_demand(cfg)?;
    let r = solve_combined(&net)?;
    let lme = nodal_lme(&r).0;
    let sci = line_sci(&r).0;
    Ok(Outcome {
        artifacts: lme_artifacts(&net, &lme, &r.dispatch.lmp, &sci, &r.dispatch.flow),
        notes: vec![format!("system emissions {}", fmt_num(r.emissions))],
        exit_code: 0,
    })
}

/// Footprint line shared by `accounts` and `storage`; exit code 1 when the
/// identity fails at `tol`.
fn footprint(total: f64, accounts: f64, tol: f64) -> (Artifact, String, u8) {
    let residual = (accounts - total).abs();
    let bound = tol * (1.0 + total.abs());
    let balanced = residual <= bound;
    let csv = format!(
        "total_emissions_kgco2,sum_of_accounts_kgco2,footprint_residual,tolerance,balanced\n{},{},{},{},{}\n",
        fmt_num(total),
        fmt_num(accounts),
        fmt_num(residual),
        fmt_num(bound),
        balanced
    );
    let json = json!({
        "total_emissions_kgco2": total,
        "sum_of_accounts_kgco2": accounts,
        "footprint_residual": residual,
        "tolerance": bound,
        "balanced": balanced,
    });
    let note = format!(
        "footprint residual {} (tolerance {}){}",
        fmt_num(residual),
        fmt_num(bound),
        if balanced { "" } else { ": IDENTITY VIOLATED" }
    );
    (
        Artifact::secondary("footprint", csv, json),
        note,
        if balanced { 0 } else { 1 },
    )
}

pub fn accounts(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let net = inputs::network_with_demand(cfg)?;
    let r = solve_combined(&net)?;
    let ledger = build_ledger(&net, &r);
    let (fp, note, exit_code) = footprint(ledger.total_emissions, ledger.sum_accounts(), cfg.tol);
    Ok(Outcome {
        artifacts: vec![
            Artifact::primary("ledger", ledger.to_csv(&net, &[0]), to_json(&ledger)),
            fp,
        ],
        notes: vec![note],
        exit_code,
    })
}

fn period_json(outcomes: &[PeriodOutcome], pick: impl Fn(&replay::PeriodReport) -> Value) -> Value {
    Value::Array(
        outcomes
            .iter()
            .filter_map(|o| {
                o.report
                    .as_ref()
                    .ok()
                    .map(|r| json!({"period": o.label, "values": pick(r)}))
            })
            .collect(),
    )
}

pub fn scenario(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let net = inputs::network(cfg)?;
    let scenario = Scenario::from_csv(&inputs::demand_text(cfg, "scenario csv")?)?;
    scenario.validate(&net)?;
    let opts = SolverOptions::default();
    let outcomes: Vec<PeriodOutcome> = pool(cfg.workers)?.install(|| {
        (0..scenario.periods.len())
            .into_par_iter()
            .map(|k| replay::solve_scenario_period(&net, &scenario, k, &opts))
            .collect()
    });
    let summary = replay::summarize(&net, &outcomes, cfg.periods_per_day as usize)?;
    let mut notes = vec![format!("solved {}/{} periods", summary.solved, summary.periods)];
    for (label, msg) in &summary.failures {
        notes.push(format!("period {label} failed: {msg}"));
    }
    let buckets = |rows: &[Vec<Option<f64>>], first: usize| {
        Value::Array(
            rows.iter()
                .enumerate()
                .map(|(b, row)| {
                    let vals: Map<String, Value> = node_ids(&net)
                        .zip(row)
                        .map(|(id, v)| (id.to_string(), json!(v)))
                        .collect();
                    json!({"bucket": b + first, "mean_lme": vals})
                })
                .collect(),
        )
    };
    let mean: Map<String, Value> = node_ids(&net)
        .zip(&summary.mean_lme)
        .map(|(id, v)| (id.to_string(), json!(v)))
        .collect();
    let failures: Vec<Value> = summary
        .failures
        .iter()
        .map(|(p, m)| json!({"period": p, "message": m}))
        .collect();
    let artifacts = vec![
        Artifact::secondary(
            "lme",
            replay::lme_csv(&net, &outcomes),
            period_json(
                &outcomes,
                |r| json!({"lme": keyed(node_ids(&net), &r.lme), "lmp": keyed(node_ids(&net), &r.lmp)}),
            ),
        ),
        Artifact::secondary(
            "sci",
            replay::sci_csv(&net, &outcomes),
            period_json(
                &outcomes,
                |r| json!({"sci": keyed(line_ids(&net), &r.sci), "flow": keyed(line_ids(&net), &r.flow)}),
            ),
        ),
        Artifact::secondary(
            "ledger",
            replay::ledger_csv(&net, &outcomes),
            period_json(&outcomes, |r| to_json(&r.ledger)),
        ),
        Artifact::primary("mean_lme", summary.mean_csv(&net), Value::Object(mean)),
        Artifact::secondary("hourly_lme", summary.hourly_csv(&net), buckets(&summary.hourly_lme, 0)),
        Artifact::secondary(
            "monthly_lme",
            summary.monthly_csv(&net),
            buckets(&summary.monthly_lme, 1),
        ),
        Artifact::primary("accounts", summary.accounts.to_csv(), to_json(&summary.accounts)),
        Artifact::primary("failures", summary.failures_csv(), Value::Array(failures)),
    ];
    Ok(Outcome {
        artifacts,
        notes,
        exit_code: 0,
    })
}

pub fn storage(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let net = inputs::network(cfg)?;
    let demand = inputs::demand_text(cfg, "horizon csv")?;
    let caps = cfg.capacity_factors.as_deref().map(inputs::read).transpose()?;
    let (horizon, labels) = Horizon::from_csv(&net, &demand, caps.as_deref())?;

    let mut soc = horizon.initial_soc.clone();
    let mut ledgers: Vec<CarbonLedger> = Vec::new();
    let mut lme_csv = String::from("period,node_id,lme_kgco2_per_mwh,lmp\n");
    let mut sci_csv = String::from("period,line_id,sci_kgco2_per_mwh,flow_mw\n");
    let mut gen_csv = String::from("period,generator_id,dispatch_mw\n");
    let mut sto_csv = String::from("period,storage_id,charge_mw,discharge_mw,soc_end_mwh\n");
    let mut ledger_csv = String::from("entity_kind,entity_id,period,account_kgco2\n");
    let mut periods_json = Vec::new();
    let (mut sci_json, mut gen_json, mut sto_json) = (Vec::new(), Vec::new(), Vec::new());
    for (start, window) in horizon.windows(cfg.window as usize) {
        let window = Horizon {
            initial_soc: soc.clone(),
            ..window
        };
        let r = solve_storage_combined(&net, &window)?;
        let ledger = storage_ledger(&net, &window, &r);
        let window_labels = &labels[start..start + window.periods()];
        for (t, &label) in window_labels.iter().enumerate() {
            let p = &r.dispatch.periods[t];
            for (i, node) in net.nodes().iter().enumerate() {
                let _ = writeln!(
                    lme_csv,
                    "{label},{},{},{}",
                    node.id,
                    fmt_num(r.lme[t][i]),
                    fmt_num(p.lmp[i])
                );
            }
            for (l, line) in net.lines().iter().enumerate() {
                let _ = writeln!(
                    sci_csv,
                    "{label},{},{},{}",
                    line.id,
                    fmt_num(r.sci[t][l]),
                    fmt_num(p.flow[l])
                );
            }
            for (g, unit) in net.generators().iter().enumerate() {
                let _ = writeln!(gen_csv, "{label},{},{}", unit.id, fmt_num(p.generation[g]));
            }
            let d = &r.dispatch;
            for (s, unit) in net.storages().iter().enumerate() {
                let _ = writeln!(
                    sto_csv,
                    "{label},{},{},{},{}",
                    unit.id,
                    fmt_num(d.charge[s][t]),
                    fmt_num(d.discharge[s][t]),
                    fmt_num(d.soc[s][t + 1])
                );
            }
            let per_unit = |v: &Vec<Vec<f64>>| v.iter().map(|u| u[t]).collect::<Vec<_>>();
            let gen_ids = net.generators().iter().map(|g| g.id.as_str());
            let sto_ids = || net.storages().iter().map(|s| s.id.as_str());
            periods_json.push(json!({
                "period": label,
                "lme": keyed(node_ids(&net), &r.lme[t]),
                "lmp": keyed(node_ids(&net), &p.lmp),
            }));
            sci_json.push(json!({
                "period": label,
                "sci": keyed(line_ids(&net), &r.sci[t]),
                "flow": keyed(line_ids(&net), &p.flow),
            }));
            gen_json.push(json!({"period": label, "dispatch_mw": keyed(gen_ids, &p.generation)}));
            let soc_end: Vec<f64> = d.soc.iter().map(|u| u[t + 1]).collect();
            sto_json.push(json!({
                "period": label,
                "charge_mw": keyed(sto_ids(), &per_unit(&d.charge)),
                "discharge_mw": keyed(sto_ids(), &per_unit(&d.discharge)),
                "soc_end_mwh": keyed(sto_ids(), &soc_end),
            }));
        }
        let body = ledger.to_csv(&net, window_labels);
        ledger_csv.push_str(body.split_once('\n').map_or("", |(_, rows)| rows));
        soc = r
            .dispatch
            .soc
            .iter()
            .map(|u| *u.last().expect("soc has T+1 entries"))
            .collect();
        ledgers.push(ledger);
    }
    let total: f64 = ledgers.iter().map(|l| l.total_emissions).sum();
    let accounts: f64 = ledgers.iter().map(|l| l.sum_accounts()).sum();
    let (fp, note, exit_code) = footprint(total, accounts, cfg.tol);
    let summary = aggregate_ledgers(&net, &ledgers)?;
    let windows = ledgers.len();
    Ok(Outcome {
        artifacts: vec![
            Artifact::primary("lme", lme_csv, Value::Array(periods_json)),
            Artifact::secondary("sci", sci_csv, Value::Array(sci_json)),
            Artifact::secondary("generation", gen_csv, Value::Array(gen_json)),
            Artifact::secondary("storage", sto_csv, Value::Array(sto_json)),
            Artifact::secondary("ledger", ledger_csv, to_json(&ledgers)),
            Artifact::secondary("accounts", summary.to_csv(), to_json(&summary)),
            fp,
        ],
        notes: vec![format!("{} periods in {windows} windows", horizon.periods()), note],
        exit_code,
    })
}

pub fn verify(cfg: &RunConfig, args: &VerifyArgs) -> Result<Outcome, CliError> {
    let mut nets: Vec<(String, Network)> = Vec::new();
    if cfg.network.is_some() {
        let net = inputs::network_with_demand(cfg)?;
        let name = cfg
            .network
            .as_ref()
            .map(|p| p.display().to_string())
            .unwrap_or_default();
        nets.push((name, net));
    }
    for seed in args.seed..args.seed + args.random {
        nets.push((
            format!("random:{seed}"),
            random_feasible_network(&RandomSpec::default(), seed),
        ));
    }
    if nets.is_empty() {
        return Err(CliError::Input("verify needs --network or --random N".into()));
    }
    let opts = VerifyOptions {
        tol: cfg.tol,
        finite_differences: !args.no_finite_differences,
        dual_offset: args.inject_dual_offset,
    };
    let reports: Vec<Result<VerificationReport, lme_core::Error>> =
        pool(cfg.workers)?.install(|| nets.par_iter().map(|(_, net)| verify_network(net, &opts)).collect());

    let mut csv = String::from("network,check,passed,residual,tolerance,detail\n");
    let mut json = Vec::new();
    let mut notes = Vec::new();
    let mut failed = 0;
    for ((name, _), report) in nets.iter().zip(reports) {
        let report = report?;
        for c in &report.checks {
            let _ = writeln!(
                csv,
                "{},{},{},{},{},{}",
                csv_field(name),
                c.name,
                c.passed,
                fmt_num(c.residual),
                fmt_num(c.tolerance),
                csv_field(&c.detail)
            );
            if !c.passed {
                notes.push(format!(
                    "{name}: {} FAILED, residual {} > tolerance {}{}",
                    c.name,
                    fmt_num(c.residual),
                    fmt_num(c.tolerance),
                    if c.detail.is_empty() {
                        String::new()
                    } else {
                        format!(" ({})", c.detail)
                    }
                ));
            }
        }
        if !report.passed() {
            failed += 1;
        }
        json.push(json!({"network": name, "passed": report.passed(), "checks": to_json(&report.checks)}));
    }
    notes.push(format!(
        "{}/{} networks passed every check",
        nets.len() - failed,
        nets.len()
    ));
    Ok(Outcome {
        artifacts: vec![Artifact::primary("verification", csv, Value::Array(json))],
        notes,
        exit_code: if failed == 0 { 0 } else { 1 },
    })
}
