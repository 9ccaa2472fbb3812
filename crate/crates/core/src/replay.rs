//! Scenario replay: solve every scenario period independently, then
//! aggregate LMEs by hour of day and by month and carbon accounts by
//! technology.

use crate::accounting::{aggregate_ledgers, build_ledger, fmt_num, CarbonLedger, LedgerSummary};
use crate::combined::{lme, sci, solve_combined_with};
use crate::error::Result;
use crate::lp::SolverOptions;
use crate::network::{apply_scenario_period, Network, Scenario};
use serde::Serialize;
use std::fmt::Write as _;

/// Results of one solved period.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PeriodReport {
    pub lme: Vec<f64>,
    pub sci: Vec<f64>,
    pub lmp: Vec<f64>,
    pub generation: Vec<f64>,
    pub flow: Vec<f64>,
    pub ledger: CarbonLedger,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PeriodOutcome {
    /// Position in the scenario, 0-based.
    pub index: usize,
    pub label: i64,
    pub month: Option<u32>,
    pub report: std::result::Result<PeriodReport, String>,
}

/// Solve period `index` of `scenario`. Failures are captured, not returned.
pub fn solve_scenario_period(net: &Network, scenario: &Scenario, index: usize, opts: &SolverOptions) -> PeriodOutcome {
    let period = &scenario.periods[index];
    let scaled = apply_scenario_period(net, scenario, index);
    let report = solve_combined_with(&scaled, opts)
        .map(|r| PeriodReport {
            lme: lme(&r).0,
            sci: sci(&r).0,
            lmp: r.dispatch.lmp.clone(),
            generation: r.dispatch.generation.clone(),
            flow: r.dispatch.flow.clone(),
            ledger: build_ledger(&scaled, &r),
        })
        .map_err(|e| e.to_string());
    PeriodOutcome {
        index,
        label: period.label,
        month: period.month,
        report,
    }
}

/// Aggregates over the solved periods of a scenario.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioSummary {
    pub periods: usize,
    pub solved: usize,
    /// `(label, message)` of every failed period.
    pub failures: Vec<(i64, String)>,
    /// Per node.
    pub mean_lme: Vec<Option<f64>>,
    /// `[hour][node]`, hour = period index mod periods per day.
    pub hourly_lme: Vec<Vec<Option<f64>>>,
    /// `[month − 1][node]`.
    pub monthly_lme: Vec<Vec<Option<f64>>>,
    pub accounts: LedgerSummary,
}

/// Month bucket (1–12) of a period: its explicit month if given, otherwise
/// a uniform 12-way split of the scenario.
pub fn month_bucket(outcome: &PeriodOutcome, periods: usize) -> u32 {
    outcome
        .month
        .unwrap_or_else(|| 1 + ((12 * outcome.index) / periods.max(1)).min(11) as u32)
}

struct Mean {
    sum: Vec<f64>,
    count: Vec<usize>,
}

impl Mean {
    fn new(n: usize) -> Self {
        Self {
            sum: vec![0.0; n],
            count: vec![0; n],
        }
    }

    fn add(&mut self, v: &[f64]) {
        for (k, x) in v.iter().enumerate() {
            self.sum[k] += x;
            self.count[k] += 1;
        }
    }

    fn finish(&self) -> Vec<Option<f64>> {
        self.sum
            .iter()
            .zip(&self.count)
            .map(|(s, &c)| (c > 0).then(|| s / c as f64))
            .collect()
    }
}

/// Aggregate outcomes (in scenario order).
pub fn summarize(net: &Network, outcomes: &[PeriodOutcome], periods_per_day: usize) -> Result<ScenarioSummary> {
    assert!(periods_per_day >= 1, "periods per day must be positive");
    let n = net.num_nodes();
    let mut mean = Mean::new(n);
    let mut hourly: Vec<Mean> = (0..periods_per_day).map(|_| Mean::new(n)).collect();
    let mut monthly: Vec<Mean> = (0..12).map(|_| Mean::new(n)).collect();
    let mut ledgers = Vec::new();
    let mut failures = Vec::new();
    for o in outcomes {
        match &o.report {
            Ok(r) => {
                mean.add(&r.lme);
                hourly[o.index % periods_per_day].add(&r.lme);
                monthly[(month_bucket(o, outcomes.len()) - 1) as usize].add(&r.lme);
                ledgers.push(r.ledger.clone());
            }
            Err(msg) => failures.push((o.label, msg.clone())),
        }
    }
    Ok(ScenarioSummary {
        periods: outcomes.len(),
        solved: ledgers.len(),
        failures,
        mean_lme: mean.finish(),
        hourly_lme: hourly.iter().map(Mean::finish).collect(),
        monthly_lme: monthly.iter().map(Mean::finish).collect(),
        accounts: aggregate_ledgers(net, &ledgers)?,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_num).unwrap_or_default()
}

/// `period,node_id,lme_kgco2_per_mwh,lmp` for every solved period.
pub fn lme_csv(net: &Network, outcomes: &[PeriodOutcome]) -> String {
    let mut out = String::from("period,node_id,lme_kgco2_per_mwh,lmp\n");
    for o in outcomes {
        if let Ok(r) = &o.report {
            for (i, node) in net.nodes().iter().enumerate() {
                let _ = writeln!(
                    out,
                    "{},{},{},{}",
                    o.label,
                    node.id,
                    fmt_num(r.lme[i]),
                    fmt_num(r.lmp[i])
                );
            }
        }
    }
    out
}

/// `period,line_id,sci_kgco2_per_mwh,flow_mw` for every solved period.
pub fn sci_csv(net: &Network, outcomes: &[PeriodOutcome]) -> String {
    let mut out = String::from("period,line_id,sci_kgco2_per_mwh,flow_mw\n");
    for o in outcomes {
        if let Ok(r) = &o.report {
            for (l, line) in net.lines().iter().enumerate() {
                let _ = writeln!(
                    out,
                    "{},{},{},{}",
                    o.label,
                    line.id,
                    fmt_num(r.sci[l]),
                    fmt_num(r.flow[l])
                );
            }
        }
    }
    out
}

/// Concatenated ledgers of every solved period.
pub fn ledger_csv(net: &Network, outcomes: &[PeriodOutcome]) -> String {
    let mut out = String::from("entity_kind,entity_id,period,account_kgco2\n");
    for o in outcomes {
        if let Ok(r) = &o.report {
            r.ledger.write_rows(net, &[o.label], &mut out);
        }
    }
    out
}

impl ScenarioSummary {
    /// `bucket,node_id,mean_lme_kgco2_per_mwh`, one row per bucket and node.
    pub fn hourly_csv(&self, net: &Network) -> String {
        bucket_csv(net, "hour", &self.hourly_lme, 0)
    }

    pub fn monthly_csv(&self, net: &Network) -> String {
        bucket_csv(net, "month", &self.monthly_lme, 1)
    }

    /// `node_id,mean_lme_kgco2_per_mwh`.
    pub fn mean_csv(&self, net: &Network) -> String {
        let mut out = String::from("node_id,mean_lme_kgco2_per_mwh\n");
        for (node, v) in net.nodes().iter().zip(&self.mean_lme) {
            let _ = writeln!(out, "{},{}", node.id, opt(*v));
        }
        out
    }

    /// `period,message` for each failed period.
    pub fn failures_csv(&self) -> String {
        let mut out = String::from("period,message\n");
        for (label, msg) in &self.failures {
            let _ = writeln!(out, "{},\"{}\"", label, msg.replace('"', "'"));
        }
        out
    }
}

fn bucket_csv(net: &Network, name: &str, buckets: &[Vec<Option<f64>>], first: usize) -> String {
    let mut out = format!("{name},node_id,mean_lme_kgco2_per_mwh\n");
    for (b, row) in buckets.iter().enumerate() {
        for (node, v) in net.nodes().iter().zip(row) {
            let _ = writeln!(out, "{},{},{}", b + first, node.id, opt(*v));
        }
    }
    out
}
