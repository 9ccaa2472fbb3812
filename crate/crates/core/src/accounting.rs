//! Carbon accounts per load, generator, line and storage unit.
//!
//! Loads are charged their demand at the local marginal emission rate,
//! generators are credited `(σ − LME)` per MWh produced, lines carry
//! `SCI·|f|` and storage carries `LME·(charge − discharge)`. At any optimal
//! primal/dual pair of the combined model these accounts sum to the physical
//! emissions `σᵀP^G`; the residual of that identity is recorded.

use crate::combined::{lme, sci, CombinedResult};
use crate::error::{Error, Result};
use crate::network::{GeneratorKind, Network};
use serde::Serialize;
use std::collections::BTreeMap;
use std::fmt::Write as _;

/// Relative tolerance of the footprint identity.
pub const FOOTPRINT_TOL: f64 = 1e-6;

/// Accounts indexed `[period][entity]`, in kgCO2. A single-period ledger has
/// exactly one period.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CarbonLedger {
    pub load: Vec<Vec<f64>>,
    pub generator: Vec<Vec<f64>>,
    pub line: Vec<Vec<f64>>,
    /// Empty inner vectors when the network has no storage.
    pub storage: Vec<Vec<f64>>,
    pub demand: Vec<Vec<f64>>,
    pub generation: Vec<Vec<f64>>,
    pub period_emissions: Vec<f64>,
    pub total_emissions: f64,
    pub footprint_residual: f64,
}

/// Per-period inputs to a ledger.
pub(crate) struct PeriodInputs<'a> {
    pub lme: &'a [f64],
    pub sci: &'a [f64],
    pub demand: &'a [f64],
    pub generation: &'a [f64],
    pub flow: &'a [f64],
    /// Net storage draw `charge − discharge` per unit.
    pub storage_net: &'a [f64],
}

impl CarbonLedger {
    pub(crate) fn from_periods(net: &Network, periods: &[PeriodInputs<'_>]) -> Self {
        let mut ledger = CarbonLedger {
            load: Vec::with_capacity(periods.len()),
            generator: Vec::with_capacity(periods.len()),
            line: Vec::with_capacity(periods.len()),
            storage: Vec::with_capacity(periods.len()),
            demand: Vec::with_capacity(periods.len()),
            generation: Vec::with_capacity(periods.len()),
            period_emissions: Vec::with_capacity(periods.len()),
            total_emissions: 0.0,
            footprint_residual: 0.0,
        };
        for p in periods {
            ledger
                .load
                .push(p.lme.iter().zip(p.demand).map(|(l, d)| l * d).collect());
            ledger.generator.push(
                net.generators()
                    .iter()
                    .enumerate()
                    .map(|(g, unit)| (unit.emission_rate - p.lme[net.generator_node(g)]) * p.generation[g])
                    .collect(),
            );
            ledger
                .line
                .push(p.sci.iter().zip(p.flow).map(|(s, f)| s * f.abs()).collect());
            ledger.storage.push(
                (0..net.num_storages())
                    .map(|s| p.lme[net.storage_node(s)] * p.storage_net[s])
                    .collect(),
            );
            ledger.demand.push(p.demand.to_vec());
            ledger.generation.push(p.generation.to_vec());
            ledger.period_emissions.push(
                net.generators()
                    .iter()
                    .zip(p.generation)
                    .map(|(g, x)| g.emission_rate * x)
                    .sum(),
            );
        }
        ledger.total_emissions = ledger.period_emissions.iter().sum();
        ledger.footprint_residual = (ledger.sum_accounts() - ledger.total_emissions).abs();
        ledger
    }

    pub fn periods(&self) -> usize {
        self.period_emissions.len()
    }

    /// Sum of every account in period `t`.
    pub fn period_sum(&self, t: usize) -> f64 {
        self.load[t].iter().sum::<f64>()
            + self.generator[t].iter().sum::<f64>()
            + self.line[t].iter().sum::<f64>()
            + self.storage[t].iter().sum::<f64>()
    }

    pub fn sum_accounts(&self) -> f64 {
        (0..self.periods()).map(|t| self.period_sum(t)).sum()
    }

    pub fn period_residual(&self, t: usize) -> f64 {
        (self.period_sum(t) - self.period_emissions[t]).abs()
    }

    /// `FOOTPRINT_TOL · (1 + total emissions)`.
    pub fn tolerance(&self) -> f64 {
        FOOTPRINT_TOL * (1.0 + self.total_emissions.abs())
    }

    /// Whether the horizon identity and every per-period identity hold.
    pub fn is_balanced(&self) -> bool {
        self.footprint_residual <= self.tolerance()
            && (0..self.periods())
                .all(|t| self.period_residual(t) <= FOOTPRINT_TOL * (1.0 + self.period_emissions[t].abs()))
    }

    pub fn load_total(&self, node: usize) -> f64 {
        self.load.iter().map(|p| p[node]).sum()
    }

    pub fn generator_total(&self, g: usize) -> f64 {
        self.generator.iter().map(|p| p[g]).sum()
    }

    pub fn line_total(&self, l: usize) -> f64 {
        self.line.iter().map(|p| p[l]).sum()
    }

    pub fn storage_total(&self, s: usize) -> f64 {
        self.storage.iter().map(|p| p[s]).sum()
    }

    /// `entity_kind,entity_id,period,account_kgco2` rows, period labels taken
    /// from `labels` (one per period).
    pub fn to_csv(&self, net: &Network, labels: &[i64]) -> String {
        assert_eq!(labels.len(), self.periods(), "one label per period");
        let mut out = String::from("entity_kind,entity_id,period,account_kgco2\n");
        self.write_rows(net, labels, &mut out);
        out
    }

    pub(crate) fn write_rows(&self, net: &Network, labels: &[i64], out: &mut String) {
        for (t, &label) in labels.iter().enumerate() {
            for (n, v) in net.nodes().iter().zip(&self.load[t]) {
                let _ = writeln!(out, "load,{},{},{}", n.id, label, fmt_num(*v));
            }
            for (g, v) in net.generators().iter().zip(&self.generator[t]) {
                let _ = writeln!(out, "generator,{},{},{}", g.id, label, fmt_num(*v));
            }
            for (l, v) in net.lines().iter().zip(&self.line[t]) {
                let _ = writeln!(out, "line,{},{},{}", l.id, label, fmt_num(*v));
            }
            for (s, v) in net.storages().iter().zip(&self.storage[t]) {
                let _ = writeln!(out, "storage,{},{},{}", s.id, label, fmt_num(*v));
            }
        }
    }
}

/// Format a number for machine-readable output: shortest round-trip form,
/// with negative zero printed as `0`.
pub fn fmt_num(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else {
        format!("{v}")
    }
}

/// Ledger of a single-period combined solve.
pub fn build_ledger(net: &Network, combined: &CombinedResult) -> CarbonLedger {
    let lme = lme(combined).0;
    let sci = sci(combined).0;
    let demand = net.demands();
    CarbonLedger::from_periods(
        net,
        &[PeriodInputs {
            lme: &lme,
            sci: &sci,
            demand: &demand,
            generation: &combined.dispatch.generation,
            flow: &combined.dispatch.flow,
            storage_net: &[],
        }],
    )
}

/// One row of the per-technology summary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TypeSummary {
    pub kind: String,
    pub account: f64,
    /// Energy produced, MWh (one period = one hour).
    pub dispatch: f64,
    /// Direct emissions `σ·P^G`.
    pub scope1: f64,
}

/// Accounts summed over many ledgers of the same network.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LedgerSummary {
    pub by_type: Vec<TypeSummary>,
    pub load: Vec<f64>,
    pub generator: Vec<f64>,
    pub line: Vec<f64>,
    pub storage: Vec<f64>,
    pub total_demand: f64,
    pub total_emissions: f64,
    /// `|Σ accounts − Σ emissions|` over all ledgers.
    pub residual: f64,
    /// Sum of the individual ledger residuals; `residual` never exceeds it.
    pub residual_bound: f64,
    pub ledgers: usize,
}

/// Sum ledgers entity by entity and group generators by technology tag.
/// Untagged generators are grouped as `other`.
pub fn aggregate_ledgers(net: &Network, ledgers: &[CarbonLedger]) -> Result<LedgerSummary> {
    let mut s = LedgerSummary {
        by_type: Vec::new(),
        load: vec![0.0; net.num_nodes()],
        generator: vec![0.0; net.num_generators()],
        line: vec![0.0; net.num_lines()],
        storage: vec![0.0; net.num_storages()],
        total_demand: 0.0,
        total_emissions: 0.0,
        residual: 0.0,
        residual_bound: 0.0,
        ledgers: ledgers.len(),
    };
    let mut dispatch = vec![0.0; net.num_generators()];
    for (k, ledger) in ledgers.iter().enumerate() {
        let shapes_match = (0..ledger.periods()).all(|t| {
            ledger.load[t].len() == net.num_nodes()
                && ledger.generator[t].len() == net.num_generators()
                && ledger.line[t].len() == net.num_lines()
                && ledger.storage[t].len() == net.num_storages()
        });
        if !shapes_match {
            return Err(Error::Input(format!("ledger {k} does not match the network topology")));
        }
        for t in 0..ledger.periods() {
            add_into(&mut s.load, &ledger.load[t]);
            add_into(&mut s.generator, &ledger.generator[t]);
            add_into(&mut s.line, &ledger.line[t]);
            add_into(&mut s.storage, &ledger.storage[t]);
            add_into(&mut dispatch, &ledger.generation[t]);
            s.total_demand += ledger.demand[t].iter().sum::<f64>();
        }
        s.total_emissions += ledger.total_emissions;
        s.residual_bound += ledger.footprint_residual;
    }
    let accounts: f64 = s.load.iter().chain(&s.generator).chain(&s.line).chain(&s.storage).sum();
    s.residual = (accounts - s.total_emissions).abs();

    let mut groups: BTreeMap<GeneratorKind, TypeSummary> = BTreeMap::new();
    for (g, unit) in net.generators().iter().enumerate() {
        let kind = unit.kind.unwrap_or(GeneratorKind::Other);
        let row = groups.entry(kind).or_insert_with(|| TypeSummary {
            kind: kind.to_string(),
            account: 0.0,
            dispatch: 0.0,
            scope1: 0.0,
        });
        row.account += s.generator[g];
        row.dispatch += dispatch[g];
        row.scope1 += unit.emission_rate * dispatch[g];
    }
    s.by_type = groups.into_values().collect();
    Ok(s)
}

fn add_into(acc: &mut [f64], v: &[f64]) {
    for (a, b) in acc.iter_mut().zip(v) {
        *a += b;
    }
}

impl LedgerSummary {
    /// `type,account_kgco2,dispatch_mwh,scope1_kgco2`: one row per
    /// technology, then load, transmission, storage and total.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("type,account_kgco2,dispatch_mwh,scope1_kgco2\n");
        for r in &self.by_type {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                r.kind,
                fmt_num(r.account),
                fmt_num(r.dispatch),
                fmt_num(r.scope1)
            );
        }
        let load: f64 = self.load.iter().sum();
        let line: f64 = self.line.iter().sum();
        let storage: f64 = self.storage.iter().sum();
        let generation: f64 = self.by_type.iter().map(|r| r.dispatch).sum();
        let generator: f64 = self.by_type.iter().map(|r| r.account).sum();
        let _ = writeln!(out, "load,{},{},0", fmt_num(load), fmt_num(self.total_demand));
        let _ = writeln!(out, "transmission,{},0,0", fmt_num(line));
        let _ = writeln!(out, "storage,{},0,0", fmt_num(storage));
        let _ = writeln!(
            out,
            "total,{},{},{}",
            fmt_num(load + line + storage + generator),
            fmt_num(generation),
            fmt_num(self.total_emissions)
        );
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::combined::solve_combined;
    use crate::fixtures;

    fn ledger(net: &Network) -> CarbonLedger {
        build_ledger(net, &solve_combined(net).unwrap())
    }

    #[test]
    fn transmission_constrained_ledger() {
        let net = fixtures::two_bus_transmission();
        let l = ledger(&net);
        assert!(l.load[0][0].abs() < 1e-9);
        assert!((l.load[0][1] - 250.0).abs() < 1e-9);
        assert!((l.line[0][0] + 100.0).abs() < 1e-9);
        assert!(l.generator[0].iter().all(|v| v.abs() < 1e-9));
        assert!((l.total_emissions - 150.0).abs() < 1e-9);
        assert!(l.footprint_residual <= 1e-9);
    }

    #[test]
    fn capacity_constrained_ledger() {
        let net = fixtures::two_bus_generation();
        let l = ledger(&net);
        assert!((l.load[0][0] - 250.0).abs() < 1e-9);
        assert!((l.generator[0][0] + 200.0).abs() < 1e-9);
        assert!(l.generator[0][1].abs() < 1e-9);
        assert!(l.line[0][0].abs() < 1e-9);
        assert!((l.total_emissions - 50.0).abs() < 1e-9);
    }

    #[test]
    fn zero_demand_ledger_is_empty() {
        let net = fixtures::two_bus_transmission().with_demands(&[0.0, 0.0]);
        let l = ledger(&net);
        assert_eq!(l.sum_accounts(), 0.0);
        assert_eq!(l.total_emissions, 0.0);
    }

    #[test]
    fn aggregation_is_linear() {
        let net = fixtures::two_bus_transmission();
        let l = ledger(&net);
        let one = aggregate_ledgers(&net, std::slice::from_ref(&l)).unwrap();
        assert_eq!(one.load, vec![l.load[0][0], l.load[0][1]]);
        let two = aggregate_ledgers(&net, &[l.clone(), l]).unwrap();
        assert!((two.load[1] - 500.0).abs() < 1e-9);
        assert!((two.line[0] + 200.0).abs() < 1e-9);
        assert!(two.residual <= two.residual_bound + 1e-12);
    }

    #[test]
    fn aggregation_rejects_other_topologies() {
        let a = fixtures::two_bus_transmission();
        let b = fixtures::copper_plate(1.0);
        let l = ledger(&b);
        assert!(matches!(aggregate_ledgers(&a, &[l]), Err(Error::Input(_))));
    }

    #[test]
    fn csv_layout() {
        let net = fixtures::two_bus_transmission();
        let csv = ledger(&net).to_csv(&net, &[0]);
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("entity_kind,entity_id,period,account_kgco2"));
        assert!(csv.contains("load,bus2,0,250\n"));
        assert!(csv.contains("line,L1,0,-100\n"));
        let summary = aggregate_ledgers(&net, &[ledger(&net)]).unwrap().to_csv();
        assert!(summary.starts_with("type,account_kgco2,dispatch_mwh,scope1_kgco2\n"));
        assert!(summary.contains("total,150,250,150\n"), "{summary}");
    }

    #[test]
    fn clean_units_behind_fossil_margin_are_credited() {
        let net = fixtures::duplicated_generators();
        let r = solve_combined(&net).unwrap();
        let l = build_ledger(&net, &r);
        let lme = lme(&r).0;
        for (g, unit) in net.generators().iter().enumerate() {
            if unit.emission_rate == 0.0 && lme[net.generator_node(g)] > 0.0 && r.dispatch.generation[g] > 0.0 {
                assert!(l.generator[0][g] < 0.0);
            }
        }
    }
}
