//! Multi-period dispatch with storage, its combined emissions model, and
//! storage carbon accounts.
//!
//! Per storage unit `s` and period `t = 1..T`, with state of charge `E` defined
//! on `t = 1..T+1`:
//!
//! ```text
//! E_{s,1} = E⁰_s
//! E_{s,t} + η·P⁺_{s,t} − P⁻_{s,t}/η − E_{s,t+1} = 0      [α]
//! E_{s,t} ≤ e_max   [β⁺ ≤ 0]        E_{s,t} ≥ 0   [β⁻ ≥ 0]     t = 1..T+1
//! P⁺_{s,t} ≥ 0      [τ⁺ ≥ 0]        P⁻_{s,t} ≥ 0  [τ⁻ ≥ 0]
//! ```
//!
//! Charging draws `P⁺` from the node balance and discharging injects `P⁻`.
//! The end state `E_{s,T+1}` carries no terminal value.

use crate::accounting::{CarbonLedger, PeriodInputs};
use crate::combined::{lme_from, sci_from, OuterDuals, TwoLayerLp};
use crate::dispatch::{add_period_block, status_error, DispatchResult, PeriodBlock};
use crate::error::{Error, Result};
use crate::lp::{
    lexicographic_solve, solve_lp_with, LexOptions, LinearProgram, LpSolution, RowId, Sense, SolverOptions, VarId,
};
use crate::network::Network;
use crate::verify::{EquilibriumReport, Violation};
use serde::Serialize;
use std::collections::BTreeMap;

/// Per-period demands and capacity factors for a fixed network.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Horizon {
    /// `[period][node]`, MW.
    pub demands: Vec<Vec<f64>>,
    /// `[period][generator]`, multiplies `p_max`.
    pub capacity_factors: Vec<Vec<f64>>,
    /// Per storage unit, MWh.
    pub initial_soc: Vec<f64>,
}

impl Horizon {
    /// `periods` copies of the network's own demands at full capacity.
    pub fn repeat(net: &Network, periods: usize) -> Self {
        Self {
            demands: vec![net.demands(); periods],
            capacity_factors: vec![vec![1.0; net.num_generators()]; periods],
            initial_soc: vec![0.0; net.num_storages()],
        }
    }

    pub fn periods(&self) -> usize {
        self.demands.len()
    }

    pub fn validate(&self, net: &Network) -> Result<()> {
        let t = self.periods();
        if t == 0 {
            return Err(Error::Input("horizon has no periods".into()));
        }
        if self.capacity_factors.len() != t {
            return Err(Error::Input("capacity factors do not cover every period".into()));
        }
        for (k, d) in self.demands.iter().enumerate() {
            if d.len() != net.num_nodes() || d.iter().any(|v| !v.is_finite()) {
                return Err(Error::Input(format!(
                    "period {k}: demand vector does not match the network"
                )));
            }
        }
        for (k, cf) in self.capacity_factors.iter().enumerate() {
            if cf.len() != net.num_generators() || cf.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::Input(format!("period {k}: capacity factors must lie in [0, 1]")));
            }
        }
        if self.initial_soc.len() != net.num_storages() {
            return Err(Error::Input(
                "one initial state of charge per storage unit is required".into(),
            ));
        }
        for (s, (&e0, unit)) in self.initial_soc.iter().zip(net.storages()).enumerate() {
            if !(0.0..=unit.e_max).contains(&e0) {
                return Err(Error::Input(format!(
                    "storage `{}`: initial state of charge {e0} outside [0, {}]",
                    net.storages()[s].id,
                    unit.e_max
                )));
            }
        }
        Ok(())
    }

    /// Parse `period,node_id,demand_mw` rows and, optionally,
    /// `period,generator_id,capacity_factor` rows. Periods are sorted by
    /// label; every node needs a demand in every period, unlisted capacity
    /// factors default to 1.
    pub fn from_csv(net: &Network, demand_csv: &str, capacity_csv: Option<&str>) -> Result<(Self, Vec<i64>)> {
        let demand_rows = read_triples(demand_csv, ["period", "node_id", "demand_mw"])?;
        let mut demands: BTreeMap<i64, Vec<Option<f64>>> = BTreeMap::new();
        for (period, id, value) in demand_rows {
            let i = net
                .node_index(&id)
                .ok_or_else(|| Error::Input(format!("horizon period {period}: unknown node `{id}`")))?;
            demands.entry(period).or_insert_with(|| vec![None; net.num_nodes()])[i] = Some(value);
        }
        let labels: Vec<i64> = demands.keys().copied().collect();
        let mut horizon = Horizon {
            demands: Vec::with_capacity(labels.len()),
            capacity_factors: vec![vec![1.0; net.num_generators()]; labels.len()],
            initial_soc: vec![0.0; net.num_storages()],
        };
        for (period, row) in demands {
            let row: Option<Vec<f64>> = row.into_iter().collect();
            horizon
                .demands
                .push(row.ok_or_else(|| Error::Input(format!("horizon period {period}: every node needs a demand")))?);
        }
        if let Some(text) = capacity_csv {
            for (period, id, value) in read_triples(text, ["period", "generator_id", "capacity_factor"])? {
                let g = net
                    .generator_index(&id)
                    .ok_or_else(|| Error::Input(format!("horizon period {period}: unknown generator `{id}`")))?;
                let t = labels
                    .binary_search(&period)
                    .map_err(|_| Error::Input(format!("capacity factor for period {period} has no demand rows")))?;
                horizon.capacity_factors[t][g] = value;
            }
        }
        horizon.validate(net)?;
        Ok((horizon, labels))
    }

    /// Periods `start..start+len` (clipped), starting from the same initial
    /// state of charge.
    pub fn window(&self, start: usize, len: usize) -> Horizon {
        let end = (start + len).min(self.periods());
        Horizon {
            demands: self.demands[start..end].to_vec(),
            capacity_factors: self.capacity_factors[start..end].to_vec(),
            initial_soc: self.initial_soc.clone(),
        }
    }

    /// Consecutive windows of at most `len` periods with their start index.
    pub fn windows(&self, len: usize) -> Vec<(usize, Horizon)> {
        assert!(len >= 1, "window length must be positive");
        (0..self.periods())
            .step_by(len)
            .map(|s| (s, self.window(s, len)))
            .collect()
    }

    fn capacities(&self, net: &Network, t: usize) -> Vec<f64> {
        net.generators()
            .iter()
            .zip(&self.capacity_factors[t])
            .map(|(g, cf)| g.p_max * cf)
            .collect()
    }

    /// The single-period network seen in period `t` (storage dropped).
    pub fn period_network(&self, net: &Network, t: usize) -> Network {
        net.without_storage()
            .with_demands(&self.demands[t])
            .with_capacities(&self.capacities(net, t))
    }
}

fn read_triples(text: &str, header: [&str; 3]) -> Result<Vec<(i64, String, f64)>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let found = rdr.headers().map_err(|e| Error::Input(format!("horizon csv: {e}")))?;
    if found.iter().collect::<Vec<_>>() != header {
        return Err(Error::Input(format!(
            "horizon csv header must be `{}`",
            header.join(",")
        )));
    }
    rdr.deserialize::<(i64, String, f64)>()
        .map(|r| r.map_err(|e| Error::Input(format!("horizon csv: {e}"))))
        .collect()
}

/// Variable and row handles of the storage units, indexed `[s][t]`.
#[derive(Debug, Clone, PartialEq)]
pub struct StorageBlock {
    pub charge: Vec<Vec<VarId>>,
    pub discharge: Vec<Vec<VarId>>,
    /// `T + 1` entries per unit.
    pub soc: Vec<Vec<VarId>>,
    pub soc_init: Vec<RowId>,
    pub recursion: Vec<Vec<RowId>>,
    /// `T + 1` entries per unit.
    pub soc_max: Vec<Vec<RowId>>,
    pub soc_min: Vec<Vec<RowId>>,
    pub charge_min: Vec<Vec<RowId>>,
    pub discharge_min: Vec<Vec<RowId>>,
    pub charge_cap: Vec<Vec<Option<RowId>>>,
    pub discharge_cap: Vec<Vec<Option<RowId>>>,
}

fn add_storage_rows(
    lp: &mut LinearProgram,
    net: &Network,
    periods: usize,
    initial_soc: &[f64],
    balance: impl Fn(usize, usize) -> Option<RowId>,
) -> StorageBlock {
    let ns = net.num_storages();
    let mut b = StorageBlock {
        charge: Vec::with_capacity(ns),
        discharge: Vec::with_capacity(ns),
        soc: Vec::with_capacity(ns),
        soc_init: Vec::with_capacity(ns),
        recursion: Vec::with_capacity(ns),
        soc_max: Vec::with_capacity(ns),
        soc_min: Vec::with_capacity(ns),
        charge_min: Vec::with_capacity(ns),
        discharge_min: Vec::with_capacity(ns),
        charge_cap: Vec::with_capacity(ns),
        discharge_cap: Vec::with_capacity(ns),
    };
    for (s, unit) in net.storages().iter().enumerate() {
        let id = &unit.id;
        let eta = unit.efficiency;
        let charge: Vec<VarId> = (0..periods)
            .map(|t| lp.free_var(format!("charge[{id}][{t}]"), 0.0))
            .collect();
        let discharge: Vec<VarId> = (0..periods)
            .map(|t| lp.free_var(format!("discharge[{id}][{t}]"), 0.0))
            .collect();
        let soc: Vec<VarId> = (0..=periods)
            .map(|t| lp.free_var(format!("soc[{id}][{t}]"), 0.0))
            .collect();
        for t in 0..periods {
            if let Some(row) = balance(s, t) {
                lp.add_term(row, charge[t], -1.0);
                lp.add_term(row, discharge[t], 1.0);
            }
        }
        b.soc_init.push(lp.add_row(
            format!("soc_init[{id}]"),
            vec![(soc[0], 1.0)],
            Sense::Eq,
            initial_soc[s],
        ));
        b.recursion.push(
            (0..periods)
                .map(|t| {
                    lp.add_row(
                        format!("soc_balance[{id}][{t}]"),
                        vec![
                            (soc[t], 1.0),
                            (charge[t], eta),
                            (discharge[t], -1.0 / eta),
                            (soc[t + 1], -1.0),
                        ],
                        Sense::Eq,
                        0.0,
                    )
                })
                .collect(),
        );
        b.soc_max.push(
            (0..=periods)
                .map(|t| {
                    lp.add_row(
                        format!("soc_max[{id}][{t}]"),
                        vec![(soc[t], 1.0)],
                        Sense::Le,
                        unit.e_max,
                    )
                })
                .collect(),
        );
        b.soc_min.push(
            (0..=periods)
                .map(|t| lp.add_row(format!("soc_min[{id}][{t}]"), vec![(soc[t], 1.0)], Sense::Ge, 0.0))
                .collect(),
        );
        b.charge_min.push(
            (0..periods)
                .map(|t| lp.add_row(format!("charge_min[{id}][{t}]"), vec![(charge[t], 1.0)], Sense::Ge, 0.0))
                .collect(),
        );
        b.discharge_min.push(
            (0..periods)
                .map(|t| {
                    lp.add_row(
                        format!("discharge_min[{id}][{t}]"),
                        vec![(discharge[t], 1.0)],
                        Sense::Ge,
                        0.0,
                    )
                })
                .collect(),
        );
        let cap = |lp: &mut LinearProgram, name: &str, v: &[VarId]| -> Vec<Option<RowId>> {
            (0..periods)
                .map(|t| {
                    unit.power_cap
                        .map(|c| lp.add_row(format!("{name}[{id}][{t}]"), vec![(v[t], 1.0)], Sense::Le, c))
                })
                .collect()
        };
        b.charge_cap.push(cap(lp, "charge_cap", &charge));
        b.discharge_cap.push(cap(lp, "discharge_cap", &discharge));
        b.charge.push(charge);
        b.discharge.push(discharge);
        b.soc.push(soc);
    }
    b
}

/// The multi-period dispatch LP and its index maps.
#[derive(Debug, Clone, PartialEq)]
pub struct StorageModel {
    pub lp: LinearProgram,
    pub periods: Vec<PeriodBlock>,
    pub storage: StorageBlock,
}

pub fn build_storage_dcopf(net: &Network, horizon: &Horizon) -> StorageModel {
    let mut lp = LinearProgram::new();
    let periods: Vec<PeriodBlock> = (0..horizon.periods())
        .map(|t| {
            add_period_block(
                &mut lp,
                net,
                &horizon.demands[t],
                &horizon.capacities(net, t),
                &format!("[{t}]"),
            )
        })
        .collect();
    let storage = add_storage_rows(&mut lp, net, horizon.periods(), &horizon.initial_soc, |s, t| {
        Some(periods[t].balance[net.storage_node(s)])
    });
    StorageModel { lp, periods, storage }
}

/// Multi-period dispatch, storage schedule and storage duals, indexed `[s][t]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StorageDispatchResult {
    pub periods: Vec<DispatchResult>,
    pub charge: Vec<Vec<f64>>,
    pub discharge: Vec<Vec<f64>>,
    pub soc: Vec<Vec<f64>>,
    pub alpha: Vec<Vec<f64>>,
    pub beta_plus: Vec<Vec<f64>>,
    pub beta_minus: Vec<Vec<f64>>,
    pub tau_plus: Vec<Vec<f64>>,
    pub tau_minus: Vec<Vec<f64>>,
    pub cost: f64,
}

impl StorageDispatchResult {
    fn from_values(
        model: &StorageModel,
        net: &Network,
        primal: impl Fn(VarId) -> f64,
        dual: impl Fn(RowId) -> f64,
    ) -> Self {
        let costs: Vec<f64> = net.generators().iter().map(|g| g.cost).collect();
        let periods: Vec<DispatchResult> = model
            .periods
            .iter()
            .map(|b| DispatchResult::from_values(b, &primal, &dual, &costs))
            .collect();
        let st = &model.storage;
        let vals = |v: &[Vec<VarId>]| v.iter().map(|u| u.iter().map(|&x| primal(x)).collect()).collect();
        let duals = |r: &[Vec<RowId>], clamp: fn(f64) -> f64| {
            r.iter().map(|u| u.iter().map(|&x| clamp(dual(x))).collect()).collect()
        };
        StorageDispatchResult {
            cost: periods.iter().map(|p| p.cost).sum(),
            periods,
            charge: vals(&st.charge),
            discharge: vals(&st.discharge),
            soc: vals(&st.soc),
            alpha: duals(&st.recursion, |v| v),
            beta_plus: duals(&st.soc_max, |v| v.min(0.0)),
            beta_minus: duals(&st.soc_min, |v| v.max(0.0)),
            tau_plus: duals(&st.charge_min, |v| v.max(0.0)),
            tau_minus: duals(&st.discharge_min, |v| v.max(0.0)),
        }
    }

    /// `charge − discharge` per unit in period `t`.
    pub fn net_storage(&self, t: usize) -> Vec<f64> {
        self.charge
            .iter()
            .zip(&self.discharge)
            .map(|(c, d)| c[t] - d[t])
            .collect()
    }

    pub fn emissions(&self, net: &Network) -> f64 {
        self.periods.iter().map(|p| p.emissions(net)).sum()
    }
}

pub fn solve_storage_dcopf(net: &Network, horizon: &Horizon) -> Result<StorageDispatchResult> {
    solve_storage_dcopf_with(net, horizon, &SolverOptions::default())
}

pub fn solve_storage_dcopf_with(
    net: &Network,
    horizon: &Horizon,
    opts: &SolverOptions,
) -> Result<StorageDispatchResult> {
    horizon.validate(net)?;
    let model = build_storage_dcopf(net, horizon);
    let sol = solve_lp_with(&model.lp, opts)?;
    if !sol.is_optimal() {
        return Err(status_error(sol.status, "storage horizon"));
    }
    Ok(StorageDispatchResult::from_values(
        &model,
        net,
        |v| sol.value(v),
        |r| sol.dual(r),
    ))
}

/// Emission-optimal multi-period dispatch with outer duals and per-period
/// LME/SCI, indexed `[t][node]` and `[t][line]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StorageCombinedResult {
    pub dispatch: StorageDispatchResult,
    pub outer: Vec<OuterDuals>,
    pub p_alpha: Vec<Vec<f64>>,
    pub p_beta_plus: Vec<Vec<f64>>,
    pub p_beta_minus: Vec<Vec<f64>>,
    pub p_tau_plus: Vec<Vec<f64>>,
    pub p_tau_minus: Vec<Vec<f64>>,
    pub p_o: f64,
    pub lme: Vec<Vec<f64>>,
    pub sci: Vec<Vec<f64>>,
    pub period_emissions: Vec<f64>,
    pub emissions: f64,
    pub first_layer_cost: f64,
}

pub fn solve_storage_combined(net: &Network, horizon: &Horizon) -> Result<StorageCombinedResult> {
    solve_storage_combined_with(net, horizon, &SolverOptions::default())
}

/// Combined solve over the horizon.
///
/// Among emission-optimal schedules the one with least storage throughput is
/// reported; outer duals come from the emission stage, which remains an
/// optimal pair with that schedule.
pub fn solve_storage_combined_with(
    net: &Network,
    horizon: &Horizon,
    opts: &SolverOptions,
) -> Result<StorageCombinedResult> {
    let first = solve_storage_dcopf_with(net, horizon, opts)?;
    let model = build_storage_dcopf(net, horizon);
    let mut sigma = vec![0.0; model.lp.num_vars()];
    for b in &model.periods {
        for (g, &v) in b.gen.iter().enumerate() {
            sigma[v.0] = net.generators()[g].emission_rate;
        }
    }
    let layers = TwoLayerLp::build(&model.lp, &sigma, first.cost.abs());
    let n = layers.lp.num_vars();
    let mut emissions_obj = vec![0.0; n];
    emissions_obj[..sigma.len()].copy_from_slice(&sigma);
    let mut throughput = vec![0.0; n];
    for v in model.storage.charge.iter().chain(&model.storage.discharge).flatten() {
        throughput[v.0] = 1.0;
    }
    let lex = lexicographic_solve(
        &layers.lp,
        &emissions_obj,
        &throughput,
        &LexOptions {
            solver: *opts,
            delta: 0.0,
        },
    )?;
    if !lex.first.is_optimal() {
        return Err(Error::Internal(format!(
            "combined storage model reported {:?} although the horizon dispatch is optimal",
            lex.first.status
        )));
    }
    let stage = &lex.first;
    let point: &LpSolution = if lex.second.is_optimal() {
        &lex.second
    } else {
        &lex.first
    };
    let dispatch = StorageDispatchResult::from_values(&model, net, |v| point.value(v), |r| layers.inner_dual(point, r));
    let p_o = layers.p_o(stage);
    let outer: Vec<OuterDuals> = model
        .periods
        .iter()
        .map(|b| OuterDuals::from_solution(b, stage))
        .collect();
    let st = &model.storage;
    let d =
        |r: &[Vec<RowId>]| -> Vec<Vec<f64>> { r.iter().map(|u| u.iter().map(|&x| stage.dual(x)).collect()).collect() };
    let lme: Vec<Vec<f64>> = outer
        .iter()
        .zip(&dispatch.periods)
        .map(|(o, p)| lme_from(&o.p_pi, &p.lmp, p_o))
        .collect();
    let sci: Vec<Vec<f64>> = outer
        .iter()
        .zip(&dispatch.periods)
        .map(|(o, p)| sci_from(o, p, p_o))
        .collect();
    let period_emissions: Vec<f64> = dispatch.periods.iter().map(|p| p.emissions(net)).collect();
    Ok(StorageCombinedResult {
        p_alpha: d(&st.recursion),
        p_beta_plus: d(&st.soc_max),
        p_beta_minus: d(&st.soc_min),
        p_tau_plus: d(&st.charge_min),
        p_tau_minus: d(&st.discharge_min),
        emissions: period_emissions.iter().sum(),
        period_emissions,
        p_o,
        lme,
        sci,
        outer,
        dispatch,
        first_layer_cost: first.cost,
    })
}

/// Horizon ledger with per-period load, generator, line and storage accounts.
pub fn storage_ledger(net: &Network, horizon: &Horizon, result: &StorageCombinedResult) -> CarbonLedger {
    let nets: Vec<Vec<f64>> = (0..horizon.periods()).map(|t| result.dispatch.net_storage(t)).collect();
    let inputs: Vec<PeriodInputs<'_>> = (0..horizon.periods())
        .map(|t| PeriodInputs {
            lme: &result.lme[t],
            sci: &result.sci[t],
            demand: &horizon.demands[t],
            generation: &result.dispatch.periods[t].generation,
            flow: &result.dispatch.periods[t].flow,
            storage_net: &nets[t],
        })
        .collect();
    CarbonLedger::from_periods(net, &inputs)
}

/// The stand-alone problem of one storage unit facing fixed nodal prices.
fn decentralized_storage_lp(net: &Network, horizon: &Horizon, s: usize) -> (LinearProgram, StorageBlock) {
    let single = net
        .rebuild(|_, _, _, st| {
            let keep = st[s].clone();
            st.clear();
            st.push(keep);
        })
        .expect("dropping storage units keeps validity");
    let mut lp = LinearProgram::new();
    let block = add_storage_rows(
        &mut lp,
        &single,
        horizon.periods(),
        &horizon.initial_soc[s..=s],
        |_, _| None,
    );
    (lp, block)
}

fn fix_schedule(lp: &mut LinearProgram, block: &StorageBlock, s: usize, charge: &[f64], discharge: &[f64]) {
    for (t, (&c, &d)) in charge.iter().zip(discharge).enumerate() {
        lp.add_row(
            format!("fixed_charge[{s}][{t}]"),
            vec![(block.charge[s][t], 1.0)],
            Sense::Eq,
            c,
        );
        lp.add_row(
            format!("fixed_discharge[{s}][{t}]"),
            vec![(block.discharge[s][t], 1.0)],
            Sense::Eq,
            d,
        );
    }
}

/// Check that each storage schedule is a best response to its nodal LMP and
/// LME series, and that swapping in an alternative best response never beats
/// the central schedule on cost or, at equal cost, on emissions.
pub fn check_storage_equilibrium(
    net: &Network,
    horizon: &Horizon,
    result: &StorageCombinedResult,
    tol: f64,
) -> Result<EquilibriumReport> {
    let mut report = EquilibriumReport::default();
    let lex_opts = LexOptions::default();
    for (s, unit) in net.storages().iter().enumerate() {
        let node = net.storage_node(s);
        let (lp, block) = decentralized_storage_lp(net, horizon, s);
        let mut price = vec![0.0; lp.num_vars()];
        let mut marginal = vec![0.0; lp.num_vars()];
        for t in 0..horizon.periods() {
            let lmp = result.dispatch.periods[t].lmp[node];
            let lme = result.lme[t][node];
            price[block.charge[0][t].0] = lmp;
            price[block.discharge[0][t].0] = -lmp;
            marginal[block.charge[0][t].0] = lme;
            marginal[block.discharge[0][t].0] = -lme;
        }
        let central: Vec<f64> = {
            let mut x = vec![0.0; lp.num_vars()];
            for t in 0..horizon.periods() {
                x[block.charge[0][t].0] = result.dispatch.charge[s][t];
                x[block.discharge[0][t].0] = result.dispatch.discharge[s][t];
            }
            x
        };
        let best = lexicographic_solve(&lp, &price, &marginal, &lex_opts)?;
        if !best.first.is_optimal() || !best.second.is_optimal() {
            return Err(Error::Internal(format!(
                "storage `{}` best response is not optimal",
                unit.id
            )));
        }
        report.checked += 1;
        let cost_central = LinearProgram::eval(&price, &central);
        let scale = 1.0 + best.primary_value.abs();
        if cost_central > best.primary_value + tol * scale {
            report.violations.push(Violation {
                entity: unit.id.clone(),
                check: "storage price tier".into(),
                amount: cost_central - best.primary_value,
            });
            continue;
        }
        let em_central = LinearProgram::eval(&marginal, &central);
        if em_central > best.secondary_value + tol * (1.0 + best.secondary_value.abs()) {
            report.violations.push(Violation {
                entity: unit.id.clone(),
                check: "storage emission tier".into(),
                amount: em_central - best.secondary_value,
            });
        }

        // Swap in the decentralized optimum and re-dispatch everything else.
        let alt_c: Vec<f64> = block.charge[0].iter().map(|&v| best.second.value(v)).collect();
        let alt_d: Vec<f64> = block.discharge[0].iter().map(|&v| best.second.value(v)).collect();
        let model = build_storage_dcopf(net, horizon);
        let mut fixed = model.lp.clone();
        fix_schedule(&mut fixed, &model.storage, s, &alt_c, &alt_d);
        let mut sigma = vec![0.0; fixed.num_vars()];
        for b in &model.periods {
            for (g, &v) in b.gen.iter().enumerate() {
                sigma[v.0] = net.generators()[g].emission_rate;
            }
        }
        let cost = fixed.objective();
        let alt = lexicographic_solve(&fixed, &cost, &sigma, &lex_opts)?;
        if !alt.first.is_optimal() {
            report.infeasible_selections += 1;
            continue;
        }
        report.selections += 1;
        let c0 = result.dispatch.cost;
        let e0 = result.emissions;
        if alt.primary_value < c0 - tol * (1.0 + c0.abs()) {
            report.violations.push(Violation {
                entity: unit.id.clone(),
                check: "alternative schedule lowers cost".into(),
                amount: c0 - alt.primary_value,
            });
        } else if (alt.primary_value - c0).abs() <= tol * (1.0 + c0.abs())
            && alt.secondary_value < e0 - tol * (1.0 + e0.abs())
        {
            report.violations.push(Violation {
                entity: unit.id.clone(),
                check: "alternative schedule lowers emissions".into(),
                amount: e0 - alt.secondary_value,
            });
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::combined::{lme, solve_combined};
    use crate::dispatch::solve_dcopf;
    use crate::fixtures;

    #[test]
    fn single_period_without_storage_matches_dispatch() {
        let net = fixtures::two_bus_transmission();
        let h = Horizon::repeat(&net, 1);
        let multi = solve_storage_dcopf(&net, &h).unwrap();
        let single = solve_dcopf(&net).unwrap();
        assert_eq!(multi.periods[0].generation, single.generation);
        assert_eq!(multi.cost, single.cost);
        let mc = solve_storage_combined(&net, &h).unwrap();
        let sc = solve_combined(&net).unwrap();
        for (a, b) in mc.lme[0].iter().zip(lme(&sc).0) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn golden_storage_dispatch() {
        let (net, h) = fixtures::two_bus_storage();
        let r = solve_storage_combined(&net, &h).unwrap();
        assert!((r.dispatch.charge[0][0] - 50.0).abs() < 1e-7, "{:?}", r.dispatch.charge);
        assert!((r.dispatch.discharge[0][1] - 50.0).abs() < 1e-7);
        assert!(r.dispatch.periods[1].flow[0].abs() < 1e-7);
        for t in 0..2 {
            for v in &r.lme[t] {
                assert!((v - 1.0).abs() < 1e-7, "{:?}", r.lme);
            }
        }
        assert!((r.emissions - 200.0).abs() < 1e-7);
    }

    #[test]
    fn golden_storage_baseline() {
        let (net, h) = fixtures::two_bus_storage();
        let net = net.without_storage();
        let h = Horizon {
            initial_soc: vec![],
            ..h
        };
        let r = solve_storage_combined(&net, &h).unwrap();
        assert!(r.lme[0][0].abs() < 1e-7 && (r.lme[0][1] - 1.0).abs() < 1e-7);
        assert!((r.lme[1][0] - 1.0).abs() < 1e-7 && (r.lme[1][1] - 1.0).abs() < 1e-7);
    }

    #[test]
    fn lossy_round_trip() {
        let net = Network::new(
            vec![crate::network::Node {
                id: "n".into(),
                demand: 0.0,
            }],
            vec![],
            vec![
                crate::network::Generator {
                    id: "cheap".into(),
                    node: "n".into(),
                    cost: 1.0,
                    emission_rate: 0.0,
                    p_min: 0.0,
                    p_max: 100.0,
                    kind: None,
                },
                crate::network::Generator {
                    id: "dear".into(),
                    node: "n".into(),
                    cost: 100.0,
                    emission_rate: 1.0,
                    p_min: 0.0,
                    p_max: 100.0,
                    kind: None,
                },
            ],
            vec![crate::network::StorageUnit {
                id: "b".into(),
                node: "n".into(),
                e_max: 81.0,
                efficiency: 0.9,
                power_cap: None,
            }],
            "n",
        )
        .unwrap();
        let h = Horizon {
            demands: vec![vec![0.0], vec![50.0]],
            capacity_factors: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            initial_soc: vec![0.0],
        };
        let r = solve_storage_dcopf(&net, &h).unwrap();
        // Delivered energy is η² times the charged energy over a full cycle.
        assert!((r.discharge[0][1] - 50.0).abs() < 1e-7);
        assert!((r.charge[0][0] - 50.0 / 0.81).abs() < 1e-7, "{:?}", r.charge);
        assert!((r.soc[0][1] - 50.0 / 0.9).abs() < 1e-7);
        assert!(r.soc[0][2].abs() < 1e-7);
        assert!(r.charge[0][1].abs() < 1e-9 && r.discharge[0][0].abs() < 1e-9);
    }

    #[test]
    fn horizon_csv_round_trip() {
        let (net, _) = fixtures::two_bus_storage();
        let demand = "period,node_id,demand_mw\n1,bus1,50\n1,bus2,150\n2,bus1,50\n2,bus2,150\n";
        let caps = "period,generator_id,capacity_factor\n2,G1,0\n";
        let (h, labels) = Horizon::from_csv(&net, demand, Some(caps)).unwrap();
        assert_eq!(labels, vec![1, 2]);
        assert_eq!(h, fixtures::two_bus_storage().1);
    }

    #[test]
    fn horizon_csv_requires_every_node() {
        let (net, _) = fixtures::two_bus_storage();
        let demand = "period,node_id,demand_mw\n1,bus1,50\n";
        assert!(matches!(Horizon::from_csv(&net, demand, None), Err(Error::Input(_))));
    }

    #[test]
    fn windows_cover_the_horizon() {
        let net = fixtures::two_bus_transmission();
        let h = Horizon::repeat(&net, 50);
        let w = h.windows(24);
        assert_eq!(w.iter().map(|(s, _)| *s).collect::<Vec<_>>(), vec![0, 24, 48]);
        assert_eq!(w.iter().map(|(_, h)| h.periods()).sum::<usize>(), 50);
    }

    #[test]
    fn golden_storage_equilibrium_is_clean() {
        let (net, h) = fixtures::two_bus_storage();
        let r = solve_storage_combined(&net, &h).unwrap();
        let rep = check_storage_equilibrium(&net, &h, &r, 1e-6).unwrap();
        assert!(rep.violations.is_empty(), "{rep:?}");
    }

    #[test]
    fn flat_prices_leave_storage_idle() {
        let (net, _) = fixtures::two_bus_storage();
        let h = Horizon::repeat(&net, 1);
        let r = solve_storage_combined(&net, &h).unwrap();
        assert!(r.dispatch.charge[0][0].abs() < 1e-9 && r.dispatch.discharge[0][0].abs() < 1e-9);
        let rep = check_storage_equilibrium(&net, &h, &r, 1e-6).unwrap();
        assert!(rep.violations.is_empty());
    }
}
