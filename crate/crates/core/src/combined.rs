//! The two-layer combined model: minimize emissions over the cost-optimal
//! face of the dispatch problem, and read marginal emissions off its duals.
//!
//! The cost-optimal face is encoded without a second solve. The first-layer
//! LP (all variables free, every bound an explicit row) is copied verbatim,
//! its dual variables `y` are adjoined with their sign restrictions, the dual
//! feasibility rows `Aᵀy = c` are added, and one strong-duality row
//!
//! ```text
//! cᵀx − bᵀy ≤ 0
//! ```
//!
//! pins `x` to the optimal face. With `p` the duals of the copied primal rows
//! and `p_o` the dual of the strong-duality row, the marginal emission rate of
//! demand at node `i` is `p_π,i + p_o·π_i`: demand enters both as the balance
//! right-hand side and as the coefficient of `π_i` in the strong-duality row.

use crate::dispatch::{add_period_block, solve_dcopf_with, status_error, DispatchResult, PeriodBlock};
use crate::error::{Error, Result};
use crate::lp::{
    lexicographic_solve, solve_lp_with, LexOptions, LinearProgram, LpSolution, RowId, Sense, SolverOptions, VarId,
};
use crate::network::Network;
use serde::Serialize;

/// A first-layer LP with its dual system and strong-duality row adjoined.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoLayerLp {
    pub lp: LinearProgram,
    /// Embedded dual variable of each first-layer row (same index as the row).
    pub row_dual: Vec<VarId>,
    /// Dual-feasibility row of each first-layer variable.
    pub var_row: Vec<RowId>,
    pub strong_duality: RowId,
    /// The strong-duality row is divided by this before solving.
    pub sd_scale: f64,
}

impl TwoLayerLp {
    /// Dualize `first` and attach `secondary` as the objective.
    ///
    /// Every variable of `first` must be free. `sd_scale` is clamped to ≥ 1.
    pub fn build(first: &LinearProgram, secondary: &[f64], sd_scale: f64) -> Self {
        assert_eq!(secondary.len(), first.num_vars(), "secondary objective length");
        assert!(
            first
                .vars
                .iter()
                .all(|v| v.lower == f64::NEG_INFINITY && v.upper == f64::INFINITY),
            "first-layer variables must be free; express bounds as rows"
        );
        let sd_scale = sd_scale.max(1.0);
        let mut lp = LinearProgram::new();
        for (v, &s) in first.vars.iter().zip(secondary) {
            lp.free_var(v.name.clone(), s);
        }
        for r in &first.rows {
            lp.add_row(r.name.clone(), r.coeffs.clone(), r.sense, r.rhs);
        }
        let row_dual: Vec<VarId> = first
            .rows
            .iter()
            .map(|r| {
                let (lo, hi) = match r.sense {
                    Sense::Eq => (f64::NEG_INFINITY, f64::INFINITY),
                    Sense::Le => (f64::NEG_INFINITY, 0.0),
                    Sense::Ge => (0.0, f64::INFINITY),
                };
                lp.add_var(format!("dual:{}", r.name), lo, hi, 0.0)
            })
            .collect();
        let mut columns: Vec<Vec<(VarId, f64)>> = vec![Vec::new(); first.num_vars()];
        for (ri, r) in first.rows.iter().enumerate() {
            for &(v, a) in &r.coeffs {
                columns[v.0].push((row_dual[ri], a));
            }
        }
        let var_row = columns
            .into_iter()
            .enumerate()
            .map(|(j, col)| {
                lp.add_row(
                    format!("stationarity:{}", first.vars[j].name),
                    col,
                    Sense::Eq,
                    first.vars[j].cost,
                )
            })
            .collect();
        let mut sd = Vec::new();
        for (j, v) in first.vars.iter().enumerate() {
            if v.cost != 0.0 {
                sd.push((VarId(j), v.cost / sd_scale));
            }
        }
        for (ri, r) in first.rows.iter().enumerate() {
            if r.rhs != 0.0 {
                sd.push((row_dual[ri], -r.rhs / sd_scale));
            }
        }
        let strong_duality = lp.add_row("strong_duality", sd, Sense::Le, 0.0);
        Self {
            lp,
            row_dual,
            var_row,
            strong_duality,
            sd_scale,
        }
    }

    /// Dual of the strong-duality row in the unscaled row's units.
    pub fn p_o(&self, sol: &LpSolution) -> f64 {
        sol.dual(self.strong_duality) / self.sd_scale
    }

    /// Value of the embedded first-layer dual of row `r`.
    pub fn inner_dual(&self, sol: &LpSolution, r: RowId) -> f64 {
        sol.value(self.row_dual[r.0])
    }
}

/// Outer duals attached to one period's rows.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OuterDuals {
    pub p_pi: Vec<f64>,
    pub p_rho_plus: Vec<f64>,
    pub p_rho_minus: Vec<f64>,
    pub p_gamma_plus: Vec<f64>,
    pub p_gamma_minus: Vec<f64>,
    pub p_z: Vec<f64>,
    pub p_angle_ref: f64,
}

impl OuterDuals {
    pub(crate) fn from_solution(block: &PeriodBlock, sol: &LpSolution) -> Self {
        let d = |rows: &[RowId]| rows.iter().map(|&r| sol.dual(r)).collect::<Vec<_>>();
        Self {
            p_pi: d(&block.balance),
            p_rho_plus: d(&block.flow_max),
            p_rho_minus: d(&block.flow_min),
            p_gamma_plus: d(&block.gen_max),
            p_gamma_minus: d(&block.gen_min),
            p_z: d(&block.kvl),
            p_angle_ref: sol.dual(block.angle_ref),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CombinedModel {
    pub layers: TwoLayerLp,
    pub block: PeriodBlock,
}

/// Build the combined model. `cost_scale` normalizes the strong-duality row;
/// pass the first-layer optimal cost magnitude (values ≤ 1 leave it as is).
pub fn build_combined(net: &Network, cost_scale: f64) -> CombinedModel {
    let mut first = LinearProgram::new();
    let caps: Vec<f64> = net.generators().iter().map(|g| g.p_max).collect();
    let block = add_period_block(&mut first, net, &net.demands(), &caps, "");
    let mut sigma = vec![0.0; first.num_vars()];
    for (g, &v) in block.gen.iter().enumerate() {
        sigma[v.0] = net.generators()[g].emission_rate;
    }
    CombinedModel {
        layers: TwoLayerLp::build(&first, &sigma, cost_scale.abs()),
        block,
    }
}

/// Emission-optimal dispatch with embedded first-layer duals and outer duals.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CombinedResult {
    /// Dispatch primal plus the embedded π, ρ±, γ±, z values.
    pub dispatch: DispatchResult,
    pub emissions: f64,
    pub outer: OuterDuals,
    /// Dual of the strong-duality row.
    pub p_o: f64,
    /// Optimal cost of the stand-alone dispatch problem.
    pub first_layer_cost: f64,
}

pub fn solve_combined(net: &Network) -> Result<CombinedResult> {
    solve_combined_with(net, &SolverOptions::default())
}

pub fn solve_combined_with(net: &Network, opts: &SolverOptions) -> Result<CombinedResult> {
    let first = solve_dcopf_with(net, opts)?;
    let model = build_combined(net, first.cost);
    let sol = solve_lp_with(&model.layers.lp, opts)?;
    if !sol.is_optimal() {
        return Err(Error::Internal(format!(
            "combined model reported {:?} although the dispatch problem is optimal",
            sol.status
        )));
    }
    let costs: Vec<f64> = net.generators().iter().map(|g| g.cost).collect();
    let layers = &model.layers;
    let dispatch = DispatchResult::from_values(&model.block, |v| sol.value(v), |r| layers.inner_dual(&sol, r), &costs);
    let emissions = dispatch.emissions(net);
    Ok(CombinedResult {
        dispatch,
        emissions,
        outer: OuterDuals::from_solution(&model.block, &sol),
        p_o: layers.p_o(&sol),
        first_layer_cost: first.cost,
    })
}

/// Marginal emission rate per node, kgCO2/MWh.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodalLme(pub Vec<f64>);

/// Shadow carbon intensity per line, kgCO2/MWh.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LineSci(pub Vec<f64>);

pub(crate) fn lme_from(p_pi: &[f64], pi: &[f64], p_o: f64) -> Vec<f64> {
    p_pi.iter().zip(pi).map(|(pp, p)| pp + p_o * p).collect()
}

pub(crate) fn sci_from(outer: &OuterDuals, d: &DispatchResult, p_o: f64) -> Vec<f64> {
    (0..d.flow.len())
        .map(|l| outer.p_rho_plus[l] - outer.p_rho_minus[l] + p_o * (d.rho_plus[l] - d.rho_minus[l]))
        .collect()
}

pub fn lme(result: &CombinedResult) -> NodalLme {
    NodalLme(lme_from(&result.outer.p_pi, &result.dispatch.lmp, result.p_o))
}

pub fn sci(result: &CombinedResult) -> LineSci {
    LineSci(sci_from(&result.outer, &result.dispatch, result.p_o))
}

/// Total emissions `E(P^D)` for the given demands, computed by a two-stage
/// lexicographic solve that never touches the dualized model.
pub fn emissions_at(net: &Network, demands: &[f64]) -> Result<f64> {
    emissions_at_with(net, demands, &LexOptions::default())
}

pub fn emissions_at_with(net: &Network, demands: &[f64], opts: &LexOptions) -> Result<f64> {
    let (lp, cost, sigma) = dispatch_objectives(&net.with_demands(demands));
    let lex = lexicographic_solve(&lp, &cost, &sigma, opts)?;
    if !lex.first.is_optimal() {
        return Err(status_error(lex.first.status, "perturbed dispatch"));
    }
    if !lex.second.is_optimal() {
        return Err(Error::Internal(
            "second lexicographic stage failed on a feasible face".into(),
        ));
    }
    Ok(lex.secondary_value)
}

/// The dispatch LP with its cost and emissions objective vectors.
pub fn dispatch_objectives(net: &Network) -> (LinearProgram, Vec<f64>, Vec<f64>) {
    let model = crate::dispatch::build_dcopf(net);
    let cost = model.lp.objective();
    let mut sigma = vec![0.0; model.lp.num_vars()];
    for (g, &v) in model.block.gen.iter().enumerate() {
        sigma[v.0] = net.generators()[g].emission_rate;
    }
    (model.lp, cost, sigma)
}
