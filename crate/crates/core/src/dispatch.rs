//! Single-period DC optimal power flow: the cost-minimizing first layer.
//!
//! ```text
//! min  Σ c_g P_g
//! s.t. B_ℓ(θ_i − θ_j) − f_ℓ = 0                     [z_ℓ]     per line ℓ = (i, j)
//!      Σ_{g∈G_i} P_g − Σ_out f + Σ_in f = P^D_i       [π_i]     per node
//!      f_ℓ ≤ f_max                                     [ρ⁺_ℓ ≤ 0]
//!      f_ℓ ≥ −f_max                                    [ρ⁻_ℓ ≥ 0]
//!      P_g ≤ p_max                                     [γ⁺_g ≤ 0]
//!      P_g ≥ p_min                                     [γ⁻_g ≥ 0]
//!      θ_ref = 0                                       [μ]
//! ```
//!
//! All variables are free; every bound is an explicit row so that each one
//! carries a named dual. The reference-angle row removes the angle null
//! space. Its dual is always zero at optimum (the angle stationarity rows
//! sum to it) and it is never used in an emissions formula.

use crate::error::{Error, Result};
use crate::lp::{solve_lp_with, LinearProgram, LpSolution, LpStatus, RowId, Sense, SolverOptions, VarId};
use crate::network::Network;
use serde::Serialize;

/// Variable and row handles of one period of the dispatch model.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodBlock {
    pub gen: Vec<VarId>,
    pub flow: Vec<VarId>,
    pub angle: Vec<VarId>,
    pub balance: Vec<RowId>,
    pub kvl: Vec<RowId>,
    pub flow_max: Vec<RowId>,
    pub flow_min: Vec<RowId>,
    pub gen_max: Vec<RowId>,
    pub gen_min: Vec<RowId>,
    pub angle_ref: RowId,
}

/// Append one period of network constraints to `lp`.
///
/// `demands` and `p_max` override the network's own values for this period.
pub(crate) fn add_period_block(
    lp: &mut LinearProgram,
    net: &Network,
    demands: &[f64],
    p_max: &[f64],
    tag: &str,
) -> PeriodBlock {
    let gen: Vec<VarId> = net
        .generators()
        .iter()
        .map(|g| lp.free_var(format!("P[{}]{tag}", g.id), g.cost))
        .collect();
    let flow: Vec<VarId> = net
        .lines()
        .iter()
        .map(|l| lp.free_var(format!("f[{}]{tag}", l.id), 0.0))
        .collect();
    let angle: Vec<VarId> = net
        .nodes()
        .iter()
        .map(|n| lp.free_var(format!("theta[{}]{tag}", n.id), 0.0))
        .collect();

    let kvl = net
        .lines()
        .iter()
        .enumerate()
        .map(|(l, line)| {
            let (i, j) = net.line_ends(l);
            let b = line.susceptance;
            lp.add_row(
                format!("kvl[{}]{tag}", line.id),
                vec![(angle[i], b), (angle[j], -b), (flow[l], -1.0)],
                Sense::Eq,
                0.0,
            )
        })
        .collect();

    let mut terms: Vec<Vec<(VarId, f64)>> = vec![Vec::new(); net.num_nodes()];
    for (g, &v) in gen.iter().enumerate() {
        terms[net.generator_node(g)].push((v, 1.0));
    }
    for (l, &v) in flow.iter().enumerate() {
        let (i, j) = net.line_ends(l);
        terms[i].push((v, -1.0));
        terms[j].push((v, 1.0));
    }
    let balance = terms
        .into_iter()
        .enumerate()
        .map(|(i, t)| lp.add_row(format!("balance[{}]{tag}", net.nodes()[i].id), t, Sense::Eq, demands[i]))
        .collect();

    let mut flow_max = Vec::with_capacity(flow.len());
    let mut flow_min = Vec::with_capacity(flow.len());
    for (l, line) in net.lines().iter().enumerate() {
        flow_max.push(lp.add_row(
            format!("fmax[{}]{tag}", line.id),
            vec![(flow[l], 1.0)],
            Sense::Le,
            line.f_max,
        ));
        flow_min.push(lp.add_row(
            format!("fmin[{}]{tag}", line.id),
            vec![(flow[l], 1.0)],
            Sense::Ge,
            -line.f_max,
        ));
    }
    let mut gen_max = Vec::with_capacity(gen.len());
    let mut gen_min = Vec::with_capacity(gen.len());
    for (g, unit) in net.generators().iter().enumerate() {
        gen_max.push(lp.add_row(
            format!("pmax[{}]{tag}", unit.id),
            vec![(gen[g], 1.0)],
            Sense::Le,
            p_max[g],
        ));
        gen_min.push(lp.add_row(
            format!("pmin[{}]{tag}", unit.id),
            vec![(gen[g], 1.0)],
            Sense::Ge,
            unit.p_min.min(p_max[g]),
        ));
    }
    let angle_ref = lp.add_row(
        format!("theta_ref{tag}"),
        vec![(angle[net.reference_node()], 1.0)],
        Sense::Eq,
        0.0,
    );
    PeriodBlock {
        gen,
        flow,
        angle,
        balance,
        kvl,
        flow_max,
        flow_min,
        gen_max,
        gen_min,
        angle_ref,
    }
}

/// A built dispatch model and its index map.
#[derive(Debug, Clone, PartialEq)]
pub struct DcopfModel {
    pub lp: LinearProgram,
    pub block: PeriodBlock,
}

pub fn build_dcopf(net: &Network) -> DcopfModel {
    let mut lp = LinearProgram::new();
    let caps: Vec<f64> = net.generators().iter().map(|g| g.p_max).collect();
    let block = add_period_block(&mut lp, net, &net.demands(), &caps, "");
    DcopfModel { lp, block }
}

/// Primal dispatch plus every dual of the dispatch model.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DispatchResult {
    pub generation: Vec<f64>,
    pub flow: Vec<f64>,
    pub angle: Vec<f64>,
    pub cost: f64,
    /// Nodal prices π (LMP).
    pub lmp: Vec<f64>,
    pub rho_plus: Vec<f64>,
    pub rho_minus: Vec<f64>,
    pub gamma_plus: Vec<f64>,
    pub gamma_minus: Vec<f64>,
    pub z: Vec<f64>,
    /// Dual of the reference-angle row; not part of any emissions formula.
    pub angle_ref_dual: f64,
}

impl DispatchResult {
    pub(crate) fn from_values(
        block: &PeriodBlock,
        primal: impl Fn(VarId) -> f64,
        dual: impl Fn(RowId) -> f64,
        costs: &[f64],
    ) -> Self {
        let generation: Vec<f64> = block.gen.iter().map(|&v| primal(v)).collect();
        let cost = generation.iter().zip(costs).map(|(p, c)| p * c).sum();
        DispatchResult {
            flow: block.flow.iter().map(|&v| primal(v)).collect(),
            angle: block.angle.iter().map(|&v| primal(v)).collect(),
            cost,
            lmp: block.balance.iter().map(|&r| dual(r)).collect(),
            // Clamp round-off so the sign convention holds exactly.
            rho_plus: block.flow_max.iter().map(|&r| dual(r).min(0.0)).collect(),
            rho_minus: block.flow_min.iter().map(|&r| dual(r).max(0.0)).collect(),
            gamma_plus: block.gen_max.iter().map(|&r| dual(r).min(0.0)).collect(),
            gamma_minus: block.gen_min.iter().map(|&r| dual(r).max(0.0)).collect(),
            z: block.kvl.iter().map(|&r| dual(r)).collect(),
            angle_ref_dual: dual(block.angle_ref),
            generation,
        }
    }

    /// Dual objective `πᵀP^D + (ρ⁺ − ρ⁻)ᵀf_max + γ⁺ᵀp_max + γ⁻ᵀp_min`.
    pub fn dual_objective(&self, net: &Network) -> f64 {
        let mut v: f64 = self.lmp.iter().zip(net.nodes()).map(|(p, n)| p * n.demand).sum();
        for (l, line) in net.lines().iter().enumerate() {
            v += (self.rho_plus[l] - self.rho_minus[l]) * line.f_max;
        }
        for (g, unit) in net.generators().iter().enumerate() {
            v += self.gamma_plus[g] * unit.p_max + self.gamma_minus[g] * unit.p_min;
        }
        v
    }

    pub fn emissions(&self, net: &Network) -> f64 {
        self.generation
            .iter()
            .zip(net.generators())
            .map(|(p, g)| p * g.emission_rate)
            .sum()
    }
}

pub(crate) fn status_error(status: LpStatus, what: &str) -> Error {
    match status {
        LpStatus::Infeasible => Error::Infeasible(format!("{what} has no feasible dispatch")),
        LpStatus::Unbounded => Error::Unbounded(format!("{what} is unbounded")),
        LpStatus::Optimal => unreachable!("optimal status is not an error"),
    }
}

pub fn solve_dcopf(net: &Network) -> Result<DispatchResult> {
    solve_dcopf_with(net, &SolverOptions::default())
}

pub fn solve_dcopf_with(net: &Network, opts: &SolverOptions) -> Result<DispatchResult> {
    let model = build_dcopf(net);
    let sol = solve_lp_with(&model.lp, opts)?;
    if !sol.is_optimal() {
        return Err(status_error(sol.status, "dispatch"));
    }
    Ok(extract(&model, &sol, net))
}

fn extract(model: &DcopfModel, sol: &LpSolution, net: &Network) -> DispatchResult {
    let costs: Vec<f64> = net.generators().iter().map(|g| g.cost).collect();
    DispatchResult::from_values(&model.block, |v| sol.value(v), |r| sol.dual(r), &costs)
}
