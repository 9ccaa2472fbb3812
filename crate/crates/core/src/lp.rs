//! Solver-agnostic linear programs and a bounded-variable primal simplex.
//!
//! Every model in this crate is expressed as a [`LinearProgram`] in
//! minimization form:
//!
//! ```text
//! min  cᵀx
//! s.t. aᵣᵀx {=, ≤, ≥} bᵣ     for every row r
//!      lⱼ ≤ xⱼ ≤ uⱼ          for every variable j
//! ```
//!
//! [`solve_lp`] returns basic optimal solutions together with a row dual and a
//! reduced cost for every variable. Duals follow the sensitivity convention
//! `yᵣ = ∂(optimal value)/∂bᵣ`, so for a minimization `≤` rows carry `yᵣ ≤ 0`
//! and `≥` rows carry `yᵣ ≥ 0`. This is exactly the sign ledger the dispatch
//! and combined models rely on.
//!
//! The solver is a dense-tableau simplex with explicit bounds. Pricing is
//! Dantzig (largest reduced cost, lowest index on ties); after a run of
//! degenerate pivots it falls back to Bland's lowest-index rule until the
//! objective moves again. The basis is re-factorized from the original
//! columns periodically and once more at termination, so the reported primal
//! and dual values come from a fresh LU solve rather than the tableau.

#![allow(clippy::needless_range_loop)]

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::fmt;

/// Index of a variable inside a [`LinearProgram`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VarId(pub usize);

/// Index of a constraint row inside a [`LinearProgram`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RowId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    #[serde(rename = "=")]
    Eq,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">=")]
    Ge,
}

impl fmt::Display for Sense {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sense::Eq => "=",
            Sense::Le => "<=",
            Sense::Ge => ">=",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    #[serde(with = "lower_bound")]
    pub lower: f64,
    #[serde(with = "upper_bound")]
    pub upper: f64,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub name: String,
    pub coeffs: Vec<(VarId, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

/// A linear program in minimization form.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LinearProgram {
    pub vars: Vec<Variable>,
    pub rows: Vec<Row>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LpError {
    #[error("malformed linear program: {0}")]
    Malformed(String),
    #[error("numerical failure in simplex: {0}")]
    Numerical(String),
    #[error("simplex iteration limit ({0}) reached")]
    IterationLimit(usize),
}

impl LinearProgram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_var(&mut self, name: impl Into<String>, lower: f64, upper: f64, cost: f64) -> VarId {
        self.vars.push(Variable {
            name: name.into(),
            lower,
            upper,
            cost,
        });
        VarId(self.vars.len() - 1)
    }

    pub fn free_var(&mut self, name: impl Into<String>, cost: f64) -> VarId {
        self.add_var(name, f64::NEG_INFINITY, f64::INFINITY, cost)
    }

    pub fn add_row(&mut self, name: impl Into<String>, coeffs: Vec<(VarId, f64)>, sense: Sense, rhs: f64) -> RowId {
        self.rows.push(Row {
            name: name.into(),
            coeffs,
            sense,
            rhs,
        });
        RowId(self.rows.len() - 1)
    }

    /// Append a term to an existing row.
    pub fn add_term(&mut self, row: RowId, var: VarId, coeff: f64) {
        self.rows[row.0].coeffs.push((var, coeff));
    }

    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn objective(&self) -> Vec<f64> {
        self.vars.iter().map(|v| v.cost).collect()
    }

    /// Replace every objective coefficient. Panics if the length differs.
    pub fn set_objective(&mut self, costs: &[f64]) {
        assert_eq!(costs.len(), self.vars.len(), "objective length mismatch");
        for (v, &c) in self.vars.iter_mut().zip(costs) {
            v.cost = c;
        }
    }

    /// Value of an arbitrary linear expression `wᵀx`.
    pub fn eval(weights: &[f64], x: &[f64]) -> f64 {
        weights.iter().zip(x).map(|(w, v)| w * v).sum()
    }

    pub fn row_activity(&self, row: RowId, x: &[f64]) -> f64 {
        self.rows[row.0].coeffs.iter().map(|(v, a)| a * x[v.0]).sum()
    }

    pub fn validate(&self) -> Result<(), LpError> {
        for v in &self.vars {
            if v.lower.is_nan() || v.upper.is_nan() || v.lower > v.upper {
                return Err(LpError::Malformed(format!(
                    "variable {} has bounds [{}, {}]",
                    v.name, v.lower, v.upper
                )));
            }
            if v.lower == f64::INFINITY || v.upper == f64::NEG_INFINITY {
                return Err(LpError::Malformed(format!("variable {} has an empty domain", v.name)));
            }
            if !v.cost.is_finite() {
                return Err(LpError::Malformed(format!("variable {} has non-finite cost", v.name)));
            }
        }
        for r in &self.rows {
            if !r.rhs.is_finite() {
                return Err(LpError::Malformed(format!("row {} has non-finite rhs", r.name)));
            }
            for (v, a) in &r.coeffs {
                if v.0 >= self.vars.len() {
                    return Err(LpError::Malformed(format!(
                        "row {} references undeclared variable {}",
                        r.name, v.0
                    )));
                }
                if !a.is_finite() {
                    return Err(LpError::Malformed(format!(
                        "row {} has a non-finite coefficient",
                        r.name
                    )));
                }
            }
        }
        Ok(())
    }

    /// JSON dump of the model, suitable for debugging and exact reload.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("LP serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, LpError> {
        let lp: LinearProgram = serde_json::from_str(text).map_err(|e| LpError::Malformed(e.to_string()))?;
        lp.validate()?;
        Ok(lp)
    }
}

// Infinite bounds are written as `null`; JSON has no infinity literal.
mod lower_bound {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_some(v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NEG_INFINITY))
    }
}

mod upper_bound {
    use serde::{Deserialize, Deserializer};

    pub use super::lower_bound::serialize;

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    pub objective: f64,
    pub primal: Vec<f64>,
    /// One dual per row, `∂objective/∂rhs`.
    pub duals: Vec<f64>,
    /// `cⱼ − yᵀAⱼ` for every variable.
    pub reduced_costs: Vec<f64>,
    pub iterations: usize,
}

impl LpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }

    pub fn value(&self, v: VarId) -> f64 {
        self.primal[v.0]
    }

    pub fn dual(&self, r: RowId) -> f64 {
        self.duals[r.0]
    }

    fn non_optimal(status: LpStatus, n: usize, m: usize, iterations: usize) -> Self {
        Self {
            status,
            objective: f64::NAN,
            primal: vec![f64::NAN; n],
            duals: vec![f64::NAN; m],
            reduced_costs: vec![f64::NAN; n],
            iterations,
        }
    }
}

/// Optimality-condition residuals of a solution, all in absolute terms.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct KktResiduals {
    pub primal_infeasibility: f64,
    pub dual_sign_violation: f64,
    pub complementary_slackness: f64,
    pub duality_gap: f64,
    /// Largest magnitude among rhs, costs and primal values; used to relativize.
    pub scale: f64,
}

impl KktResiduals {
    pub fn max_relative(&self) -> f64 {
        let worst = self
            .primal_infeasibility
            .max(self.dual_sign_violation)
            .max(self.complementary_slackness)
            .max(self.duality_gap);
        worst / (1.0 + self.scale)
    }
}

/// Recompute every optimality condition of `sol` directly from the model data.
pub fn kkt_residuals(lp: &LinearProgram, sol: &LpSolution) -> KktResiduals {
    let x = &sol.primal;
    let mut res = KktResiduals::default();
    let mut scale: f64 = 0.0;
    for v in x {
        scale = scale.max(v.abs());
    }
    for r in &lp.rows {
        scale = scale.max(r.rhs.abs());
    }
    for v in &lp.vars {
        scale = scale.max(v.cost.abs());
    }
    for y in &sol.duals {
        scale = scale.max(y.abs());
    }
    res.scale = scale;

    let mut dual_obj = 0.0;
    for (i, r) in lp.rows.iter().enumerate() {
        let act: f64 = r.coeffs.iter().map(|(v, a)| a * x[v.0]).sum();
        let slack = r.rhs - act;
        let y = sol.duals[i];
        let viol = match r.sense {
            Sense::Eq => slack.abs(),
            Sense::Le => (-slack).max(0.0),
            Sense::Ge => slack.max(0.0),
        };
        res.primal_infeasibility = res.primal_infeasibility.max(viol);
        let sign = match r.sense {
            Sense::Eq => 0.0,
            Sense::Le => y.max(0.0),
            Sense::Ge => (-y).max(0.0),
        };
        res.dual_sign_violation = res.dual_sign_violation.max(sign);
        if r.sense != Sense::Eq {
            res.complementary_slackness = res.complementary_slackness.max((y * slack).abs());
        }
        dual_obj += y * r.rhs;
    }
    for (j, v) in lp.vars.iter().enumerate() {
        let d = sol.reduced_costs[j];
        let xj = x[j];
        res.primal_infeasibility = res
            .primal_infeasibility
            .max((v.lower - xj).max(0.0))
            .max((xj - v.upper).max(0.0));
        // d > 0 needs x at lower, d < 0 needs x at upper.
        let cs = if d > 0.0 {
            if v.lower.is_finite() {
                d * (xj - v.lower)
            } else {
                d.abs() * (1.0 + xj.abs())
            }
        } else if d < 0.0 {
            if v.upper.is_finite() {
                -d * (v.upper - xj)
            } else {
                d.abs() * (1.0 + xj.abs())
            }
        } else {
            0.0
        };
        res.complementary_slackness = res.complementary_slackness.max(cs.abs());
        if d > 0.0 && v.lower.is_finite() {
            dual_obj += d * v.lower;
        } else if d < 0.0 && v.upper.is_finite() {
            dual_obj += d * v.upper;
        } else {
            dual_obj += d * xj;
        }
    }
    let primal_obj: f64 = lp.vars.iter().zip(x).map(|(v, xj)| v.cost * xj).sum();
    res.duality_gap = (primal_obj - dual_obj).abs();
    res
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Optimality and feasibility tolerance on the scaled problem.
    pub tol: f64,
    pub max_iterations: usize,
    /// Power-of-two geometric row/column equilibration before solving.
    pub scaling: bool,
    /// Consecutive degenerate pivots tolerated before switching to Bland's rule.
    pub degenerate_switch: usize,
    pub refactor_every: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iterations: 200_000,
            scaling: true,
            degenerate_switch: 40,
            refactor_every: 100,
        }
    }
}

impl SolverOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self { tol, ..Self::default() }
    }
}

/// Solve `lp` with default options and the given tolerance.
pub fn solve_lp(lp: &LinearProgram, tol: f64) -> Result<LpSolution, LpError> {
    solve_lp_with(lp, &SolverOptions::with_tol(tol))
}

pub fn solve_lp_with(lp: &LinearProgram, opts: &SolverOptions) -> Result<LpSolution, LpError> {
    lp.validate()?;
    let scaled = ScaledProblem::new(lp, opts.scaling);
    let mut simplex = Simplex::new(&scaled, opts);
    let outcome = simplex.run()?;
    let n = lp.num_vars();
    let m = lp.num_rows();
    match outcome {
        LpStatus::Optimal => {}
        other => return Ok(LpSolution::non_optimal(other, n, m, simplex.iterations)),
    }
    let (xs, ys, ds) = simplex.extract();
    let primal: Vec<f64> = (0..n).map(|j| xs[j] * scaled.col_scale[j]).collect();
    let duals: Vec<f64> = (0..m).map(|i| ys[i] * scaled.row_scale[i]).collect();
    let reduced_costs: Vec<f64> = (0..n).map(|j| ds[j] / scaled.col_scale[j]).collect();
    let objective = lp.vars.iter().zip(&primal).map(|(v, x)| v.cost * x).sum();
    Ok(LpSolution {
        status: LpStatus::Optimal,
        objective,
        primal,
        duals,
        reduced_costs,
        iterations: simplex.iterations,
    })
}

/// Options for [`lexicographic_solve`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LexOptions {
    pub solver: SolverOptions,
    /// Slack added to the primary optimum in the second stage.
    pub delta: f64,
}

impl Default for LexOptions {
    fn default() -> Self {
        Self {
            solver: SolverOptions::default(),
            delta: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LexSolution {
    pub first: LpSolution,
    /// Optimal value of the primary objective.
    pub primary_value: f64,
    /// Second-stage solution; its LP is `lp` plus one trailing row
    /// `primaryᵀx ≤ primary_value + delta`.
    pub second: LpSolution,
    pub secondary_value: f64,
}

impl LexSolution {
    /// Primary objective evaluated at the second-stage point.
    pub fn primary_at_second(&self, primary: &[f64]) -> f64 {
        LinearProgram::eval(primary, &self.second.primal)
    }
}

/// Minimize `primary`, then minimize `secondary` over the primary-optimal set.
///
/// If the first stage is not optimal its status is returned in both stages.
pub fn lexicographic_solve(
    lp: &LinearProgram,
    primary: &[f64],
    secondary: &[f64],
    opts: &LexOptions,
) -> Result<LexSolution, LpError> {
    if primary.len() != lp.num_vars() || secondary.len() != lp.num_vars() {
        return Err(LpError::Malformed(
            "objective length does not match variable count".into(),
        ));
    }
    let mut stage = lp.clone();
    stage.set_objective(primary);
    let first = solve_lp_with(&stage, &opts.solver)?;
    if !first.is_optimal() {
        return Ok(LexSolution {
            second: first.clone(),
            primary_value: f64::NAN,
            secondary_value: f64::NAN,
            first,
        });
    }
    let primary_value = first.objective;
    let coeffs: Vec<(VarId, f64)> = primary
        .iter()
        .enumerate()
        .filter(|(_, c)| **c != 0.0)
        .map(|(j, c)| (VarId(j), *c))
        .collect();
    stage.add_row("primary_optimality", coeffs, Sense::Le, primary_value + opts.delta);
    stage.set_objective(secondary);
    let second = solve_lp_with(&stage, &opts.solver)?;
    let secondary_value = second.objective;
    Ok(LexSolution {
        first,
        primary_value,
        second,
        secondary_value,
    })
}

// ---------------------------------------------------------------------------
// Scaling

struct ScaledProblem {
    n: usize,
    m: usize,
    /// Dense scaled structural matrix, row-major `m × n`.
    a: Vec<f64>,
    b: Vec<f64>,
    cost: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    sense: Vec<Sense>,
    row_scale: Vec<f64>,
    col_scale: Vec<f64>,
}

fn pow2_round(x: f64) -> f64 {
    if !x.is_finite() || x <= 0.0 {
        return 1.0;
    }
    2f64.powi(x.log2().round() as i32)
}

impl ScaledProblem {
    fn new(lp: &LinearProgram, scaling: bool) -> Self {
        let n = lp.num_vars();
        let m = lp.num_rows();
        let mut a = vec![0.0; m * n];
        for (i, r) in lp.rows.iter().enumerate() {
            for (v, c) in &r.coeffs {
                a[i * n + v.0] += c;
            }
        }
        let mut row_scale = vec![1.0; m];
        let mut col_scale = vec![1.0; n];
        if scaling {
            for _ in 0..6 {
                for i in 0..m {
                    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
                    for j in 0..n {
                        let v = (a[i * n + j] * row_scale[i] * col_scale[j]).abs();
                        if v > 0.0 {
                            lo = lo.min(v);
                            hi = hi.max(v);
                        }
                    }
                    if hi > 0.0 {
                        row_scale[i] /= pow2_round((lo * hi).sqrt());
                    }
                }
                for j in 0..n {
                    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
                    for i in 0..m {
                        let v = (a[i * n + j] * row_scale[i] * col_scale[j]).abs();
                        if v > 0.0 {
                            lo = lo.min(v);
                            hi = hi.max(v);
                        }
                    }
                    if hi > 0.0 {
                        col_scale[j] /= pow2_round((lo * hi).sqrt());
                    }
                }
            }
        }
        for i in 0..m {
            for j in 0..n {
                a[i * n + j] *= row_scale[i] * col_scale[j];
            }
        }
        let b = lp.rows.iter().zip(&row_scale).map(|(r, s)| r.rhs * s).collect();
        let cost = lp.vars.iter().zip(&col_scale).map(|(v, s)| v.cost * s).collect();
        let lower = lp.vars.iter().zip(&col_scale).map(|(v, s)| v.lower / s).collect();
        let upper = lp.vars.iter().zip(&col_scale).map(|(v, s)| v.upper / s).collect();
        let sense = lp.rows.iter().map(|r| r.sense).collect();
        Self {
            n,
            m,
            a,
            b,
            cost,
            lower,
            upper,
            sense,
            row_scale,
            col_scale,
        }
    }
}

// ---------------------------------------------------------------------------
// Simplex

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Structural,
    Slack,
    Artificial,
}

struct Simplex<'a> {
    p: &'a ScaledProblem,
    opts: SolverOptions,
    /// Columns: n structural, m slack, then artificials.
    ncols: usize,
    kind: Vec<Kind>,
    /// For artificials, (row, sign).
    art: Vec<(usize, f64)>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    cost: Vec<f64>,
    x: Vec<f64>,
    basis: Vec<usize>,
    /// Row of each basic column, `usize::MAX` when nonbasic.
    basic_row: Vec<usize>,
    /// Tableau `B⁻¹[A | I | art]`, row-major `m × ncols`.
    tab: Vec<f64>,
    /// Reduced costs for the current objective.
    d: Vec<f64>,
    iterations: usize,
    since_refactor: usize,
}

impl<'a> Simplex<'a> {
    fn new(p: &'a ScaledProblem, opts: &SolverOptions) -> Self {
        let (n, m) = (p.n, p.m);
        let mut kind = vec![Kind::Structural; n];
        kind.extend(std::iter::repeat_n(Kind::Slack, m));
        let mut lower = p.lower.clone();
        let mut upper = p.upper.clone();
        for s in &p.sense {
            let (lo, hi) = match s {
                Sense::Eq => (0.0, 0.0),
                Sense::Le => (0.0, f64::INFINITY),
                Sense::Ge => (f64::NEG_INFINITY, 0.0),
            };
            lower.push(lo);
            upper.push(hi);
        }
        // Nonbasic structural start: a finite bound, else zero.
        let mut x = vec![0.0; n + m];
        for j in 0..n {
            x[j] = if lower[j].is_finite() {
                lower[j]
            } else if upper[j].is_finite() {
                upper[j]
            } else {
                0.0
            };
        }
        let mut basis = vec![0; m];
        let mut art = Vec::new();
        let mut art_cols = Vec::new();
        for i in 0..m {
            let act: f64 = (0..n).map(|j| p.a[i * n + j] * x[j]).sum();
            let s = p.b[i] - act;
            let slack = n + i;
            if s >= lower[slack] && s <= upper[slack] {
                x[slack] = s;
                basis[i] = slack;
            } else {
                let clamped = s.clamp(lower[slack], upper[slack]);
                x[slack] = clamped;
                let resid = s - clamped;
                let sign = if resid >= 0.0 { 1.0 } else { -1.0 };
                art.push((i, sign));
                art_cols.push(resid.abs());
                basis[i] = n + m + art.len() - 1;
            }
        }
        for v in &art_cols {
            kind.push(Kind::Artificial);
            lower.push(0.0);
            upper.push(f64::INFINITY);
            x.push(*v);
        }
        let ncols = n + m + art.len();
        let mut basic_row = vec![usize::MAX; ncols];
        for (i, &c) in basis.iter().enumerate() {
            basic_row[c] = i;
        }
        let cost = vec![0.0; ncols];
        let mut s = Self {
            p,
            opts: *opts,
            ncols,
            kind,
            art,
            lower,
            upper,
            cost,
            x,
            basis,
            basic_row,
            tab: Vec::new(),
            d: vec![0.0; ncols],
            iterations: 0,
            since_refactor: 0,
        };
        s.build_initial_tableau();
        s
    }

    fn column(&self, j: usize) -> Vec<f64> {
        let (n, m) = (self.p.n, self.p.m);
        let mut col = vec![0.0; m];
        match self.kind[j] {
            Kind::Structural => {
                for (i, c) in col.iter_mut().enumerate() {
                    *c = self.p.a[i * n + j];
                }
            }
            Kind::Slack => col[j - n] = 1.0,
            Kind::Artificial => {
                let (r, s) = self.art[j - n - m];
                col[r] = s;
            }
        }
        col
    }

    fn build_initial_tableau(&mut self) {
        let (n, m) = (self.p.n, self.p.m);
        let nc = self.ncols;
        self.tab = vec![0.0; m * nc];
        for i in 0..m {
            // Initial basis matrix is diagonal with entries ±1.
            let bscale = match self.kind[self.basis[i]] {
                Kind::Slack => 1.0,
                Kind::Artificial => self.art[self.basis[i] - n - m].1,
                Kind::Structural => unreachable!(),
            };
            let row = &mut self.tab[i * nc..(i + 1) * nc];
            for j in 0..n {
                row[j] = self.p.a[i * n + j] * bscale;
            }
            row[n + i] = bscale;
        }
        for (k, &(r, s)) in self.art.iter().enumerate() {
            self.tab[r * nc + n + m + k] = s * s;
        }
    }

    fn set_costs(&mut self, phase_one: bool) {
        let n = self.p.n;
        for j in 0..self.ncols {
            self.cost[j] = match (phase_one, self.kind[j]) {
                (true, Kind::Artificial) => 1.0,
                (true, _) => 0.0,
                (false, Kind::Structural) => self.p.cost[j],
                (false, _) => 0.0,
            };
        }
        let _ = n;
        self.recompute_reduced_costs();
    }

    fn recompute_reduced_costs(&mut self) {
        let nc = self.ncols;
        let m = self.p.m;
        let mut d = self.cost.clone();
        for i in 0..m {
            let cb = self.cost[self.basis[i]];
            if cb != 0.0 {
                let row = &self.tab[i * nc..(i + 1) * nc];
                for j in 0..nc {
                    d[j] -= cb * row[j];
                }
            }
        }
        for &b in &self.basis {
            d[b] = 0.0;
        }
        self.d = d;
    }

    /// Rebuild the tableau and basic values from the original columns.
    fn refactor(&mut self) -> Result<(), LpError> {
        let m = self.p.m;
        let nc = self.ncols;
        self.since_refactor = 0;
        if m == 0 {
            return Ok(());
        }
        let mut bmat = DMatrix::<f64>::zeros(m, m);
        for (k, &c) in self.basis.iter().enumerate() {
            let col = self.column(c);
            for i in 0..m {
                bmat[(i, k)] = col[i];
            }
        }
        let lu = bmat.lu();
        let mut full = DMatrix::<f64>::zeros(m, nc);
        for j in 0..nc {
            if self.basic_row[j] != usize::MAX {
                continue;
            }
            let col = self.column(j);
            for i in 0..m {
                full[(i, j)] = col[i];
            }
        }
        let solved = lu
            .solve(&full)
            .ok_or_else(|| LpError::Numerical("singular basis during refactorization".into()))?;
        for i in 0..m {
            for j in 0..nc {
                self.tab[i * nc + j] = solved[(i, j)];
            }
        }
        for (i, &c) in self.basis.iter().enumerate() {
            for k in 0..m {
                self.tab[k * nc + c] = if k == i { 1.0 } else { 0.0 };
            }
        }
        // x_B = B⁻¹(b − N x_N)
        let mut rhs = DVector::<f64>::from_vec(self.p.b.clone());
        for j in 0..nc {
            if self.basic_row[j] != usize::MAX || self.x[j] == 0.0 {
                continue;
            }
            let col = self.column(j);
            for i in 0..m {
                rhs[i] -= col[i] * self.x[j];
            }
        }
        let xb = lu
            .solve(&rhs)
            .ok_or_else(|| LpError::Numerical("singular basis during refactorization".into()))?;
        for (i, &c) in self.basis.iter().enumerate() {
            self.x[c] = xb[i];
        }
        self.recompute_reduced_costs();
        Ok(())
    }

    fn run(&mut self) -> Result<LpStatus, LpError> {
        if !self.art.is_empty() {
            self.set_costs(true);
            let status = self.iterate()?;
            debug_assert_ne!(status, LpStatus::Unbounded);
            self.refactor()?;
            let infeas: f64 = (self.p.n + self.p.m..self.ncols).map(|j| self.x[j].max(0.0)).sum();
            let bscale = self.p.b.iter().fold(0.0f64, |a, b| a.max(b.abs()));
            if infeas > self.opts.tol * (1.0 + bscale) {
                return Ok(LpStatus::Infeasible);
            }
            for j in self.p.n + self.p.m..self.ncols {
                self.upper[j] = 0.0;
                if self.basic_row[j] == usize::MAX {
                    self.x[j] = 0.0;
                }
            }
            self.drive_out_artificials();
        }
        self.set_costs(false);
        let status = self.iterate()?;
        if status == LpStatus::Optimal {
            self.refactor()?;
            // Refactoring can expose small dual infeasibilities hidden by
            // tableau drift; keep pivoting from the clean basis.
            let status = self.iterate()?;
            if status != LpStatus::Optimal {
                return Ok(status);
            }
            self.refactor()?;
        }
        Ok(status)
    }

    fn drive_out_artificials(&mut self) {
        let nc = self.ncols;
        let first_art = self.p.n + self.p.m;
        for i in 0..self.p.m {
            if self.basis[i] < first_art {
                continue;
            }
            let row = &self.tab[i * nc..(i + 1) * nc];
            let mut best = None;
            let mut best_abs = 1e-7;
            for j in 0..first_art {
                if self.basic_row[j] != usize::MAX || self.lower[j] == self.upper[j] {
                    continue;
                }
                if row[j].abs() > best_abs {
                    best_abs = row[j].abs();
                    best = Some(j);
                }
            }
            if let Some(j) = best {
                let leaving = self.basis[i];
                self.pivot(i, j);
                self.x[leaving] = 0.0;
            }
        }
    }

    fn pivot(&mut self, r: usize, j: usize) {
        let nc = self.ncols;
        let m = self.p.m;
        let piv = self.tab[r * nc + j];
        {
            let row = &mut self.tab[r * nc..(r + 1) * nc];
            for v in row.iter_mut() {
                *v /= piv;
            }
        }
        let prow: Vec<f64> = self.tab[r * nc..(r + 1) * nc].to_vec();
        for i in 0..m {
            if i == r {
                continue;
            }
            let f = self.tab[i * nc + j];
            if f == 0.0 {
                continue;
            }
            let row = &mut self.tab[i * nc..(i + 1) * nc];
            for (v, p) in row.iter_mut().zip(&prow) {
                if *p != 0.0 {
                    *v -= f * p;
                }
            }
            row[j] = 0.0;
        }
        let f = self.d[j];
        if f != 0.0 {
            for (v, p) in self.d.iter_mut().zip(&prow) {
                *v -= f * p;
            }
        }
        self.d[j] = 0.0;
        let leaving = self.basis[r];
        self.basic_row[leaving] = usize::MAX;
        self.basis[r] = j;
        self.basic_row[j] = r;
        self.since_refactor += 1;
    }

    fn iterate(&mut self) -> Result<LpStatus, LpError> {
        let tol = self.opts.tol;
        let pivot_tol = 1e-9;
        let nc = self.ncols;
        let m = self.p.m;
        let mut degenerate_run = 0usize;
        loop {
            if self.iterations >= self.opts.max_iterations {
                return Err(LpError::IterationLimit(self.opts.max_iterations));
            }
            if self.since_refactor >= self.opts.refactor_every {
                self.refactor()?;
            }
            let bland = degenerate_run >= self.opts.degenerate_switch;

            // Pricing.
            let mut enter = None;
            let mut best = 0.0;
            for j in 0..nc {
                if self.basic_row[j] != usize::MAX || self.lower[j] == self.upper[j] {
                    continue;
                }
                let dj = self.d[j];
                let at_lower = self.x[j] <= self.lower[j];
                let at_upper = self.x[j] >= self.upper[j];
                let free = !at_lower && !at_upper;
                let dir = if dj < -tol && (at_lower || free) {
                    1.0
                } else if dj > tol && (at_upper || free) {
                    -1.0
                } else {
                    continue;
                };
                if bland {
                    enter = Some((j, dir));
                    break;
                }
                if dj.abs() > best {
                    best = dj.abs();
                    enter = Some((j, dir));
                }
            }
            let Some((j, dir)) = enter else {
                return Ok(LpStatus::Optimal);
            };

            // Ratio test over basic rows plus the entering variable's own range.
            let mut step = self.upper[j] - self.lower[j];
            let mut leave: Option<usize> = None;
            let mut leave_piv = 0.0;
            for i in 0..m {
                let a = self.tab[i * nc + j];
                if a.abs() <= pivot_tol {
                    continue;
                }
                let b = self.basis[i];
                let delta = -dir * a;
                let limit = if delta < 0.0 {
                    if self.lower[b].is_finite() {
                        ((self.x[b] - self.lower[b]) / -delta).max(0.0)
                    } else {
                        continue;
                    }
                } else if self.upper[b].is_finite() {
                    ((self.upper[b] - self.x[b]) / delta).max(0.0)
                } else {
                    continue;
                };
                let better = match leave {
                    None => limit < step,
                    Some(cur) => {
                        let tie = (limit - step).abs() <= 1e-12 * (1.0 + step.abs());
                        if tie {
                            if bland {
                                b < self.basis[cur]
                            } else {
                                a.abs() > leave_piv
                            }
                        } else {
                            limit < step
                        }
                    }
                };
                if better || (leave.is_none() && limit <= step && step.is_infinite()) {
                    step = limit;
                    leave = Some(i);
                    leave_piv = a.abs();
                }
            }
            if step.is_infinite() {
                return Ok(LpStatus::Unbounded);
            }
            self.iterations += 1;
            if step <= 1e-12 {
                degenerate_run += 1;
            } else {
                degenerate_run = 0;
            }
            // Move.
            self.x[j] += dir * step;
            for i in 0..m {
                let a = self.tab[i * nc + j];
                if a != 0.0 {
                    let b = self.basis[i];
                    self.x[b] -= dir * a * step;
                }
            }
            match leave {
                None => {
                    // Bound flip.
                    self.x[j] = if dir > 0.0 { self.upper[j] } else { self.lower[j] };
                }
                Some(r) => {
                    let b = self.basis[r];
                    let delta = -dir * self.tab[r * nc + j];
                    self.x[b] = if delta < 0.0 { self.lower[b] } else { self.upper[b] };
                    self.pivot(r, j);
                }
            }
        }
    }

    /// Primal values, row duals and reduced costs of the structural part.
    fn extract(&self) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let (n, m) = (self.p.n, self.p.m);
        let x = self.x[..n].to_vec();
        let mut y = vec![0.0; m];
        if m > 0 {
            let mut bt = DMatrix::<f64>::zeros(m, m);
            for (k, &c) in self.basis.iter().enumerate() {
                let col = self.column(c);
                for i in 0..m {
                    bt[(k, i)] = col[i];
                }
            }
            let cb = DVector::<f64>::from_iterator(m, self.basis.iter().map(|&c| self.cost[c]));
            if let Some(sol) = bt.lu().solve(&cb) {
                y = sol.iter().copied().collect();
            }
        }
        let mut d = vec![0.0; n];
        for j in 0..n {
            if self.basic_row[j] != usize::MAX {
                continue;
            }
            let mut v = self.p.cost[j];
            for i in 0..m {
                v -= y[i] * self.p.a[i * n + j];
            }
            d[j] = v;
        }
        (x, y, d)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_variable_bound_row() {
        let mut lp = LinearProgram::new();
        let x = lp.free_var("x", 1.0);
        let r = lp.add_row("x>=3", vec![(x, 1.0)], Sense::Ge, 3.0);
        let sol = solve_lp(&lp, 1e-9).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!((sol.objective - 3.0).abs() < 1e-12);
        assert!((sol.dual(r) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn infeasible_pair() {
        let mut lp = LinearProgram::new();
        let x = lp.free_var("x", 0.0);
        lp.add_row("x<=0", vec![(x, 1.0)], Sense::Le, 0.0);
        lp.add_row("x>=1", vec![(x, 1.0)], Sense::Ge, 1.0);
        assert_eq!(solve_lp(&lp, 1e-9).unwrap().status, LpStatus::Infeasible);
    }

    #[test]
    fn unbounded_ray() {
        let mut lp = LinearProgram::new();
        let x = lp.add_var("x", 0.0, f64::INFINITY, -1.0);
        let y = lp.add_var("y", 0.0, f64::INFINITY, 0.0);
        lp.add_row("x-y<=1", vec![(x, 1.0), (y, -1.0)], Sense::Le, 1.0);
        assert_eq!(solve_lp(&lp, 1e-9).unwrap().status, LpStatus::Unbounded);
    }

    #[test]
    fn le_rows_have_nonpositive_duals() {
        // min -x - y  s.t. x + 2y <= 4, 3x + y <= 6, x,y >= 0
        let mut lp = LinearProgram::new();
        let x = lp.add_var("x", 0.0, f64::INFINITY, -1.0);
        let y = lp.add_var("y", 0.0, f64::INFINITY, -1.0);
        let r1 = lp.add_row("r1", vec![(x, 1.0), (y, 2.0)], Sense::Le, 4.0);
        let r2 = lp.add_row("r2", vec![(x, 3.0), (y, 1.0)], Sense::Le, 6.0);
        let sol = solve_lp(&lp, 1e-9).unwrap();
        assert!((sol.value(x) - 1.6).abs() < 1e-10);
        assert!((sol.value(y) - 1.2).abs() < 1e-10);
        assert!((sol.objective + 2.8).abs() < 1e-10);
        assert!((sol.dual(r1) + 0.4).abs() < 1e-10);
        assert!((sol.dual(r2) + 0.2).abs() < 1e-10);
        let k = kkt_residuals(&lp, &sol);
        assert!(k.max_relative() < 1e-10, "{k:?}");
    }

    #[test]
    fn bounded_variables_flip() {
        // min -x - 2y, 0<=x<=1, 0<=y<=1, x + y <= 1.5
        let mut lp = LinearProgram::new();
        let x = lp.add_var("x", 0.0, 1.0, -1.0);
        let y = lp.add_var("y", 0.0, 1.0, -2.0);
        lp.add_row("cap", vec![(x, 1.0), (y, 1.0)], Sense::Le, 1.5);
        let sol = solve_lp(&lp, 1e-9).unwrap();
        assert!((sol.value(y) - 1.0).abs() < 1e-12);
        assert!((sol.value(x) - 0.5).abs() < 1e-12);
        assert!(sol.reduced_costs[y.0] < 0.0);
    }

    #[test]
    fn equality_rows_need_phase_one() {
        // min x + y s.t. x - y = 2, x + y >= 4, free vars
        let mut lp = LinearProgram::new();
        let x = lp.free_var("x", 1.0);
        let y = lp.free_var("y", 1.0);
        let e = lp.add_row("e", vec![(x, 1.0), (y, -1.0)], Sense::Eq, 2.0);
        let g = lp.add_row("g", vec![(x, 1.0), (y, 1.0)], Sense::Ge, 4.0);
        let sol = solve_lp(&lp, 1e-9).unwrap();
        assert!((sol.objective - 4.0).abs() < 1e-12);
        assert!((sol.value(x) - 3.0).abs() < 1e-12);
        assert!(sol.dual(e).abs() < 1e-12);
        assert!((sol.dual(g) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn redundant_equalities_are_tolerated() {
        let mut lp = LinearProgram::new();
        let x = lp.free_var("x", 1.0);
        let y = lp.free_var("y", 2.0);
        lp.add_row("a", vec![(x, 1.0), (y, 1.0)], Sense::Eq, 1.0);
        lp.add_row("b", vec![(x, 2.0), (y, 2.0)], Sense::Eq, 2.0);
        lp.add_row("x<=0.25", vec![(x, 1.0)], Sense::Le, 0.25);
        let sol = solve_lp(&lp, 1e-9).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!((sol.objective - 1.75).abs() < 1e-10);
        assert!(kkt_residuals(&lp, &sol).max_relative() < 1e-10);
    }

    #[test]
    fn lexicographic_breaks_ties_by_secondary() {
        // Two identical-cost units meeting demand 1; secondary prefers y.
        let mut lp = LinearProgram::new();
        let x = lp.add_var("x", 0.0, 1.0, 0.0);
        let y = lp.add_var("y", 0.0, 1.0, 0.0);
        lp.add_row("d", vec![(x, 1.0), (y, 1.0)], Sense::Eq, 1.0);
        let lex = lexicographic_solve(&lp, &[1.0, 1.0], &[2.0, 1.0], &LexOptions::default()).unwrap();
        assert!((lex.primary_value - 1.0).abs() < 1e-12);
        assert!((lex.second.value(y) - 1.0).abs() < 1e-12);
        assert!((lex.secondary_value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn json_dump_round_trips() {
        let mut lp = LinearProgram::new();
        let x = lp.add_var("x", 0.0, f64::INFINITY, 1.5);
        let y = lp.free_var("y", -2.0);
        let z = lp.add_var("z", f64::NEG_INFINITY, 4.0, 0.0);
        lp.add_row("r", vec![(x, 1.0), (y, -3.0), (z, 0.5)], Sense::Le, 7.0);
        let back = LinearProgram::from_json(&lp.to_json()).unwrap();
        assert_eq!(back, lp);
    }

    #[test]
    fn malformed_reference_is_rejected() {
        let mut lp = LinearProgram::new();
        lp.free_var("x", 0.0);
        lp.add_row("bad", vec![(VarId(3), 1.0)], Sense::Eq, 0.0);
        assert!(matches!(solve_lp(&lp, 1e-9), Err(LpError::Malformed(_))));
    }
}
