//! Independent checks of the combined model: finite-difference and PTDF
//! marginal emission rates, emission sweeps, and decentralized best-response
//! (equilibrium) tests. None of these use the dualized model; they only
//! re-solve the dispatch problem or do linear algebra on the network.

use crate::accounting::build_ledger;
use crate::combined::{emissions_at, lme, sci, solve_combined, CombinedResult};
use crate::dispatch::DispatchResult;
use crate::error::{Error, Result};
use crate::network::Network;
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

/// Same-piece test: slopes at ε and ε/2 must agree to this relative tolerance.
pub const PIECE_TOL: f64 = 1e-6;
/// Tolerance for comparing a finite-difference slope with the model LME.
pub const SLOPE_TOL: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub entity: String,
    pub check: String,
    pub amount: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct EquilibriumReport {
    /// Entities whose best response was checked.
    pub checked: usize,
    /// Alternative best-response selections that were network-feasible.
    pub selections: usize,
    /// Alternative selections whose induced flows violate a line limit.
    pub infeasible_selections: usize,
    /// Feasible selections that pull a priced line off its limit, which the
    /// line's own rent-maximizing response would not accept.
    pub unsupported_selections: usize,
    pub violations: Vec<Violation>,
}

impl EquilibriumReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

// ---------------------------------------------------------------------------
// Finite differences

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SlopeIssue {
    Infeasible,
    /// Slopes at ε and ε/2 disagree: a breakpoint lies within ε.
    PieceBoundary,
}

/// One-sided slopes of `α ↦ E(P^D + α·e_i)` at `α = 0`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DirectionalSlope {
    pub node: String,
    pub epsilon: f64,
    pub left: Option<f64>,
    pub left_issue: Option<SlopeIssue>,
    pub right: Option<f64>,
    pub right_issue: Option<SlopeIssue>,
    /// `(E(+ε) − E(−ε)) / 2ε` when both sides are feasible.
    pub central: Option<f64>,
    pub smooth: bool,
}

/// Default step: `1e-4 · max(1, total demand)`.
pub fn default_epsilon(net: &Network) -> f64 {
    1e-4 * net.total_demand().abs().max(1.0)
}

fn perturbed(net: &Network, node: usize, alpha: f64) -> Result<Option<f64>> {
    let mut d = net.demands();
    d[node] += alpha;
    match emissions_at(net, &d) {
        Ok(e) => Ok(Some(e)),
        Err(Error::Infeasible(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

fn one_side(net: &Network, node: usize, e0: f64, step: f64) -> Result<(Option<f64>, Option<SlopeIssue>, Option<f64>)> {
    let Some(full) = perturbed(net, node, step)? else {
        return Ok((None, Some(SlopeIssue::Infeasible), None));
    };
    let Some(half) = perturbed(net, node, step / 2.0)? else {
        return Ok((None, Some(SlopeIssue::Infeasible), Some(full)));
    };
    // Slopes in the direction of increasing demand.
    let s_full = (full - e0) / step;
    let s_half = (half - e0) / (step / 2.0);
    if (s_full - s_half).abs() <= PIECE_TOL * (1.0 + s_full.abs()) {
        Ok((Some(s_full), None, Some(full)))
    } else {
        Ok((None, Some(SlopeIssue::PieceBoundary), Some(full)))
    }
}

/// Left and right emission slopes at node `node`, each validated by the
/// same-piece test. Fails only if the unperturbed problem is infeasible.
pub fn fd_lme(net: &Network, node: usize, epsilon: Option<f64>) -> Result<DirectionalSlope> {
    let eps = epsilon.unwrap_or_else(|| default_epsilon(net));
    if eps.is_nan() || eps <= 0.0 {
        return Err(Error::Input("finite-difference step must be positive".into()));
    }
    let e0 = emissions_at(net, &net.demands())?;
    let (right, right_issue, e_plus) = one_side(net, node, e0, eps)?;
    let (left, left_issue, e_minus) = one_side(net, node, e0, -eps)?;
    let central = match (e_plus, e_minus) {
        (Some(p), Some(m)) => Some((p - m) / (2.0 * eps)),
        _ => None,
    };
    let smooth = match (left, right) {
        (Some(l), Some(r)) => (l - r).abs() <= PIECE_TOL * (1.0 + l.abs().max(r.abs())),
        _ => false,
    };
    Ok(DirectionalSlope {
        node: net.nodes()[node].id.clone(),
        epsilon: eps,
        left,
        left_issue,
        right,
        right_issue,
        central,
        smooth,
    })
}

// ---------------------------------------------------------------------------
// PTDF

/// Line-flow sensitivities to nodal injections, `lines × nodes`, with the
/// reference bus as the slack (its column is zero).
pub fn ptdf_matrix(net: &Network) -> Result<DMatrix<f64>> {
    let n = net.num_nodes();
    let l = net.num_lines();
    let r = net.reference_node();
    let mut psi = DMatrix::zeros(l, n);
    if n == 1 || l == 0 {
        return Ok(psi);
    }
    let reduced = |i: usize| {
        if i < r {
            Some(i)
        } else if i > r {
            Some(i - 1)
        } else {
            None
        }
    };
    // Bd·C_r and the reduced Laplacian C_rᵀ·Bd·C_r.
    let mut bc: DMatrix<f64> = DMatrix::zeros(l, n - 1);
    for (k, line) in net.lines().iter().enumerate() {
        let (i, j) = net.line_ends(k);
        if let Some(a) = reduced(i) {
            bc[(k, a)] += line.susceptance;
        }
        if let Some(b) = reduced(j) {
            bc[(k, b)] -= line.susceptance;
        }
    }
    let mut lap: DMatrix<f64> = DMatrix::zeros(n - 1, n - 1);
    for (k, line) in net.lines().iter().enumerate() {
        let (i, j) = net.line_ends(k);
        let (a, b) = (reduced(i), reduced(j));
        let b_l = line.susceptance;
        if let Some(a) = a {
            lap[(a, a)] += b_l;
        }
        if let Some(b) = b {
            lap[(b, b)] += b_l;
        }
        if let (Some(a), Some(b)) = (a, b) {
            lap[(a, b)] -= b_l;
            lap[(b, a)] -= b_l;
        }
    }
    let inv = lap
        .lu()
        .try_inverse()
        .ok_or_else(|| Error::Internal("reduced network Laplacian is singular".into()))?;
    let reduced_psi = bc * inv;
    for c in 0..n {
        if let Some(a) = reduced(c) {
            psi.set_column(c, &reduced_psi.column(a));
        }
    }
    Ok(psi)
}

/// DC flows induced by nodal injections (generation minus demand).
pub fn induced_flows(psi: &DMatrix<f64>, injections: &[f64]) -> Vec<f64> {
    (psi * DVector::from_column_slice(injections)).iter().copied().collect()
}

/// Why [`ptdf_lme`] declined an instance.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PtdfRefusal {
    #[error("{interior} interior generators but {tight} tight lines; need exactly one more generator than lines")]
    RankMismatch { interior: usize, tight: usize },
    #[error("generator `{0}` is at a bound with cost equal to its nodal price; dispatch is not unique")]
    DualDegenerate(String),
    #[error("line `{0}` is at its limit with a zero price; the binding set is ambiguous")]
    WeaklyBinding(String),
    #[error("reduced sensitivity matrix is singular")]
    Singular,
    #[error("{0}")]
    Network(String),
}

/// Marginal emission rate at `node` from PTDFs and the marginal set of a
/// unique, nondegenerate dispatch. Refuses any instance that does not
/// verifiably satisfy those assumptions.
pub fn ptdf_lme(net: &Network, dispatch: &DispatchResult, node: usize) -> std::result::Result<f64, PtdfRefusal> {
    const TOL: f64 = 1e-7;
    let mut marginal = Vec::new();
    for (g, unit) in net.generators().iter().enumerate() {
        let p = dispatch.generation[g];
        let band = TOL * (1.0 + unit.p_max.abs());
        if p > unit.p_min + band && p < unit.p_max - band {
            marginal.push(g);
        } else if unit.p_max - unit.p_min > band {
            let price = dispatch.lmp[net.generator_node(g)];
            if (unit.cost - price).abs() <= TOL * (1.0 + unit.cost.abs()) {
                return Err(PtdfRefusal::DualDegenerate(unit.id.clone()));
            }
        }
    }
    let mut tight = Vec::new();
    for (l, line) in net.lines().iter().enumerate() {
        let f = dispatch.flow[l];
        if f.abs() >= line.f_max * (1.0 - TOL) - TOL {
            let price = if f > 0.0 {
                dispatch.rho_plus[l]
            } else {
                dispatch.rho_minus[l]
            };
            if price.abs() <= TOL {
                return Err(PtdfRefusal::WeaklyBinding(line.id.clone()));
            }
            tight.push(l);
        }
    }
    if marginal.len() != tight.len() + 1 {
        return Err(PtdfRefusal::RankMismatch {
            interior: marginal.len(),
            tight: tight.len(),
        });
    }
    let psi = ptdf_matrix(net).map_err(|e| PtdfRefusal::Network(e.to_string()))?;
    let k = marginal.len();
    let mut m = DMatrix::zeros(k, k);
    let mut rhs = DVector::zeros(k);
    for (c, &g) in marginal.iter().enumerate() {
        m[(0, c)] = 1.0;
        for (r, &l) in tight.iter().enumerate() {
            m[(r + 1, c)] = psi[(l, net.generator_node(g))];
        }
    }
    rhs[0] = 1.0;
    for (r, &l) in tight.iter().enumerate() {
        rhs[r + 1] = psi[(l, node)];
    }
    let scale = m.iter().fold(0.0_f64, |a, v| a.max(v.abs())).max(1.0);
    let lu = m.lu();
    let det = lu.determinant();
    if det.abs() <= 1e-10 * scale.powi(k as i32) {
        return Err(PtdfRefusal::Singular);
    }
    let dp = lu.solve(&rhs).ok_or(PtdfRefusal::Singular)?;
    Ok(marginal
        .iter()
        .zip(dp.iter())
        .map(|(&g, d)| net.generators()[g].emission_rate * d)
        .sum())
}

// ---------------------------------------------------------------------------
// Sweeps

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Segment {
    pub start: f64,
    pub end: f64,
    pub slope: f64,
}

/// Emissions along `α ↦ E(P^D + α·e_i)` with recovered linear pieces.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepCurve {
    pub node: String,
    pub alphas: Vec<f64>,
    pub values: Vec<f64>,
    /// Requested grid points that were infeasible; the curve covers the
    /// first contiguous feasible run only.
    pub infeasible: Vec<f64>,
    pub segments: Vec<Segment>,
    pub breakpoints: Vec<f64>,
    /// Largest jump left after bisecting every non-linear grid interval.
    pub max_residual_jump: f64,
    pub continuous: bool,
}

const CONTINUITY_BISECTIONS: usize = 30;

struct Sampler<'a> {
    net: &'a Network,
    node: usize,
}

impl Sampler<'_> {
    fn at(&self, alpha: f64) -> Result<Option<f64>> {
        perturbed(self.net, self.node, alpha)
    }
}

fn same_slope(a: f64, b: f64) -> bool {
    (a - b).abs() <= PIECE_TOL * (1.0 + a.abs().max(b.abs()))
}

/// Sample the emission function on `samples` evenly spaced points of
/// `range` and recover its linear pieces.
pub fn sweep_emissions(net: &Network, node: usize, range: (f64, f64), samples: usize) -> Result<SweepCurve> {
    if samples < 3 || range.0.is_nan() || range.1.is_nan() || range.1 <= range.0 {
        return Err(Error::Input(
            "a sweep needs at least 3 samples over a nonempty range".into(),
        ));
    }
    let sampler = Sampler { net, node };
    let h = (range.1 - range.0) / (samples - 1) as f64;
    let grid: Vec<f64> = (0..samples).map(|k| range.0 + h * k as f64).collect();
    let mut alphas = Vec::new();
    let mut values = Vec::new();
    let mut infeasible = Vec::new();
    let mut closed = false;
    for &a in &grid {
        match sampler.at(a)? {
            Some(v) if !closed => {
                alphas.push(a);
                values.push(v);
            }
            Some(_) => infeasible.push(a),
            None => {
                infeasible.push(a);
                if !alphas.is_empty() {
                    closed = true;
                }
            }
        }
    }
    let mut curve = SweepCurve {
        node: net.nodes()[node].id.clone(),
        alphas,
        values,
        infeasible,
        segments: Vec::new(),
        breakpoints: Vec::new(),
        max_residual_jump: 0.0,
        continuous: true,
    };
    if curve.alphas.len() < 2 {
        return Ok(curve);
    }
    let pieces = recover_pieces(&sampler, &curve.alphas, &curve.values, 2)?;
    curve.breakpoints = pieces.windows(2).map(|w| w[0].end).collect();
    curve.segments = pieces;

    // Continuity: wherever the grid is not locally linear, bisect towards the
    // largest jump; a continuous function's jump shrinks with the interval.
    let slopes: Vec<f64> = (0..curve.alphas.len() - 1)
        .map(|k| (curve.values[k + 1] - curve.values[k]) / (curve.alphas[k + 1] - curve.alphas[k]))
        .collect();
    let scale = 1.0 + curve.values.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    for k in 0..slopes.len() {
        let linear_left = k > 0 && same_slope(slopes[k - 1], slopes[k]);
        let linear_right = k + 1 < slopes.len() && same_slope(slopes[k + 1], slopes[k]);
        if linear_left || linear_right {
            continue;
        }
        let jump = bisect_jump(
            &sampler,
            (curve.alphas[k], curve.values[k]),
            (curve.alphas[k + 1], curve.values[k + 1]),
        )?;
        curve.max_residual_jump = curve.max_residual_jump.max(jump);
    }
    curve.continuous = curve.max_residual_jump <= PIECE_TOL * scale;
    Ok(curve)
}

fn bisect_jump(s: &Sampler<'_>, mut a: (f64, f64), mut b: (f64, f64)) -> Result<f64> {
    for _ in 0..CONTINUITY_BISECTIONS {
        let m = 0.5 * (a.0 + b.0);
        let Some(fm) = s.at(m)? else { break };
        if (fm - a.1).abs() >= (b.1 - fm).abs() {
            b = (m, fm);
        } else {
            a = (m, fm);
        }
    }
    Ok((b.1 - a.1).abs())
}

/// Merge grid intervals into linear pieces. Runs of at least two equal-slope
/// intervals are trusted; the gap between two trusted runs is either a single
/// kink (found by intersecting the two lines) or is re-sampled more finely.
fn recover_pieces(s: &Sampler<'_>, x: &[f64], y: &[f64], depth: usize) -> Result<Vec<Segment>> {
    let n = x.len();
    if n == 2 {
        return Ok(vec![Segment {
            start: x[0],
            end: x[1],
            slope: (y[1] - y[0]) / (x[1] - x[0]),
        }]);
    }
    let slopes: Vec<f64> = (0..n - 1).map(|k| (y[k + 1] - y[k]) / (x[k + 1] - x[k])).collect();
    // Runs of equal slope: (first interval, last interval, slope).
    let mut runs: Vec<(usize, usize, f64)> = Vec::new();
    for (k, &sl) in slopes.iter().enumerate() {
        match runs.last_mut() {
            Some(run) if same_slope(run.2, sl) => run.1 = k,
            _ => runs.push((k, k, sl)),
        }
    }
    let trusted: Vec<(usize, usize, f64)> = runs.iter().copied().filter(|r| r.1 > r.0).collect();
    if trusted.is_empty() {
        // Every interval bends; with no finer resolution left, report raw intervals.
        if depth == 0 {
            return Ok(merge(
                (0..n - 1)
                    .map(|k| Segment {
                        start: x[k],
                        end: x[k + 1],
                        slope: slopes[k],
                    })
                    .collect(),
            ));
        }
        return refine(s, x[0], x[n - 1], y[0], y[n - 1], n, depth);
    }
    let mut out: Vec<Segment> = Vec::new();
    // Leading gap before the first trusted run.
    let first = trusted[0];
    if first.0 > 0 {
        out.extend(gap(s, x, y, 0, first.0, None, Some(first), depth)?);
    }
    for (w, run) in trusted.iter().enumerate() {
        out.push(Segment {
            start: x[run.0],
            end: x[run.1 + 1],
            slope: run.2,
        });
        if let Some(next) = trusted.get(w + 1) {
            out.extend(gap(s, x, y, run.1 + 1, next.0, Some(*run), Some(*next), depth)?);
        }
    }
    let last = *trusted.last().unwrap();
    if last.1 + 1 < n - 1 {
        out.extend(gap(s, x, y, last.1 + 1, n - 1, Some(last), None, depth)?);
    }
    Ok(merge(out))
}

/// Pieces covering grid points `lo..=hi` between two trusted runs.
#[allow(clippy::too_many_arguments)]
fn gap(
    s: &Sampler<'_>,
    x: &[f64],
    y: &[f64],
    lo: usize,
    hi: usize,
    before: Option<(usize, usize, f64)>,
    after: Option<(usize, usize, f64)>,
    depth: usize,
) -> Result<Vec<Segment>> {
    if lo == hi {
        return Ok(Vec::new());
    }
    if hi - lo == 1 {
        if let (Some(b), Some(a)) = (before, after) {
            // One bent interval between two lines: the kink is their intersection.
            let (x0, y0) = (x[b.1 + 1], y[b.1 + 1]);
            let (x1, y1) = (x[a.0], y[a.0]);
            let k = (y1 - y0 - a.2 * (x1 - x0)) / (b.2 - a.2);
            let kink = x0 + k;
            if kink > x0 && kink < x1 && !same_slope(a.2, b.2) {
                return Ok(vec![
                    Segment {
                        start: x0,
                        end: kink,
                        slope: b.2,
                    },
                    Segment {
                        start: kink,
                        end: x1,
                        slope: a.2,
                    },
                ]);
            }
        }
    }
    if depth == 0 {
        return Ok((lo..hi)
            .map(|k| Segment {
                start: x[k],
                end: x[k + 1],
                slope: (y[k + 1] - y[k]) / (x[k + 1] - x[k]),
            })
            .collect());
    }
    refine(s, x[lo], x[hi], y[lo], y[hi], 2 * (hi - lo) + 9, depth)
}

fn refine(s: &Sampler<'_>, a: f64, b: f64, fa: f64, fb: f64, points: usize, depth: usize) -> Result<Vec<Segment>> {
    let h = (b - a) / (points - 1) as f64;
    let mut xs = vec![a];
    let mut ys = vec![fa];
    for k in 1..points - 1 {
        let t = a + h * k as f64;
        let Some(v) = s.at(t)? else {
            return Err(Error::Internal(
                "emission function infeasible inside a feasible interval".into(),
            ));
        };
        xs.push(t);
        ys.push(v);
    }
    xs.push(b);
    ys.push(fb);
    recover_pieces(s, &xs, &ys, depth - 1)
}

fn merge(pieces: Vec<Segment>) -> Vec<Segment> {
    let mut out: Vec<Segment> = Vec::with_capacity(pieces.len());
    for p in pieces {
        match out.last_mut() {
            Some(last) if same_slope(last.slope, p.slope) => last.end = p.end,
            _ => out.push(p),
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Generator equilibrium

/// Tolerance used to call a price comparison a tie.
const TIE_TOL: f64 = 1e-7;
/// Largest set of doubly tied generators whose selections are enumerated.
pub const MAX_TIED: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum BestResponse {
    Max,
    Min,
    Interval,
}

fn best_response(cost: f64, price: f64) -> Option<BestResponse> {
    if (cost - price).abs() <= TIE_TOL * (1.0 + cost.abs().max(price.abs())) {
        None
    } else if cost < price {
        Some(BestResponse::Max)
    } else {
        Some(BestResponse::Min)
    }
}

/// Check each generator's dispatch against its two-tier best response
/// (profit at the LMP first, then carbon account at the LME), and enumerate
/// alternative selections among up to three doubly tied generators.
pub fn check_generator_equilibrium(net: &Network, combined: &CombinedResult, tol: f64) -> Result<EquilibriumReport> {
    let d = &combined.dispatch;
    let lme = lme(combined).0;
    let mut report = EquilibriumReport::default();
    let mut tied = Vec::new();
    for (g, unit) in net.generators().iter().enumerate() {
        report.checked += 1;
        let node = net.generator_node(g);
        let p = d.generation[g];
        let band = tol * (1.0 + unit.p_max.abs());
        let (response, tier) = match best_response(unit.cost, d.lmp[node]) {
            Some(r) => (r, "price tier"),
            None => match best_response(unit.emission_rate, lme[node]) {
                Some(r) => (r, "emission tier"),
                None => (BestResponse::Interval, "interval"),
            },
        };
        let miss = match response {
            BestResponse::Max => (unit.p_max - p).abs(),
            BestResponse::Min => (p - unit.p_min.min(unit.p_max)).abs(),
            BestResponse::Interval => 0.0,
        };
        if miss > band {
            report.violations.push(Violation {
                entity: unit.id.clone(),
                check: tier.into(),
                amount: miss,
            });
        }
        if response == BestResponse::Interval && unit.p_max - unit.p_min > band {
            tied.push(g);
        }
    }
    if (2..=MAX_TIED).contains(&tied.len()) {
        enumerate_selections(net, combined, &tied, tol, &mut report)?;
    }
    Ok(report)
}

fn enumerate_selections(
    net: &Network,
    combined: &CombinedResult,
    tied: &[usize],
    tol: f64,
    report: &mut EquilibriumReport,
) -> Result<()> {
    let d = &combined.dispatch;
    let sci = sci(combined).0;
    let gens = net.generators();
    let total: f64 = tied.iter().map(|&g| d.generation[g]).sum();
    let psi = ptdf_matrix(net)?;
    let cost0 = d.cost;
    let em0 = combined.emissions;
    let mut seen: Vec<Vec<f64>> = Vec::new();
    for slack in 0..tied.len() {
        let others: Vec<usize> = (0..tied.len()).filter(|&k| k != slack).collect();
        for mask in 0..(1u32 << others.len()) {
            let mut p = d.generation.clone();
            let mut rest = total;
            for (bit, &k) in others.iter().enumerate() {
                let g = tied[k];
                p[g] = if mask & (1 << bit) != 0 {
                    gens[g].p_max
                } else {
                    gens[g].p_min
                };
                rest -= p[g];
            }
            let gs = tied[slack];
            let band = tol * (1.0 + gens[gs].p_max);
            if rest < gens[gs].p_min - band || rest > gens[gs].p_max + band {
                continue;
            }
            p[gs] = rest.clamp(gens[gs].p_min, gens[gs].p_max);
            if seen
                .iter()
                .any(|q| q.iter().zip(&p).all(|(a, b)| (a - b).abs() <= band))
            {
                continue;
            }
            seen.push(p.clone());
            let mut inj: Vec<f64> = net.demands().iter().map(|x| -x).collect();
            for (g, &x) in p.iter().enumerate() {
                inj[net.generator_node(g)] += x;
            }
            let flows = induced_flows(&psi, &inj);
            let feasible = net
                .lines()
                .iter()
                .zip(&flows)
                .all(|(l, f)| f.abs() <= l.f_max * (1.0 + tol) + tol);
            if !feasible {
                report.infeasible_selections += 1;
                continue;
            }
            let supported = net.lines().iter().enumerate().all(|(l, line)| {
                let band = tol * (1.0 + line.f_max);
                let priced_up = d.rho_plus[l] < -TIE_TOL || (sci[l].abs() > TIE_TOL && d.flow[l] > 0.0);
                let priced_down = d.rho_minus[l] > TIE_TOL || (sci[l].abs() > TIE_TOL && d.flow[l] < 0.0);
                let at_max = (d.flow[l] - line.f_max).abs() <= band;
                let at_min = (d.flow[l] + line.f_max).abs() <= band;
                !(priced_up && at_max && (flows[l] - line.f_max).abs() > band)
                    && !(priced_down && at_min && (flows[l] + line.f_max).abs() > band)
            });
            if !supported {
                report.unsupported_selections += 1;
                continue;
            }
            report.selections += 1;
            let cost: f64 = p.iter().zip(gens).map(|(x, g)| x * g.cost).sum();
            let em: f64 = p.iter().zip(gens).map(|(x, g)| x * g.emission_rate).sum();
            let label = tied.iter().map(|&g| gens[g].id.as_str()).collect::<Vec<_>>().join("+");
            if (cost - cost0).abs() > tol * (1.0 + cost0.abs()) {
                report.violations.push(Violation {
                    entity: label.clone(),
                    check: "selection cost differs".into(),
                    amount: cost - cost0,
                });
            }
            if (em - em0).abs() > tol * (1.0 + em0.abs()) {
                report.violations.push(Violation {
                    entity: label,
                    check: "selection emissions differ".into(),
                    amount: em - em0,
                });
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Report

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub residual: f64,
    pub tolerance: f64,
    #[serde(skip_serializing_if = "String::is_empty")]
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct VerificationReport {
    pub checks: Vec<CheckResult>,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn push(&mut self, name: impl Into<String>, residual: f64, tolerance: f64, detail: impl Into<String>) {
        self.checks.push(CheckResult {
            name: name.into(),
            passed: residual <= tolerance,
            residual,
            tolerance,
            detail: detail.into(),
        });
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyOptions {
    pub tol: f64,
    /// Run the finite-difference comparison at every node.
    pub finite_differences: bool,
    /// Fault injection for testing the checks themselves: added to the
    /// outer balance dual of the node with the largest net load.
    pub dual_offset: f64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            finite_differences: true,
            dual_offset: 0.0,
        }
    }
}

/// Run every single-period check on one network.
pub fn verify_network(net: &Network, opts: &VerifyOptions) -> Result<VerificationReport> {
    let mut report = VerificationReport::default();
    let mut result = solve_combined(net)?;
    if opts.dual_offset != 0.0 {
        let net_load: Vec<f64> = {
            let mut v = net.demands();
            for (g, p) in result.dispatch.generation.iter().enumerate() {
                v[net.generator_node(g)] -= p;
            }
            v
        };
        let target = (0..net.num_nodes())
            .max_by(|&a, &b| net_load[a].abs().total_cmp(&net_load[b].abs()))
            .unwrap_or(0);
        result.outer.p_pi[target] += opts.dual_offset;
    }
    let tol = opts.tol;

    let ledger = build_ledger(net, &result);
    report.push("footprint_identity", ledger.footprint_residual, ledger.tolerance(), "");

    let cost = result.dispatch.cost;
    report.push(
        "cost_preservation",
        (cost - result.first_layer_cost).abs(),
        tol * (1.0 + result.first_layer_cost.abs()),
        "",
    );

    let lex = emissions_at(net, &net.demands())?;
    report.push(
        "lexicographic_emissions",
        (result.emissions - lex).abs(),
        tol * (1.0 + lex.abs()),
        format!("combined {} vs lexicographic {}", result.emissions, lex),
    );

    let sci = sci(&result).0;
    let slack_sci = net
        .lines()
        .iter()
        .enumerate()
        .filter(|(l, line)| result.dispatch.flow[*l].abs() < line.f_max * (1.0 - 1e-7) - 1e-7)
        .map(|(l, _)| sci[l].abs())
        .fold(0.0, f64::max);
    report.push("sci_zero_on_slack_lines", slack_sci, tol, "");

    let lme = lme(&result).0;
    let gen_eq = check_generator_equilibrium(net, &result, tol)?;
    report.push(
        "generator_equilibrium",
        gen_eq.violations.len() as f64,
        0.0,
        gen_eq
            .violations
            .iter()
            .map(|v| format!("{}: {} ({:e})", v.entity, v.check, v.amount))
            .collect::<Vec<_>>()
            .join("; "),
    );

    let mut ptdf_worst = 0.0_f64;
    let mut ptdf_used = 0;
    for (i, l) in lme.iter().enumerate() {
        if let Ok(v) = ptdf_lme(net, &result.dispatch, i) {
            ptdf_used += 1;
            ptdf_worst = ptdf_worst.max((v - l).abs() / (1.0 + l.abs()));
        }
    }
    report.push(
        "ptdf_equivalence",
        ptdf_worst,
        tol,
        if ptdf_used == 0 {
            "instance not unique/nondegenerate; skipped".to_string()
        } else {
            format!("{ptdf_used} nodes compared")
        },
    );

    if opts.finite_differences {
        let mut worst = 0.0_f64;
        let mut smooth = 0;
        for (i, l) in lme.iter().enumerate() {
            let fd = fd_lme(net, i, None)?;
            if let (true, Some(c)) = (fd.smooth, fd.central) {
                smooth += 1;
                worst = worst.max((l - c).abs() / (1.0 + c.abs()));
            }
        }
        report.push(
            "finite_difference_lme",
            worst,
            SLOPE_TOL,
            format!("{smooth} of {} nodes smooth", net.num_nodes()),
        );
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn fd_on_transmission_example() {
        let net = fixtures::two_bus_transmission();
        let a = fd_lme(&net, 0, None).unwrap();
        let b = fd_lme(&net, 1, None).unwrap();
        assert!(a.smooth && b.smooth);
        assert!(a.left.unwrap().abs() < 1e-6 && a.right.unwrap().abs() < 1e-6);
        assert!((b.left.unwrap() - 1.0).abs() < 1e-6 && (b.right.unwrap() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn fd_detects_kink() {
        let net = fixtures::copper_plate(2.0);
        let s = fd_lme(&net, 0, None).unwrap();
        assert!((s.left.unwrap() - 2.0).abs() < 1e-6);
        assert!((s.right.unwrap() - 0.5).abs() < 1e-6);
        assert!(!s.smooth);
    }

    #[test]
    fn fd_reports_piece_boundary_for_wide_step() {
        let net = fixtures::copper_plate(1.9);
        let s = fd_lme(&net, 0, Some(0.15)).unwrap();
        assert_eq!(s.right_issue, Some(SlopeIssue::PieceBoundary));
        assert!((s.left.unwrap() - 2.0).abs() < 1e-6);
    }

    #[test]
    fn fd_reports_infeasible_direction() {
        let net = fixtures::copper_plate(3.0);
        let s = fd_lme(&net, 0, None).unwrap();
        assert_eq!(s.right_issue, Some(SlopeIssue::Infeasible));
        assert!(s.left.is_some());
    }

    #[test]
    fn ptdf_on_transmission_example() {
        let net = fixtures::two_bus_transmission();
        let r = solve_combined(&net).unwrap();
        assert!((ptdf_lme(&net, &r.dispatch, 1).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn ptdf_on_copper_plate() {
        let net = fixtures::copper_plate(2.5);
        let r = solve_combined(&net).unwrap();
        assert!((ptdf_lme(&net, &r.dispatch, 0).unwrap() - 0.5).abs() < 1e-9);
    }

    #[test]
    fn ptdf_refuses_degenerate_kink() {
        let net = fixtures::copper_plate(2.0);
        let r = solve_combined(&net).unwrap();
        assert!(ptdf_lme(&net, &r.dispatch, 0).is_err());
    }

    #[test]
    fn ptdf_conserves_flow_on_ring() {
        let net = fixtures::ring(4);
        let psi = ptdf_matrix(&net).unwrap();
        assert_eq!(
            psi.column(net.reference_node()).iter().map(|v| v.abs()).sum::<f64>(),
            0.0
        );
        let inj = [-1.0, 1.0, 0.0, 0.0];
        let f = induced_flows(&psi, &inj);
        // Node 1 exports its injection: out on ring1, in on ring0.
        assert!(((-f[0] + f[1]) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn copper_plate_sweep() {
        let net = fixtures::copper_plate(0.0);
        let c = sweep_emissions(&net, 0, (0.0, 3.0), 61).unwrap();
        let slopes: Vec<f64> = c.segments.iter().map(|s| s.slope).collect();
        assert_eq!(slopes.len(), 3, "{:?}", c.segments);
        assert!((slopes[0]).abs() < 1e-6 && (slopes[1] - 2.0).abs() < 1e-6 && (slopes[2] - 0.5).abs() < 1e-6);
        assert!((c.breakpoints[0] - 1.0).abs() < 1e-6 && (c.breakpoints[1] - 2.0).abs() < 1e-6);
        assert!(c.continuous);
    }

    #[test]
    fn sweep_finds_off_grid_kinks() {
        let net = fixtures::copper_plate(0.0);
        let c = sweep_emissions(&net, 0, (0.05, 2.93), 17).unwrap();
        assert_eq!(c.segments.len(), 3, "{:?}", c.segments);
        assert!((c.breakpoints[0] - 1.0).abs() < 1e-6 && (c.breakpoints[1] - 2.0).abs() < 1e-6);
    }

    #[test]
    fn sweep_truncates_at_infeasibility() {
        let net = fixtures::copper_plate(0.0);
        let c = sweep_emissions(&net, 0, (0.0, 4.0), 41).unwrap();
        assert!(!c.infeasible.is_empty());
        assert!(c.alphas.last().unwrap() <= &3.0);
    }

    #[test]
    fn uniform_fleet_sweep_is_one_segment() {
        let net = crate::network::Network::new(
            vec![crate::network::Node {
                id: "x".into(),
                demand: 0.0,
            }],
            vec![],
            (0..3)
                .map(|k| crate::network::Generator {
                    id: format!("g{k}"),
                    node: "x".into(),
                    cost: 10.0 * (k + 1) as f64,
                    emission_rate: 3.0,
                    p_min: 0.0,
                    p_max: 1.0,
                    kind: None,
                })
                .collect(),
            vec![],
            "x",
        )
        .unwrap();
        let c = sweep_emissions(&net, 0, (0.0, 3.0), 31).unwrap();
        assert_eq!(c.segments.len(), 1);
        assert!((c.segments[0].slope - 3.0).abs() < 1e-9);
    }

    #[test]
    fn transmission_example_equilibrium() {
        let net = fixtures::two_bus_transmission();
        let r = solve_combined(&net).unwrap();
        let rep = check_generator_equilibrium(&net, &r, 1e-6).unwrap();
        assert!(rep.is_clean(), "{rep:?}");
        // Both units are doubly tied. Shifting G1 to full output overloads
        // the line; shifting it down unloads a priced line.
        assert_eq!(rep.infeasible_selections, 1);
        assert_eq!(rep.unsupported_selections, 1);
        assert_eq!(rep.selections, 0);
    }

    #[test]
    fn verification_report_passes_on_golden_and_fails_when_corrupted() {
        let net = fixtures::two_bus_transmission();
        let ok = verify_network(&net, &VerifyOptions::default()).unwrap();
        assert!(ok.passed(), "{}", ok.to_json());
        let bad = verify_network(
            &net,
            &VerifyOptions {
                dual_offset: 0.5,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(!bad.passed());
        let fp = bad.checks.iter().find(|c| c.name == "footprint_identity").unwrap();
        assert!(!fp.passed && fp.residual > 1.0);
    }
}
