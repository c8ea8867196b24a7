//! Convergence studies, cross-method gaps, curve fits and extrema statistics.

use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Result, SolverError};
use crate::pipeline::{solve, Method};
use crate::problem::{GridFunction, SolverParams};
use crate::quadrature::{decompose, ZeroPolicy};

/// Least-squares slope of `ln y` against `ln x`. Pairs with a nonpositive
/// or non-finite entry are skipped; `None` if fewer than two remain or all
/// remaining `x` coincide.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let (lx, ly): (Vec<f64>, Vec<f64>) = xs
        .iter()
        .zip(ys)
        .filter(|(x, y)| **x > 0.0 && **y > 0.0 && x.is_finite() && y.is_finite())
        .map(|(x, y)| (x.ln(), y.ln()))
        .unzip();
    if lx.len() < 2 {
        return None;
    }
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    Some(sxy / sxx)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub n_ref: usize,
    /// Strictly increasing grid sizes.
    pub n_values: Vec<usize>,
    pub h_values: Vec<f64>,
    /// `h·Σ|u_N - u_ref|` over the coarse samples.
    pub l1_errors: Vec<f64>,
    pub linf_errors: Vec<f64>,
    /// Slope of `ln e` against `ln h`; `None` when it cannot be fitted
    /// (e.g. all errors vanish).
    pub l1_slope: Option<f64>,
    pub linf_slope: Option<f64>,
}

/// Coarse-grid error of `u` against the nested reference.
pub fn grid_errors(u: &GridFunction, reference: &GridFunction) -> Result<(f64, f64)> {
    let (n, n_ref) = (u.grid().n(), reference.grid().n());
    if n == 0 || n_ref % n != 0 || u.grid().radius() != reference.grid().radius() {
        return Err(SolverError::NonNestedGrids { n, n_ref });
    }
    let restricted = reference.subsample(n_ref / n)?;
    let h = u.grid().h();
    let diffs = u.values().iter().zip(restricted.values()).map(|(a, b)| (a - b).abs());
    let (sum, max) = diffs.fold((0.0, 0.0_f64), |(s, m), d| (s + d, m.max(d)));
    Ok((h * sum, max))
}

/// Errors of the given solutions against a reference on a finer nested grid.
/// The input order is irrelevant; the report is sorted by grid size.
pub fn convergence_report(solutions: &[GridFunction], reference: &GridFunction) -> Result<ConvergenceReport> {
    let n_ref = reference.grid().n();
    let mut rows = Vec::with_capacity(solutions.len());
    for u in solutions {
        let n = u.grid().n();
        if n > n_ref {
            return Err(SolverError::NonNestedGrids { n, n_ref });
        }
        let (l1, linf) = grid_errors(u, reference)?;
        rows.push((n, u.grid().h(), l1, linf));
    }
    rows.sort_by_key(|r| r.0);
    if rows.windows(2).any(|w| w[0].0 == w[1].0) {
        return Err(SolverError::InvalidParameter("repeated grid size in convergence study".into()));
    }
    let n_values: Vec<usize> = rows.iter().map(|r| r.0).collect();
    let h_values: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let l1_errors: Vec<f64> = rows.iter().map(|r| r.2).collect();
    let linf_errors: Vec<f64> = rows.iter().map(|r| r.3).collect();
    Ok(ConvergenceReport {
        n_ref,
        l1_slope: loglog_slope(&h_values, &l1_errors),
        linf_slope: loglog_slope(&h_values, &linf_errors),
        n_values,
        h_values,
        l1_errors,
        linf_errors,
    })
}

fn check_nested(n_values: &[usize], n_ref: usize) -> Result<()> {
    match n_values.iter().find(|&&n| n == 0 || n > n_ref || n_ref % n != 0) {
        Some(&n) => Err(SolverError::NonNestedGrids { n, n_ref }),
        None => Ok(()),
    }
}

/// Solves with `method` on every grid size and on `n_ref`, all in parallel,
/// and compares against the reference.
pub fn convergence_study(
    method: &Method,
    template: &SolverParams,
    n_values: &[usize],
    n_ref: usize,
    nodes: usize,
) -> Result<ConvergenceReport> {
    check_nested(n_values, n_ref)?;
    let mut sizes = n_values.to_vec();
    sizes.push(n_ref);
    let states = sizes
        .par_iter()
        .map(|&n| solve(method, &template.with_grid(template.radius, n), nodes).map(|s| s.state))
        .collect::<Result<Vec<_>>>()?;
    let (reference, coarse) = states.split_last().expect("reference solve present");
    convergence_report(coarse, reference)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapEntry {
    pub n: usize,
    pub l1: f64,
    pub linf: f64,
}

/// `h·Σ|u - v|` and `max|u - v|` of two functions on the same grid.
pub fn gap(u: &GridFunction, v: &GridFunction) -> Result<(f64, f64)> {
    if u.grid() != v.grid() {
        return Err(SolverError::LengthMismatch { expected: u.len(), got: v.len() });
    }
    grid_errors(u, v)
}

/// Gap between the solutions of two methods on each grid size.
pub fn cross_method_gap(
    first: &Method,
    second: &Method,
    template: &SolverParams,
    n_values: &[usize],
    nodes: usize,
) -> Result<Vec<GapEntry>> {
    n_values
        .par_iter()
        .map(|&n| {
            let params = template.with_grid(template.radius, n);
            let (a, b) = rayon::join(|| solve(first, &params, nodes), || solve(second, &params, nodes));
            let (l1, linf) = gap(&a?.state, &b?.state)?;
            Ok(GapEntry { n, l1, linf })
        })
        .collect()
}

/// Straight-line least-squares fit with 95% confidence half-widths.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitResult {
    pub a: f64,
    pub b: f64,
    pub rss: f64,
    pub ci_a: f64,
    pub ci_b: f64,
}

impl FitResult {
    pub fn a_bounds(&self) -> (f64, f64) {
        (self.a - self.ci_a, self.a + self.ci_a)
    }

    pub fn b_bounds(&self) -> (f64, f64) {
        (self.b - self.ci_b, self.b + self.ci_b)
    }
}

/// Fits `y ≈ a + b·x`. Confidence half-widths use the Student t quantile
/// with `n - 2` degrees of freedom; they are zero for exact data.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Result<FitResult> {
    if xs.len() != ys.len() {
        return Err(SolverError::LengthMismatch { expected: xs.len(), got: ys.len() });
    }
    if xs.len() < 3 {
        return Err(SolverError::Precondition(format!("at least 3 data points required, got {}", xs.len())));
    }
    if let Some(v) = xs.iter().chain(ys).find(|v| !v.is_finite()) {
        return Err(SolverError::InvalidParameter(format!("non-finite data value {v}")));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx <= f64::EPSILON * xs.iter().map(|x| x * x).sum::<f64>() {
        return Err(SolverError::RankDeficient("abscissae are all equal".into()));
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let b = sxy / sxx;
    let a = my - b * mx;
    let rss: f64 = xs.iter().zip(ys).map(|(x, y)| (y - a - b * x).powi(2)).sum();
    let dof = n - 2.0;
    let sigma2 = rss / dof;
    let t = StudentsT::new(0.0, 1.0, dof)
        .map_err(|e| SolverError::InvalidParameter(e.to_string()))?
        .inverse_cdf(0.975);
    let se_b = (sigma2 / sxx).sqrt();
    let se_a = (sigma2 * (1.0 / n + mx * mx / sxx)).sqrt();
    Ok(FitResult { a, b, rss, ci_a: t * se_a, ci_b: t * se_b })
}

/// Fits `α_k ≈ a + b·√k` to amplitudes indexed by node count `k = 0, 1, ...`.
pub fn fit_amplitudes(alphas: &[f64]) -> Result<FitResult> {
    if alphas.len() < 6 {
        return Err(SolverError::Precondition(format!(
            "amplitude fit needs k = 0..K with K >= 5, got {} values",
            alphas.len()
        )));
    }
    if alphas.iter().all(|a| *a == alphas[0]) {
        return Err(SolverError::RankDeficient("amplitudes are all equal".into()));
    }
    let xs: Vec<f64> = (0..alphas.len()).map(|k| (k as f64).sqrt()).collect();
    linear_fit(&xs, alphas)
}

/// `a + b·√k`.
pub fn amplitude_model(fit: &FitResult, k: usize) -> f64 {
    fit.a + fit.b * (k as f64).sqrt()
}

/// Node-position fit for one node index.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeFit {
    /// Zero-based node index within each state.
    pub node_index: usize,
    /// `(k, ϱ)` pairs entering the fit.
    pub observations: Vec<(usize, f64)>,
    /// Model `ϱ ≈ 1/√(a·k + b)`, fitted as `1/ϱ² = a·k + b`; `a` is the
    /// slope and `b` the intercept.
    pub fit: FitResult,
}

impl NodeFit {
    pub fn predict(&self, k: usize) -> f64 {
        1.0 / (self.fit.a * k as f64 + self.fit.b).sqrt()
    }
}

/// Minimum number of states a node index must appear in to be fitted.
pub const MIN_NODE_OBSERVATIONS: usize = 5;

/// Fits `ϱ ≈ 1/√(a·k + b)` per node index, where each table entry is
/// `(k, positions)` for the state with `k` nodes. Node indices seen in fewer
/// than [`MIN_NODE_OBSERVATIONS`] states are skipped.
pub fn fit_node_positions(tables: &[(usize, Vec<f64>)]) -> Result<Vec<NodeFit>> {
    let max_nodes = tables.iter().map(|(_, p)| p.len()).max().unwrap_or(0);
    let mut fits = Vec::new();
    for j in 0..max_nodes {
        let observations: Vec<(usize, f64)> =
            tables.iter().filter_map(|(k, p)| p.get(j).map(|&r| (*k, r))).collect();
        if observations.len() < MIN_NODE_OBSERVATIONS {
            continue;
        }
        if let Some((_, r)) = observations.iter().find(|(_, r)| !(*r > 0.0)) {
            return Err(SolverError::InvalidParameter(format!("node position {r} is not positive")));
        }
        let xs: Vec<f64> = observations.iter().map(|(k, _)| *k as f64).collect();
        let ys: Vec<f64> = observations.iter().map(|(_, r)| 1.0 / (r * r)).collect();
        let line = linear_fit(&xs, &ys)?;
        let fit = FitResult { a: line.b, b: line.a, rss: line.rss, ci_a: line.ci_b, ci_b: line.ci_a };
        fits.push(NodeFit { node_index: j, observations, fit });
    }
    Ok(fits)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Extremum {
    pub component: usize,
    pub position: f64,
    /// Absolute value.
    pub value: f64,
}

/// One extremum of `|u|` per nodal component, refined by the parabola
/// through the discrete argmax and its two neighbours (even reflection at
/// the origin, `u = 0` beyond `R`).
pub fn extrema_profile(u: &GridFunction) -> Result<Vec<Extremum>> {
    let dec = decompose(u, ZeroPolicy::Nudge)?;
    let values = u.values();
    let h = u.grid().h();
    let at = |i: isize| -> f64 {
        if i < 0 {
            values[(-i) as usize].abs()
        } else {
            values.get(i as usize).map_or(0.0, |v| v.abs())
        }
    };
    Ok(dec
        .component_ranges()
        .iter()
        .enumerate()
        .map(|(component, range)| {
            let i = range
                .clone()
                .max_by(|&a, &b| values[a].abs().total_cmp(&values[b].abs()))
                .unwrap_or(range.start);
            let (y0, y1, y2) = (at(i as isize - 1), at(i as isize), at(i as isize + 1));
            let curvature = y0 - 2.0 * y1 + y2;
            let delta = if curvature < 0.0 { (0.5 * (y0 - y2) / curvature).clamp(-0.5, 0.5) } else { 0.0 };
            let position = (u.grid().node(i) + delta * h).max(0.0);
            let value = y1 - 0.25 * (y0 - y2) * delta;
            Extremum { component, position, value }
        })
        .collect())
}

/// `√2·sech(r)`, the one-dimensional cubic soliton at `ω = 1`.
pub fn soliton(r: f64) -> f64 {
    std::f64::consts::SQRT_2 / r.cosh()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SechComparison {
    /// Index of the compared component.
    pub component: usize,
    pub shift: f64,
    /// `max |(|u|) - √2·sech(r - shift)|` over the component's samples.
    pub gap: f64,
}

/// Sup gap between `|u|` and the shifted soliton on component `k`.
pub fn sech_gap(u: &GridFunction, component: usize, shift: f64) -> Result<f64> {
    let dec = decompose(u, ZeroPolicy::Nudge)?;
    if component >= dec.n_components() {
        return Err(SolverError::Precondition(format!(
            "component {component} requested, state has {}",
            dec.n_components()
        )));
    }
    Ok(sup_gap(u, dec.component(component), shift))
}

fn sup_gap(u: &GridFunction, range: std::ops::Range<usize>, shift: f64) -> f64 {
    range
        .map(|i| (u.values()[i].abs() - soliton(u.grid().node(i) - shift)).abs())
        .fold(0.0, f64::max)
}

/// Minimizes the sup gap to the shifted soliton over the shift, on the last
/// component lying between two nodes.
pub fn sech_tail_compare(u: &GridFunction) -> Result<SechComparison> {
    let dec = decompose(u, ZeroPolicy::Nudge)?;
    if dec.n_nodes() < 2 {
        return Err(SolverError::Precondition(format!(
            "sech tail comparison needs at least 2 nodes, state has {}",
            dec.n_nodes()
        )));
    }
    let component = dec.n_nodes() - 1;
    let range = dec.component(component);
    let (lo, hi) = (dec.node_positions()[component - 1], dec.node_positions()[component]);
    let gap = |s: f64| sup_gap(u, range.clone(), s);

    const SCAN: usize = 400;
    let width = (hi - lo) / SCAN as f64;
    let best = (0..=SCAN)
        .map(|j| lo + j as f64 * width)
        .min_by(|a, b| gap(*a).total_cmp(&gap(*b)))
        .expect("nonempty scan");
    let (mut a, mut b) = (best - width, best + width);
    let inv_phi = 0.5 * (5.0_f64.sqrt() - 1.0);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (gap(c), gap(d));
    while b - a > 1e-12 * (1.0 + hi) {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = gap(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = gap(d);
        }
    }
    let mut shift = 0.5 * (a + b);
    let mut best_gap = gap(shift);
    if gap(best) < best_gap {
        shift = best;
        best_gap = gap(best);
    }
    Ok(SechComparison { component, shift, gap: best_gap })
}
