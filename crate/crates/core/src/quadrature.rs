//! Nodal decomposition of grid functions and the node-corrected trapezoidal
//! functionals built on it.
//!
//! A grid function with `n_nodes` strict sign changes splits into
//! `n_nodes + 1` nodal components. Every node is located inside its cell by
//! linear interpolation, and each component integral is a composite
//! trapezoidal rule whose end cells are truncated at the interpolated nodes
//! (where the integrand is taken to vanish). The outer ends of the first and
//! last components are `r = 0` and `r = R`.
//!
//! All indices here are zero-based: sample `i` sits at `r_i = i·h`.

use std::ops::Range;

use crate::error::{Result, SolverError};
use crate::problem::{radial_weight, GridFunction, Nonlinearity, PowerNonlinearity, RadialGrid, SolverParams};

/// How exact zero samples are treated when locating sign changes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ZeroPolicy {
    /// A zero sample carries the sign of its predecessor (of the first
    /// nonzero sample for leading zeros).
    #[default]
    Nudge,
    Reject,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodalDecomposition {
    sign_change_left: Vec<usize>,
    node_positions: Vec<f64>,
    component_ranges: Vec<Range<usize>>,
}

impl NodalDecomposition {
    pub fn n_nodes(&self) -> usize {
        self.sign_change_left.len()
    }

    pub fn n_components(&self) -> usize {
        self.component_ranges.len()
    }

    /// Indices `i` with a sign change between samples `i` and `i + 1`.
    pub fn sign_change_left(&self) -> &[usize] {
        &self.sign_change_left
    }

    pub fn sign_change_right(&self) -> Vec<usize> {
        self.sign_change_left.iter().map(|i| i + 1).collect()
    }

    pub fn node_positions(&self) -> &[f64] {
        &self.node_positions
    }

    pub fn component_ranges(&self) -> &[Range<usize>] {
        &self.component_ranges
    }

    pub fn component(&self, k: usize) -> Range<usize> {
        self.component_ranges[k].clone()
    }

    /// Left end of component `k`: `0` for the first one, the interpolated
    /// node otherwise.
    fn left_end(&self, k: usize) -> f64 {
        if k == 0 {
            0.0
        } else {
            self.node_positions[k - 1]
        }
    }

    fn right_end(&self, k: usize, radius: f64) -> f64 {
        if k == self.n_nodes() {
            radius
        } else {
            self.node_positions[k]
        }
    }
}

/// Number of sign changes of a sample sequence, zero samples nudged.
pub fn count_sign_changes(values: &[f64]) -> usize {
    let mut prev = 0.0;
    let mut count = 0;
    for &v in values {
        if v != 0.0 {
            if v * prev < 0.0 {
                count += 1;
            }
            prev = v;
        }
    }
    count
}

pub fn decompose(u: &GridFunction, policy: ZeroPolicy) -> Result<NodalDecomposition> {
    decompose_samples(u.grid(), u.values(), policy)
}

/// [`decompose`] on raw samples of a function on `grid`.
pub fn decompose_samples(grid: &RadialGrid, values: &[f64], policy: ZeroPolicy) -> Result<NodalDecomposition> {
    if values.len() != grid.n() {
        return Err(SolverError::LengthMismatch { expected: grid.n(), got: values.len() });
    }
    if policy == ZeroPolicy::Reject {
        if let Some(index) = values.iter().position(|v| *v == 0.0) {
            return Err(SolverError::DegenerateZero { index });
        }
    }
    let n = values.len();
    let mut sign_change_left = Vec::new();
    let mut prev = values.iter().copied().find(|v| *v != 0.0).unwrap_or(0.0);
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v != 0.0 {
            if v * prev < 0.0 {
                sign_change_left.push(i - 1);
            }
            prev = v;
        }
    }
    let node_positions = sign_change_left
        .iter()
        .map(|&i| {
            let (r0, r1) = (grid.node(i), grid.node(i + 1));
            let (u0, u1) = (values[i], values[i + 1]);
            (r0 * u1 - r1 * u0) / (u1 - u0)
        })
        .collect();
    let mut component_ranges = Vec::with_capacity(sign_change_left.len() + 1);
    let mut start = 0;
    for &i in &sign_change_left {
        component_ranges.push(start..i + 1);
        start = i + 1;
    }
    component_ranges.push(start..n);
    Ok(NodalDecomposition {
        sign_change_left,
        node_positions,
        component_ranges,
    })
}

/// Centered difference `(u_{i+1} - u_{i-1}) / 2h` with the even reflection
/// `u_{-1} = u_1` at the origin and the Dirichlet value `u_n = 0`.
#[inline]
fn centered_diff(values: &[f64], i: usize, h: f64) -> f64 {
    let n = values.len();
    let right = if i + 1 < n { values[i + 1] } else { 0.0 };
    let left = if i == 0 { values[1] } else { values[i - 1] };
    (right - left) / (2.0 * h)
}

/// Weighted L^q power `∫ |u|^q r^{d-1} dr` over nodal component `k`.
pub fn lp_component(u: &GridFunction, dec: &NodalDecomposition, k: usize, q: f64, d: usize) -> f64 {
    let grid = u.grid();
    let weights = grid.radial_weights(d);
    lp_component_weighted(u.values(), grid.h(), grid.radius(), &weights, dec, k, |v| {
        PowerNonlinearity::abs_pow(v, q)
    })
}

fn lp_component_weighted(
    values: &[f64],
    h: f64,
    radius: f64,
    weights: &[f64],
    dec: &NodalDecomposition,
    k: usize,
    pow: impl Fn(f64) -> f64,
) -> f64 {
    let range = dec.component(k);
    if range.is_empty() {
        return 0.0;
    }
    let (lo, hi) = (range.start, range.end - 1);
    let interior: f64 = range.clone().map(|i| pow(values[i]) * weights[i]).sum();
    let left_corr = ((lo as f64 * h - dec.left_end(k)) - h) / 2.0;
    let right_corr = ((dec.right_end(k, radius) - hi as f64 * h) - h) / 2.0;
    h * interior + left_corr * pow(values[lo]) * weights[lo] + right_corr * pow(values[hi]) * weights[hi]
}

/// Weighted gradient energy `∫ |u'|^2 r^{d-1} dr` over nodal component `k`.
pub fn grad_component(u: &GridFunction, dec: &NodalDecomposition, k: usize, d: usize) -> f64 {
    let grid = u.grid();
    let weights = grid.radial_weights(d);
    grad_component_weighted(u.values(), grid.h(), &weights, d, dec, k)
}

fn grad_component_weighted(
    values: &[f64],
    h: f64,
    weights: &[f64],
    d: usize,
    dec: &NodalDecomposition,
    k: usize,
) -> f64 {
    let range = dec.component(k);
    if range.is_empty() {
        return 0.0;
    }
    let n = values.len();
    let last = dec.n_nodes();
    let (lo, hi) = (range.start, range.end - 1);
    let sq = |i: usize| {
        let g = centered_diff(values, i, h);
        g * g * weights[i]
    };

    // u'(0) = 0 removes the origin from the first component's sum.
    let sum_start = if k == 0 { 1 } else { lo };
    // The last component stops its full-weight sum one sample short of R.
    let sum_end = if k == last { n - 1 } else { hi + 1 };
    let mut total = h * (sum_start..sum_end).map(sq).sum::<f64>();

    if k > 0 {
        let node = dec.left_end(k);
        let r_lo = lo as f64 * h;
        let one_sided = (values[lo] - values[lo - 1]) / h;
        total += ((r_lo - node) - h) / 2.0 * sq(lo);
        total += (r_lo - node) / 2.0 * one_sided * one_sided * radial_weight(node, d);
    }
    if k < last {
        let node = dec.node_positions()[k];
        let r_hi = hi as f64 * h;
        let one_sided = (values[hi + 1] - values[hi]) / h;
        total += ((node - r_hi) - h) / 2.0 * sq(hi);
        total += (node - r_hi) / 2.0 * one_sided * one_sided * radial_weight(node, d);
    } else {
        total += h / 2.0 * sq(n - 1);
    }
    total
}

/// Per-component discrete functionals of a grid function.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteFunctionals {
    /// Gradient energies.
    pub grad: Vec<f64>,
    /// Weighted L² powers.
    pub l2: Vec<f64>,
    /// Weighted L^{p+1} powers.
    pub lp1: Vec<f64>,
    pub omega: f64,
    pub p: f64,
}

impl DiscreteFunctionals {
    pub fn n_components(&self) -> usize {
        self.grad.len()
    }

    /// Quadratic part `½𝔑_k + ½ω𝔏²_k`.
    pub fn energy(&self, k: usize) -> f64 {
        0.5 * self.grad[k] + 0.5 * self.omega * self.l2[k]
    }

    /// Nehari residual `𝔑_k + ω𝔏²_k - 𝔏^{p+1}_k`.
    pub fn residual(&self, k: usize) -> f64 {
        self.grad[k] + self.omega * self.l2[k] - self.lp1[k]
    }

    pub fn residuals(&self) -> Vec<f64> {
        (0..self.n_components()).map(|k| self.residual(k)).collect()
    }

    pub fn component_action(&self, k: usize) -> f64 {
        self.energy(k) - self.lp1[k] / (self.p + 1.0)
    }

    pub fn action(&self) -> f64 {
        (0..self.n_components()).map(|k| self.component_action(k)).sum()
    }

    pub fn max_abs_residual(&self) -> f64 {
        (0..self.n_components())
            .map(|k| self.residual(k).abs())
            .fold(0.0, f64::max)
    }

    pub fn max_energy(&self) -> f64 {
        (0..self.n_components())
            .map(|k| self.energy(k))
            .fold(0.0, f64::max)
    }
}

/// Quadrature context with the radial weights `r_i^{d-1}` precomputed, for
/// repeated evaluation on a fixed grid.
#[derive(Debug, Clone)]
pub struct Quadrature {
    params: SolverParams,
    weights: Vec<f64>,
    power: PowerNonlinearity,
}

impl Quadrature {
    pub fn new(params: &SolverParams) -> Self {
        Quadrature {
            params: *params,
            weights: params.grid().radial_weights(params.d),
            power: params.nonlinearity(),
        }
    }

    pub fn params(&self) -> &SolverParams {
        &self.params
    }

    pub fn functionals(&self, values: &[f64], dec: &NodalDecomposition) -> DiscreteFunctionals {
        let grid = self.params.grid();
        let (h, radius) = (grid.h(), grid.radius());
        let m = dec.n_components();
        let (mut grad, mut l2, mut lp1) = (Vec::with_capacity(m), Vec::with_capacity(m), Vec::with_capacity(m));
        let power = self.power;
        for k in 0..m {
            grad.push(grad_component_weighted(values, h, &self.weights, self.params.d, dec, k));
            l2.push(lp_component_weighted(values, h, radius, &self.weights, dec, k, |v| v * v));
            lp1.push(lp_component_weighted(values, h, radius, &self.weights, dec, k, |v| {
                power.f_times_s(v).abs()
            }));
        }
        DiscreteFunctionals {
            grad,
            l2,
            lp1,
            omega: self.params.omega,
            p: self.params.p,
        }
    }
}

impl Quadrature {
    /// Prepares the evaluation of the functionals of `s∘u`, the function
    /// with component `k` multiplied by `s_k`, for many scale vectors `s`.
    pub fn scaled<'a>(&'a self, values: &'a [f64], dec: &'a NodalDecomposition) -> ScaledComponents<'a> {
        ScaledComponents::new(self, values, dec)
    }
}

/// Functionals of componentwise rescalings of a fixed grid function.
///
/// Only the few terms that straddle a node or depend on a node position mix
/// the scales of neighbouring components. Everything else is homogeneous in
/// the component's own scale and is summed once. Evaluation costs
/// `O(n_nodes)`.
#[derive(Debug, Clone)]
pub struct ScaledComponents<'a> {
    quad: &'a Quadrature,
    values: &'a [f64],
    dec: &'a NodalDecomposition,
    h: f64,
    core_l2: Vec<f64>,
    core_lp1: Vec<f64>,
    core_grad: Vec<f64>,
}

impl<'a> ScaledComponents<'a> {
    fn new(quad: &'a Quadrature, values: &'a [f64], dec: &'a NodalDecomposition) -> Self {
        let h = quad.params.grid().h();
        let n = values.len();
        let last = dec.n_nodes();
        let w = &quad.weights;
        let inv_2h = 0.5 / h;
        let m = dec.n_components();
        let (mut core_l2, mut core_lp1, mut core_grad) = (Vec::with_capacity(m), Vec::with_capacity(m), Vec::with_capacity(m));
        for k in 0..m {
            let range = dec.component(k);
            let (mut l2, mut lp1) = (0.0, 0.0);
            for (v, wi) in values[range.clone()].iter().zip(&w[range.clone()]) {
                let vw = v * v * wi;
                l2 += vw;
                lp1 += quad.power.abs_pow_pm1(*v) * vw;
            }
            core_l2.push(h * l2);
            core_lp1.push(h * lp1);
            let mut grad = 0.0;
            if !range.is_empty() {
                let (lo, hi) = (range.start, range.end - 1);
                let sum_start = if k == 0 { 1 } else { lo };
                let sum_end = if k == last { n - 1 } else { hi + 1 };
                // Pure terms: both neighbours in this component.
                let pure_start = sum_start.max(if k > 0 { lo + 1 } else { 0 });
                let pure_end = sum_end.min(if k < last { hi } else { n });
                let mut inner = 0.0;
                // The sums never reach i = 0 or i = n - 1.
                for i in pure_start.max(1)..pure_end.min(n - 1) {
                    let g = values[i + 1] - values[i - 1];
                    inner += g * g * w[i];
                }
                grad += inner * inv_2h * inv_2h;
                grad *= h;
                if k == last && !(lo == n - 1 && k > 0) {
                    let g = values[n - 2] * inv_2h;
                    grad += 0.5 * h * g * g * w[n - 1];
                }
            }
            core_grad.push(grad);
        }
        ScaledComponents { quad, values, dec, h, core_l2, core_lp1, core_grad }
    }

    fn component_of(&self, i: usize) -> usize {
        self.dec.sign_change_left.partition_point(|&m| m < i)
    }

    fn node_position(&self, j: usize, scales: &[f64]) -> f64 {
        let grid = self.quad.params.grid();
        let i = self.dec.sign_change_left[j];
        let (a, b) = (scales[j] * self.values[i], scales[j + 1] * self.values[i + 1]);
        let (r0, r1) = (grid.node(i), grid.node(i + 1));
        (r0 * b - r1 * a) / (b - a)
    }

    /// Node positions of `s∘u`.
    pub fn node_positions(&self, scales: &[f64]) -> Vec<f64> {
        (0..self.dec.n_nodes()).map(|j| self.node_position(j, scales)).collect()
    }

    /// Decomposition of `s∘u`: same indices, moved nodes.
    pub fn decomposition(&self, scales: &[f64]) -> NodalDecomposition {
        NodalDecomposition {
            sign_change_left: self.dec.sign_change_left.clone(),
            node_positions: self.node_positions(scales),
            component_ranges: self.dec.component_ranges.clone(),
        }
    }

    pub fn n_components(&self) -> usize {
        self.dec.n_components()
    }

    /// `(𝔑_k, 𝔏²_k, 𝔏^{p+1}_k)` of `s∘u`. Only the scales of components
    /// `k - 1`, `k` and `k + 1` enter.
    pub fn component(&self, k: usize, scales: &[f64]) -> (f64, f64, f64) {
        let params = &self.quad.params;
        let (h, radius, d) = (self.h, params.radius, params.d);
        let n = self.values.len();
        let last = self.dec.n_nodes();
        let w = &self.quad.weights;
        let range = self.dec.component(k);
        if range.is_empty() {
            return (0.0, 0.0, 0.0);
        }
        let sv = |i: usize| scales[self.component_of(i)] * self.values[i];
        let svn = |i: usize| if i < n { sv(i) } else { 0.0 };
        let sq = |i: usize| {
            let left = if i == 0 { sv(1) } else { sv(i - 1) };
            let g = (svn(i + 1) - left) / (2.0 * h);
            g * g * w[i]
        };
        let power = self.quad.power;
        let s = scales[k];
        let (lo, hi) = (range.start, range.end - 1);
        let left_end = if k == 0 { 0.0 } else { self.node_position(k - 1, scales) };
        let right_end = if k == last { radius } else { self.node_position(k, scales) };
        let (r_lo, r_hi) = (lo as f64 * h, hi as f64 * h);
        let left_corr = ((r_lo - left_end) - h) / 2.0;
        let right_corr = ((right_end - r_hi) - h) / 2.0;
        let (u_lo, u_hi) = (s * self.values[lo], s * self.values[hi]);
        let l2 = s * s * self.core_l2[k] + left_corr * u_lo * u_lo * w[lo] + right_corr * u_hi * u_hi * w[hi];
        let lp1 = power.f_times_s(s).abs() * self.core_lp1[k]
            + left_corr * power.f_times_s(u_lo).abs() * w[lo]
            + right_corr * power.f_times_s(u_hi).abs() * w[hi];

        let mut grad = s * s * self.core_grad[k];
        let sum_start = if k == 0 { 1 } else { lo };
        let sum_end = if k == last { n - 1 } else { hi + 1 };
        if k > 0 && lo >= sum_start && lo < sum_end {
            grad += h * sq(lo);
        }
        if k < last && hi >= sum_start && hi < sum_end && !(hi == lo && k > 0) {
            grad += h * sq(hi);
        }
        if k > 0 {
            let one_sided = (sv(lo) - sv(lo - 1)) / h;
            grad += left_corr * sq(lo);
            grad += (r_lo - left_end) / 2.0 * one_sided * one_sided * radial_weight(left_end, d);
        }
        if k < last {
            let one_sided = (sv(hi + 1) - sv(hi)) / h;
            grad += right_corr * sq(hi);
            grad += (right_end - r_hi) / 2.0 * one_sided * one_sided * radial_weight(right_end, d);
        } else if k > 0 && lo == n - 1 {
            grad += h / 2.0 * sq(n - 1);
        }
        (grad, l2, lp1)
    }

    pub fn functionals(&self, scales: &[f64]) -> DiscreteFunctionals {
        let m = self.dec.n_components();
        let (mut grad, mut l2, mut lp1) = (Vec::with_capacity(m), Vec::with_capacity(m), Vec::with_capacity(m));
        for k in 0..m {
            let (g, a, b) = self.component(k, scales);
            grad.push(g);
            l2.push(a);
            lp1.push(b);
        }
        let params = &self.quad.params;
        DiscreteFunctionals { grad, l2, lp1, omega: params.omega, p: params.p }
    }
}

pub fn functionals(u: &GridFunction, dec: &NodalDecomposition, params: &SolverParams) -> DiscreteFunctionals {
    Quadrature::new(params).functionals(u.values(), dec)
}

pub fn nehari_residuals(u: &GridFunction, dec: &NodalDecomposition, params: &SolverParams) -> Vec<f64> {
    functionals(u, dec, params).residuals()
}

pub fn action(u: &GridFunction, dec: &NodalDecomposition, params: &SolverParams) -> f64 {
    functionals(u, dec, params).action()
}
