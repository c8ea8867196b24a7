//! Projected gradient descent on the discrete nodal Nehari set.
//!
//! Each iteration takes an explicit gradient step of the action using the
//! tridiagonal radial Laplacian, then rescales every nodal component so
//! that its discrete Nehari residual vanishes again.

use crate::error::{Result, SolverError};
use crate::problem::{sample, GridFunction, PowerNonlinearity, RadialGrid, SolverParams};
use crate::quadrature::{count_sign_changes, decompose, decompose_samples, DiscreteFunctionals, NodalDecomposition, Quadrature, ScaledComponents, ZeroPolicy};

/// Finite-difference radial Laplacian `u'' + (d-1)/r·u'` on the `n` stored
/// samples, with `u'(0) = 0` and `u(R) = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialLaplacian {
    h: f64,
    /// `lower[i]` multiplies `u_{i-1}` in row `i` (unused for `i = 0`).
    lower: Vec<f64>,
    /// `upper[i]` multiplies `u_{i+1}` in row `i` (unused for `i = n-1`).
    upper: Vec<f64>,
}

pub fn build_laplacian(params: &SolverParams, grid: &RadialGrid) -> RadialLaplacian {
    let n = grid.n();
    let h = grid.h();
    let inv_h2 = 1.0 / (h * h);
    let drift = |i: usize| (params.d as f64 - 1.0) / (2.0 * h * grid.node(i));
    let mut lower = vec![0.0; n];
    let mut upper = vec![0.0; n];
    upper[0] = 2.0 * inv_h2;
    for i in 1..n {
        lower[i] = inv_h2 - drift(i);
        if i + 1 < n {
            upper[i] = inv_h2 + drift(i);
        }
    }
    RadialLaplacian { h, lower, upper }
}

impl RadialLaplacian {
    pub fn n(&self) -> usize {
        self.lower.len()
    }

    pub fn diagonal(&self) -> f64 {
        -2.0 / (self.h * self.h)
    }

    /// Matrix entry `(i, j)`, zero-based.
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        let n = self.n();
        if i >= n || j >= n {
            return 0.0;
        }
        if i == j {
            self.diagonal()
        } else if j + 1 == i {
            self.lower[i]
        } else if j == i + 1 {
            self.upper[i]
        } else {
            0.0
        }
    }

    #[inline]
    fn row(&self, u: &[f64], i: usize) -> f64 {
        let n = u.len();
        let mut acc = self.diagonal() * u[i];
        if i > 0 {
            acc += self.lower[i] * u[i - 1];
        }
        if i + 1 < n {
            acc += self.upper[i] * u[i + 1];
        }
        acc
    }

    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        (0..u.len()).map(|i| self.row(u, i)).collect()
    }

    /// Factorization of `Id - τ(Δ - ω)` for the linearly implicit step.
    pub fn implicit_solver(&self, tau: f64, omega: f64) -> ImplicitSolver {
        let n = self.n();
        let diag = 1.0 - tau * (self.diagonal() - omega);
        let mut upper = vec![0.0; n];
        let mut inv_pivot = vec![0.0; n];
        let mut prev_upper = 0.0;
        for i in 0..n {
            let lower = if i > 0 { -tau * self.lower[i] } else { 0.0 };
            let pivot = diag - lower * prev_upper;
            inv_pivot[i] = 1.0 / pivot;
            let c = if i + 1 < n { -tau * self.upper[i] } else { 0.0 };
            upper[i] = c * inv_pivot[i];
            prev_upper = upper[i];
        }
        let lower = (0..n).map(|i| if i > 0 { -tau * self.lower[i] } else { 0.0 }).collect();
        ImplicitSolver { lower, upper, inv_pivot }
    }
}

/// LU factors of the tridiagonal matrix `Id - τ(Δ - ω)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImplicitSolver {
    lower: Vec<f64>,
    upper: Vec<f64>,
    inv_pivot: Vec<f64>,
}

impl ImplicitSolver {
    /// Overwrites `rhs` with the solution.
    pub fn solve_in_place(&self, rhs: &mut [f64]) {
        let n = rhs.len();
        if n == 0 {
            return;
        }
        rhs[0] *= self.inv_pivot[0];
        for i in 1..n {
            rhs[i] = (rhs[i] - self.lower[i] * rhs[i - 1]) * self.inv_pivot[i];
        }
        for i in (0..n - 1).rev() {
            rhs[i] -= self.upper[i] * rhs[i + 1];
        }
    }
}

/// Rescales each nodal component of a grid function onto its discrete
/// Nehari manifold.
///
/// For a component that does not interact with its neighbours the scale is
/// `((𝔑_k + ω𝔏²_k)/𝔏^{p+1}_k)^{1/(p-1)}`. Gradient terms straddling a node
/// and the interpolated node positions couple neighbouring scales, so each
/// scale is solved for in turn with the others fixed, sweeping until every
/// residual vanishes to `tolerance` relative to the size of its own terms.
#[derive(Debug, Clone)]
pub struct Projector {
    quad: Quadrature,
    policy: ZeroPolicy,
    tolerance: f64,
    max_sweeps: usize,
}

/// A projected vector's nodal data.
#[derive(Debug, Clone)]
pub struct Projected {
    pub decomposition: NodalDecomposition,
    pub functionals: DiscreteFunctionals,
    pub sweeps: usize,
}

impl Projector {
    pub fn new(params: &SolverParams) -> Self {
        Projector {
            quad: Quadrature::new(params),
            policy: ZeroPolicy::Nudge,
            tolerance: 1e-14,
            max_sweeps: 50,
        }
    }

    pub fn with_zero_policy(mut self, policy: ZeroPolicy) -> Self {
        self.policy = policy;
        self
    }

    pub fn params(&self) -> &SolverParams {
        self.quad.params()
    }

    pub fn project_in_place(&self, values: &mut [f64]) -> Result<Projected> {
        let dec = decompose_samples(&self.params().grid(), values, self.policy)?;
        let eval = self.quad.scaled(values, &dec);
        let mut scales = vec![1.0; dec.n_components()];
        let mut sweeps = 0;
        let functionals = loop {
            let fun = eval.functionals(&scales);
            let settled = (0..fun.n_components()).all(|k| {
                let quadratic = fun.grad[k] + fun.omega * fun.l2[k];
                fun.residual(k).abs() <= self.tolerance * (quadratic + fun.lp1[k])
            });
            if (sweeps > 0 && settled) || sweeps >= self.max_sweeps {
                break fun;
            }
            let mut max_change = 0.0_f64;
            for k in 0..scales.len() {
                let old = scales[k];
                self.solve_component(&eval, k, &mut scales)?;
                max_change = max_change.max((scales[k] / old - 1.0).abs());
            }
            sweeps += 1;
            if max_change <= 4.0 * f64::EPSILON {
                break eval.functionals(&scales);
            }
        };
        let decomposition = eval.decomposition(&scales);
        for (range, s) in decomposition.component_ranges().iter().zip(&scales) {
            values[range.clone()].iter_mut().for_each(|v| *v *= s);
        }
        Ok(Projected { decomposition, functionals, sweeps })
    }

    /// Sets `scales[k]` to the root of the `k`-th residual with the other
    /// scales fixed. The residual is positive for small scales and negative
    /// for large ones; the search runs in `ln s` by regula falsi (Illinois).
    fn solve_component(&self, eval: &ScaledComponents, k: usize, scales: &mut [f64]) -> Result<()> {
        let params = self.params();
        let (omega, inv_pm1) = (params.omega, 1.0 / (params.p - 1.0));
        let residual = |x: f64, scales: &mut [f64]| {
            scales[k] = x.exp();
            let (grad, l2, lp1) = eval.component(k, scales);
            let quadratic = grad + omega * l2;
            (quadratic - lp1, quadratic + lp1, lp1)
        };
        let x0 = scales[k].ln();
        let (f0, size0, lp1) = residual(x0, scales);
        let ratio = (f0 + lp1) / lp1;
        if !(lp1 > 0.0) || !(ratio > 0.0) || !ratio.is_finite() {
            return Err(SolverError::EmptyComponent { component: k, value: lp1 });
        }
        if f0.abs() <= f64::EPSILON * size0 {
            scales[k] = x0.exp();
            return Ok(());
        }
        // the homogeneous factor is exact when the component is decoupled
        let guess = x0 + inv_pm1 * ratio.ln();
        let (mut xa, mut fa) = (x0, f0);
        let (mut xb, (mut fb, size, _)) = (guess, residual(guess, scales));
        if fb.abs() <= f64::EPSILON * size {
            return Ok(());
        }
        let mut step = (guess - x0).abs().max(1e-3);
        while fa.signum() == fb.signum() {
            step *= 2.0;
            if step > 1e3 {
                return Err(SolverError::EmptyComponent { component: k, value: lp1 });
            }
            (xa, fa) = (xb, fb);
            xb += if fb > 0.0 { step } else { -step };
            (fb, _, _) = residual(xb, scales);
        }
        let mut side = 0;
        for _ in 0..200 {
            let xc = (xa * fb - xb * fa) / (fb - fa);
            let (fc, size, _) = residual(xc, scales);
            if fc.abs() <= f64::EPSILON * size || (xb - xa).abs() <= 4.0 * f64::EPSILON * (1.0 + xc.abs()) {
                return Ok(());
            }
            if fc.signum() == fb.signum() {
                (xb, fb) = (xc, fc);
                if side == -1 {
                    fa *= 0.5;
                }
                side = -1;
            } else {
                (xa, fa) = (xc, fc);
                if side == 1 {
                    fb *= 0.5;
                }
                side = 1;
            }
        }
        Ok(())
    }

    pub fn project(&self, u: &GridFunction) -> Result<GridFunction> {
        let mut values = u.values().to_vec();
        self.project_in_place(&mut values)?;
        GridFunction::new(*u.grid(), values)
    }
}

pub fn project(u: &GridFunction, params: &SolverParams) -> Result<GridFunction> {
    Projector::new(params).project(u)
}

/// `Δu - ωu + |u|^{p-1}u`, the negative of the discrete action gradient.
pub fn descent_direction(u: &GridFunction, params: &SolverParams) -> GridFunction {
    let lap = build_laplacian(params, u.grid());
    let f = params.nonlinearity();
    let mut g = vec![0.0; u.len()];
    fill_direction(&lap, &f, params.omega, u.values(), &mut g);
    GridFunction::new(*u.grid(), g).expect("finite input gives finite direction")
}

#[inline]
fn fill_direction(lap: &RadialLaplacian, f: &PowerNonlinearity, omega: f64, u: &[f64], out: &mut [f64]) {
    let n = u.len();
    let diag = lap.diagonal() - omega;
    let local = |x: f64| diag * x + f.abs_pow_pm1(x) * x;
    out[0] = lap.upper[0] * u[1] + local(u[0]);
    let interior = out[1..n - 1]
        .iter_mut()
        .zip(u.windows(3))
        .zip(lap.lower[1..n - 1].iter().zip(&lap.upper[1..n - 1]));
    for ((o, w), (lo, up)) in interior {
        *o = lo * w[0] + up * w[2] + local(w[1]);
    }
    out[n - 1] = lap.lower[n - 1] * u[n - 2] + local(u[n - 1]);
}

/// Gradient step variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UpdateRule {
    /// `v = u + τ(Δu - ωu + |u|^{p-1}u)`: descent on the action.
    #[default]
    Descent,
    /// `v = (Id - τ(Δ + [|u|^{p-1}]))u`, without the `-ω` term. This
    /// ascends on the action.
    Literal,
    /// `(Id - τ(Δ - ω))v = u + τ|u|^{p-1}u`: implicit in the linear part,
    /// explicit in the nonlinearity. The step size need not scale like `h²`.
    /// Fixed points depend weakly on `τ` and agree with those of
    /// [`Descent`] as `h → 0`.
    ///
    /// [`Descent`]: UpdateRule::Descent
    SemiImplicit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StoppingRule {
    /// Max-abs change between consecutive iterates.
    #[default]
    MaxUpdate,
    /// Absolute change of the action between consecutive iterates.
    ActionStagnation,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NehariOptions {
    /// Gradient step; `None` selects [`default_tau`].
    pub tau: Option<f64>,
    pub epsilon: f64,
    pub max_iter: usize,
    pub update: UpdateRule,
    pub stopping: StoppingRule,
    pub zero_policy: ZeroPolicy,
    /// Allowed action increase before the step is halved.
    pub action_slack: f64,
    /// Smallest step, relative to `h²`, reachable by halving.
    pub tau_floor: f64,
}

impl Default for NehariOptions {
    fn default() -> Self {
        NehariOptions {
            tau: None,
            epsilon: 1e-10,
            max_iter: 5_000_000,
            update: UpdateRule::Descent,
            stopping: StoppingRule::MaxUpdate,
            zero_policy: ZeroPolicy::Nudge,
            action_slack: 1e-8,
            tau_floor: 1e-6,
        }
    }
}

impl NehariOptions {
    /// Semi-implicit steps of fixed size `tau`, without halving.
    pub fn semi_implicit(tau: f64) -> Self {
        NehariOptions {
            tau: Some(tau),
            update: UpdateRule::SemiImplicit,
            action_slack: f64::INFINITY,
            ..NehariOptions::default()
        }
    }
}

/// `h²/(2 + ωh²)`, the diffusive limit `h²/2` with the `-ω` shift included.
pub fn default_tau(params: &SolverParams) -> f64 {
    let h = params.grid().h();
    h * h / (2.0 + params.omega * h * h)
}

/// Default step of the semi-implicit update.
pub const DEFAULT_SEMI_IMPLICIT_TAU: f64 = 0.1;

/// Default step for `rule`.
pub fn default_tau_for(rule: UpdateRule, params: &SolverParams) -> f64 {
    match rule {
        UpdateRule::SemiImplicit => DEFAULT_SEMI_IMPLICIT_TAU,
        _ => default_tau(params),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Termination {
    Converged,
    NodeCountChanged { expected: usize, found: usize, iteration: usize },
    MaxIterExceeded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NehariRun {
    pub final_state: GridFunction,
    pub iterations: usize,
    pub nodes: usize,
    pub tau: f64,
    pub tau_halvings: usize,
    /// Iterations at which some node moved into another grid cell.
    pub crossing_iterations: Vec<usize>,
    pub crit_history: Vec<f64>,
    pub action_history: Vec<f64>,
    pub residual_history: Vec<f64>,
    /// Action of the projected initial datum.
    pub initial_action: f64,
    pub termination: Termination,
}

impl NehariRun {
    pub fn final_action(&self) -> f64 {
        self.action_history.last().copied().unwrap_or(self.initial_action)
    }

    pub fn final_crit(&self) -> f64 {
        self.crit_history.last().copied().unwrap_or(f64::INFINITY)
    }

    pub fn into_result(self) -> Result<NehariRun> {
        match self.termination {
            Termination::Converged => Ok(self),
            Termination::NodeCountChanged { expected, found, iteration } => {
                Err(SolverError::NodeCountChanged { expected, found, iteration })
            }
            Termination::MaxIterExceeded => Err(SolverError::MaxIterExceeded {
                max_iter: self.iterations,
                crit: self.final_crit(),
            }),
        }
    }
}

/// Runs the projected gradient descent from `u0` and always returns the
/// history, whatever the termination.
pub fn run_descent(u0: &GridFunction, params: &SolverParams, opts: &NehariOptions) -> Result<NehariRun> {
    params.validate()?;
    if u0.grid() != &params.grid() {
        return Err(SolverError::InvalidParameter("initial datum is not on the parameter grid".into()));
    }
    let tau0 = opts.tau.unwrap_or_else(|| default_tau_for(opts.update, params));
    if !(tau0 > 0.0 && tau0.is_finite()) {
        return Err(SolverError::InvalidParameter(format!("tau must be positive, got {tau0}")));
    }
    let h = params.grid().h();
    let tau_floor = match opts.update {
        UpdateRule::SemiImplicit => opts.tau_floor * tau0,
        _ => opts.tau_floor * h * h,
    };
    let projector = Projector::new(params).with_zero_policy(opts.zero_policy);
    let lap = build_laplacian(params, u0.grid());
    let f = params.nonlinearity();

    let mut u = u0.values().to_vec();
    let start = projector.project_in_place(&mut u)?;
    let nodes = start.decomposition.n_nodes();
    let mut pattern = start.decomposition.sign_change_left().to_vec();
    let mut crossing_iterations = Vec::new();
    let initial_action = start.functionals.action();

    let mut tau = tau0;
    let mut implicit = (opts.update == UpdateRule::SemiImplicit).then(|| lap.implicit_solver(tau, params.omega));
    let mut halvings = 0;
    let mut action = initial_action;
    let mut crit_history = Vec::new();
    let mut action_history = Vec::new();
    let mut residual_history = Vec::new();
    let mut v = vec![0.0; u.len()];
    let mut termination = Termination::MaxIterExceeded;

    while crit_history.len() < opts.max_iter {
        let iteration = crit_history.len() + 1;
        match opts.update {
            UpdateRule::Descent => {
                fill_direction(&lap, &f, params.omega, &u, &mut v);
                v.iter_mut().zip(&u).for_each(|(vi, ui)| *vi = ui + tau * *vi);
            }
            UpdateRule::Literal => {
                for i in 0..u.len() {
                    v[i] = u[i] - tau * (lap.row(&u, i) + f.abs_pow_pm1(u[i]) * u[i]);
                }
            }
            UpdateRule::SemiImplicit => {
                for i in 0..u.len() {
                    v[i] = u[i] + tau * f.abs_pow_pm1(u[i]) * u[i];
                }
                implicit.as_ref().expect("factorized for the semi-implicit rule").solve_in_place(&mut v);
            }
        }
        let found = count_sign_changes(&v);
        if let Some(index) = v.iter().position(|x| !x.is_finite()) {
            return Err(SolverError::NonFinite { index, value: v[index] });
        }
        if found != nodes {
            termination = Termination::NodeCountChanged { expected: nodes, found, iteration };
            break;
        }
        let projected = projector.project_in_place(&mut v)?;
        let new_action = projected.functionals.action();
        // Steps that move a node into another grid cell are never halved.
        let crossed = projected.decomposition.sign_change_left() != pattern.as_slice();
        if new_action > action + opts.action_slack && !crossed && tau * 0.5 >= tau_floor && opts.update != UpdateRule::Literal {
            tau *= 0.5;
            halvings += 1;
            if let Some(solver) = implicit.as_mut() {
                *solver = lap.implicit_solver(tau, params.omega);
            }
            continue;
        }
        if crossed {
            crossing_iterations.push(iteration);
            pattern.clear();
            pattern.extend_from_slice(projected.decomposition.sign_change_left());
        }
        let crit = u.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let delta_action = (new_action - action).abs();
        std::mem::swap(&mut u, &mut v);
        action = new_action;
        crit_history.push(crit);
        action_history.push(new_action);
        residual_history.push(projected.functionals.max_abs_residual());
        let done = match opts.stopping {
            StoppingRule::MaxUpdate => crit <= opts.epsilon,
            StoppingRule::ActionStagnation => delta_action <= opts.epsilon,
        };
        if done {
            termination = Termination::Converged;
            break;
        }
    }

    Ok(NehariRun {
        final_state: GridFunction::new(params.grid(), u)?,
        iterations: crit_history.len(),
        nodes,
        tau,
        tau_halvings: halvings,
        crossing_iterations,
        crit_history,
        action_history,
        residual_history,
        initial_action,
        termination,
    })
}

/// Projected gradient descent; non-converged runs are reported as errors.
pub fn descend(u0: &GridFunction, params: &SolverParams, opts: &NehariOptions) -> Result<NehariRun> {
    run_descent(u0, params, opts)?.into_result()
}

/// `cos(r)·exp(-r²/30)`, the oscillating default initial profile.
pub fn cosine_profile(r: f64) -> f64 {
    r.cos() * (-r * r / 30.0).exp()
}

/// Keeps the first `nodes + 1` nodal components of `u` and zeroes the rest.
pub fn trim_to_nodes(u: &GridFunction, nodes: usize) -> Result<GridFunction> {
    let dec = decompose(u, ZeroPolicy::Nudge)?;
    if dec.n_nodes() < nodes {
        return Err(SolverError::NotEnoughNodes { requested: nodes, found: dec.n_nodes() });
    }
    let mut values = u.values().to_vec();
    if nodes < dec.n_nodes() {
        let cut = dec.component(nodes + 1).start;
        values[cut..].iter_mut().for_each(|v| *v = 0.0);
    }
    GridFunction::new(*u.grid(), values)
}

/// Projected, trimmed sample of [`cosine_profile`] with `nodes` sign changes.
pub fn initial_datum(params: &SolverParams, nodes: usize) -> Result<GridFunction> {
    let u = sample(cosine_profile, &params.grid())?;
    let trimmed = trim_to_nodes(&u, nodes)?;
    project(&trimmed, params)
}
