//! Shooting on the initial amplitude.
//!
//! The radial profile solves `u'' = ωu - f(u) - (d-1)/r·u'` with `u(0) = α`,
//! `u'(0) = 0`, integrated by classical fixed-step RK4. At `r = 0` the
//! singular drift is replaced by its limit, which gives
//! `u''(0) = (ωα - f(α))/d`. The amplitude producing a decaying state with
//! `k` sign changes is located by bisection on the number of sign changes.

use crate::error::{Result, SolverError};
use crate::problem::{GridFunction, Nonlinearity, PowerNonlinearity, RadialGrid, SolverParams};
use crate::quadrature::count_sign_changes;

/// Default magnitude beyond which a trajectory is considered divergent.
pub const DEFAULT_DIVERGENCE_CAP: f64 = 1e8;

/// Maximum number of bracket doublings before giving up.
pub const MAX_BRACKET_DOUBLINGS: usize = 60;

/// Default RK4 step for a domain of radius `radius`: `min(1e-3, R/1e5)`.
pub fn default_rk_step(radius: f64) -> f64 {
    (radius / 1e5).min(1e-3)
}

/// `(u, u')` at some radius.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IvpState {
    pub u: f64,
    pub du: f64,
}

impl IvpState {
    fn axpy(self, a: f64, k: IvpState) -> IvpState {
        IvpState {
            u: self.u + a * k.u,
            du: self.du + a * k.du,
        }
    }

    fn is_finite(&self) -> bool {
        self.u.is_finite() && self.du.is_finite()
    }
}

/// The radial initial value problem for a given dimension, frequency and
/// nonlinearity.
#[derive(Debug, Clone, Copy)]
pub struct RadialIvp<F> {
    pub d: usize,
    pub omega: f64,
    pub f: F,
    pub divergence_cap: f64,
}

impl RadialIvp<PowerNonlinearity> {
    pub fn from_params(params: &SolverParams) -> Self {
        RadialIvp::new(params.d, params.omega, params.nonlinearity())
    }
}

impl<F: Nonlinearity> RadialIvp<F> {
    pub fn new(d: usize, omega: f64, f: F) -> Self {
        RadialIvp {
            d,
            omega,
            f,
            divergence_cap: DEFAULT_DIVERGENCE_CAP,
        }
    }

    pub fn with_divergence_cap(mut self, cap: f64) -> Self {
        self.divergence_cap = cap;
        self
    }

    /// Right-hand side `(u', u'')` of the first-order system.
    #[inline]
    pub fn rhs(&self, r: f64, state: IvpState) -> IvpState {
        let source = self.omega * state.u - self.f.f(state.u);
        if r == 0.0 {
            IvpState {
                u: state.du,
                du: source / self.d as f64,
            }
        } else {
            IvpState {
                u: state.du,
                du: source - (self.d as f64 - 1.0) / r * state.du,
            }
        }
    }

    #[inline]
    fn rk4_step(&self, r: f64, y: IvpState, step: f64) -> IvpState {
        let half = 0.5 * step;
        let k1 = self.rhs(r, y);
        let k2 = self.rhs(r + half, y.axpy(half, k1));
        let k3 = self.rhs(r + half, y.axpy(half, k2));
        let k4 = self.rhs(r + step, y.axpy(step, k3));
        IvpState {
            u: y.u + step / 6.0 * (k1.u + 2.0 * k2.u + 2.0 * k3.u + k4.u),
            du: y.du + step / 6.0 * (k1.du + 2.0 * k2.du + 2.0 * k3.du + k4.du),
        }
    }

    /// Steps from `r = 0` to `r_max`, calling `visit(i, state)` for every
    /// accepted state (including the initial one). Returns the number of
    /// steps taken and whether the run stopped on divergence.
    fn march(
        &self,
        alpha: f64,
        step: f64,
        r_max: f64,
        mut visit: impl FnMut(usize, IvpState),
    ) -> Result<(usize, bool)> {
        if !(step > 0.0 && step.is_finite()) {
            return Err(SolverError::InvalidParameter(format!("RK4 step must be positive, got {step}")));
        }
        if !alpha.is_finite() {
            return Err(SolverError::InvalidParameter(format!("amplitude must be finite, got {alpha}")));
        }
        let n_steps = ((r_max / step).round() as usize).max(1);
        let mut y = IvpState { u: alpha, du: 0.0 };
        visit(0, y);
        for i in 0..n_steps {
            let next = self.rk4_step(i as f64 * step, y, step);
            if !next.is_finite() || next.u.abs() > self.divergence_cap {
                return Ok((i, true));
            }
            y = next;
            visit(i + 1, y);
        }
        Ok((n_steps, false))
    }

    /// Integrates from `u(0) = alpha`, `u'(0) = 0` up to `r_max`.
    pub fn integrate(&self, alpha: f64, step: f64, r_max: f64) -> Result<Trajectory> {
        let capacity = ((r_max / step).round() as usize).max(1) + 1;
        let mut u = Vec::with_capacity(capacity);
        let mut du = Vec::with_capacity(capacity);
        let (_, diverged) = self.march(alpha, step, r_max, |_, y| {
            u.push(y.u);
            du.push(y.du);
        })?;
        Ok(Trajectory {
            alpha,
            step,
            u,
            du,
            diverged,
        })
    }

    /// Sign changes of the trajectory from `alpha`, without storing it.
    pub fn node_count(&self, alpha: f64, step: f64, r_max: f64) -> Result<usize> {
        let mut count = 0;
        let mut prev_sign = 0i8;
        self.march(alpha, step, r_max, |_, y| {
            let s = if y.u > 0.0 {
                1
            } else if y.u < 0.0 {
                -1
            } else {
                prev_sign
            };
            if prev_sign * s < 0 {
                count += 1;
            }
            if s != 0 {
                prev_sign = s;
            }
        })?;
        Ok(count)
    }

    /// Bisection on the amplitude.
    ///
    /// `b` is doubled until the trajectory from `b` has more than
    /// `target_nodes` sign changes; the bracket `[0, b]` is then halved until
    /// its width drops to `epsilon` or the midpoint is no longer
    /// representable strictly inside it.
    pub fn bisect(&self, target_nodes: usize, b: f64, epsilon: f64, step: f64, r_max: f64) -> Result<ShootingOutcome> {
        if !(b > 0.0 && b.is_finite()) {
            return Err(SolverError::InvalidParameter(format!("upper amplitude must be positive, got {b}")));
        }
        if !(epsilon > 0.0) {
            return Err(SolverError::InvalidParameter(format!("bracket tolerance must be positive, got {epsilon}")));
        }
        let mut b = b;
        let mut doublings = 0;
        loop {
            let nodes = self.node_count(b, step, r_max)?;
            if nodes > target_nodes {
                break;
            }
            if doublings == MAX_BRACKET_DOUBLINGS {
                return Err(SolverError::BracketExpansionFailed {
                    target: target_nodes,
                    b,
                    nodes,
                    doublings,
                });
            }
            b *= 2.0;
            doublings += 1;
        }
        let initial_bracket = (0.0, b);
        let mut a = 0.0_f64;
        let mut history = Vec::new();
        while b - a > epsilon {
            let c = 0.5 * (a + b);
            if c <= a || c >= b {
                break;
            }
            let nodes = self.node_count(c, step, r_max)?;
            history.push(BisectionStep { a, b, c, nodes });
            if nodes > target_nodes {
                b = c;
            } else {
                a = c;
            }
        }
        let mid = 0.5 * (a + b);
        let mut trajectory = self.integrate(mid, step, r_max)?;
        if trajectory.node_count() != target_nodes && a > 0.0 {
            // the midpoint fell past α_k; the lower end keeps the right count
            trajectory = self.integrate(a, step, r_max)?;
        }
        Ok(ShootingOutcome {
            alpha: trajectory.alpha,
            node_count: trajectory.node_count(),
            target_nodes,
            iterations: history.len(),
            initial_bracket,
            final_bracket: (a, b),
            bracket_history: history,
            trajectory,
        })
    }
}

/// Stored RK4 trajectory on `r_i = i·step`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub alpha: f64,
    pub step: f64,
    pub u: Vec<f64>,
    pub du: Vec<f64>,
    /// True when integration stopped early because `|u|` exceeded the cap.
    pub diverged: bool,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    pub fn radius_at(&self, i: usize) -> f64 {
        i as f64 * self.step
    }

    pub fn r_end(&self) -> f64 {
        self.radius_at(self.len().saturating_sub(1))
    }

    pub fn node_count(&self) -> usize {
        count_sign_changes(&self.u)
    }

    /// Sign-change radii of the stored trajectory, each located by linear
    /// interpolation inside its RK4 step.
    pub fn node_positions(&self) -> Vec<f64> {
        self.u
            .windows(2)
            .enumerate()
            .filter(|(_, w)| w[0] * w[1] < 0.0)
            .map(|(i, w)| self.radius_at(i) + self.step * w[0] / (w[0] - w[1]))
            .collect()
    }

    /// Linear interpolation of `(u, u')` at radius `r` inside the stored range.
    pub fn state_at(&self, r: f64) -> Option<IvpState> {
        let x = r / self.step;
        let i = x.floor() as usize;
        if r < 0.0 || i >= self.len() {
            return None;
        }
        let frac = x - i as f64;
        if frac.abs() < 1e-9 || i + 1 == self.len() {
            if frac > 1e-9 && i + 1 == self.len() {
                return None;
            }
            return Some(IvpState { u: self.u[i], du: self.du[i] });
        }
        if (1.0 - frac).abs() < 1e-9 {
            return Some(IvpState { u: self.u[i + 1], du: self.du[i + 1] });
        }
        Some(IvpState {
            u: self.u[i] + frac * (self.u[i + 1] - self.u[i]),
            du: self.du[i] + frac * (self.du[i + 1] - self.du[i]),
        })
    }

    /// Index at which `|u|` turns from decay to growth after the
    /// `nodes`-th sign change, or at which a further sign change occurs,
    /// whichever comes first. `None` if the stored range ends before that.
    pub fn divergence_onset(&self, nodes: usize) -> Option<usize> {
        let mut seen = 0;
        let mut falling = false;
        for i in 0..self.len().saturating_sub(1) {
            let (a, b) = (self.u[i], self.u[i + 1]);
            if a * b < 0.0 {
                if seen == nodes {
                    return Some(i);
                }
                seen += 1;
                falling = false;
                continue;
            }
            if seen < nodes {
                continue;
            }
            if !falling {
                if b.abs() < a.abs() {
                    falling = true;
                }
            } else if b.abs() >= a.abs() {
                return Some(i);
            }
        }
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BisectionStep {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    /// Sign changes of the trajectory started at `c`.
    pub nodes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShootingOutcome {
    pub alpha: f64,
    pub node_count: usize,
    pub target_nodes: usize,
    pub iterations: usize,
    pub initial_bracket: (f64, f64),
    pub final_bracket: (f64, f64),
    pub bracket_history: Vec<BisectionStep>,
    pub trajectory: Trajectory,
}

impl ShootingOutcome {
    /// Samples the converged profile on `grid`.
    ///
    /// Past the onset of numerical divergence (see
    /// [`Trajectory::divergence_onset`]) the trajectory is replaced by the
    /// linear decay `u(r_c)·e^{-√ω (r - r_c)}·(r_c/r)^{(d-1)/2}`.
    pub fn on_grid(&self, grid: &RadialGrid, d: usize, omega: f64) -> Result<GridFunction> {
        Ok(self.profile_on_grid(grid, d, omega)?.0)
    }

    /// [`on_grid`](Self::on_grid) together with `u'` at the grid points.
    pub fn profile_on_grid(&self, grid: &RadialGrid, d: usize, omega: f64) -> Result<(GridFunction, Vec<f64>)> {
        let traj = &self.trajectory;
        let cut = traj
            .divergence_onset(self.target_nodes)
            .unwrap_or(traj.len() - 1);
        let r_cut = traj.radius_at(cut);
        let u_cut = traj.u[cut];
        let decay = omega.sqrt();
        let drift = 0.5 * (d as f64 - 1.0);
        let (values, slopes): (Vec<f64>, Vec<f64>) = (0..grid.n())
            .map(|i| {
                let r = grid.node(i);
                if r <= r_cut {
                    traj.state_at(r).map_or((u_cut, traj.du[cut]), |s| (s.u, s.du))
                } else {
                    let algebraic = if d > 1 && r_cut > 0.0 { (r_cut / r).powf(drift) } else { 1.0 };
                    let u = u_cut * (-decay * (r - r_cut)).exp() * algebraic;
                    (u, -u * (decay + if d > 1 && r_cut > 0.0 { drift / r } else { 0.0 }))
                }
            })
            .unzip();
        Ok((GridFunction::new(*grid, values)?, slopes))
    }
}

/// Choice of the RK4 step size.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum RkStep {
    /// [`default_rk_step`] of the domain radius.
    #[default]
    Default,
    Fixed(f64),
    /// The grid spacing divided by the given number of substeps, so that
    /// every grid point is an RK4 point.
    GridSpacing(usize),
}

impl RkStep {
    pub fn resolve(&self, params: &SolverParams) -> f64 {
        match *self {
            RkStep::Default => default_rk_step(params.radius),
            RkStep::Fixed(step) => step,
            RkStep::GridSpacing(substeps) => params.grid().h() / substeps.max(1) as f64,
        }
    }
}

/// Options of a shooting solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShootingOptions {
    pub target_nodes: usize,
    /// Initial upper amplitude; doubled as needed.
    pub b: f64,
    pub epsilon: f64,
    pub rk_step: RkStep,
    /// Integration range; `None` integrates over `[0, R]`.
    pub r_max: Option<f64>,
    pub divergence_cap: f64,
}

impl Default for ShootingOptions {
    fn default() -> Self {
        ShootingOptions {
            target_nodes: 0,
            b: 10.0,
            epsilon: 1e-12,
            rk_step: RkStep::Default,
            r_max: None,
            divergence_cap: DEFAULT_DIVERGENCE_CAP,
        }
    }
}

pub fn rhs(r: f64, state: IvpState, params: &SolverParams) -> IvpState {
    RadialIvp::from_params(params).rhs(r, state)
}

pub fn integrate(alpha: f64, params: &SolverParams, step: f64, r_max: f64) -> Result<Trajectory> {
    RadialIvp::from_params(params).integrate(alpha, step, r_max)
}

pub fn count_nodes(trajectory: &Trajectory) -> usize {
    trajectory.node_count()
}

pub fn bisect(params: &SolverParams, opts: &ShootingOptions) -> Result<ShootingOutcome> {
    let step = opts.rk_step.resolve(params);
    let r_max = opts.r_max.unwrap_or(params.radius);
    RadialIvp::from_params(params)
        .with_divergence_cap(opts.divergence_cap)
        .bisect(opts.target_nodes, opts.b, opts.epsilon, step, r_max)
}

/// Shooting solve followed by sampling on the grid of `params`.
pub fn solve_on_grid(params: &SolverParams, opts: &ShootingOptions) -> Result<(ShootingOutcome, GridFunction)> {
    let outcome = bisect(params, opts)?;
    let u = outcome.on_grid(&params.grid(), params.d, params.omega)?;
    Ok((outcome, u))
}
