//! Method selection and batch drivers on top of the two solvers.

use rayon::prelude::*;

use crate::error::Result;
use crate::nehari::{descend, initial_datum, project, NehariOptions, NehariRun};
use crate::problem::{GridFunction, SolverParams};
use crate::quadrature::{action, decompose, ZeroPolicy};
use crate::shooting::{bisect, ShootingOptions, ShootingOutcome};

/// Initial iterate of the Nehari descent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NehariInit {
    /// Trimmed and projected sample of `cos(r)·exp(-r²/30)`.
    Cosine,
    /// Shooting solution sampled on the grid.
    Shooting(ShootingOptions),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    Shooting(ShootingOptions),
    Nehari { options: NehariOptions, init: NehariInit },
}

impl Method {
    pub fn shooting() -> Self {
        Method::Shooting(ShootingOptions::default())
    }

    pub fn nehari() -> Self {
        Method::Nehari { options: NehariOptions::default(), init: NehariInit::Cosine }
    }

    /// Shooting followed by Nehari refinement.
    pub fn combined() -> Self {
        Method::Nehari {
            options: NehariOptions::default(),
            init: NehariInit::Shooting(ShootingOptions::default()),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Method::Shooting(_) => "shooting",
            Method::Nehari { init: NehariInit::Cosine, .. } => "nehari",
            Method::Nehari { init: NehariInit::Shooting(_), .. } => "combined",
        }
    }
}

/// A bound state on the parameter grid together with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub state: GridFunction,
    pub nodes: usize,
    pub action: f64,
    pub shooting: Option<ShootingOutcome>,
    pub nehari: Option<NehariRun>,
}

impl Solution {
    pub fn alpha(&self) -> Option<f64> {
        self.shooting.as_ref().map(|s| s.alpha)
    }
}

fn shoot(params: &SolverParams, opts: &ShootingOptions, nodes: usize) -> Result<(ShootingOutcome, GridFunction)> {
    let opts = ShootingOptions { target_nodes: nodes, ..*opts };
    let outcome = bisect(params, &opts)?;
    let u = outcome.on_grid(&params.grid(), params.d, params.omega)?;
    Ok((outcome, u))
}

/// Computes the bound state with `nodes` sign changes by `method`.
pub fn solve(method: &Method, params: &SolverParams, nodes: usize) -> Result<Solution> {
    params.validate()?;
    match method {
        Method::Shooting(opts) => {
            let (outcome, state) = shoot(params, opts, nodes)?;
            let dec = decompose(&state, ZeroPolicy::Nudge)?;
            let action = action(&state, &dec, params);
            Ok(Solution { state, nodes: dec.n_nodes(), action, shooting: Some(outcome), nehari: None })
        }
        Method::Nehari { options, init } => {
            let (u0, shooting) = match init {
                NehariInit::Cosine => (initial_datum(params, nodes)?, None),
                NehariInit::Shooting(opts) => {
                    let (outcome, u) = shoot(params, opts, nodes)?;
                    (project(&u, params)?, Some(outcome))
                }
            };
            let run = descend(&u0, params, options)?;
            Ok(Solution {
                state: run.final_state.clone(),
                nodes: run.nodes,
                action: run.final_action(),
                shooting,
                nehari: Some(run),
            })
        }
    }
}

/// One entry of an amplitude sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct AmplitudeSample {
    pub nodes: usize,
    pub alpha: f64,
    pub node_positions: Vec<f64>,
}

/// Shooting amplitudes `α_k` for every `k` in `nodes`, computed in parallel.
/// Node positions are read off the RK4 trajectory, restricted to the first
/// `k` sign changes.
pub fn amplitude_sweep(params: &SolverParams, opts: &ShootingOptions, nodes: &[usize]) -> Result<Vec<AmplitudeSample>> {
    params.validate()?;
    nodes
        .par_iter()
        .map(|&k| {
            let outcome = bisect(params, &ShootingOptions { target_nodes: k, ..*opts })?;
            let mut node_positions = outcome.trajectory.node_positions();
            node_positions.truncate(k);
            Ok(AmplitudeSample { nodes: k, alpha: outcome.alpha, node_positions })
        })
        .collect()
}

/// Solves for every node count in `nodes` in parallel.
pub fn solve_many(method: &Method, params: &SolverParams, nodes: &[usize]) -> Result<Vec<Solution>> {
    nodes.par_iter().map(|&k| solve(method, params, k)).collect()
}
