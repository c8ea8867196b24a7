//! Subcommand bodies. Each writes its files into the output directory and
//! returns a short JSON summary for the manifest.

use anyhow::{anyhow, bail, Context};
use serde_json::{json, Value};

use radial_nls::analysis::{
    amplitude_model, convergence_study, cross_method_gap, extrema_profile, fit_amplitudes, fit_node_positions,
    sech_tail_compare, soliton, FitResult,
};
use radial_nls::nehari::{initial_datum, run_descent};
use radial_nls::pipeline::amplitude_sweep;
use radial_nls::quadrature::action;
use radial_nls::{
    bisect, decompose, project, GridFunction, Method, NehariInit, NehariOptions, NehariRun, ShootingOptions,
    ShootingOutcome, SolverParams, ZeroPolicy,
};

use crate::config::{ConvergenceStudy, ExtremaStudy, GapStudy, RunConfig};
use crate::output::{OutDir, Table};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Shoot,
    Nehari,
    Combined,
    Study,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Shoot => "shoot",
            Command::Nehari => "nehari",
            Command::Combined => "combined",
            Command::Study => "study",
        }
    }
}

/// Marker for a study command without any study block.
#[derive(Debug)]
pub struct NoStudy;

impl std::fmt::Display for NoStudy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("no study requested")
    }
}

impl std::error::Error for NoStudy {}

pub fn run(command: Command, cfg: &RunConfig, out: &mut OutDir) -> anyhow::Result<Value> {
    match command {
        Command::Shoot => shoot(cfg, out),
        Command::Nehari => nehari(cfg, out),
        Command::Combined => combined(cfg, out),
        Command::Study => study(cfg, out),
    }
}

fn shooting_summary(outcome: &ShootingOutcome, params: &SolverParams, opts: &ShootingOptions) -> Value {
    let traj = &outcome.trajectory;
    let onset = traj.divergence_onset(outcome.target_nodes).map(|i| traj.radius_at(i));
    let history: Vec<Value> = outcome
        .bracket_history
        .iter()
        .map(|s| json!({ "a": s.a, "b": s.b, "c": s.c, "nodes": s.nodes }))
        .collect();
    json!({
        "alpha": outcome.alpha,
        "node_count": outcome.node_count,
        "target_nodes": outcome.target_nodes,
        "iterations": outcome.iterations,
        "initial_bracket": [outcome.initial_bracket.0, outcome.initial_bracket.1],
        "final_bracket": [outcome.final_bracket.0, outcome.final_bracket.1],
        "rk_step": opts.rk_step.resolve(params),
        "divergence_onset": onset,
        "bracket_history": history,
    })
}

fn shoot(cfg: &RunConfig, out: &mut OutDir) -> anyhow::Result<Value> {
    let params = cfg.params()?;
    let opts = cfg.shooting_options()?;
    let outcome = bisect(&params, &opts)?;
    let (u, du) = outcome.profile_on_grid(&params.grid(), params.d, params.omega)?;
    let mut table = Table::new(&["r", "u", "du"]);
    for (i, (v, dv)) in u.values().iter().zip(&du).enumerate() {
        table.row(vec![params.grid().node(i).into(), (*v).into(), (*dv).into()]);
    }
    out.csv("solution.csv", &table)?;
    let dec = decompose(&u, ZeroPolicy::Nudge)?;
    let mut summary = shooting_summary(&outcome, &params, &opts);
    summary["method"] = json!("shooting");
    summary["grid_nodes"] = json!(dec.n_nodes());
    summary["action"] = json!(action(&u, &dec, &params));
    out.json("summary.json", &summary)?;
    Ok(json!({ "alpha": outcome.alpha, "node_count": outcome.node_count }))
}

fn write_state(out: &mut OutDir, u: &GridFunction) -> anyhow::Result<()> {
    let mut table = Table::new(&["r", "u"]);
    for (i, v) in u.values().iter().enumerate() {
        table.row(vec![u.grid().node(i).into(), (*v).into()]);
    }
    out.csv("solution.csv", &table)
}

fn descent_stage(
    params: &SolverParams,
    opts: &NehariOptions,
    u0: &GridFunction,
    out: &mut OutDir,
    mut summary: Value,
) -> anyhow::Result<NehariRun> {
    let run = run_descent(u0, params, opts)?;
    let mut table = Table::new(&["iter", "crit", "action", "residual"]);
    for (j, ((c, a), r)) in run.crit_history.iter().zip(&run.action_history).zip(&run.residual_history).enumerate() {
        table.row(vec![(j + 1).into(), (*c).into(), (*a).into(), (*r).into()]);
    }
    out.csv("history.csv", &table)?;
    write_state(out, &run.final_state)?;
    summary["nehari"] = json!({
        "iterations": run.iterations,
        "nodes": run.nodes,
        "action": run.final_action(),
        "initial_action": run.initial_action,
        "final_crit": run.final_crit(),
        "tau": run.tau,
        "tau_halvings": run.tau_halvings,
        "grid_crossings": run.crossing_iterations.len(),
        "termination": format!("{:?}", run.termination),
    });
    out.json("summary.json", &summary)?;
    Ok(run.into_result()?)
}

fn nehari(cfg: &RunConfig, out: &mut OutDir) -> anyhow::Result<Value> {
    let params = cfg.params()?;
    let opts = cfg.nehari_options()?;
    let u0 = initial_datum(&params, cfg.method.nodes)?;
    let run = descent_stage(&params, &opts, &u0, out, json!({ "method": "nehari" }))?;
    Ok(json!({ "iterations": run.iterations, "action": run.final_action() }))
}

fn combined(cfg: &RunConfig, out: &mut OutDir) -> anyhow::Result<Value> {
    let params = cfg.params()?;
    let shoot_opts = cfg.shooting_options()?;
    let opts = cfg.nehari_options()?;
    let outcome = bisect(&params, &shoot_opts)?;
    let u = outcome.on_grid(&params.grid(), params.d, params.omega)?;
    let u0 = project(&u, &params)?;
    let summary = json!({ "method": "combined", "shooting": shooting_summary(&outcome, &params, &shoot_opts) });
    let run = descent_stage(&params, &opts, &u0, out, summary)?;
    Ok(json!({ "alpha": outcome.alpha, "iterations": run.iterations, "action": run.final_action() }))
}

fn method_by_name(name: &str, cfg: &RunConfig) -> anyhow::Result<Method> {
    let shooting = cfg.shooting_options()?;
    let options = cfg.nehari_options()?;
    Ok(match name {
        "shooting" => Method::Shooting(shooting),
        "nehari" => Method::Nehari { options, init: NehariInit::Cosine },
        "combined" => Method::Nehari { options, init: NehariInit::Shooting(shooting) },
        other => bail!("unknown method `{other}`"),
    })
}

fn fit_json(fit: &FitResult) -> Value {
    json!({ "a": fit.a, "b": fit.b, "ci_a": fit.ci_a, "ci_b": fit.ci_b, "rss": fit.rss })
}

fn convergence(cfg: &RunConfig, study: &ConvergenceStudy, out: &mut OutDir) -> anyhow::Result<Value> {
    let cfg = &cfg.with_rk_step(&study.rk_step);
    let params = cfg.params()?;
    let mut table = Table::new(&["method", "nodes", "N", "h", "e1", "einf"]);
    let mut slopes = Vec::new();
    for name in &study.methods {
        let method = method_by_name(name, cfg)?;
        for &k in &study.nodes {
            let report = convergence_study(&method, &params, &study.n_values, study.n_ref, k)
                .with_context(|| format!("{name} convergence study, {k} nodes"))?;
            for (j, &n) in report.n_values.iter().enumerate() {
                table.row(vec![
                    name.as_str().into(),
                    k.into(),
                    n.into(),
                    report.h_values[j].into(),
                    report.l1_errors[j].into(),
                    report.linf_errors[j].into(),
                ]);
            }
            slopes.push(json!({
                "method": name,
                "nodes": k,
                "n_ref": report.n_ref,
                "l1_slope": report.l1_slope,
                "linf_slope": report.linf_slope,
            }));
        }
    }
    out.csv("convergence.csv", &table)?;
    Ok(Value::Array(slopes))
}

fn gaps(cfg: &RunConfig, study: &GapStudy, out: &mut OutDir) -> anyhow::Result<Value> {
    let cfg = &cfg.with_rk_step(&study.rk_step);
    let (n_values, nodes) = (&study.n_values, &study.nodes);
    let params = cfg.params()?;
    let shooting = method_by_name("shooting", cfg)?;
    let nehari = method_by_name("nehari", cfg)?;
    let mut table = Table::new(&["nodes", "N", "E1", "Einf"]);
    let mut summary = Vec::new();
    for &k in nodes {
        let entries = cross_method_gap(&nehari, &shooting, &params, n_values, k)
            .with_context(|| format!("cross-method gap, {k} nodes"))?;
        for e in &entries {
            table.row(vec![k.into(), e.n.into(), e.l1.into(), e.linf.into()]);
        }
        let decreasing = entries.windows(2).all(|w| w[1].linf < w[0].linf);
        summary.push(json!({ "nodes": k, "linf_strictly_decreasing": decreasing }));
    }
    out.csv("gaps.csv", &table)?;
    Ok(Value::Array(summary))
}

fn amplitudes(cfg: &RunConfig, k_max: usize, radius: Option<f64>, out: &mut OutDir) -> anyhow::Result<Value> {
    let base = cfg.params()?;
    let params = base.with_grid(radius.unwrap_or(base.radius), base.n);
    params.validate()?;
    let ks: Vec<usize> = (0..=k_max).collect();
    let sweep = amplitude_sweep(&params, &cfg.shooting_options()?, &ks)?;
    let alphas: Vec<f64> = sweep.iter().map(|s| s.alpha).collect();
    let fit = fit_amplitudes(&alphas)?;
    let mut table = Table::new(&["k", "alpha", "fitted"]);
    for s in &sweep {
        table.row(vec![s.nodes.into(), s.alpha.into(), amplitude_model(&fit, s.nodes).into()]);
    }
    out.csv("amplitudes.csv", &table)?;

    let mut positions = Table::new(&["k", "index", "position"]);
    for s in &sweep {
        for (j, r) in s.node_positions.iter().enumerate() {
            positions.row(vec![s.nodes.into(), j.into(), (*r).into()]);
        }
    }
    out.csv("node_positions.csv", &positions)?;
    let tables: Vec<(usize, Vec<f64>)> = sweep.iter().map(|s| (s.nodes, s.node_positions.clone())).collect();
    let node_fits = fit_node_positions(&tables)?;
    let mut fits = Table::new(&["index", "a", "b", "ci_a", "ci_b", "observations"]);
    for f in &node_fits {
        fits.row(vec![
            f.node_index.into(),
            f.fit.a.into(),
            f.fit.b.into(),
            f.fit.ci_a.into(),
            f.fit.ci_b.into(),
            f.observations.len().into(),
        ]);
    }
    out.csv("node_fits.csv", &fits)?;
    Ok(json!({ "R": params.radius, "k_max": k_max, "fit": fit_json(&fit), "node_fits": node_fits.len() }))
}

fn extrema(cfg: &RunConfig, study: &ExtremaStudy, out: &mut OutDir) -> anyhow::Result<Value> {
    let base = cfg.params()?;
    let params = base.with_grid(study.radius.unwrap_or(base.radius), study.n.unwrap_or(base.n));
    params.validate()?;
    let method = method_by_name(&study.method, cfg)?;
    let state = radial_nls::solve(&method, &params, study.nodes)?.state;
    let list = extrema_profile(&state)?;
    let mut table = Table::new(&["component", "position", "value"]);
    for e in &list {
        table.row(vec![e.component.into(), e.position.into(), e.value.into()]);
    }
    out.csv("extrema.csv", &table)?;
    let sqrt2 = std::f64::consts::SQRT_2;
    let last_three: Vec<f64> = list.iter().rev().take(3).map(|e| (e.value - sqrt2).abs()).collect();

    let mut summary = json!({
        "method": study.method,
        "nodes": study.nodes,
        "R": params.radius,
        "N": params.n,
        "last_extrema_deviation": last_three,
    });
    if study.nodes >= 2 {
        let cmp = sech_tail_compare(&state)?;
        let dec = decompose(&state, ZeroPolicy::Nudge)?;
        let mut tail = Table::new(&["r", "abs_u", "soliton"]);
        for i in dec.component(cmp.component) {
            let r = state.grid().node(i);
            tail.row(vec![r.into(), state.values()[i].abs().into(), soliton(r - cmp.shift).into()]);
        }
        out.csv("sech_tail.csv", &tail)?;
        summary["sech_tail"] = json!({ "component": cmp.component, "shift": cmp.shift, "gap": cmp.gap });
    }
    Ok(summary)
}

fn study(cfg: &RunConfig, out: &mut OutDir) -> anyhow::Result<Value> {
    let study = cfg.study.as_ref().filter(|s| !s.is_empty()).ok_or_else(|| anyhow!(NoStudy))?;
    let mut summary = json!({});
    if let Some(c) = &study.convergence {
        summary["convergence"] = convergence(cfg, c, out)?;
    }
    if let Some(g) = &study.gaps {
        summary["gaps"] = gaps(cfg, g, out)?;
    }
    if let Some(a) = &study.amplitudes {
        summary["amplitudes"] = amplitudes(cfg, a.k_max, a.radius, out)?;
    }
    if let Some(e) = &study.extrema {
        summary["extrema"] = extrema(cfg, e, out)?;
    }
    out.json("study.json", &summary)?;
    Ok(summary)
}
