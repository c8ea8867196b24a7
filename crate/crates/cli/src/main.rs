mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::Context;
use clap::{Parser, Subcommand};
use serde_json::json;

use commands::{Command, NoStudy};
use config::RunConfig;
use output::OutDir;
use radial_nls::SolverError;

#[derive(Parser, Debug)]
#[command(name = "radial-nls", version, about = "Radial bound states of the nonlinear Schrödinger equation")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,

    /// TOML configuration file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    d: Option<usize>,
    #[arg(long, global = true)]
    omega: Option<f64>,
    #[arg(long, global = true)]
    p: Option<f64>,
    /// Domain radius.
    #[arg(long = "R", global = true)]
    radius: Option<f64>,
    /// Number of grid samples.
    #[arg(long = "N", global = true)]
    n: Option<usize>,
    /// Number of sign changes.
    #[arg(long, global = true)]
    nodes: Option<usize>,
    /// Tolerance of the method(s) being run.
    #[arg(long, global = true)]
    eps: Option<f64>,
    /// Nehari gradient step.
    #[arg(long, global = true)]
    tau: Option<f64>,
    /// `default`, `grid`, `grid/K` or a step length.
    #[arg(long, global = true)]
    rk_step: Option<String>,
    #[arg(long, global = true)]
    max_iter: Option<usize>,
    /// Worker threads for studies.
    #[arg(long, global = true)]
    workers: Option<usize>,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Cmd {
    /// Amplitude bisection with RK4.
    Shoot,
    /// Projected gradient descent on the nodal Nehari set.
    Nehari,
    /// Shooting, then Nehari refinement of the result.
    Combined,
    /// Convergence, gap, amplitude and extrema studies from the config's study block.
    Study,
}

impl Cli {
    fn command(&self) -> Command {
        match self.command {
            Cmd::Shoot => Command::Shoot,
            Cmd::Nehari => Command::Nehari,
            Cmd::Combined => Command::Combined,
            Cmd::Study => Command::Study,
        }
    }

    fn resolve(&self) -> anyhow::Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        let pr = &mut cfg.problem;
        pr.d = self.d.unwrap_or(pr.d);
        pr.omega = self.omega.unwrap_or(pr.omega);
        pr.p = self.p.unwrap_or(pr.p);
        pr.radius = self.radius.unwrap_or(pr.radius);
        pr.n = self.n.unwrap_or(pr.n);
        let m = &mut cfg.method;
        m.nodes = self.nodes.unwrap_or(m.nodes);
        if let Some(eps) = self.eps {
            let command = self.command();
            if command != Command::Nehari {
                m.shooting.eps = eps;
            }
            if command != Command::Shoot {
                m.nehari.eps = eps;
            }
        }
        if self.tau.is_some() {
            m.nehari.tau = self.tau;
        }
        if let Some(step) = &self.rk_step {
            m.shooting.rk_step = step.clone();
        }
        m.nehari.max_iter = self.max_iter.unwrap_or(m.nehari.max_iter);
        if let Some(dir) = &self.out {
            cfg.output.dir = dir.clone();
        }
        // surface option errors before any work
        cfg.shooting_options()?;
        cfg.nehari_options()?;
        Ok(cfg)
    }
}

fn error_code(err: &anyhow::Error) -> &'static str {
    if let Some(e) = err.downcast_ref::<SolverError>() {
        e.code()
    } else if err.downcast_ref::<NoStudy>().is_some() {
        "NoStudy"
    } else {
        "InvalidConfig"
    }
}

fn report_error(err: &anyhow::Error, dir: Option<&std::path::Path>) {
    let message = match err.downcast_ref::<SolverError>() {
        Some(e) if err.chain().count() > 1 => format!("{err:#}: {e}"),
        _ => format!("{err:#}"),
    };
    let body = json!({ "error": error_code(err), "message": message });
    eprintln!("{body}");
    if let Some(dir) = dir {
        let _ = std::fs::write(dir.join("error.json"), format!("{body:#}\n"));
    }
}

fn execute(cli: &Cli, cfg: &RunConfig, out: &mut OutDir) -> anyhow::Result<()> {
    let started = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let clock = Instant::now();
    let result = commands::run(cli.command(), cfg, out)?;
    let manifest = json!({
        "command": cli.command().name(),
        "version": env!("CARGO_PKG_VERSION"),
        "started_unix": started,
        "elapsed_seconds": clock.elapsed().as_secs_f64(),
        "workers": rayon::current_num_threads(),
        "config": cfg,
        "files": out.files(),
        "result": result,
    });
    let path = out.root().join("manifest.json");
    std::fs::write(&path, format!("{manifest:#}\n")).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    if let Some(workers) = cli.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(workers).build_global() {
            eprintln!("{e}");
            return ExitCode::from(1);
        }
    }
    let cfg = match cli.resolve() {
        Ok(cfg) => cfg,
        Err(e) => {
            report_error(&e, None);
            return ExitCode::from(2);
        }
    };
    let mut out = match OutDir::create(&cfg.output.dir) {
        Ok(out) => out,
        Err(e) => {
            report_error(&e, None);
            return ExitCode::from(2);
        }
    };
    match execute(&cli, &cfg, &mut out) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            report_error(&e, Some(out.root()));
            ExitCode::from(2)
        }
    }
}
