//! Run configuration: defaults, then a TOML file, then command-line flags.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use radial_nls::nehari::{StoppingRule, UpdateRule};
use radial_nls::{NehariOptions, RkStep, ShootingOptions, SolverParams, ZeroPolicy};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemConfig,
    pub method: MethodConfig,
    pub study: Option<StudyConfig>,
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProblemConfig {
    pub d: usize,
    pub omega: f64,
    pub p: f64,
    #[serde(rename = "R")]
    pub radius: f64,
    #[serde(rename = "N")]
    pub n: usize,
}

impl Default for ProblemConfig {
    fn default() -> Self {
        ProblemConfig { d: 2, omega: 1.0, p: 3.0, radius: 30.0, n: 4096 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MethodConfig {
    /// Requested number of sign changes.
    pub nodes: usize,
    pub shooting: ShootingConfig,
    pub nehari: NehariConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShootingConfig {
    pub eps: f64,
    pub b: f64,
    /// `default`, `grid`, `grid/K` (K substeps per cell) or a step length.
    pub rk_step: String,
    pub r_max: Option<f64>,
    pub divergence_cap: f64,
}

impl Default for ShootingConfig {
    fn default() -> Self {
        let d = ShootingOptions::default();
        ShootingConfig {
            eps: d.epsilon,
            b: d.b,
            rk_step: "default".into(),
            r_max: None,
            divergence_cap: d.divergence_cap,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NehariConfig {
    pub tau: Option<f64>,
    pub eps: f64,
    pub max_iter: usize,
    /// `descent`, `semi-implicit` or `literal`.
    pub update: String,
    /// `max-update` or `action-stagnation`.
    pub stopping: String,
    /// `nudge` or `reject`.
    pub zero_policy: String,
    /// Unset: 1e-8 for explicit updates, no halving for `semi-implicit`.
    pub action_slack: Option<f64>,
    pub tau_floor: f64,
}

impl Default for NehariConfig {
    fn default() -> Self {
        let d = NehariOptions::default();
        NehariConfig {
            tau: None,
            eps: d.epsilon,
            max_iter: d.max_iter,
            update: "descent".into(),
            stopping: "max-update".into(),
            zero_policy: "nudge".into(),
            action_slack: None,
            tau_floor: d.tau_floor,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudyConfig {
    pub convergence: Option<ConvergenceStudy>,
    pub gaps: Option<GapStudy>,
    pub amplitudes: Option<AmplitudeStudy>,
    pub extrema: Option<ExtremaStudy>,
}

impl StudyConfig {
    pub fn is_empty(&self) -> bool {
        self.convergence.is_none() && self.gaps.is_none() && self.amplitudes.is_none() && self.extrema.is_none()
    }
}

fn default_n_values() -> Vec<usize> {
    vec![256, 512, 1024, 2048, 4096]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergenceStudy {
    /// Any of `shooting`, `nehari`, `combined`.
    pub methods: Vec<String>,
    pub n_values: Vec<usize>,
    pub n_ref: usize,
    pub nodes: Vec<usize>,
    /// RK4 step of the shooting solves in this study.
    pub rk_step: String,
}

impl Default for ConvergenceStudy {
    fn default() -> Self {
        ConvergenceStudy {
            methods: vec!["shooting".into(), "nehari".into()],
            n_values: default_n_values(),
            n_ref: 1 << 15,
            nodes: vec![1, 2, 5],
            rk_step: "grid".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GapStudy {
    pub n_values: Vec<usize>,
    pub nodes: Vec<usize>,
    /// RK4 step of the shooting solves in this study.
    pub rk_step: String,
}

impl Default for GapStudy {
    fn default() -> Self {
        GapStudy { n_values: default_n_values(), nodes: vec![1, 2], rk_step: "grid".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AmplitudeStudy {
    pub k_max: usize,
    /// Domain radius for the sweep; the problem radius if unset.
    #[serde(rename = "R")]
    pub radius: Option<f64>,
}

impl Default for AmplitudeStudy {
    fn default() -> Self {
        AmplitudeStudy { k_max: 60, radius: Some(250.0) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtremaStudy {
    pub nodes: usize,
    #[serde(rename = "R")]
    pub radius: Option<f64>,
    #[serde(rename = "N")]
    pub n: Option<usize>,
    /// `shooting`, `nehari` or `combined`.
    pub method: String,
}

impl Default for ExtremaStudy {
    fn default() -> Self {
        ExtremaStudy { nodes: 60, radius: Some(250.0), n: Some(1 << 16), method: "shooting".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: PathBuf::from("out") }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    /// Copy with the shooting RK4 step replaced.
    pub fn with_rk_step(&self, rk_step: &str) -> Self {
        let mut cfg = self.clone();
        cfg.method.shooting.rk_step = rk_step.to_string();
        cfg
    }

    pub fn params(&self) -> radial_nls::Result<SolverParams> {
        let p = &self.problem;
        SolverParams::new(p.d, p.omega, p.p, p.radius, p.n)
    }

    pub fn shooting_options(&self) -> anyhow::Result<ShootingOptions> {
        let s = &self.method.shooting;
        Ok(ShootingOptions {
            target_nodes: self.method.nodes,
            b: s.b,
            epsilon: s.eps,
            rk_step: parse_rk_step(&s.rk_step)?,
            r_max: s.r_max,
            divergence_cap: s.divergence_cap,
        })
    }

    pub fn nehari_options(&self) -> anyhow::Result<NehariOptions> {
        let n = &self.method.nehari;
        let update = match n.update.as_str() {
            "descent" => UpdateRule::Descent,
            "semi-implicit" => UpdateRule::SemiImplicit,
            "literal" => UpdateRule::Literal,
            other => bail!("unknown Nehari update rule `{other}`"),
        };
        let stopping = match n.stopping.as_str() {
            "max-update" => StoppingRule::MaxUpdate,
            "action-stagnation" => StoppingRule::ActionStagnation,
            other => bail!("unknown stopping rule `{other}`"),
        };
        let zero_policy = match n.zero_policy.as_str() {
            "nudge" => ZeroPolicy::Nudge,
            "reject" => ZeroPolicy::Reject,
            other => bail!("unknown zero policy `{other}`"),
        };
        let defaults = match update {
            UpdateRule::SemiImplicit => NehariOptions::semi_implicit(radial_nls::nehari::DEFAULT_SEMI_IMPLICIT_TAU),
            _ => NehariOptions::default(),
        };
        Ok(NehariOptions {
            tau: n.tau.or(defaults.tau),
            epsilon: n.eps,
            max_iter: n.max_iter,
            update,
            stopping,
            zero_policy,
            action_slack: n.action_slack.unwrap_or(defaults.action_slack),
            tau_floor: n.tau_floor,
        })
    }
}

pub fn parse_rk_step(text: &str) -> anyhow::Result<RkStep> {
    let text = text.trim();
    match text {
        "default" => Ok(RkStep::Default),
        "grid" => Ok(RkStep::GridSpacing(1)),
        _ => {
            if let Some(k) = text.strip_prefix("grid/") {
                let k: usize = k.parse().with_context(|| format!("bad substep count in rk_step `{text}`"))?;
                if k == 0 {
                    bail!("rk_step substep count must be positive");
                }
                return Ok(RkStep::GridSpacing(k));
            }
            let step: f64 = text
                .parse()
                .with_context(|| format!("rk_step must be `default`, `grid`, `grid/K` or a number, got `{text}`"))?;
            if !(step > 0.0 && step.is_finite()) {
                bail!("rk_step must be positive, got {step}");
            }
            Ok(RkStep::Fixed(step))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg: RunConfig = toml::from_str("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.params().unwrap().n, 4096);
    }

    #[test]
    fn nested_blocks_parse() {
        let cfg: RunConfig = toml::from_str(
            r#"
            [problem]
            d = 3
            p = 2.0
            R = 12.5
            N = 512
            [method]
            nodes = 4
            [method.nehari]
            update = "semi-implicit"
            [study.convergence]
            nodes = [1]
            [output]
            dir = "runs/a"
            "#,
        )
        .unwrap();
        assert_eq!(cfg.problem.d, 3);
        assert_eq!(cfg.problem.radius, 12.5);
        assert_eq!(cfg.method.nodes, 4);
        let opts = cfg.nehari_options().unwrap();
        assert_eq!(opts.update, UpdateRule::SemiImplicit);
        assert_eq!(opts.action_slack, f64::INFINITY);
        let study = cfg.study.unwrap();
        let conv = study.convergence.unwrap();
        assert_eq!(conv.n_ref, 1 << 15);
        assert_eq!(conv.rk_step, "grid");
        assert_eq!(cfg.method.shooting.rk_step, "default");
        assert!(study.gaps.is_none());
        assert_eq!(cfg.output.dir, PathBuf::from("runs/a"));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<RunConfig>("[problem]\nq = 1").is_err());
    }

    #[test]
    fn rk_step_override_leaves_original() {
        let cfg = RunConfig::default();
        let grid = cfg.with_rk_step("grid");
        assert_eq!(grid.shooting_options().unwrap().rk_step, RkStep::GridSpacing(1));
        assert_eq!(cfg.shooting_options().unwrap().rk_step, RkStep::Default);
    }

    #[test]
    fn rk_step_forms() {
        assert_eq!(parse_rk_step("default").unwrap(), RkStep::Default);
        assert_eq!(parse_rk_step("grid").unwrap(), RkStep::GridSpacing(1));
        assert_eq!(parse_rk_step("grid/4").unwrap(), RkStep::GridSpacing(4));
        assert_eq!(parse_rk_step("1e-3").unwrap(), RkStep::Fixed(1e-3));
        assert!(parse_rk_step("grid/0").is_err());
        assert!(parse_rk_step("-1").is_err());
        assert!(parse_rk_step("fast").is_err());
    }
}
