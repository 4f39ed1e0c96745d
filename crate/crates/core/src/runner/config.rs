//! Experiment configuration documents (TOML).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::covering::{CoveringConfig, Design};
use crate::error::{Error, Result};
use crate::eval::DEFAULT_CAP;
use crate::poa::DEFAULT_PAIR_CAP;
use crate::spi::StepSchedule;

/// Seed used when neither the config nor the command line gives one.
pub const DEFAULT_SEED: u64 = 1234;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Simulate,
    AnalyzeSmoothness,
    Counterexample,
    EvalPolicy,
    SampleSizes,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::Simulate => "simulate",
            ExperimentKind::AnalyzeSmoothness => "analyze-smoothness",
            ExperimentKind::Counterexample => "counterexample",
            ExperimentKind::EvalPolicy => "eval-policy",
            ExperimentKind::SampleSizes => "sample-sizes",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameSection {
    /// Named preset, see [`super::presets::PRESETS`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    /// Reward design for covering presets without a design suffix.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub design: Option<Design>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covering: Option<CoveringConfig>,
    /// Path to a tabular game JSON document, relative to the config file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tabular: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StepsizeSpec {
    /// `1 / sqrt(4 n^2 H^3 t)`.
    Default,
    Constant { eta: f64 },
    InvSqrt { eta1: f64 },
}

impl StepsizeSpec {
    pub fn schedule(&self) -> Option<StepSchedule> {
        match *self {
            StepsizeSpec::Default => None,
            StepsizeSpec::Constant { eta } => Some(StepSchedule::Constant { eta }),
            StepsizeSpec::InvSqrt { eta1 } => Some(StepSchedule::InvSqrt { eta1 }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpiSection {
    #[serde(rename = "T_G", default, skip_serializing_if = "Option::is_none")]
    pub t_g: Option<usize>,
    #[serde(rename = "T_J", default, skip_serializing_if = "Option::is_none")]
    pub t_j: Option<usize>,
    #[serde(rename = "T_K", default, skip_serializing_if = "Option::is_none")]
    pub t_k: Option<usize>,
    /// Use exact averaged Q-functions instead of sampled estimates.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exact_q: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exact_eval_logging: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_agent_rollouts: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stepsize: Option<StepsizeSpec>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyzerSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<Vec<f64>>,
    /// Explicit `mu` values checked against every `lambda`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu_search: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pair_cap: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    /// `"uniform"` or a path to a policy JSON document.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy: Option<String>,
    /// Largest enumeration allowed in exact computations.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cap: Option<u64>,
    /// Episodes for the Monte-Carlo fallback of expected returns (0 disables it).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub monte_carlo_episodes: Option<usize>,
    /// Random trials of the potential check.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub potential_trials: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleSizeSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    /// Exploration constant; defaults to the preset's value or the uniform-policy visitation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi_range: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plot: Option<bool>,
}

/// The document as written by the user; every field optional except the game source.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub experiment: Option<ExperimentKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default)]
    pub game: GameSection,
    #[serde(default)]
    pub spi: SpiSection,
    #[serde(default)]
    pub analyzer: AnalyzerSection,
    #[serde(default)]
    pub eval: EvalSection,
    #[serde(default)]
    pub sample_sizes: SampleSizeSection,
    #[serde(default)]
    pub output: OutputSection,
    /// Directory that relative paths resolve against (not part of the document).
    #[serde(skip)]
    pub base_dir: PathBuf,
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    cfg.check()?;
    Ok(cfg)
}

pub fn load_config(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut cfg = parse_config(&text).map_err(|e| match e {
        Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
        other => other,
    })?;
    cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(cfg)
}

impl ExperimentConfig {
    /// Structural checks that do not need the game.
    pub fn check(&self) -> Result<()> {
        let g = &self.game;
        let sources = [g.preset.is_some(), g.covering.is_some(), g.tabular.is_some()]
            .iter()
            .filter(|&&b| b)
            .count();
        let needs_game = self.experiment != Some(ExperimentKind::Counterexample);
        if sources > 1 || (needs_game && sources == 0 && self.experiment.is_some()) {
            return Err(Error::Config(
                "[game] must name exactly one of `preset`, `covering` or `tabular`".into(),
            ));
        }
        if g.design.is_some() && g.preset.is_none() {
            return Err(Error::Config("`game.design` only applies to presets".into()));
        }
        for (name, v) in [("T_G", self.spi.t_g), ("T_J", self.spi.t_j), ("T_K", self.spi.t_k)] {
            if v == Some(0) {
                return Err(Error::Config(format!("spi.{name} must be at least 1")));
            }
        }
        if let Some(seed) = self.seed {
            if seed > i64::MAX as u64 {
                return Err(Error::Config(format!("seed {seed} exceeds 2^63 - 1")));
            }
        }
        if let Some(l) = &self.analyzer.lambda {
            if l.is_empty() || l.iter().any(|x| !(*x > 0.0)) {
                return Err(Error::Config("analyzer.lambda must be a non-empty list of positive values".into()));
            }
        }
        if let Some(m) = &self.analyzer.mu {
            if m.iter().any(|x| !(*x >= 0.0)) {
                return Err(Error::Config("analyzer.mu values must be non-negative".into()));
            }
        }
        Ok(())
    }

    pub fn resolve_path(&self, p: &str) -> PathBuf {
        let path = Path::new(p);
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("cannot render config: {e}")))
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(DEFAULT_SEED)
    }

    pub fn eval_cap(&self) -> u128 {
        self.eval.cap.map_or(DEFAULT_CAP, u128::from)
    }

    pub fn pair_cap(&self) -> u128 {
        self.analyzer.pair_cap.map_or(DEFAULT_PAIR_CAP, u128::from)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config() {
        let cfg = parse_config("experiment = \"simulate\"\n[game]\npreset = \"paper-7x7\"\n").unwrap();
        assert_eq!(cfg.game.preset.as_deref(), Some("paper-7x7"));
        assert_eq!(cfg.seed(), DEFAULT_SEED);
    }

    #[test]
    fn unknown_keys_are_named() {
        let err = parse_config("[game]\npreset = \"desk-5x5\"\n[spi]\nT_GG = 5\n").unwrap_err();
        assert!(err.is_config_error());
        assert!(err.to_string().contains("T_GG"), "{err}");
        let err = parse_config("[gaem]\npreset = \"desk-5x5\"\n").unwrap_err();
        assert!(err.to_string().contains("gaem"));
    }

    #[test]
    fn game_sources_are_exclusive() {
        let text = "experiment = \"simulate\"\n[game]\npreset = \"desk-5x5\"\ntabular = \"g.json\"\n";
        assert!(parse_config(text).is_err());
        assert!(parse_config("experiment = \"simulate\"\n").is_err());
        assert!(parse_config("experiment = \"counterexample\"\n").is_ok());
    }

    #[test]
    fn covering_section_and_stepsize() {
        let text = r#"
            experiment = "simulate"
            seed = 9
            [game.covering]
            grid_size = 3
            num_agents = 2
            horizon = 2
            design = "mc"
            treasures = [{ row = 0, col = 0, value = 1.0 }]
            [spi]
            T_G = 3
            stepsize = { kind = "inv_sqrt", eta1 = 0.5 }
        "#;
        let cfg = parse_config(text).unwrap();
        let cov = cfg.game.covering.as_ref().unwrap();
        assert_eq!(cov.coverage_radius, 1);
        assert_eq!(cov.design, Design::MarginalContribution);
        assert_eq!(cfg.spi.stepsize, Some(StepsizeSpec::InvSqrt { eta1: 0.5 }));
        let again = parse_config(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn zero_counts_rejected() {
        assert!(parse_config("[game]\npreset = \"desk-5x5\"\n[spi]\nT_J = 0\n").is_err());
    }
}
