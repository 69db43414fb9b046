//! Declarative pipeline configuration.

use std::path::{Path, PathBuf};

use coevo_core::contentmetrics::{ContentConfig, TextUnit, DEFAULT_ALPHA};
use coevo_core::ingest::{LogFormat, PayloadKind, DEFAULT_MAX_TARGETS};
use coevo_core::netmetrics::ConductanceConfig;
use coevo_core::stats::RegressionMethod;
use coevo_core::CoevoError;
use serde::{Deserialize, Serialize};

/// Screening levels accepted by `correlate.screen_level`.
pub const SCREEN_LEVELS: [f64; 3] = [0.01, 0.05, 0.10];

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub input: InputSection,
    pub segment: SegmentSection,
    pub netmetrics: NetSection,
    pub content: ContentSection,
    pub correlate: CorrelateSection,
    pub regress: RegressSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputSection {
    pub path: Option<PathBuf>,
    pub format: LogFormat,
    pub payload: Option<PayloadKind>,
    pub max_targets: usize,
}

impl Default for InputSection {
    fn default() -> Self {
        InputSection {
            path: None,
            format: LogFormat::Jsonl,
            payload: None,
            max_targets: DEFAULT_MAX_TARGETS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegmentSection {
    pub size: usize,
    pub include_isolated: bool,
    /// Keep a trailing segment with fewer actions than `size`.
    pub keep_partial: bool,
}

impl Default for SegmentSection {
    fn default() -> Self {
        SegmentSection {
            size: 100,
            include_isolated: false,
            keep_partial: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetSection {
    pub max_path_len: usize,
    pub prune_eps: f64,
    pub max_lag: usize,
    /// Append `d_<col>` first differences of the single-segment metrics.
    pub differences: bool,
}

impl Default for NetSection {
    fn default() -> Self {
        let c = ConductanceConfig::default();
        NetSection {
            max_path_len: c.max_path_len,
            prune_eps: c.prune_epsilon,
            max_lag: 50,
            differences: true,
        }
    }
}

impl NetSection {
    pub fn conductance(&self) -> Result<ConductanceConfig, CoevoError> {
        ConductanceConfig::new(self.max_path_len, self.prune_eps)
            .map_err(|e| CoevoError::config(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContentSection {
    pub alpha: f64,
    pub strip_quotes: bool,
    pub text_unit: TextUnit,
}

impl Default for ContentSection {
    fn default() -> Self {
        ContentSection {
            alpha: DEFAULT_ALPHA,
            strip_quotes: false,
            text_unit: TextUnit::User,
        }
    }
}

impl ContentSection {
    pub fn to_core(&self) -> ContentConfig {
        ContentConfig {
            alpha: self.alpha,
            strip_quotes: self.strip_quotes,
            text_unit: self.text_unit,
        }
    }
}

/// Which variable pairs to correlate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PairSpec {
    /// `"all"` (every unordered pair) or `"cross"` (network × content).
    Named(String),
    List(Vec<[String; 2]>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorrelateSection {
    pub pairs: PairSpec,
    /// Drop groups whose series fail ADF or PP at this level.
    pub screen_level: Option<f64>,
}

impl Default for CorrelateSection {
    fn default() -> Self {
        CorrelateSection {
            pairs: PairSpec::Named("cross".into()),
            screen_level: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum PredictorSet {
    Net,
    Content,
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegressSection {
    /// Defaults to the entropy column of the payload kind.
    pub target: Option<String>,
    pub predictors: PredictorSet,
    pub method: RegressionMethod,
}

impl Default for RegressSection {
    fn default() -> Self {
        RegressSection {
            target: None,
            predictors: PredictorSet::All,
            method: RegressionMethod::Nw,
        }
    }
}

pub fn default_target(kind: PayloadKind) -> &'static str {
    match kind {
        PayloadKind::Numeric => "msg_entropy",
        PayloadKind::Asset => "asset_entropy",
        PayloadKind::Tokens => "lm_dist_all",
    }
}

pub fn validate_screen_level(level: f64) -> Result<(), CoevoError> {
    if SCREEN_LEVELS.iter().any(|l| (l - level).abs() < 1e-12) {
        Ok(())
    } else {
        Err(CoevoError::config(format!(
            "screen level must be one of 0.01, 0.05, 0.10, got {level}"
        )))
    }
}

impl PipelineConfig {
    /// Reads a TOML file, or JSON when the extension is `.json`.
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CoevoError::config(format!("cannot read {}: {e}", path.display())))?;
        let cfg = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| CoevoError::config(format!("{}: {e}", path.display())))?
        } else {
            toml::from_str(&text).map_err(|e| CoevoError::config(format!("{}: {e}", path.display())))?
        };
        Ok(cfg)
    }

    /// Fills defaults that depend on other fields and resolves a relative
    /// input path against `base`.
    pub fn resolve(&mut self, base: &Path) {
        if let Some(p) = &self.input.path {
            if p.is_relative() {
                self.input.path = Some(base.join(p));
            }
        }
        if self.regress.target.is_none() {
            if let Some(kind) = self.input.payload {
                self.regress.target = Some(default_target(kind).to_owned());
            }
        }
    }

    pub fn validate(&self) -> Result<(), CoevoError> {
        if self.input.path.is_none() {
            return Err(CoevoError::config("input.path is required"));
        }
        if self.input.payload.is_none() {
            return Err(CoevoError::config("input.payload is required"));
        }
        if self.input.max_targets == 0 {
            return Err(CoevoError::config("input.max_targets must be at least 1"));
        }
        if self.segment.size == 0 {
            return Err(CoevoError::config("segment.size must be at least 1"));
        }
        self.netmetrics.conductance()?;
        if self.netmetrics.max_lag == 0 {
            return Err(CoevoError::config("netmetrics.max_lag must be at least 1"));
        }
        if !(self.content.alpha > 0.0) {
            return Err(CoevoError::config("content.alpha must be positive"));
        }
        if let PairSpec::Named(n) = &self.correlate.pairs {
            if n != "all" && n != "cross" {
                return Err(CoevoError::config(format!(
                    "correlate.pairs must be \"all\", \"cross\" or a list of pairs, got `{n}`"
                )));
            }
        }
        if let Some(level) = self.correlate.screen_level {
            validate_screen_level(level)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_toml_gets_defaults() {
        let mut cfg: PipelineConfig =
            toml::from_str("[input]\npath = \"ev.jsonl\"\npayload = \"numeric\"\n").unwrap();
        cfg.resolve(Path::new("/data"));
        cfg.validate().unwrap();
        assert_eq!(cfg.input.path.as_deref(), Some(Path::new("/data/ev.jsonl")));
        assert_eq!(cfg.regress.target.as_deref(), Some("msg_entropy"));
        assert_eq!(cfg.segment.size, 100);
        assert_eq!(cfg.netmetrics.max_path_len, 4);
    }

    #[test]
    fn rejects_zero_segment_size_and_unknown_keys() {
        let cfg: PipelineConfig =
            toml::from_str("[input]\npath = \"a\"\npayload = \"asset\"\n[segment]\nsize = 0\n").unwrap();
        assert!(matches!(cfg.validate(), Err(CoevoError::Config(_))));
        assert!(toml::from_str::<PipelineConfig>("[segment]\nsizes = 3\n").is_err());
    }

    #[test]
    fn pair_lists_parse() {
        let cfg: PipelineConfig =
            toml::from_str("[correlate]\npairs = [[\"a\", \"b\"]]\nscreen_level = 0.05\n").unwrap();
        assert_eq!(
            cfg.correlate.pairs,
            PairSpec::List(vec![["a".into(), "b".into()]])
        );
        assert!(validate_screen_level(0.2).is_err());
    }
}
