//! The single configuration file: one section per stage, dotted-key overrides
//! and a TOML echo written next to every artifact.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bake::BakeConfig;
use crate::error::{Error, Result};
use crate::field::FieldConfig;
use crate::refine::Stage2Config;
use crate::scene::{Split, SyntheticConfig, SyntheticScene};
use crate::volrender::Stage1Config;

use super::extract::ExtractConfig;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    /// Dataset directory; defaults to `<out>/dataset`.
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub scene: SyntheticScene,
    pub dataset: SyntheticConfig,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            scene: SyntheticScene::sphere(0.6),
            dataset: SyntheticConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RenderConfig {
    pub split: Split,
    /// Square output size; the dataset resolution when absent.
    pub resolution: Option<u32>,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self {
            split: Split::Test,
            resolution: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub split: Split,
    /// Ray-surface hits per side for Chamfer distance.
    pub n_points: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            split: Split::Test,
            n_points: 50_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub seed: u64,
    pub data: DataConfig,
    pub synth: SynthConfig,
    pub field: FieldConfig,
    pub stage1: Stage1Config,
    pub extract: ExtractConfig,
    pub stage2: Stage2Config,
    pub bake: BakeConfig,
    pub render: RenderConfig,
    pub eval: EvalConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            data: DataConfig::default(),
            synth: SynthConfig::default(),
            field: FieldConfig::default(),
            stage1: Stage1Config::default(),
            extract: ExtractConfig::default(),
            stage2: Stage2Config::default(),
            bake: BakeConfig::default(),
            render: RenderConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

fn to_table(cfg: &PipelineConfig) -> toml::Table {
    toml::Table::try_from(cfg).expect("config serializes to a table")
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Applies `section.key=value` overrides. Values are parsed as TOML and
    /// fall back to plain strings; unknown keys are rejected.
    pub fn with_overrides<S: AsRef<str>>(&self, overrides: &[S]) -> Result<Self> {
        if overrides.is_empty() {
            return Ok(self.clone());
        }
        let mut root = to_table(self);
        for o in overrides {
            let o = o.as_ref();
            let (key, raw) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override {o:?} is not key=value")))?;
            let path: Vec<&str> = key.trim().split('.').collect();
            if path.iter().any(|p| p.is_empty()) {
                return Err(Error::Config(format!("bad override key {key:?}")));
            }
            let value = toml::from_str::<toml::Table>(&format!("v = {}", raw.trim()))
                .ok()
                .and_then(|mut t| t.remove("v"))
                .unwrap_or_else(|| toml::Value::String(raw.trim().to_string()));
            let (last, parents) = path.split_last().expect("non-empty key");
            let mut table = &mut root;
            for p in parents {
                table = table
                    .entry(p.to_string())
                    .or_insert_with(|| toml::Value::Table(toml::Table::new()))
                    .as_table_mut()
                    .ok_or_else(|| {
                        Error::Config(format!("override {key:?}: {p} is not a section"))
                    })?;
            }
            table.insert(last.to_string(), value);
        }
        toml::Value::Table(root)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.stage1.validate()?;
        self.stage2.validate()?;
        self.bake.validate()?;
        if self.synth.dataset.n_views == 0 {
            return Err(Error::Config("synth.dataset.n_views must be ≥ 1".into()));
        }
        if self.eval.n_points == 0 {
            return Err(Error::Config("eval.n_points must be ≥ 1".into()));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }
}
