//! Stage wiring shared by the command-line front end.

pub mod config;
pub mod extract;
pub mod stages;

use std::path::Path;

pub use config::{DataConfig, EvalConfig, PipelineConfig, RenderConfig, SynthConfig};
pub use extract::{extract_coarse_mesh, extract_region, region_box, ExtractConfig, ExtractReport};
pub use stages::{Layout, CONFIG_ECHO, SCENE_FILE};

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Synth,
    Train1,
    Extract,
    Train2,
    Bake,
    Render,
    Eval,
    Pipeline,
}

impl Command {
    /// Runs one command against the artifact tree rooted at `out`.
    pub fn run(self, cfg: &PipelineConfig, out: &Path) -> Result<()> {
        cfg.validate()?;
        let layout = Layout::new(out, cfg);
        match self {
            Command::Synth => stages::synth(cfg, &layout),
            Command::Train1 => stages::train1(cfg, &layout),
            Command::Extract => stages::extract(cfg, &layout),
            Command::Train2 => stages::train2(cfg, &layout),
            Command::Bake => stages::bake(cfg, &layout),
            Command::Render => stages::render(cfg, &layout),
            Command::Eval => stages::eval(cfg, &layout),
            Command::Pipeline => stages::pipeline(cfg, &layout),
        }
    }

    /// Config keys set by `--steps` for this command.
    pub fn steps_keys(self) -> &'static [&'static str] {
        match self {
            Command::Train1 => &["stage1.steps"],
            Command::Train2 => &["stage2.steps"],
            Command::Pipeline => &["stage1.steps", "stage2.steps"],
            _ => &[],
        }
    }
}
