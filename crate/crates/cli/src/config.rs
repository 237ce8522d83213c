//! Optional TOML configuration. Every key has a default; command-line flags
//! override whatever the file sets.

use std::path::Path;

use dtgnss::correction::BuildSettings;
use dtgnss::eval::{Baseline, ConstellationParams, SceneParams, ScenePreset};
use dtgnss::Error;
use serde::Deserialize;

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub preset: Option<ScenePreset>,
    pub scene: SceneParams,
    pub constellation: ConstellationParams,
    pub build: BuildSection,
    pub receiver: ReceiverSection,
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BuildSection {
    pub slot_length: f64,
    pub step: f64,
}

impl Default for BuildSection {
    fn default() -> Self {
        let d = BuildSettings::default();
        BuildSection {
            slot_length: d.slot_length,
            step: d.step,
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReceiverSection {
    pub noise_sigma: f64,
    pub solver: Baseline,
    pub start: Option<[f64; 2]>,
    pub end: Option<[f64; 2]>,
}

impl Config {
    pub fn load(path: Option<&Path>) -> Result<Config, Error> {
        let Some(path) = path else {
            return Ok(Config::default());
        };
        let text = dtgnss::io::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| Error::Parse {
            context: path.display().to_string(),
            message: e.to_string(),
        })
    }
}
