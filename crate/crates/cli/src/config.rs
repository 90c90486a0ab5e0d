//! Optional TOML config file. Values fill in for flags the user did not
//! pass; explicit flags always win, defaults apply last. Unknown keys are
//! rejected.

use std::path::Path;

use anyhow::{Context, Result};
use serde::Deserialize;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct FileConfig {
    #[serde(default)]
    pub build_dict: BuildDictCfg,
    #[serde(default)]
    pub encode: EncodeCfg,
    #[serde(default)]
    pub synth: SynthCfg,
    #[serde(default)]
    pub pretrain: PretrainCfg,
    #[serde(default)]
    pub finetune: FinetuneCfg,
    #[serde(default)]
    pub gradcheck: GradcheckCfg,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct BuildDictCfg {
    pub max_n: Option<usize>,
    pub min_freq: Option<u64>,
    pub format: Option<String>,
    pub nfkc: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct EncodeCfg {
    pub format: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct SynthCfg {
    pub min_words: Option<usize>,
    pub max_words: Option<usize>,
    pub sentences: Option<usize>,
    pub seed: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct PretrainCfg {
    pub steps: Option<usize>,
    pub batch_size: Option<usize>,
    pub lr: Option<f64>,
    pub mask_rate: Option<f64>,
    pub seed: Option<u64>,
    pub ba_layer: Option<usize>,
    pub d_model: Option<usize>,
    pub layers: Option<usize>,
    pub heads: Option<usize>,
    pub ffn_dim: Option<usize>,
    pub max_len: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct FinetuneCfg {
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub lr: Option<f64>,
    pub seed: Option<u64>,
    pub constrained: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct GradcheckCfg {
    pub seed: Option<u64>,
    pub epsilon: Option<f64>,
    pub coords: Option<usize>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config file {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config file {}", path.display()))
    }
}

/// Flag value if given, else config-file value, else default.
pub fn resolve<T: Clone>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}
