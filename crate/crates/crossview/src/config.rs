//! Run configuration: model shape plus training schedule, loaded from and
//! echoed back as TOML. Omitted fields fall back to desk-scale defaults.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::embedding::OovPolicy;
use crate::error::{Error, Result};
use crate::models::ViewModel;
use crate::trainer::TrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub code_bits: usize,
    pub image_hidden: Vec<usize>,
    pub text_conv1_kernels: usize,
    pub text_conv2_kernels: usize,
    pub text_fc_width: usize,
    pub oov: OovPolicy,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            code_bits: 32,
            image_hidden: vec![128],
            text_conv1_kernels: 64,
            text_conv2_kernels: 64,
            text_fc_width: 128,
            oov: OovPolicy::Zero,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.code_bits == 0 {
            return Err(Error::Config("code_bits must be positive".into()));
        }
        if self.text_conv1_kernels == 0 || self.text_conv2_kernels == 0 || self.text_fc_width == 0
        {
            return Err(Error::Config("text network widths must be positive".into()));
        }
        if self.image_hidden.contains(&0) {
            return Err(Error::Config("hidden widths must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let config: RunConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("bad config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("run configuration always serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml())?;
        Ok(())
    }

    /// Both view models initialized from one RNG in a fixed order
    /// (image first), so a seed pins the whole starting point.
    pub fn build_models(
        &self,
        feature_dim: usize,
        glove_dim: usize,
        max_words: usize,
        categories: usize,
        rng: &mut impl Rng,
    ) -> Result<(ViewModel, ViewModel)> {
        self.model.validate()?;
        let image = ViewModel::new_image(
            feature_dim,
            &self.model.image_hidden,
            self.model.code_bits,
            categories,
            rng,
        )?;
        let text = ViewModel::new_text(
            glove_dim,
            max_words,
            self.model.text_conv1_kernels,
            self.model.text_conv2_kernels,
            self.model.text_fc_width,
            self.model.code_bits,
            categories,
            rng,
        )?;
        Ok((image, text))
    }
}
