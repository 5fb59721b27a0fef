use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use siamese_verify::data::{DatasetSplit, Layout};
use siamese_verify::model::{BackboneConfig, FreezePolicy, HeadMode};
use siamese_verify::train::TrainConfig;

use crate::error::{CliError, CliResult};

/// Environment variable consulted for the dataset root when neither the
/// command line nor the config file names one.
pub const DATA_ENV: &str = "SIAMVERIFY_DATA";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    CnnScratch,
    SnnScratch,
    CnnTransfer,
    SnnTransfer,
    SnnVoting,
}

impl Variant {
    pub fn is_siamese(self) -> bool {
        !matches!(self, Variant::CnnScratch | Variant::CnnTransfer)
    }

    pub fn needs_weights(self) -> bool {
        matches!(self, Variant::CnnTransfer | Variant::SnnTransfer)
    }
}

impl std::str::FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "cnn-scratch" => Variant::CnnScratch,
            "snn-scratch" => Variant::SnnScratch,
            "cnn-transfer" => Variant::CnnTransfer,
            "snn-transfer" => Variant::SnnTransfer,
            "snn-voting" => Variant::SnnVoting,
            other => {
                return Err(format!(
                    "unknown variant `{other}` (cnn-scratch | snn-scratch | cnn-transfer | snn-transfer | snn-voting)"
                ))
            }
        })
    }
}

/// Everything a run needs. Written back out, resolved, as `config.toml` in
/// the output directory so the run can be repeated exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub data_root: Option<PathBuf>,
    pub layout: Layout,
    pub variant: Variant,
    pub head: HeadMode,
    pub backbone: String,
    pub freeze: FreezePolicy,
    pub k: usize,
    pub split: DatasetSplit,
    pub weights: Option<PathBuf>,
    pub out: PathBuf,
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data_root: None,
            layout: Layout::Bracket,
            variant: Variant::CnnScratch,
            head: HeadMode::ScalarL1,
            backbone: "vgg16".into(),
            freeze: FreezePolicy::AllButLastBlock,
            k: 5,
            split: DatasetSplit::Validation,
            weights: None,
            out: PathBuf::from("runs/latest"),
            train: TrainConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> CliResult<String> {
        toml::to_string(self).map_err(|e| CliError::Config(format!("cannot serialize config: {e}")))
    }

    pub fn backbone_config(&self) -> CliResult<BackboneConfig> {
        BackboneConfig::by_name(&self.backbone)
            .ok_or_else(|| CliError::Config(format!("unknown backbone `{}` (vgg16 | compact)", self.backbone)))
    }

    pub fn data_root(&self) -> CliResult<PathBuf> {
        self.data_root
            .clone()
            .or_else(|| std::env::var_os(DATA_ENV).map(PathBuf::from))
            .ok_or_else(|| CliError::Config(format!("no dataset root: pass --data, set data_root, or set {DATA_ENV}")))
    }

    pub fn validate(&self) -> CliResult<()> {
        self.train.validate()?;
        self.backbone_config()?;
        if self.k == 0 {
            return Err(CliError::Config("k must be at least 1".into()));
        }
        if self.variant.needs_weights() && self.weights.is_none() {
            return Err(CliError::Config(format!(
                "variant {:?} needs a backbone weight file (--weights)",
                self.variant
            )));
        }
        Ok(())
    }

    pub fn write_snapshot(&self, dir: &Path) -> CliResult<()> {
        let path = dir.join("config.toml");
        std::fs::write(&path, self.to_toml()?).map_err(|e| siamese_verify::Error::Io {
            path,
            source: e,
        })?;
        Ok(())
    }
}
