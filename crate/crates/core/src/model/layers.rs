use serde::{Deserialize, Serialize};

/// How the Siamese head turns two feature vectors into a similarity logit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HeadMode {
    /// `w · Σ|p − q| + b` with scalar `w` (initialised to −1) and `b` (0).
    #[default]
    ScalarL1,
    /// Learned weighted sum of the elementwise `|p − q|` plus a bias.
    WeightedL1,
}

impl std::str::FromStr for HeadMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "scalar-l1" => Ok(Self::ScalarL1),
            "weighted-l1" => Ok(Self::WeightedL1),
            other => Err(format!("unknown head mode `{other}` (scalar-l1 | weighted-l1)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LayerKind {
    Conv { filters: usize, kernel: usize },
    #[serde(rename = "batchnorm")]
    BatchNorm,
    Relu,
    #[serde(rename = "maxpool")]
    MaxPool,
    Dropout { rate: f32 },
    Dense { units: usize },
    Flatten,
    Sigmoid,
    L1Head { mode: HeadMode },
}

impl LayerKind {
    pub fn name(&self) -> &'static str {
        match self {
            LayerKind::Conv { .. } => "conv",
            LayerKind::BatchNorm => "batchnorm",
            LayerKind::Relu => "relu",
            LayerKind::MaxPool => "maxpool",
            LayerKind::Dropout { .. } => "dropout",
            LayerKind::Dense { .. } => "dense",
            LayerKind::Flatten => "flatten",
            LayerKind::Sigmoid => "sigmoid",
            LayerKind::L1Head { .. } => "l1-head",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub id: String,
    pub kind: LayerKind,
    pub trainable: bool,
    /// 1-based convolutional block index for backbone layers.
    pub block: Option<usize>,
}

impl LayerSpec {
    pub fn new(id: impl Into<String>, kind: LayerKind) -> Self {
        Self {
            id: id.into(),
            kind,
            trainable: true,
            block: None,
        }
    }

    pub fn in_block(mut self, block: usize) -> Self {
        self.block = Some(block);
        self
    }

    pub fn has_params(&self) -> bool {
        matches!(
            self.kind,
            LayerKind::Conv { .. } | LayerKind::BatchNorm | LayerKind::Dense { .. } | LayerKind::L1Head { .. }
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvBlock {
    pub filters: usize,
    pub convs: usize,
}

/// VGG-style stack of 3×3 convolution blocks, each followed by 2×2 max pooling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackboneConfig {
    pub blocks: Vec<ConvBlock>,
    /// Dropout applied after every convolution (after batchnorm and ReLU).
    pub conv_dropout: f32,
}

impl BackboneConfig {
    /// The VGG16 convolutional stack.
    pub fn vgg16() -> Self {
        let b = |filters, convs| ConvBlock { filters, convs };
        Self {
            blocks: vec![b(64, 2), b(128, 2), b(256, 3), b(512, 3), b(512, 3)],
            conv_dropout: 0.3,
        }
    }

    /// Five single-convolution blocks with narrow filters; same topology, CPU-friendly.
    pub fn compact() -> Self {
        let b = |filters| ConvBlock { filters, convs: 1 };
        Self {
            blocks: vec![b(8), b(16), b(32), b(32), b(32)],
            conv_dropout: 0.3,
        }
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "vgg16" => Some(Self::vgg16()),
            "compact" => Some(Self::compact()),
            _ => None,
        }
    }
}

impl Default for BackboneConfig {
    fn default() -> Self {
        Self::vgg16()
    }
}
