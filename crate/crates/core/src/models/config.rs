use std::fmt;
use std::str::FromStr;

use crate::config::KvMap;
use crate::error::{Error, Result};
use crate::tensorio::FeatureType;

/// Width of the trainable token embedding feeding every architecture.
pub const TEXT_EMBED_WIDTH: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Family {
    LstmAttn,
    Transformer,
    PerceiverIo,
}

impl Family {
    pub const ALL: [Family; 3] = [Family::LstmAttn, Family::Transformer, Family::PerceiverIo];

    pub fn name(self) -> &'static str {
        match self {
            Family::LstmAttn => "lstm_attn",
            Family::Transformer => "transformer",
            Family::PerceiverIo => "perceiver_io",
        }
    }

    /// Column heading used in cost and accuracy tables.
    pub fn title(self) -> &'static str {
        match self {
            Family::LstmAttn => "LSTM",
            Family::Transformer => "Transformer",
            Family::PerceiverIo => "PerceiverIO",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown model family {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LstmAttnConfig {
    pub hidden: usize,
    pub layers: usize,
    pub bidirectional: bool,
    /// Width of the additive attention scorer.
    pub attn_width: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TransformerConfig {
    pub width: usize,
    pub layers: usize,
    pub heads: usize,
    pub ff_width: usize,
    /// Temporal mean-pooling stride applied before the encoder.
    pub stride: usize,
    /// Longest downsampled sequence accepted.
    pub max_positions: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PerceiverConfig {
    /// Latent array length N.
    pub latents: usize,
    /// Latent width; inputs are projected to this width.
    pub width: usize,
    pub cross_heads: usize,
    pub self_heads: usize,
    /// Self-attention blocks over the latents.
    pub blocks: usize,
    pub ff_width: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum FamilyConfig {
    LstmAttn(LstmAttnConfig),
    Transformer(TransformerConfig),
    PerceiverIo(PerceiverConfig),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModelConfig {
    pub arch: FamilyConfig,
    /// Feature columns D; [`TEXT_EMBED_WIDTH`] for token inputs.
    pub input_width: usize,
    pub classes: usize,
    /// Set for token inputs: ids are embedded before the encoder.
    pub vocab_size: Option<usize>,
}

impl ModelConfig {
    pub fn family(&self) -> Family {
        match self.arch {
            FamilyConfig::LstmAttn(_) => Family::LstmAttn,
            FamilyConfig::Transformer(_) => Family::Transformer,
            FamilyConfig::PerceiverIo(_) => Family::PerceiverIo,
        }
    }

    /// Feature type this config consumes, inferred from its input width.
    pub fn feature_type(&self) -> Option<FeatureType> {
        if self.vocab_size.is_some() {
            return Some(FeatureType::Tokens);
        }
        [FeatureType::Cartesian, FeatureType::Angular, FeatureType::I3d]
            .into_iter()
            .find(|t| t.width() == self.input_width)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.input_width == 0 || self.classes == 0 {
            return bad("input_width and classes must be positive".into());
        }
        if let Some(v) = self.vocab_size {
            if v == 0 {
                return bad("vocab_size must be positive".into());
            }
            if self.input_width != TEXT_EMBED_WIDTH {
                return bad(format!("token inputs need input_width = {TEXT_EMBED_WIDTH}"));
            }
        }
        match &self.arch {
            FamilyConfig::LstmAttn(c) => {
                if c.hidden == 0 || c.layers == 0 || c.attn_width == 0 {
                    return bad("hidden, layers and attn_width must be positive".into());
                }
            }
            FamilyConfig::Transformer(c) => {
                if c.width == 0 || c.heads == 0 || c.ff_width == 0 || c.stride == 0 || c.max_positions == 0 {
                    return bad("transformer widths, heads, stride and max_positions must be positive".into());
                }
                if c.width % c.heads != 0 {
                    return bad(format!("width {} not divisible by {} heads", c.width, c.heads));
                }
            }
            FamilyConfig::PerceiverIo(c) => {
                if c.latents == 0 || c.width == 0 || c.ff_width == 0 || c.cross_heads == 0 || c.self_heads == 0 {
                    return bad("perceiver latents, widths and heads must be positive".into());
                }
                if c.width % c.cross_heads != 0 || c.width % c.self_heads != 0 {
                    return bad(format!("width {} not divisible by the head counts", c.width));
                }
            }
        }
        Ok(())
    }

    pub fn to_kv(&self) -> KvMap {
        let mut m = KvMap::new();
        m.set("family", self.family());
        m.set("input_width", self.input_width);
        m.set("classes", self.classes);
        if let Some(v) = self.vocab_size {
            m.set("vocab_size", v);
        }
        match &self.arch {
            FamilyConfig::LstmAttn(c) => {
                m.set("hidden", c.hidden);
                m.set("layers", c.layers);
                m.set("bidirectional", c.bidirectional);
                m.set("attn_width", c.attn_width);
            }
            FamilyConfig::Transformer(c) => {
                m.set("width", c.width);
                m.set("layers", c.layers);
                m.set("heads", c.heads);
                m.set("ff_width", c.ff_width);
                m.set("stride", c.stride);
                m.set("max_positions", c.max_positions);
            }
            FamilyConfig::PerceiverIo(c) => {
                m.set("latents", c.latents);
                m.set("width", c.width);
                m.set("cross_heads", c.cross_heads);
                m.set("self_heads", c.self_heads);
                m.set("blocks", c.blocks);
                m.set("ff_width", c.ff_width);
            }
        }
        m
    }

    /// Reads the model keys of `m`. Keys the family does not use fall back to
    /// the tiny defaults, so a partial file works.
    pub fn from_kv(m: &KvMap) -> Result<Self> {
        let family: Family = m.require("family")?;
        let classes = m.require("classes")?;
        let vocab_size = m.parse_opt("vocab_size")?;
        let default_width = if vocab_size.is_some() { TEXT_EMBED_WIDTH } else { 0 };
        let input_width = match m.parse_opt("input_width")? {
            Some(w) => w,
            None if default_width > 0 => default_width,
            None => return Err(Error::Config("missing required key input_width".into())),
        };
        let base = ModelConfig::tiny(family, input_width, classes);
        let arch = match base.arch {
            FamilyConfig::LstmAttn(d) => FamilyConfig::LstmAttn(LstmAttnConfig {
                hidden: m.parse_or("hidden", d.hidden)?,
                layers: m.parse_or("layers", d.layers)?,
                bidirectional: m.parse_or("bidirectional", d.bidirectional)?,
                attn_width: m.parse_or("attn_width", d.attn_width)?,
            }),
            FamilyConfig::Transformer(d) => FamilyConfig::Transformer(TransformerConfig {
                width: m.parse_or("width", d.width)?,
                layers: m.parse_or("layers", d.layers)?,
                heads: m.parse_or("heads", d.heads)?,
                ff_width: m.parse_or("ff_width", d.ff_width)?,
                stride: m.parse_or("stride", d.stride)?,
                max_positions: m.parse_or("max_positions", d.max_positions)?,
            }),
            FamilyConfig::PerceiverIo(d) => FamilyConfig::PerceiverIo(PerceiverConfig {
                latents: m.parse_or("latents", d.latents)?,
                width: m.parse_or("width", d.width)?,
                cross_heads: m.parse_or("cross_heads", d.cross_heads)?,
                self_heads: m.parse_or("self_heads", d.self_heads)?,
                blocks: m.parse_or("blocks", d.blocks)?,
                ff_width: m.parse_or("ff_width", d.ff_width)?,
            }),
        };
        let cfg = ModelConfig {
            arch,
            input_width,
            classes,
            vocab_size,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_text(&self) -> String {
        self.to_kv().to_text()
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::from_kv(&KvMap::parse(text, "model config")?)
    }

    /// Small configs that train in seconds on the synthetic corpus.
    pub fn tiny(family: Family, input_width: usize, classes: usize) -> Self {
        let arch = match family {
            Family::LstmAttn => FamilyConfig::LstmAttn(LstmAttnConfig {
                hidden: 16,
                layers: 1,
                bidirectional: true,
                attn_width: 16,
            }),
            Family::Transformer => FamilyConfig::Transformer(TransformerConfig {
                width: 32,
                layers: 1,
                heads: 2,
                ff_width: 64,
                stride: 4,
                max_positions: 4096,
            }),
            Family::PerceiverIo => FamilyConfig::PerceiverIo(PerceiverConfig {
                latents: 8,
                width: 32,
                cross_heads: 1,
                self_heads: 2,
                blocks: 1,
                ff_width: 64,
            }),
        };
        ModelConfig {
            arch,
            input_width,
            classes,
            vocab_size: None,
        }
    }

    /// Tiny config for a feature type (token inputs get an 8000-piece vocabulary).
    pub fn tiny_for(family: Family, feature: FeatureType, classes: usize) -> Self {
        let mut cfg = Self::tiny(family, model_input_width(feature), classes);
        if feature == FeatureType::Tokens {
            cfg.vocab_size = Some(DEFAULT_VOCAB_SIZE);
        }
        cfg
    }

    /// Full-size config per family and feature type, sized for cost tables.
    pub fn base(family: Family, feature: FeatureType, classes: usize) -> Self {
        let arch = match family {
            Family::LstmAttn => FamilyConfig::LstmAttn(LstmAttnConfig {
                hidden: 512,
                layers: 2,
                bidirectional: true,
                attn_width: 256,
            }),
            Family::Transformer => FamilyConfig::Transformer(TransformerConfig {
                width: 256,
                layers: 6,
                heads: 8,
                ff_width: 1024,
                stride: 4,
                max_positions: 4096,
            }),
            Family::PerceiverIo => FamilyConfig::PerceiverIo(PerceiverConfig {
                latents: 256,
                width: 256,
                cross_heads: 1,
                self_heads: 8,
                blocks: 1,
                ff_width: 256,
            }),
        };
        ModelConfig {
            arch,
            input_width: model_input_width(feature),
            classes,
            vocab_size: (feature == FeatureType::Tokens).then_some(DEFAULT_VOCAB_SIZE),
        }
    }
}

/// Default subword vocabulary size for token inputs.
pub const DEFAULT_VOCAB_SIZE: usize = 8000;

/// Sequence width the encoder sees for a feature type.
pub fn model_input_width(feature: FeatureType) -> usize {
    match feature {
        FeatureType::Tokens => TEXT_EMBED_WIDTH,
        other => other.width(),
    }
}
