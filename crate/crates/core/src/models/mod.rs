//! The three sequence classifiers: LSTM with attention pooling, Transformer
//! encoder and PerceiverIO.

mod config;
mod lstm;
mod perceiver;
pub mod transformer;


use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use config::{
    model_input_width, Family, FamilyConfig, LstmAttnConfig, ModelConfig, PerceiverConfig, TransformerConfig,
    DEFAULT_VOCAB_SIZE, TEXT_EMBED_WIDTH,
};

use crate::error::{Error, Result};
use crate::nnkernel::{build_store, linear_specs, Init, ParamSpec, ParamStore, Tape, Var};
use crate::scalar::Scalar;
use crate::tensorio::Matrix;

pub const EMBEDDING_PARAM: &str = "embed.table";

/// One sequence: a `T x D` feature matrix or `T` token ids.
#[derive(Clone, Copy, Debug)]
pub enum Input<'a, S> {
    Features(&'a Matrix<S>),
    Tokens(&'a [usize]),
}

impl<S: Scalar> Input<'_, S> {
    pub fn len(&self) -> usize {
        match self {
            Input::Features(m) => m.rows(),
            Input::Tokens(ids) => ids.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Outputs of one forward pass.
#[derive(Clone, Copy, Debug)]
pub struct Forward {
    /// `1 x C`.
    pub logits: Var,
    /// LSTM attention-pooling weights, `1 x T`.
    pub pooling: Option<Var>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Model {
    config: ModelConfig,
}

impl Model {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { config })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// Every trainable tensor, in initialization order.
    pub fn param_specs(&self) -> Vec<ParamSpec> {
        let c = &self.config;
        let mut specs = Vec::new();
        if let Some(v) = c.vocab_size {
            specs.push(ParamSpec::new(EMBEDDING_PARAM, v, TEXT_EMBED_WIDTH, Init::SmallNormal));
        }
        let pooled = match &c.arch {
            FamilyConfig::LstmAttn(l) => lstm::specs(l, c.input_width, &mut specs),
            FamilyConfig::Transformer(t) => transformer::specs(t, c.input_width, &mut specs),
            FamilyConfig::PerceiverIo(p) => perceiver::specs(p, c.input_width, &mut specs),
        };
        specs.extend(linear_specs("head", pooled, c.classes));
        specs
    }

    pub fn init<S: Scalar>(&self, seed: u64) -> Result<ParamStore<S>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        build_store(&self.param_specs(), &mut rng)
    }

    /// Records the forward pass on `tape`. `mask[t] == false` marks padding.
    pub fn forward<S: Scalar>(
        &self,
        tape: &mut Tape<'_, S>,
        input: Input<'_, S>,
        mask: Option<&[bool]>,
    ) -> Result<Forward> {
        let t = input.len();
        if t == 0 {
            return Err(Error::shape("forward", "empty sequence"));
        }
        if mask.is_some_and(|m| m.len() != t) {
            return Err(Error::shape("forward", "mask length differs from sequence length"));
        }
        if mask.is_some_and(|m| !m.iter().any(|&v| v)) {
            return Err(Error::AllMasked { row: 0 });
        }
        let x = match (input, self.config.vocab_size) {
            (Input::Tokens(ids), Some(_)) => {
                let table = tape.param(EMBEDDING_PARAM)?;
                tape.embedding(table, ids)?
            }
            (Input::Features(m), None) => {
                if m.cols() != self.config.input_width {
                    return Err(Error::shape(
                        "forward",
                        format!(
                            "input has {} columns, model expects {}",
                            m.cols(),
                            self.config.input_width
                        ),
                    ));
                }
                tape.constant(m.clone())
            }
            (Input::Tokens(_), None) => return Err(Error::Config("model takes features, got tokens".into())),
            (Input::Features(_), Some(_)) => return Err(Error::Config("model takes tokens, got features".into())),
        };
        let (pooled, pooling) = match &self.config.arch {
            FamilyConfig::LstmAttn(l) => {
                let (p, a) = lstm::encode(tape, l, x, mask)?;
                (p, Some(a))
            }
            FamilyConfig::Transformer(c) => (transformer::encode(tape, c, x, mask)?, None),
            FamilyConfig::PerceiverIo(c) => (perceiver::encode(tape, c, x, mask)?, None),
        };
        let logits = crate::nnkernel::linear(tape, pooled, "head")?;
        Ok(Forward { logits, pooling })
    }

    /// Logits for one sequence.
    pub fn logits<S: Scalar>(
        &self,
        params: &ParamStore<S>,
        input: Input<'_, S>,
        mask: Option<&[bool]>,
    ) -> Result<Vec<S>> {
        let mut tape = Tape::new(params);
        let out = self.forward(&mut tape, input, mask)?;
        Ok(tape.value(out.logits).as_slice().to_vec())
    }

    /// Forward FLOPs recorded by the kernels for one sequence.
    pub fn measured_flops<S: Scalar>(&self, params: &ParamStore<S>, input: Input<'_, S>) -> Result<u64> {
        let mut tape = Tape::new(params);
        self.forward(&mut tape, input, None)?;
        Ok(tape.flops())
    }
}

/// Index of the largest logit; the lowest index wins ties.
pub fn predict<S: Scalar>(logits: &[S]) -> usize {
    let mut best = 0;
    for (i, &v) in logits.iter().enumerate() {
        if v > logits[best] {
            best = i;
        }
    }
    best
}

/// Fixed sinusoidal encoding: `sin(p / 10000^(2i/d))` on even columns and
/// the matching cosine on odd columns.
pub fn sinusoidal_positions<S: Scalar>(len: usize, width: usize) -> Matrix<S> {
    Matrix::from_fn(len, width, |p, j| {
        let i = (j / 2) as f64;
        let angle = p as f64 / 10000f64.powf(2.0 * i / width as f64);
        S::of(if j % 2 == 0 { angle.sin() } else { angle.cos() })
    })
}

/// Adds positional encodings for the first `rows` positions.
fn add_positions<S: Scalar>(tape: &mut Tape<'_, S>, x: Var) -> Result<Var> {
    let (rows, width) = tape.shape(x);
    let pe = tape.constant(sinusoidal_positions(rows, width));
    tape.add(x, pe)
}

/// Pre-norm encoder block: `x + MHA(LN(x))`, then `x + FFN(LN(x))`.
fn encoder_block<S: Scalar>(
    tape: &mut Tape<'_, S>,
    x: Var,
    heads: usize,
    prefix: &str,
    key_mask: Option<&[bool]>,
) -> Result<Var> {
    use crate::nnkernel::{feed_forward, layer_norm, multi_head_attention};
    let h = layer_norm(tape, x, &format!("{prefix}.ln1"))?;
    let a = multi_head_attention(tape, h, h, heads, &format!("{prefix}.attn"), key_mask)?;
    let x = tape.add(x, a)?;
    let h = layer_norm(tape, x, &format!("{prefix}.ln2"))?;
    let f = feed_forward(tape, h, &format!("{prefix}.ffn"))?;
    tape.add(x, f)
}

fn encoder_block_specs(prefix: &str, width: usize, ff: usize, specs: &mut Vec<ParamSpec>) {
    use crate::nnkernel::{attention_specs, feed_forward_specs, layer_norm_specs};
    specs.extend(layer_norm_specs(&format!("{prefix}.ln1"), width));
    specs.extend(attention_specs(&format!("{prefix}.attn"), width));
    specs.extend(layer_norm_specs(&format!("{prefix}.ln2"), width));
    specs.extend(feed_forward_specs(&format!("{prefix}.ffn"), width, ff));
}
