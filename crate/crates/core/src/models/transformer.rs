//! Downsample, project, add positions, pre-norm encoder blocks, mean pool.

use super::{add_positions, encoder_block, encoder_block_specs, TransformerConfig};
use crate::error::{Error, Result};
use crate::nnkernel::{linear, linear_specs, ParamSpec, Tape, Var};
use crate::scalar::Scalar;

pub(super) fn specs(cfg: &TransformerConfig, input_width: usize, specs: &mut Vec<ParamSpec>) -> usize {
    specs.extend(linear_specs("input", input_width, cfg.width));
    for layer in 0..cfg.layers {
        encoder_block_specs(&format!("enc.{layer}"), cfg.width, cfg.ff_width, specs);
    }
    cfg.width
}

/// Encoder length for `t` input frames.
pub fn downsampled_len(t: usize, stride: usize) -> usize {
    t.div_ceil(stride)
}

pub(super) fn encode<S: Scalar>(
    tape: &mut Tape<'_, S>,
    cfg: &TransformerConfig,
    x: Var,
    mask: Option<&[bool]>,
) -> Result<Var> {
    let (x, mask) = if cfg.stride > 1 {
        let (pooled, valid) = tape.window_mean(x, cfg.stride, mask)?;
        (pooled, mask.map(|_| valid))
    } else {
        (x, mask.map(<[bool]>::to_vec))
    };
    let len = tape.shape(x).0;
    if len > cfg.max_positions {
        return Err(Error::Config(format!(
            "downsampled length {len} exceeds max_positions {}",
            cfg.max_positions
        )));
    }
    let h = linear(tape, x, "input")?;
    let mut h = add_positions(tape, h)?;
    for layer in 0..cfg.layers {
        h = encoder_block(tape, h, cfg.heads, &format!("enc.{layer}"), mask.as_deref())?;
    }
    tape.mean_rows(h, mask.as_deref())
}
