//! Learned latents cross-attend the projected inputs, self-attention blocks
//! refine them, and one learned query reads out the class summary.

use super::{add_positions, encoder_block, encoder_block_specs, PerceiverConfig};
use crate::error::Result;
use crate::nnkernel::{
    attention_specs, feed_forward, feed_forward_specs, layer_norm, layer_norm_specs, linear, linear_specs,
    multi_head_attention, Init, ParamSpec, Tape, Var,
};
use crate::scalar::Scalar;

pub(super) fn specs(cfg: &PerceiverConfig, input_width: usize, specs: &mut Vec<ParamSpec>) -> usize {
    let w = cfg.width;
    specs.extend(linear_specs("input", input_width, w));
    specs.push(ParamSpec::new("latents", cfg.latents, w, Init::SmallNormal));
    specs.extend(layer_norm_specs("cross.ln_q", w));
    specs.extend(layer_norm_specs("cross.ln_kv", w));
    specs.extend(attention_specs("cross.attn", w));
    specs.extend(layer_norm_specs("cross.ln_ff", w));
    specs.extend(feed_forward_specs("cross.ffn", w, cfg.ff_width));
    for block in 0..cfg.blocks {
        encoder_block_specs(&format!("self.{block}"), w, cfg.ff_width, specs);
    }
    specs.push(ParamSpec::new("decoder.query", 1, w, Init::SmallNormal));
    specs.extend(layer_norm_specs("decoder.ln", w));
    specs.extend(attention_specs("decoder.attn", w));
    w
}

pub(super) fn encode<S: Scalar>(
    tape: &mut Tape<'_, S>,
    cfg: &PerceiverConfig,
    x: Var,
    mask: Option<&[bool]>,
) -> Result<Var> {
    let h = linear(tape, x, "input")?;
    let inputs = add_positions(tape, h)?;
    let latents = tape.param("latents")?;

    let q = layer_norm(tape, latents, "cross.ln_q")?;
    let kv = layer_norm(tape, inputs, "cross.ln_kv")?;
    let a = multi_head_attention(tape, q, kv, cfg.cross_heads, "cross.attn", mask)?;
    let z = tape.add(latents, a)?;
    let f = layer_norm(tape, z, "cross.ln_ff")?;
    let f = feed_forward(tape, f, "cross.ffn")?;
    let mut z = tape.add(z, f)?;

    for block in 0..cfg.blocks {
        z = encoder_block(tape, z, cfg.self_heads, &format!("self.{block}"), None)?;
    }

    let query = tape.param("decoder.query")?;
    let kv = layer_norm(tape, z, "decoder.ln")?;
    multi_head_attention(tape, query, kv, cfg.cross_heads, "decoder.attn", None)
}
