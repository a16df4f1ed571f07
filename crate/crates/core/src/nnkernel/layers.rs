//! Composite layers built from tape kernels, plus the parameter declarations
//! they expect. Parameter names are `<prefix>.<part>`.

use super::params::{Init, ParamSpec};
use super::tape::{Tape, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub fn linear_specs(prefix: &str, d_in: usize, d_out: usize) -> Vec<ParamSpec> {
    vec![
        ParamSpec::new(format!("{prefix}.w"), d_in, d_out, Init::FanIn),
        ParamSpec::new(format!("{prefix}.b"), 1, d_out, Init::Zeros),
    ]
}

pub fn layer_norm_specs(prefix: &str, d: usize) -> Vec<ParamSpec> {
    vec![
        ParamSpec::new(format!("{prefix}.gain"), 1, d, Init::Ones),
        ParamSpec::new(format!("{prefix}.bias"), 1, d, Init::Zeros),
    ]
}

/// Query, key, value and output projections, each `d x d`. The key
/// projection has no bias: it would shift every score of a query equally
/// and cancel in the softmax.
pub fn attention_specs(prefix: &str, d: usize) -> Vec<ParamSpec> {
    let mut specs = linear_specs(&format!("{prefix}.q"), d, d);
    specs.push(ParamSpec::new(format!("{prefix}.k.w"), d, d, Init::FanIn));
    specs.extend(linear_specs(&format!("{prefix}.v"), d, d));
    specs.extend(linear_specs(&format!("{prefix}.o"), d, d));
    specs
}

/// `w_ih` (`d_in x 4h`), `w_hh` (`h x 4h`) and a single bias `b` (`1 x 4h`).
pub fn lstm_specs(prefix: &str, d_in: usize, hidden: usize) -> Vec<ParamSpec> {
    vec![
        ParamSpec::new(format!("{prefix}.w_ih"), d_in, 4 * hidden, Init::FanIn),
        ParamSpec::new(format!("{prefix}.w_hh"), hidden, 4 * hidden, Init::FanIn),
        ParamSpec::new(format!("{prefix}.b"), 1, 4 * hidden, Init::Zeros),
    ]
}

/// Two-layer ReLU feed-forward block `d -> ff -> d`.
pub fn feed_forward_specs(prefix: &str, d: usize, ff: usize) -> Vec<ParamSpec> {
    let mut specs = linear_specs(&format!("{prefix}.fc1"), d, ff);
    specs.extend(linear_specs(&format!("{prefix}.fc2"), ff, d));
    specs
}

pub fn linear<S: Scalar>(tape: &mut Tape<'_, S>, x: Var, prefix: &str) -> Result<Var> {
    let w = tape.param(&format!("{prefix}.w"))?;
    let b = tape.param(&format!("{prefix}.b"))?;
    tape.linear(x, w, Some(b))
}

pub fn layer_norm<S: Scalar>(tape: &mut Tape<'_, S>, x: Var, prefix: &str) -> Result<Var> {
    let g = tape.param(&format!("{prefix}.gain"))?;
    let b = tape.param(&format!("{prefix}.bias"))?;
    tape.layer_norm(x, g, b)
}

pub fn feed_forward<S: Scalar>(tape: &mut Tape<'_, S>, x: Var, prefix: &str) -> Result<Var> {
    let h = linear(tape, x, &format!("{prefix}.fc1"))?;
    let h = tape.relu(h);
    linear(tape, h, &format!("{prefix}.fc2"))
}

/// Multi-head attention of `x_q` over `x_kv`. `key_mask[j] == false` hides
/// key row `j` from every query.
pub fn multi_head_attention<S: Scalar>(
    tape: &mut Tape<'_, S>,
    x_q: Var,
    x_kv: Var,
    heads: usize,
    prefix: &str,
    key_mask: Option<&[bool]>,
) -> Result<Var> {
    let (n_q, d) = tape.shape(x_q);
    let (n_k, d_kv) = tape.shape(x_kv);
    if heads == 0 || d % heads != 0 {
        return Err(Error::Config(format!("width {d} is not divisible by {heads} heads")));
    }
    if d_kv != d {
        return Err(Error::shape(
            "multi_head_attention",
            format!("query width {d}, key width {d_kv}"),
        ));
    }
    let q = linear(tape, x_q, &format!("{prefix}.q"))?;
    let wk = tape.param(&format!("{prefix}.k.w"))?;
    let k = tape.linear(x_kv, wk, None)?;
    let v = linear(tape, x_kv, &format!("{prefix}.v"))?;
    let mask: Option<Vec<bool>> = match key_mask {
        Some(m) if m.len() != n_k => {
            return Err(Error::shape(
                "multi_head_attention",
                "key mask length differs from keys",
            ))
        }
        Some(m) => Some((0..n_q).flat_map(|_| m.iter().copied()).collect()),
        None => None,
    };
    let dh = d / heads;
    let mut outs = Vec::with_capacity(heads);
    for h in 0..heads {
        let (qh, kh, vh) = if heads == 1 {
            (q, k, v)
        } else {
            (
                tape.slice_cols(q, h * dh, dh)?,
                tape.slice_cols(k, h * dh, dh)?,
                tape.slice_cols(v, h * dh, dh)?,
            )
        };
        outs.push(tape.attention(qh, kh, vh, mask.as_deref())?);
    }
    let joined = if heads == 1 { outs[0] } else { tape.concat_cols(&outs)? };
    linear(tape, joined, &format!("{prefix}.o"))
}

/// One LSTM step on a `1 x d_in` input; returns `(h_t, c_t)`.
pub fn lstm_cell<S: Scalar>(tape: &mut Tape<'_, S>, x: Var, h: Var, c: Var, prefix: &str) -> Result<(Var, Var)> {
    let hidden = tape.shape(h).1;
    let state = tape.concat_cols(&[h, c])?;
    let w_ih = tape.param(&format!("{prefix}.w_ih"))?;
    let b = tape.param(&format!("{prefix}.b"))?;
    let w_hh = tape.param(&format!("{prefix}.w_hh"))?;
    let gates = tape.linear(x, w_ih, Some(b))?;
    let next = tape.lstm_cell(gates, state, w_hh)?;
    Ok((
        tape.slice_cols(next, 0, hidden)?,
        tape.slice_cols(next, hidden, hidden)?,
    ))
}

/// Stable softmax of a plain vector.
pub fn softmax<S: Scalar>(x: &[S]) -> Vec<S> {
    let max = x.iter().copied().fold(S::neg_infinity(), S::max);
    let e: Vec<S> = x.iter().map(|&v| (v - max).exp()).collect();
    let total = e.iter().copied().sum::<S>();
    e.into_iter().map(|v| v / total).collect()
}
