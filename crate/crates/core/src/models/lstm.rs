//! Stacked (bi)directional LSTM with additive attention pooling:
//! `e_t = v^T tanh(W h_t + b)`, `alpha = softmax(e)`, `context = sum alpha_t h_t`.

use super::LstmAttnConfig;
use crate::error::Result;
use crate::nnkernel::{linear, linear_specs, lstm_specs, Init, ParamSpec, Tape, Var};
use crate::scalar::Scalar;
use crate::tensorio::Matrix;

fn directions(cfg: &LstmAttnConfig) -> &'static [&'static str] {
    if cfg.bidirectional {
        &["fwd", "bwd"]
    } else {
        &["fwd"]
    }
}

/// Width of the per-step hidden state after concatenating directions.
pub(super) fn output_width(cfg: &LstmAttnConfig) -> usize {
    cfg.hidden * directions(cfg).len()
}

pub(super) fn specs(cfg: &LstmAttnConfig, input_width: usize, specs: &mut Vec<ParamSpec>) -> usize {
    let out = output_width(cfg);
    for layer in 0..cfg.layers {
        let d_in = if layer == 0 { input_width } else { out };
        for dir in directions(cfg) {
            specs.extend(lstm_specs(&format!("lstm.{layer}.{dir}"), d_in, cfg.hidden));
        }
    }
    specs.extend(linear_specs("attn", out, cfg.attn_width));
    specs.push(ParamSpec::new("attn.v", cfg.attn_width, 1, Init::FanIn));
    out
}

/// Returns the pooled `1 x out` context and the `1 x T` pooling weights.
pub(super) fn encode<S: Scalar>(
    tape: &mut Tape<'_, S>,
    cfg: &LstmAttnConfig,
    x: Var,
    mask: Option<&[bool]>,
) -> Result<(Var, Var)> {
    let t = tape.shape(x).0;
    let valid = |step: usize| mask.is_none_or(|m| m[step]);
    let mut seq = x;
    for layer in 0..cfg.layers {
        let mut outputs = Vec::new();
        for (d, dir) in directions(cfg).iter().enumerate() {
            let prefix = format!("lstm.{layer}.{dir}");
            let w_ih = tape.param(&format!("{prefix}.w_ih"))?;
            let b = tape.param(&format!("{prefix}.b"))?;
            let w_hh = tape.param(&format!("{prefix}.w_hh"))?;
            let gates = tape.linear(seq, w_ih, Some(b))?;
            let mut state = tape.constant(Matrix::zeros(1, 2 * cfg.hidden));
            let mut h_rows = vec![None; t];
            let order: Vec<usize> = if d == 0 {
                (0..t).collect()
            } else {
                (0..t).rev().collect()
            };
            for step in order {
                // Padding steps carry the state through untouched.
                if valid(step) {
                    let g = tape.slice_rows(gates, step, 1)?;
                    state = tape.lstm_cell(g, state, w_hh)?;
                }
                h_rows[step] = Some(tape.slice_cols(state, 0, cfg.hidden)?);
            }
            let rows: Vec<Var> = h_rows.into_iter().map(|h| h.expect("every step visited")).collect();
            outputs.push(tape.concat_rows(&rows)?);
        }
        seq = if outputs.len() == 1 {
            outputs[0]
        } else {
            tape.concat_cols(&outputs)?
        };
    }
    let e = linear(tape, seq, "attn")?;
    let e = tape.tanh(e);
    let v = tape.param("attn.v")?;
    let scores = tape.matmul(e, v)?;
    let scores = tape.transpose(scores);
    let alpha = tape.softmax(scores, mask)?;
    let context = tape.matmul(alpha, seq)?;
    Ok((context, alpha))
}
