//! Closed-form parameter and forward-FLOP counts per model config.
//!
//! The formulas follow the convention table in [`crate::nnkernel::flops`] and
//! are written out independently of the kernels, so the kernel tally can
//! serve as a cross-check.

use std::fmt::Write as _;

use crate::models::{
    transformer::downsampled_len, FamilyConfig, LstmAttnConfig, ModelConfig, PerceiverConfig, TransformerConfig,
    TEXT_EMBED_WIDTH,
};

/// Default input length for cost tables: a video-scale sequence of frames.
pub const DEFAULT_COST_LENGTH: usize = 2000;

/// One named slice of a model's cost.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Component {
    pub name: String,
    pub params: u64,
    pub flops: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CostReport {
    pub params: u64,
    pub flops: u64,
    /// `params / flops * 1e4`.
    pub ratio: f64,
    pub components: Vec<Component>,
}

struct Acc {
    components: Vec<Component>,
}

impl Acc {
    fn add(&mut self, name: &str, params: u64, flops: u64) {
        match self.components.iter_mut().find(|c| c.name == name) {
            Some(c) => {
                c.params += params;
                c.flops += flops;
            }
            None => self.components.push(Component {
                name: name.to_owned(),
                params,
                flops,
            }),
        }
    }
}

fn linear_params(d_in: u64, d_out: u64) -> u64 {
    d_in * d_out + d_out
}

/// `n` rows through a biased linear layer.
fn linear_flops(n: u64, d_in: u64, d_out: u64) -> u64 {
    2 * n * d_in * d_out + n * d_out
}

fn layer_norm_flops(n: u64, d: u64) -> u64 {
    7 * n * d + 5 * n
}

/// Query, key (no bias), value and output projections.
fn attention_params(d: u64) -> u64 {
    4 * d * d + 3 * d
}

/// Projections for `n_q` queries over `n_k` keys.
fn attention_projection_flops(n_q: u64, n_k: u64, d: u64) -> u64 {
    linear_flops(n_q, d, d) + 2 * n_k * d * d + linear_flops(n_k, d, d) + linear_flops(n_q, d, d)
}

/// Scores, scaling, softmax and value mixing summed over `heads`.
fn attention_core_flops(n_q: u64, n_k: u64, d: u64, heads: u64) -> u64 {
    4 * n_q * n_k * d + 5 * heads * n_q * n_k
}

fn feed_forward_params(d: u64, ff: u64) -> u64 {
    linear_params(d, ff) + linear_params(ff, d)
}

fn feed_forward_flops(n: u64, d: u64, ff: u64) -> u64 {
    linear_flops(n, d, ff) + linear_flops(n, ff, d)
}

/// Pre-norm self-attention block over `n` rows, split into components.
fn encoder_block(acc: &mut Acc, n: u64, d: u64, ff: u64, heads: u64, tag: &str) {
    acc.add(&format!("{tag}_norms"), 4 * d, 2 * layer_norm_flops(n, d));
    acc.add(
        &format!("{tag}_projections"),
        attention_params(d),
        attention_projection_flops(n, n, d),
    );
    acc.add(&format!("{tag}_scores"), 0, attention_core_flops(n, n, d, heads));
    acc.add(&format!("{tag}_residuals"), 0, 2 * n * d);
    acc.add(
        &format!("{tag}_feed_forward"),
        feed_forward_params(d, ff),
        feed_forward_flops(n, d, ff),
    );
}

fn lstm(acc: &mut Acc, c: &LstmAttnConfig, t: u64, d_in: u64) -> u64 {
    let h = c.hidden as u64;
    let dirs = if c.bidirectional { 2 } else { 1 };
    let out = dirs * h;
    for layer in 0..c.layers {
        let din = if layer == 0 { d_in } else { out };
        let params = din * 4 * h + h * 4 * h + 4 * h;
        let input_gates = linear_flops(t, din, 4 * h);
        let recurrence = t * (2 * h * 4 * h + 13 * h);
        acc.add("recurrent_layers", dirs * params, dirs * (input_gates + recurrence));
    }
    let a = c.attn_width as u64;
    let pool_flops = linear_flops(t, out, a) + t * a + 2 * t * a + 4 * t + 2 * t * out;
    acc.add("attention_pooling", linear_params(out, a) + a, pool_flops);
    out
}

fn transformer(acc: &mut Acc, c: &TransformerConfig, t: u64, d_in: u64) -> u64 {
    let d = c.width as u64;
    let l = downsampled_len(t as usize, c.stride) as u64;
    if c.stride > 1 {
        acc.add("downsample", 0, t * d_in);
    }
    acc.add(
        "input_projection",
        linear_params(d_in, d),
        linear_flops(l, d_in, d) + l * d,
    );
    for _ in 0..c.layers {
        encoder_block(acc, l, d, c.ff_width as u64, c.heads as u64, "encoder");
    }
    acc.add("pooling", 0, l * d);
    d
}

fn perceiver(acc: &mut Acc, c: &PerceiverConfig, t: u64, d_in: u64) -> u64 {
    let w = c.width as u64;
    let n = c.latents as u64;
    let ff = c.ff_width as u64;
    let hc = c.cross_heads as u64;
    acc.add(
        "input_projection",
        linear_params(d_in, w),
        linear_flops(t, d_in, w) + t * w,
    );
    // Terms that grow with the input length.
    let kv_flops = layer_norm_flops(t, w) + 2 * t * w * w + linear_flops(t, w, w) + attention_core_flops(n, t, w, hc);
    acc.add("cross_attention_inputs", 2 * w, kv_flops);
    // Terms that depend only on the latent array.
    let latent_params = n * w + 4 * w + attention_params(w) + feed_forward_params(w, ff);
    let latent_flops = layer_norm_flops(n, w)
        + 2 * linear_flops(n, w, w)
        + n * w
        + layer_norm_flops(n, w)
        + feed_forward_flops(n, w, ff)
        + n * w;
    acc.add("cross_attention_latents", latent_params, latent_flops);
    for _ in 0..c.blocks {
        encoder_block(acc, n, w, ff, c.self_heads as u64, "latent_self");
    }
    let decoder_params = w + 2 * w + attention_params(w);
    let decoder_flops =
        layer_norm_flops(n, w) + attention_projection_flops(1, n, w) + attention_core_flops(1, n, w, hc);
    acc.add("decoder", decoder_params, decoder_flops);
    w
}

/// Full cost breakdown for a `t`-frame (or `t`-token) input.
pub fn cost(cfg: &ModelConfig, t: usize) -> CostReport {
    let mut acc = Acc { components: Vec::new() };
    let t = t as u64;
    let d_in = cfg.input_width as u64;
    if let Some(v) = cfg.vocab_size {
        acc.add("embedding", v as u64 * TEXT_EMBED_WIDTH as u64, 0);
    }
    let pooled = match &cfg.arch {
        FamilyConfig::LstmAttn(c) => lstm(&mut acc, c, t, d_in),
        FamilyConfig::Transformer(c) => transformer(&mut acc, c, t, d_in),
        FamilyConfig::PerceiverIo(c) => perceiver(&mut acc, c, t, d_in),
    };
    let classes = cfg.classes as u64;
    acc.add("head", linear_params(pooled, classes), linear_flops(1, pooled, classes));
    let params = acc.components.iter().map(|c| c.params).sum();
    let flops = acc.components.iter().map(|c| c.flops).sum();
    CostReport {
        params,
        flops,
        ratio: ratio(params, flops),
        components: acc.components,
    }
}

pub fn count_params(cfg: &ModelConfig) -> u64 {
    cost(cfg, 1).params
}

pub fn count_flops(cfg: &ModelConfig, t: usize) -> u64 {
    cost(cfg, t).flops
}

/// Parameters per FLOP, scaled by `1e4`.
pub fn ratio(params: u64, flops: u64) -> f64 {
    if flops == 0 {
        return f64::INFINITY;
    }
    params as f64 / flops as f64 * 1e4
}

impl CostReport {
    pub fn component(&self, name: &str) -> Option<&Component> {
        self.components.iter().find(|c| c.name == name)
    }

    /// Sum of the components whose name starts with `prefix`.
    pub fn flops_with_prefix(&self, prefix: &str) -> u64 {
        self.components
            .iter()
            .filter(|c| c.name.starts_with(prefix))
            .map(|c| c.flops)
            .sum()
    }
}

/// `9.6M`, `16.25B` style rendering.
pub fn human(n: u64) -> String {
    let v = n as f64;
    if v >= 1e9 {
        format!("{:.2}B", v / 1e9)
    } else if v >= 1e6 {
        format!("{:.1}M", v / 1e6)
    } else if v >= 1e3 {
        format!("{:.1}K", v / 1e3)
    } else {
        n.to_string()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TableFormat {
    Text,
    Tsv,
}

/// One row of a cost table: a label and one config per column group.
#[derive(Clone, Debug)]
pub struct CostRow {
    pub label: String,
    pub configs: Vec<ModelConfig>,
}

/// Params / FLOPs / Ratio(1e-4) per column group, one row per label.
pub fn cost_table(groups: &[&str], rows: &[CostRow], t_ref: usize, format: TableFormat) -> String {
    let mut cells: Vec<Vec<String>> = Vec::new();
    let mut header = vec![String::new()];
    for g in groups {
        header.push(format!("{g} Params"));
        header.push(format!("{g} FLOPs"));
        header.push(format!("{g} Ratio(1e-4)"));
    }
    for row in rows {
        let mut line = vec![row.label.clone()];
        for cfg in &row.configs {
            let r = cost(cfg, t_ref);
            match format {
                TableFormat::Text => {
                    line.push(human(r.params));
                    line.push(human(r.flops));
                }
                TableFormat::Tsv => {
                    line.push(r.params.to_string());
                    line.push(r.flops.to_string());
                }
            }
            line.push(format!("{:.2}", r.ratio));
        }
        cells.push(line);
    }
    let mut out = String::new();
    match format {
        TableFormat::Tsv => {
            header[0] = "input".into();
            out.push_str(&header.join("\t"));
            out.push('\n');
            for line in &cells {
                out.push_str(&line.join("\t"));
                out.push('\n');
            }
        }
        TableFormat::Text => {
            let _ = writeln!(out, "T = {t_ref}");
            let all: Vec<&Vec<String>> = std::iter::once(&header).chain(cells.iter()).collect();
            let widths: Vec<usize> = (0..header.len())
                .map(|j| all.iter().map(|l| l.get(j).map_or(0, String::len)).max().unwrap_or(0))
                .collect();
            for line in all {
                let padded: Vec<String> = line
                    .iter()
                    .enumerate()
                    .map(|(j, c)| {
                        if j == 0 {
                            format!("{c:<w$}", w = widths[j])
                        } else {
                            format!("{c:>w$}", w = widths[j])
                        }
                    })
                    .collect();
                out.push_str(padded.join("  ").trim_end());
                out.push('\n');
            }
        }
    }
    out
}
