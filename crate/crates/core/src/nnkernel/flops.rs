//! FLOP convention shared by the kernel tally and the analytic cost model.
//!
//! | operation                         | FLOPs                        |
//! |-----------------------------------|------------------------------|
//! | multiply-accumulate               | 2                            |
//! | add, subtract, multiply, divide   | 1 per element                |
//! | exp, tanh, sigmoid                | 1 per element                |
//! | compare, max, select, ReLU        | 0                            |
//! | softmax                           | 4 per element (sub, exp, sum, div) |
//! | layer norm                        | 7 per element + 5 per row    |
//! | mean over `w` rows                | `w` per output element       |
//! | gather, slice, concat, transpose  | 0                            |
//!
//! Forward pass only.

pub const MAC: u64 = 2;
pub const SOFTMAX_PER_ELEMENT: u64 = 4;
pub const LAYER_NORM_PER_ELEMENT: u64 = 7;
pub const LAYER_NORM_PER_ROW: u64 = 5;

/// `(n x k) * (k x m)`.
pub const fn matmul(n: u64, k: u64, m: u64) -> u64 {
    MAC * n * k * m
}

/// `x W + b` over `n` rows.
pub const fn linear(n: u64, d_in: u64, d_out: u64, bias: bool) -> u64 {
    matmul(n, d_in, d_out) + if bias { n * d_out } else { 0 }
}

pub const fn softmax(elements: u64) -> u64 {
    SOFTMAX_PER_ELEMENT * elements
}

pub const fn layer_norm(rows: u64, width: u64) -> u64 {
    LAYER_NORM_PER_ELEMENT * rows * width + LAYER_NORM_PER_ROW * rows
}

/// Scores, scaling, softmax and value mixing for one head.
pub const fn attention(n_q: u64, n_k: u64, d_k: u64, d_v: u64) -> u64 {
    matmul(n_q, d_k, n_k) + n_q * n_k + softmax(n_q * n_k) + matmul(n_q, n_k, d_v)
}

/// One recurrent step given precomputed input gates: recurrent product,
/// gate sum, four activations, cell update, output.
pub const fn lstm_step(hidden: u64) -> u64 {
    let h = hidden;
    matmul(1, h, 4 * h) + 4 * h + 4 * h + 3 * h + h + h
}
