use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensorio::Matrix;

/// Sequences zero-padded to the longest one, with `true` marking real frames.
#[derive(Clone, Debug, PartialEq)]
pub struct PaddedBatch<S> {
    pub inputs: Vec<Matrix<S>>,
    pub masks: Vec<Vec<bool>>,
    pub max_len: usize,
}

pub fn batch_pad<S: Scalar>(samples: &[&Matrix<S>]) -> Result<PaddedBatch<S>> {
    let first = samples
        .first()
        .ok_or_else(|| Error::shape("batch_pad", "empty batch"))?;
    let width = first.cols();
    if let Some(m) = samples.iter().find(|m| m.cols() != width) {
        return Err(Error::shape(
            "batch_pad",
            format!("mixed widths {width} and {}", m.cols()),
        ));
    }
    let max_len = samples.iter().map(|m| m.rows()).max().unwrap_or(0);
    let mut inputs = Vec::with_capacity(samples.len());
    let mut masks = Vec::with_capacity(samples.len());
    for m in samples {
        let mut data = m.as_slice().to_vec();
        data.resize(max_len * width, S::zero());
        inputs.push(Matrix::new(max_len, width, data)?);
        masks.push((0..max_len).map(|t| t < m.rows()).collect());
    }
    Ok(PaddedBatch { inputs, masks, max_len })
}

/// Padded id rows and their masks.
pub type PaddedTokens = (Vec<Vec<usize>>, Vec<Vec<bool>>);

/// Token variant: pads with id 0.
pub fn batch_pad_tokens(samples: &[&[usize]]) -> Result<PaddedTokens> {
    if samples.is_empty() {
        return Err(Error::shape("batch_pad", "empty batch"));
    }
    let max_len = samples.iter().map(|s| s.len()).max().unwrap_or(0);
    let ids = samples
        .iter()
        .map(|s| {
            let mut v = s.to_vec();
            v.resize(max_len, 0);
            v
        })
        .collect();
    let masks = samples
        .iter()
        .map(|s| (0..max_len).map(|t| t < s.len()).collect())
        .collect();
    Ok((ids, masks))
}
