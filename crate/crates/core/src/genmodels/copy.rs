use candle_core::Tensor;

use crate::error::{Error, Result};
use crate::textprep::NOHS;

/// Spreads a distribution over the `|V| - 1` output tokens onto the full
/// extended space `|V| + extra`: `<nohs>` and the temporary slots get 0.
pub fn expand_output_distribution(p_out: &Tensor, extra: usize) -> Result<Tensor> {
    let (n, k) = p_out.dims2()?;
    let mut parts = vec![p_out.narrow(1, 0, NOHS)?];
    parts.push(Tensor::zeros((n, 1), p_out.dtype(), p_out.device())?);
    parts.push(p_out.narrow(1, NOHS, k - NOHS)?);
    if extra > 0 {
        parts.push(Tensor::zeros((n, extra), p_out.dtype(), p_out.device())?);
    }
    Ok(Tensor::cat(&parts, 1)?)
}

/// `P(w) = p_gen * P_vocab(w) + (1 - p_gen) * sum_{i: src_i = w} a_i`.
///
/// Shapes: `p_vocab (N, K)` over the extended space, `attn (N, S)`,
/// `source_ext (N, S)` u32 indices into `K`, `p_gen (N, 1)`.
pub fn mix_copy_distribution(
    p_vocab: &Tensor,
    attn: &Tensor,
    source_ext: &Tensor,
    p_gen: &Tensor,
) -> Result<Tensor> {
    let (n, k) = p_vocab.dims2()?;
    let (_, src_len) = attn.dims2()?;
    // the copy mass is routed through a constant one-hot matmul so that no
    // gradient has to flow through an index scatter
    let mut onehot = vec![0f32; n * src_len * k];
    for (row, idx) in source_ext.to_vec2::<u32>()?.iter().enumerate() {
        for (s, &w) in idx.iter().enumerate() {
            let w = w as usize;
            if w >= k {
                return Err(Error::Contract(format!("source index {w} outside extended space {k}")));
            }
            onehot[(row * src_len + s) * k + w] = 1.0;
        }
    }
    let onehot = Tensor::from_vec(onehot, (n, src_len, k), p_vocab.device())?.to_dtype(p_vocab.dtype())?;
    let copy = attn.unsqueeze(1)?.contiguous()?.matmul(&onehot)?.squeeze(1)?;
    let one_minus = p_gen.affine(-1.0, 1.0)?;
    Ok((p_vocab.broadcast_mul(p_gen)? + copy.broadcast_mul(&one_minus)?)?)
}
