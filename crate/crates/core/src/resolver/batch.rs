use candle_core::{Device, Tensor};

use crate::embed::EmbeddingProvider;
use crate::error::{Error, Result};
use crate::features::FeatureTable;
use crate::textprep::ResInstance;

/// Padded tensors for a group of resolution instances.
pub struct ResBatch {
    pub size: usize,
    /// `(B, T, token_dim)`.
    pub tokens: Tensor,
    /// `(B, T)` f32, 1 on real tokens.
    pub token_mask: Tensor,
    pub token_lengths: Vec<usize>,
    /// `(B, 6 * visual_dim)`.
    pub context: Tensor,
    /// `(B, 6, visual_dim)`.
    pub candidates: Tensor,
    /// `(B, 6, token_dim)` mean token embedding of each candidate's history.
    pub history: Tensor,
    /// `(B, 6, 1)` f32, 1 where a history exists.
    pub history_flag: Tensor,
    /// Context image ids, row by row.
    pub image_ids: Vec<Vec<String>>,
    pub targets: Vec<usize>,
}

impl ResBatch {
    /// An instance with no tokens is encoded as one zero vector.
    pub fn new(
        instances: &[&ResInstance],
        features: &FeatureTable,
        provider: &dyn EmbeddingProvider,
        context_size: usize,
    ) -> Result<Self> {
        if instances.is_empty() {
            return Err(Error::Contract("empty batch".into()));
        }
        let dev = Device::Cpu;
        let b = instances.len();
        let d = provider.dim();
        let vd = features.dim();
        let mut seqs = Vec::with_capacity(b);
        for inst in instances {
            if inst.context.len() != context_size || inst.histories.len() != context_size {
                return Err(Error::Input(format!(
                    "instance {} must have {context_size} candidates and histories",
                    inst.id
                )));
            }
            let mut v = provider.embed(Some(&inst.id), &inst.tokens)?;
            if v.is_empty() {
                v.push(vec![0.0; d]);
            }
            if v.iter().any(|x| x.len() != d) {
                return Err(Error::Input(format!("embedding provider returned vectors not of size {d}")));
            }
            seqs.push(v);
        }
        let token_lengths: Vec<usize> = seqs.iter().map(Vec::len).collect();
        let t_max = token_lengths.iter().copied().max().unwrap_or(1);
        let mut tok = Vec::with_capacity(b * t_max * d);
        for s in &seqs {
            for t in 0..t_max {
                match s.get(t) {
                    Some(v) => tok.extend_from_slice(v),
                    None => tok.extend(std::iter::repeat_n(0.0, d)),
                }
            }
        }
        let tokens = Tensor::from_vec(tok, (b, t_max, d), &dev)?;
        let token_mask = crate::nn::length_mask(&token_lengths, t_max, &dev)?;

        let mut ctx = Vec::with_capacity(b * context_size * vd);
        let mut hist = Vec::with_capacity(b * context_size * d);
        let mut flags = Vec::with_capacity(b * context_size);
        for inst in instances {
            for id in &inst.context {
                ctx.extend_from_slice(features.get(id)?);
            }
            for h in &inst.histories {
                match h {
                    Some(h) if !h.tokens.is_empty() => {
                        let vs = provider.embed(Some(&h.utterance_id), &h.tokens)?;
                        let mut mean = vec![0.0f32; d];
                        for v in &vs {
                            for (m, x) in mean.iter_mut().zip(v) {
                                *m += x;
                            }
                        }
                        mean.iter_mut().for_each(|m| *m /= vs.len() as f32);
                        hist.extend(mean);
                        flags.push(1.0f32);
                    }
                    _ => {
                        hist.extend(std::iter::repeat_n(0.0, d));
                        flags.push(0.0);
                    }
                }
            }
        }
        let context = Tensor::from_vec(ctx.clone(), (b, context_size * vd), &dev)?;
        let candidates = Tensor::from_vec(ctx, (b, context_size, vd), &dev)?;
        let history = Tensor::from_vec(hist, (b, context_size, d), &dev)?;
        let history_flag = Tensor::from_vec(flags, (b, context_size, 1), &dev)?;
        Ok(ResBatch {
            size: b,
            tokens,
            token_mask,
            token_lengths,
            context,
            candidates,
            history,
            history_flag,
            image_ids: instances.iter().map(|i| i.context.clone()).collect(),
            targets: instances.iter().map(|i| i.target_pos).collect(),
        })
    }
}
