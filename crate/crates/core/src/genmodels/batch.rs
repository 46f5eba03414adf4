use candle_core::{Device, Tensor};

use crate::error::{Error, Result};
use crate::features::FeatureTable;
use crate::nn::{length_mask, pad_indices};
use crate::textprep::{GenInstance, Vocabulary, PAD};

/// Padded tensors for a group of generation instances.
pub struct GenBatch {
    pub size: usize,
    /// `(B, 6 * visual_dim)`: candidate features in context order.
    pub context: Tensor,
    /// `(B, visual_dim)`.
    pub target_features: Tensor,
    /// `(B, S)` u32 base-vocabulary indices, `<unk>` for OOV tokens.
    pub source: Tensor,
    /// `(B, S)` u32 extended indices for copying.
    pub source_ext: Tensor,
    /// `(B, S)` f32, 1 on real tokens.
    pub source_mask: Tensor,
    pub source_lengths: Vec<usize>,
    /// `(B, 1)` f32, 0 when the source is `<nohs>`.
    pub has_history: Tensor,
    /// Largest extension among the instances.
    pub extra: usize,
    /// `(B, T)` u32 decoder inputs: `<sos> t1 .. tn`.
    pub input: Tensor,
    /// `(B, T)` u32 targets in the decoder output space (`<nohs>` removed).
    pub target_out: Tensor,
    /// `(B, T)` u32 targets in the full extended space.
    pub target_ext: Tensor,
    /// `(B, T)` f32, 1 on real target positions.
    pub target_mask: Tensor,
}

/// Concatenated context features and target features of one instance.
pub fn visual_inputs(
    context: &[String],
    target_pos: usize,
    features: &FeatureTable,
) -> Result<(Vec<f32>, Vec<f32>)> {
    let mut ctx = Vec::with_capacity(context.len() * features.dim());
    for id in context {
        ctx.extend_from_slice(features.get(id)?);
    }
    let id = context
        .get(target_pos)
        .ok_or_else(|| Error::Input(format!("target position {target_pos} outside context")))?;
    Ok((ctx, features.get(id)?.to_vec()))
}

impl GenBatch {
    pub fn new(
        instances: &[&GenInstance],
        features: &FeatureTable,
        vocab: &Vocabulary,
        context_size: usize,
    ) -> Result<Self> {
        if instances.is_empty() {
            return Err(Error::Contract("empty batch".into()));
        }
        let dev = Device::Cpu;
        let b = instances.len();
        let mut ctx = Vec::new();
        let mut tgt = Vec::new();
        for inst in instances {
            if inst.context.len() != context_size {
                return Err(Error::Input(format!(
                    "instance {} has {} candidates, expected {context_size}",
                    inst.id,
                    inst.context.len()
                )));
            }
            if inst.source.is_empty() {
                return Err(Error::Input(format!("instance {} has an empty source", inst.id)));
            }
            let (c, t) = visual_inputs(&inst.context, inst.target_pos, features)?;
            ctx.extend(c);
            tgt.extend(t);
        }
        let vd = features.dim();
        let context = Tensor::from_vec(ctx, (b, context_size * vd), &dev)?;
        let target_features = Tensor::from_vec(tgt, (b, vd), &dev)?;

        let sources: Vec<Vec<usize>> = instances.iter().map(|i| i.source.clone()).collect();
        let source_lengths: Vec<usize> = sources.iter().map(Vec::len).collect();
        let (source, s_len) = pad_indices(&sources, PAD, &dev)?;
        let exts: Vec<Vec<usize>> = instances.iter().map(|i| i.source_ext.clone()).collect();
        let (source_ext, _) = pad_indices(&exts, PAD, &dev)?;
        let source_mask = length_mask(&source_lengths, s_len, &dev)?;
        let hist: Vec<f32> = instances
            .iter()
            .map(|i| if i.has_history() { 1.0 } else { 0.0 })
            .collect();
        let has_history = Tensor::from_vec(hist, (b, 1), &dev)?;
        let extra = instances.iter().map(|i| i.extra.len()).max().unwrap_or(0);

        let inputs: Vec<Vec<usize>> = instances
            .iter()
            .map(|i| i.target[..i.target.len() - 1].to_vec())
            .collect();
        let outs: Vec<Vec<usize>> = instances
            .iter()
            .map(|i| i.target[1..].iter().map(|&t| vocab.to_output(t)).collect())
            .collect::<Result<_>>()?;
        let exts_t: Vec<Vec<usize>> = instances.iter().map(|i| i.target_ext[1..].to_vec()).collect();
        let lengths: Vec<usize> = inputs.iter().map(Vec::len).collect();
        let (input, t_len) = pad_indices(&inputs, PAD, &dev)?;
        let (target_out, _) = pad_indices(&outs, PAD, &dev)?;
        let (target_ext, _) = pad_indices(&exts_t, PAD, &dev)?;
        let target_mask = length_mask(&lengths, t_len, &dev)?;

        Ok(GenBatch {
            size: b,
            context,
            target_features,
            source,
            source_ext,
            source_mask,
            source_lengths,
            has_history,
            extra,
            input,
            target_out,
            target_ext,
            target_mask,
        })
    }
}
