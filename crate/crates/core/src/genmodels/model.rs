use std::path::Path;

use candle_core::{Device, IndexOp, Module, Tensor, D};
use candle_nn::{Embedding, Linear};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::batch::GenBatch;
use super::beam::{beam_search, greedy, BeamConfig, StepModel};
use super::config::{GenConfig, GenVariant};
use super::copy::{expand_output_distribution, mix_copy_distribution};
use crate::error::{Error, Result};
use crate::features::FeatureTable;
use crate::nn::{
    blend, load_checkpoint, masked_softmax, maybe_dropout, save_checkpoint, sigmoid, LstmCell,
    ParamStore,
};
use crate::textprep::{GenInstance, Vocabulary, EOS, NOHS, PAD, SOS, UNK};

/// Additive attention: `e_i = v_a(tanh(W_e h_enc^i + W_d s))`.
pub struct Attention {
    w_e: Linear,
    w_d: Linear,
    v: Linear,
}

impl Attention {
    fn new(ps: &mut ParamStore, prefix: &str, enc_dim: usize, dec_dim: usize, attn_dim: usize) -> Result<Self> {
        Ok(Attention {
            w_e: ps.linear(&format!("{prefix}.w_e"), enc_dim, attn_dim)?,
            w_d: ps.linear(&format!("{prefix}.w_d"), dec_dim, attn_dim)?,
            v: ps.linear(&format!("{prefix}.v"), attn_dim, 1)?,
        })
    }

    /// `W_e h_enc` for every encoder position, computed once per source.
    pub fn project(&self, enc_out: &Tensor) -> Result<Tensor> {
        Ok(self.w_e.forward(enc_out)?)
    }

    /// Weights `(B, S)` and context `(B, enc_dim)` for decoder state `s (B, H)`.
    pub fn step(&self, proj: &Tensor, enc_out: &Tensor, mask: &Tensor, s: &Tensor) -> Result<(Tensor, Tensor)> {
        let dec = self.w_d.forward(s)?.unsqueeze(1)?;
        let e = proj.broadcast_add(&dec)?.tanh()?;
        let scores = self.v.forward(&e)?.squeeze(D::Minus1)?;
        let a = masked_softmax(&scores, mask)?;
        let ctx = a.unsqueeze(1)?.matmul(&enc_out.contiguous()?)?.squeeze(1)?;
        Ok((a, ctx))
    }
}

/// Bidirectional encoder outputs for a batch of sources.
pub struct EncoderState {
    /// `(B, S, 2H)`; zero at padded positions.
    pub outputs: Tensor,
    /// `(B, S, A)` attention projection of `outputs`.
    pub projected: Tensor,
    /// `(B, S)` f32, 1 on real tokens.
    pub mask: Tensor,
    /// `(B, H)` projected concatenation of the final forward and backward states.
    pub decoder_init: Tensor,
}

struct Encoder {
    fwd: LstmCell,
    bwd: LstmCell,
    init: Linear,
}

/// `p_gen = sigmoid(tanh(w_h h*) + tanh(w_s s) + tanh(w_x x))`.
struct CopyGate {
    w_h: Linear,
    w_s: Linear,
    w_x: Linear,
}

impl CopyGate {
    fn p_gen(&self, ctx: &Tensor, s: &Tensor, x: &Tensor) -> Result<Tensor> {
        let z = ((self.w_h.forward(ctx)?.tanh()? + self.w_s.forward(s)?.tanh()?)?
            + self.w_x.forward(x)?.tanh()?)?;
        sigmoid(&z)
    }
}

/// Result of one decoder step for a batch.
pub struct StepOutput {
    pub h: Tensor,
    pub c: Tensor,
    /// Ref / ReRef: `(B, |V| - 1)` unnormalised scores.
    pub logits: Option<Tensor>,
    /// Copy: `(B, |V| + extra)` final distribution.
    pub probs: Option<Tensor>,
    /// `(B, S)` attention weights (ReRef / Copy).
    pub attention: Option<Tensor>,
    /// `(B, 1)` generation probability (Copy).
    pub p_gen: Option<Tensor>,
}

/// Teacher-forced pass over a batch.
pub struct GenForward {
    /// Ref / ReRef: `(B, T, |V| - 1)` logits.
    pub logits: Option<Tensor>,
    /// Copy: `(B, T, |V| + extra)` probabilities.
    pub probs: Option<Tensor>,
    /// `(B, T, S)`.
    pub attention: Option<Tensor>,
    /// `(B, T)`.
    pub p_gen: Option<Tensor>,
}

/// Conditioning shared by every decoder step of a batch.
pub struct DecoderContext {
    pub h_d: Tensor,
    pub encoder: Option<EncoderState>,
    pub source_ext: Tensor,
    pub has_history: Tensor,
    pub extra: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenCheckpointMeta {
    pub kind: String,
    pub variant: GenVariant,
    pub config: GenConfig,
    pub vocab_hash: String,
    pub seed: u64,
}

pub struct GenerationModel {
    config: GenConfig,
    seed: u64,
    params: ParamStore,
    embed: Embedding,
    ctx_proj: Linear,
    tgt_proj: Linear,
    fuse: Linear,
    encoder: Option<Encoder>,
    attention: Option<Attention>,
    decoder: LstmCell,
    out: Linear,
    gate: Option<CopyGate>,
}

fn output_to_input(out: usize) -> usize {
    if out >= NOHS {
        out + 1
    } else {
        out
    }
}

impl GenerationModel {
    pub fn new(config: GenConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let c = &config;
        let mut ps = ParamStore::new(seed);
        let embed = ps.embedding("embed", c.vocab_size, c.embed_dim)?;
        let ctx_proj = ps.linear("visual.context", c.context_size * c.visual_dim, c.hidden_dim)?;
        let tgt_proj = ps.linear("visual.target", c.visual_dim, c.hidden_dim)?;
        let fuse = ps.linear("visual.fuse", 2 * c.hidden_dim, c.hidden_dim)?;
        let (encoder, attention, dec_in, out_in) = if c.variant.uses_history() {
            let enc = Encoder {
                fwd: ps.lstm("encoder.fwd", c.embed_dim, c.hidden_dim)?,
                bwd: ps.lstm("encoder.bwd", c.embed_dim, c.hidden_dim)?,
                init: ps.linear("encoder.init", 2 * c.hidden_dim, c.hidden_dim)?,
            };
            let att = Attention::new(&mut ps, "attention", 2 * c.hidden_dim, c.hidden_dim, c.attn_dim)?;
            (Some(enc), Some(att), c.embed_dim, 3 * c.hidden_dim)
        } else {
            (None, None, c.hidden_dim + c.embed_dim, c.hidden_dim)
        };
        let decoder = ps.lstm("decoder", dec_in, c.hidden_dim)?;
        let out = ps.linear("output", out_in, c.output_size())?;
        let gate = if c.variant == GenVariant::Copy {
            Some(CopyGate {
                w_h: ps.linear_no_bias("copy.w_h", 2 * c.hidden_dim, 1)?,
                w_s: ps.linear_no_bias("copy.w_s", c.hidden_dim, 1)?,
                w_x: ps.linear_no_bias("copy.w_x", c.embed_dim, 1)?,
            })
        } else {
            None
        };
        Ok(GenerationModel {
            config,
            seed,
            params: ps,
            embed,
            ctx_proj,
            tgt_proj,
            fuse,
            encoder,
            attention,
            decoder,
            out,
            gate,
        })
    }

    pub fn config(&self) -> &GenConfig {
        &self.config
    }

    pub fn variant(&self) -> GenVariant {
        self.config.variant
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn device(&self) -> &Device {
        self.params.device()
    }

    /// `h_d` from context `(B, 6 * vd)` and target `(B, vd)` features.
    /// Dropout is active when `rng` is given.
    pub fn encode_visual(&self, context: &Tensor, target: &Tensor, mut rng: Option<&mut ChaCha8Rng>) -> Result<Tensor> {
        let c = &self.config;
        let (b, cd) = context.dims2()?;
        let (b2, td) = target.dims2()?;
        if cd != c.context_size * c.visual_dim || td != c.visual_dim || b != b2 {
            return Err(Error::Input(format!(
                "visual input shapes ({b}, {cd}) / ({b2}, {td}) do not match {} x {}",
                c.context_size, c.visual_dim
            )));
        }
        let p = c.dropout;
        let ctx = self
            .ctx_proj
            .forward(&maybe_dropout(context, p, rng.as_deref_mut())?)?
            .relu()?;
        let tgt = self
            .tgt_proj
            .forward(&maybe_dropout(target, p, rng.as_deref_mut())?)?
            .relu()?;
        Ok(self.fuse.forward(&Tensor::cat(&[&ctx, &tgt], 1)?)?)
    }

    /// Single-instance variant of [`encode_visual`](Self::encode_visual) in eval mode.
    pub fn encode_visual_slices(&self, context: &[&[f32]], target: &[f32]) -> Result<Tensor> {
        let c = &self.config;
        if context.len() != c.context_size {
            return Err(Error::Input(format!(
                "{} context images, expected {}",
                context.len(),
                c.context_size
            )));
        }
        if context.iter().chain(std::iter::once(&target)).any(|v| v.len() != c.visual_dim) {
            return Err(Error::Input(format!("image features must have {} values", c.visual_dim)));
        }
        let flat: Vec<f32> = context.iter().flat_map(|v| v.iter().copied()).collect();
        let ctx = Tensor::from_vec(flat, (1, c.context_size * c.visual_dim), self.device())?;
        let tgt = Tensor::from_vec(target.to_vec(), (1, c.visual_dim), self.device())?;
        self.encode_visual(&ctx, &tgt, None)
    }

    /// Runs the bidirectional encoder over `source (B, S)`; both directions
    /// start from `h_d`. Padded steps leave the recurrent state untouched.
    pub fn encode_previous(
        &self,
        source: &Tensor,
        mask: &Tensor,
        h_d: &Tensor,
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> Result<EncoderState> {
        let (enc, att) = match (&self.encoder, &self.attention) {
            (Some(e), Some(a)) => (e, a),
            _ => return Err(Error::Contract("the Ref variant has no encoder".into())),
        };
        let (_, s) = source.dims2()?;
        if s == 0 {
            return Err(Error::Input("empty source; use <nohs>".into()));
        }
        let emb = self.embed.forward(source)?;
        let emb = maybe_dropout(&emb, self.config.dropout, rng.as_deref_mut())?;
        let run = |cell: &LstmCell, order: Vec<usize>| -> Result<(Vec<Tensor>, Tensor)> {
            let mut h = h_d.clone();
            let mut c = h_d.clone();
            let mut outs: Vec<Option<Tensor>> = vec![None; s];
            for t in order {
                let x = emb.i((.., t, ..))?.contiguous()?;
                let m = mask.i((.., t))?.unsqueeze(1)?;
                let (h2, c2) = cell.step(&x, &h, &c)?;
                h = blend(&m, &h2, &h)?;
                c = blend(&m, &c2, &c)?;
                outs[t] = Some(h2.broadcast_mul(&m)?);
            }
            Ok((outs.into_iter().map(Option::unwrap).collect(), h))
        };
        let (f_out, f_last) = run(&enc.fwd, (0..s).collect())?;
        let (b_out, b_last) = run(&enc.bwd, (0..s).rev().collect())?;
        let outputs = Tensor::cat(&[&Tensor::stack(&f_out, 1)?, &Tensor::stack(&b_out, 1)?], 2)?;
        let projected = att.project(&outputs)?;
        let decoder_init = enc.init.forward(&Tensor::cat(&[&f_last, &b_last], 1)?)?;
        Ok(EncoderState {
            outputs,
            projected,
            mask: mask.clone(),
            decoder_init,
        })
    }

    /// Visual and (for ReRef / Copy) linguistic conditioning for a batch.
    pub fn prepare(&self, batch: &GenBatch, mut rng: Option<&mut ChaCha8Rng>) -> Result<(DecoderContext, Tensor, Tensor)> {
        let h_d = self.encode_visual(&batch.context, &batch.target_features, rng.as_deref_mut())?;
        let encoder = if self.variant().uses_history() {
            Some(self.encode_previous(&batch.source, &batch.source_mask, &h_d, rng.as_deref_mut())?)
        } else {
            None
        };
        let init = match &encoder {
            Some(e) => e.decoder_init.clone(),
            None => h_d.clone(),
        };
        Ok((
            DecoderContext {
                h_d,
                encoder,
                source_ext: batch.source_ext.clone(),
                has_history: batch.has_history.clone(),
                extra: batch.extra,
            },
            init.clone(),
            init,
        ))
    }

    /// One decoder step on input tokens `x (B,)` given in base-vocabulary indices.
    pub fn decode_step(&self, ctx: &DecoderContext, x: &Tensor, h: &Tensor, c: &Tensor) -> Result<StepOutput> {
        let emb = self.embed.forward(x)?;
        match self.variant() {
            GenVariant::Ref => {
                let input = Tensor::cat(&[&ctx.h_d, &emb], 1)?;
                let (h, c) = self.decoder.step(&input, h, c)?;
                let logits = self.out.forward(&h)?;
                Ok(StepOutput {
                    h,
                    c,
                    logits: Some(logits),
                    probs: None,
                    attention: None,
                    p_gen: None,
                })
            }
            variant => {
                let enc = ctx.encoder.as_ref().ok_or_else(|| Error::Contract("missing encoder state".into()))?;
                let att = self.attention.as_ref().expect("history variants have attention");
                let (h, c) = self.decoder.step(&emb, h, c)?;
                let (a, h_star) = att.step(&enc.projected, &enc.outputs, &enc.mask, &h)?;
                let logits = self.out.forward(&Tensor::cat(&[&h, &h_star], 1)?)?;
                if variant == GenVariant::ReRef {
                    return Ok(StepOutput {
                        h,
                        c,
                        logits: Some(logits),
                        probs: None,
                        attention: Some(a),
                        p_gen: None,
                    });
                }
                let gate = self.gate.as_ref().expect("copy variant has a gate");
                let p_gen = gate.p_gen(&h_star, &h, &emb)?;
                let no_hist = ctx.has_history.affine(-1.0, 1.0)?;
                let p_eff = (p_gen.broadcast_mul(&ctx.has_history)? + no_hist)?;
                let p_vocab = candle_nn::ops::softmax(&logits, D::Minus1)?;
                let p_full = expand_output_distribution(&p_vocab, ctx.extra)?;
                let probs = mix_copy_distribution(&p_full, &a, &ctx.source_ext, &p_eff)?;
                Ok(StepOutput {
                    h,
                    c,
                    logits: None,
                    probs: Some(probs),
                    attention: Some(a),
                    p_gen: Some(p_gen),
                })
            }
        }
    }

    /// Teacher-forced pass; dropout is active when `rng` is given.
    pub fn forward(&self, batch: &GenBatch, rng: Option<&mut ChaCha8Rng>) -> Result<GenForward> {
        let (ctx, mut h, mut c) = self.prepare(batch, rng)?;
        let (_, t_len) = batch.input.dims2()?;
        let mut logits = Vec::new();
        let mut probs = Vec::new();
        let mut attn = Vec::new();
        let mut gates = Vec::new();
        for t in 0..t_len {
            let x = batch.input.i((.., t))?.contiguous()?;
            let out = self.decode_step(&ctx, &x, &h, &c)?;
            h = out.h;
            c = out.c;
            logits.extend(out.logits);
            probs.extend(out.probs);
            attn.extend(out.attention);
            gates.extend(out.p_gen);
        }
        let stack = |v: Vec<Tensor>| -> Result<Option<Tensor>> {
            if v.is_empty() {
                Ok(None)
            } else {
                Ok(Some(Tensor::stack(&v, 1)?))
            }
        };
        Ok(GenForward {
            logits: stack(logits)?,
            probs: stack(probs)?,
            attention: stack(attn)?,
            p_gen: stack(gates)?.map(|g| g.squeeze(D::Minus1)).transpose()?,
        })
    }

    /// Summed negative log-likelihood of the gold targets.
    pub fn loss(&self, fwd: &GenForward, batch: &GenBatch) -> Result<Tensor> {
        let mask = &batch.target_mask;
        let picked = if let Some(logits) = &fwd.logits {
            let lp = candle_nn::ops::log_softmax(logits, D::Minus1)?;
            lp.gather(&batch.target_out.unsqueeze(2)?, 2)?.squeeze(2)?
        } else {
            let probs = fwd.probs.as_ref().ok_or_else(|| Error::Contract("empty forward".into()))?;
            let p = probs.gather(&batch.target_ext.unsqueeze(2)?, 2)?.squeeze(2)?;
            let ones = p.ones_like()?;
            let p = mask.ne(0.0f32)?.where_cond(&p, &ones)?;
            p.clamp(1e-12f32, 1.0f32)?.log()?
        };
        Ok((picked * mask)?.sum_all()?.neg()?)
    }

    /// (correct, total) argmax predictions under teacher forcing.
    pub fn token_accuracy(&self, fwd: &GenForward, batch: &GenBatch) -> Result<(usize, usize)> {
        let (scores, target) = match (&fwd.logits, &fwd.probs) {
            (Some(l), _) => (l, &batch.target_out),
            (None, Some(p)) => (p, &batch.target_ext),
            _ => return Err(Error::Contract("empty forward".into())),
        };
        let pred = scores.argmax(D::Minus1)?.to_vec2::<u32>()?;
        let gold = target.to_vec2::<u32>()?;
        let mask = batch.target_mask.to_vec2::<f32>()?;
        let mut correct = 0;
        let mut total = 0;
        for ((p, g), m) in pred.iter().zip(&gold).zip(&mask) {
            for t in 0..p.len() {
                if m[t] > 0.0 {
                    total += 1;
                    correct += usize::from(p[t] == g[t]);
                }
            }
        }
        Ok((correct, total))
    }

    /// Step-by-step decoder for one instance (eval mode).
    pub fn decoder_for(&self, instance: &GenInstance, features: &FeatureTable, vocab: &Vocabulary) -> Result<InstanceDecoder<'_>> {
        if vocab.len() != self.config.vocab_size {
            return Err(Error::Input(format!(
                "vocabulary has {} entries, model expects {}",
                vocab.len(),
                self.config.vocab_size
            )));
        }
        let batch = GenBatch::new(&[instance], features, vocab, self.config.context_size)?;
        let (ctx, h, c) = self.prepare(&batch, None)?;
        Ok(InstanceDecoder {
            model: self,
            ctx,
            init: (h, c),
            banned: match self.variant() {
                GenVariant::Copy => vec![PAD, SOS, NOHS],
                _ => vec![PAD, SOS],
            },
        })
    }

    /// Beam-search decoding of one instance into surface tokens.
    pub fn generate(
        &self,
        instance: &GenInstance,
        features: &FeatureTable,
        vocab: &Vocabulary,
        beam: &BeamConfig,
    ) -> Result<Generated> {
        let dec = self.decoder_for(instance, features, vocab)?;
        let out = if beam.width == 1 {
            greedy(&dec, beam.max_len)?
        } else {
            beam_search(&dec, beam)?
        };
        Ok(Generated {
            tokens: dec.surface(&out.tokens, &instance.extra, vocab),
            finished: out.finished,
            log_prob: out.log_prob,
        })
    }

    pub fn meta(&self, vocab_hash: &str) -> GenCheckpointMeta {
        GenCheckpointMeta {
            kind: "generation".into(),
            variant: self.variant(),
            config: self.config.clone(),
            vocab_hash: vocab_hash.to_string(),
            seed: self.seed,
        }
    }

    pub fn save(&self, path: &Path, vocab_hash: &str) -> Result<()> {
        let meta = serde_json::to_value(self.meta(vocab_hash)).map_err(|e| Error::json("checkpoint meta", e))?;
        save_checkpoint(path, &meta, &self.params.snapshot()?)
    }

    pub fn save_snapshot(&self, path: &Path, vocab_hash: &str, tensors: &[(String, Tensor)]) -> Result<()> {
        let meta = serde_json::to_value(self.meta(vocab_hash)).map_err(|e| Error::json("checkpoint meta", e))?;
        save_checkpoint(path, &meta, tensors)
    }

    pub fn load(path: &Path) -> Result<(Self, GenCheckpointMeta)> {
        let ck = load_checkpoint(path)?;
        let meta: GenCheckpointMeta = serde_json::from_value(ck.meta)
            .map_err(|e| Error::json(format!("{}: checkpoint meta", path.display()), e))?;
        if meta.kind != "generation" {
            return Err(Error::Input(format!("{} holds a {} model", path.display(), meta.kind)));
        }
        let model = GenerationModel::new(meta.config.clone(), meta.seed)?;
        model.params.assign(&ck.tensors)?;
        Ok((model, meta))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generated {
    pub tokens: Vec<String>,
    /// False when decoding hit `max_len` before `<eos>`.
    pub finished: bool,
    pub log_prob: f64,
}

/// Eval-mode decoder over one instance; tokens live in the variant's output
/// space (`|V| - 1` for Ref / ReRef, `|V| + extra` for Copy).
pub struct InstanceDecoder<'a> {
    model: &'a GenerationModel,
    ctx: DecoderContext,
    init: (Tensor, Tensor),
    banned: Vec<usize>,
}

impl InstanceDecoder<'_> {
    fn input_index(&self, token: usize) -> usize {
        match self.model.variant() {
            GenVariant::Copy if token >= self.model.config.vocab_size => UNK,
            GenVariant::Copy => token,
            _ => output_to_input(token),
        }
    }

    /// Next-token distribution over the full (extended) vocabulary, so that
    /// index `<nohs>` is comparable across variants.
    pub fn full_distribution(&self, state: &(Tensor, Tensor), token: usize) -> Result<(Vec<f32>, (Tensor, Tensor))> {
        let out = self.run(state, token)?;
        let probs = match (out.logits, out.probs) {
            (Some(l), _) => expand_output_distribution(&candle_nn::ops::softmax(&l, D::Minus1)?, 0)?,
            (None, Some(p)) => p,
            _ => return Err(Error::Contract("empty decoder step".into())),
        };
        Ok((probs.squeeze(0)?.to_vec1::<f32>()?, (out.h, out.c)))
    }

    /// Attention weights and `p_gen` of one step, when the variant has them.
    pub fn probe(&self, state: &(Tensor, Tensor), token: usize) -> Result<(Option<Vec<f32>>, Option<f32>)> {
        let out = self.run(state, token)?;
        let a = out.attention.map(|a| a.squeeze(0)?.to_vec1::<f32>()).transpose()?;
        let p = out.p_gen.map(|p| p.flatten_all()?.to_vec1::<f32>().map(|v| v[0])).transpose()?;
        Ok((a, p))
    }

    fn run(&self, state: &(Tensor, Tensor), token: usize) -> Result<StepOutput> {
        let x = Tensor::new(&[self.input_index(token) as u32], self.model.device())?;
        self.model.decode_step(&self.ctx, &x, &state.0, &state.1)
    }

    /// Maps output-space tokens back to strings.
    pub fn surface(&self, tokens: &[usize], extra: &[String], vocab: &Vocabulary) -> Vec<String> {
        let v = self.model.config.vocab_size;
        tokens
            .iter()
            .map(|&t| match self.model.variant() {
                GenVariant::Copy if t >= v => extra.get(t - v).cloned().unwrap_or_else(|| "<unk>".into()),
                GenVariant::Copy => vocab.token(t).unwrap_or("<unk>").to_string(),
                _ => vocab.token(output_to_input(t)).unwrap_or("<unk>").to_string(),
            })
            .collect()
    }
}

impl StepModel for InstanceDecoder<'_> {
    type State = (Tensor, Tensor);

    fn start(&self) -> Result<(Self::State, usize)> {
        Ok((self.init.clone(), SOS))
    }

    fn step(&self, state: &Self::State, token: usize) -> Result<(Vec<f64>, Self::State)> {
        let out = self.run(state, token)?;
        let lp: Vec<f32> = match (out.logits, out.probs) {
            (Some(l), _) => candle_nn::ops::log_softmax(&l, D::Minus1)?.squeeze(0)?.to_vec1()?,
            (None, Some(p)) => p.log()?.squeeze(0)?.to_vec1()?,
            _ => return Err(Error::Contract("empty decoder step".into())),
        };
        Ok((lp.into_iter().map(f64::from).collect(), (out.h, out.c)))
    }

    fn eos(&self) -> usize {
        EOS
    }

    fn banned(&self) -> &[usize] {
        &self.banned
    }
}
