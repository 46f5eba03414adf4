use std::path::Path;

use candle_core::{Module, Tensor, D};
use candle_nn::Linear;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::batch::ResBatch;
use super::config::{ResolverConfig, ResolverVariant};
use crate::error::{Error, Result};
use crate::nn::{l2_normalize, load_checkpoint, masked_softmax, maybe_dropout, save_checkpoint, ParamStore};

/// Prediction for one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Resolution {
    pub predicted: usize,
    /// Candidate indices, best first; equal scores keep index order.
    pub ranking: Vec<usize>,
    pub scores: Vec<f32>,
    /// True when another candidate has exactly the winning score.
    pub tie: bool,
}

/// Ranks candidate scores; the lowest index wins exact ties.
pub fn resolve_scores(scores: &[f32]) -> Result<Resolution> {
    if scores.is_empty() {
        return Err(Error::Contract("no candidates to rank".into()));
    }
    let mut ranking: Vec<usize> = (0..scores.len()).collect();
    ranking.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let predicted = ranking[0];
    let tie = scores
        .iter()
        .enumerate()
        .any(|(i, &s)| i != predicted && s == scores[predicted]);
    if tie {
        log::debug!("resolution tie at score {}", scores[predicted]);
    }
    Ok(Resolution {
        predicted,
        ranking,
        scores: scores.to_vec(),
        tie,
    })
}

pub struct ResolverForward {
    /// `(B, 6)` dot products.
    pub scores: Tensor,
    /// `(B, T)` token attention (absent for the one-hot baseline).
    pub attention: Option<Tensor>,
    /// `(B, H)` pooled utterance vectors.
    pub utterance: Option<Tensor>,
    /// `(B, 6, H)` candidate vectors.
    pub candidates: Option<Tensor>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResCheckpointMeta {
    pub kind: String,
    pub variant: ResolverVariant,
    pub config: ResolverConfig,
    pub seed: u64,
}

struct Network {
    token: Linear,
    context: Linear,
    multimodal: Linear,
    w_e: Linear,
    v_a: Linear,
    visual: Linear,
    history: Linear,
}

struct OneHotNet {
    embed: Linear,
    score: Linear,
}

pub struct ResolverModel {
    config: ResolverConfig,
    seed: u64,
    params: ParamStore,
    net: Option<Network>,
    onehot: Option<OneHotNet>,
}

impl ResolverModel {
    pub fn new(config: ResolverConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let c = &config;
        let mut ps = ParamStore::new(seed);
        let (net, onehot) = if c.variant == ResolverVariant::OneHot {
            let oh = OneHotNet {
                embed: ps.linear("onehot.embed", c.image_universe.len(), c.hidden_dim)?,
                score: ps.linear("onehot.score", c.hidden_dim, 1)?,
            };
            (None, Some(oh))
        } else {
            let net = Network {
                token: ps.linear("utterance.token", c.token_dim, c.hidden_dim)?,
                context: ps.linear("utterance.context", c.context_size * c.visual_dim, c.hidden_dim)?,
                multimodal: ps.linear("utterance.multimodal", 2 * c.hidden_dim, c.hidden_dim)?,
                w_e: ps.linear("attention.w_e", c.hidden_dim, c.attn_dim)?,
                v_a: ps.linear("attention.v", c.attn_dim, 1)?,
                visual: ps.linear("candidate.visual", c.visual_dim, c.hidden_dim)?,
                history: ps.linear("candidate.history", c.token_dim, c.hidden_dim)?,
            };
            (Some(net), None)
        };
        Ok(ResolverModel {
            config,
            seed,
            params: ps,
            net,
            onehot,
        })
    }

    pub fn config(&self) -> &ResolverConfig {
        &self.config
    }

    pub fn variant(&self) -> ResolverVariant {
        self.config.variant
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    fn net(&self) -> Result<&Network> {
        self.net
            .as_ref()
            .ok_or_else(|| Error::Contract("the one-hot baseline has no utterance encoder".into()))
    }

    /// Multimodal token vectors `h_i` of shape `(B, T, H)`.
    pub fn token_states(
        &self,
        tokens: &Tensor,
        context: &Tensor,
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> Result<Tensor> {
        let net = self.net()?;
        let c = &self.config;
        let (b, t, d) = tokens.dims3()?;
        if d != c.token_dim {
            return Err(Error::Input(format!(
                "token embeddings have {d} dims, model expects {}",
                c.token_dim
            )));
        }
        let p = c.dropout;
        let tok = net.token.forward(&maybe_dropout(tokens, p, rng.as_deref_mut())?)?.relu()?;
        let ctx = net.context.forward(&maybe_dropout(context, p, rng.as_deref_mut())?)?.relu()?;
        let ctx = ctx.unsqueeze(1)?.broadcast_as((b, t, c.hidden_dim))?;
        Ok(net.multimodal.forward(&Tensor::cat(&[&tok, &ctx], 2)?)?.relu()?)
    }

    /// Attention-pooled utterance vectors `(B, H)` and weights `(B, T)`.
    pub fn encode_utterance(
        &self,
        tokens: &Tensor,
        mask: &Tensor,
        context: &Tensor,
        rng: Option<&mut ChaCha8Rng>,
    ) -> Result<(Tensor, Tensor)> {
        let net = self.net()?;
        let h = self.token_states(tokens, context, rng)?;
        let e = net.v_a.forward(&net.w_e.forward(&h)?.tanh()?)?.squeeze(D::Minus1)?;
        let a = masked_softmax(&e, mask)?;
        let pooled = a.unsqueeze(1)?.matmul(&h)?.squeeze(1)?;
        Ok((pooled, a))
    }

    /// Unit-norm candidate vectors `(B, 6, H)`: the normalised visual
    /// projection plus, where `flag` is 1, the projected history mean.
    pub fn build_candidates(
        &self,
        features: &Tensor,
        history: &Tensor,
        flag: &Tensor,
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> Result<Tensor> {
        let net = self.net()?;
        let p = self.config.dropout;
        let vis = net.visual.forward(&maybe_dropout(features, p, rng.as_deref_mut())?)?.relu()?;
        let vis = l2_normalize(&vis)?;
        let flag = if self.variant() == ResolverVariant::Ablated {
            flag.zeros_like()?
        } else {
            flag.clone()
        };
        let hist = net.history.forward(&maybe_dropout(history, p, rng.as_deref_mut())?)?.relu()?;
        let sum = (vis + hist.broadcast_mul(&flag)?)?;
        l2_normalize(&sum)
    }

    fn onehot_scores(&self, batch: &ResBatch) -> Result<Tensor> {
        let oh = self.onehot.as_ref().expect("one-hot variant");
        let u = self.config.image_universe.len();
        let k = self.config.context_size;
        let mut data = vec![0.0f32; batch.size * k * u];
        for (b, row) in batch.image_ids.iter().enumerate() {
            for (j, id) in row.iter().enumerate() {
                let idx = self
                    .config
                    .image_universe
                    .iter()
                    .position(|x| x == id)
                    .ok_or_else(|| Error::Input(format!("image {id} is outside the baseline's universe")))?;
                data[(b * k + j) * u + idx] = 1.0;
            }
        }
        let x = Tensor::from_vec(data, (batch.size, k, u), self.params.device())?;
        let h = l2_normalize(&oh.embed.forward(&x)?.relu()?)?;
        Ok(oh.score.forward(&h)?.squeeze(D::Minus1)?)
    }

    pub fn forward(&self, batch: &ResBatch, mut rng: Option<&mut ChaCha8Rng>) -> Result<ResolverForward> {
        if self.variant() == ResolverVariant::OneHot {
            return Ok(ResolverForward {
                scores: self.onehot_scores(batch)?,
                attention: None,
                utterance: None,
                candidates: None,
            });
        }
        let (h_l, a) = self.encode_utterance(&batch.tokens, &batch.token_mask, &batch.context, rng.as_deref_mut())?;
        let cands = self.build_candidates(&batch.candidates, &batch.history, &batch.history_flag, rng)?;
        let scores = cands.matmul(&h_l.unsqueeze(2)?)?.squeeze(2)?;
        Ok(ResolverForward {
            scores,
            attention: Some(a),
            utterance: Some(h_l),
            candidates: Some(cands),
        })
    }

    /// Summed cross entropy of the target positions.
    pub fn loss(&self, fwd: &ResolverForward, batch: &ResBatch) -> Result<Tensor> {
        let lp = candle_nn::ops::log_softmax(&fwd.scores, D::Minus1)?;
        let idx: Vec<u32> = batch.targets.iter().map(|&t| t as u32).collect();
        let idx = Tensor::from_vec(idx, (batch.size, 1), self.params.device())?;
        Ok(lp.gather(&idx, 1)?.sum_all()?.neg()?)
    }

    pub fn resolve(&self, fwd: &ResolverForward) -> Result<Vec<Resolution>> {
        fwd.scores
            .to_vec2::<f32>()?
            .iter()
            .map(|row| resolve_scores(row))
            .collect()
    }

    pub fn meta(&self) -> ResCheckpointMeta {
        ResCheckpointMeta {
            kind: "resolver".into(),
            variant: self.variant(),
            config: self.config.clone(),
            seed: self.seed,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.save_snapshot(path, &self.params.snapshot()?)
    }

    pub fn save_snapshot(&self, path: &Path, tensors: &[(String, Tensor)]) -> Result<()> {
        let meta = serde_json::to_value(self.meta()).map_err(|e| Error::json("checkpoint meta", e))?;
        save_checkpoint(path, &meta, tensors)
    }

    pub fn load(path: &Path) -> Result<(Self, ResCheckpointMeta)> {
        let ck = load_checkpoint(path)?;
        let meta: ResCheckpointMeta = serde_json::from_value(ck.meta)
            .map_err(|e| Error::json(format!("{}: checkpoint meta", path.display()), e))?;
        if meta.kind != "resolver" {
            return Err(Error::Input(format!("{} holds a {} model", path.display(), meta.kind)));
        }
        let model = ResolverModel::new(meta.config.clone(), meta.seed)?;
        model.params.assign(&ck.tensors)?;
        Ok((model, meta))
    }
}
