use std::cmp::Ordering;

use crate::error::{Error, Result};

/// A left-to-right model that can be decoded token by token.
pub trait StepModel {
    type State: Clone;

    /// Initial state and the token fed at the first step.
    fn start(&self) -> Result<(Self::State, usize)>;

    /// Log-probabilities of the next token after feeding `token`.
    fn step(&self, state: &Self::State, token: usize) -> Result<(Vec<f64>, Self::State)>;

    fn eos(&self) -> usize;

    /// Tokens that are never emitted.
    fn banned(&self) -> &[usize];
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decoded {
    /// Emitted tokens without the end marker.
    pub tokens: Vec<usize>,
    /// Summed log-probability, end marker included.
    pub log_prob: f64,
    /// False when `max_len` ran out before the end marker.
    pub finished: bool,
}

impl Decoded {
    /// Log-probability per emitted step (the end marker counts as a step).
    pub fn normalized(&self) -> f64 {
        let steps = self.tokens.len() + usize::from(self.finished);
        if steps == 0 {
            self.log_prob
        } else {
            self.log_prob / steps as f64
        }
    }
}

#[derive(Clone)]
struct Hyp<S> {
    tokens: Vec<usize>,
    log_prob: f64,
    state: S,
    last: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeamConfig {
    pub width: usize,
    pub max_len: usize,
    /// Rank finished hypotheses by per-step log-probability instead of the sum.
    pub length_normalize: bool,
}

impl Default for BeamConfig {
    fn default() -> Self {
        BeamConfig {
            width: 3,
            max_len: 30,
            length_normalize: true,
        }
    }
}

/// Beam search. Each step keeps the `width` best expansions of all live
/// hypotheses; expansions ending in EOS move to a finished pool and the rest
/// keep growing. The best finished hypothesis wins; if none finished within
/// `max_len` steps, the best partial one is returned with `finished = false`.
pub fn beam_search<M: StepModel>(model: &M, config: &BeamConfig) -> Result<Decoded> {
    if config.width == 0 {
        return Err(Error::Input("beam width must be at least 1".into()));
    }
    let (state, first) = model.start()?;
    let mut live = vec![Hyp {
        tokens: Vec::new(),
        log_prob: 0.0,
        state,
        last: first,
    }];
    let mut finished: Vec<Decoded> = Vec::new();
    let eos = model.eos();
    let banned = model.banned();

    for _ in 0..config.max_len {
        let mut expansions: Vec<(usize, usize, f64, M::State)> = Vec::new();
        for (h, hyp) in live.iter().enumerate() {
            let (lp, next) = model.step(&hyp.state, hyp.last)?;
            for (tok, &l) in lp.iter().enumerate() {
                if banned.contains(&tok) || !l.is_finite() {
                    continue;
                }
                expansions.push((h, tok, hyp.log_prob + l, next.clone()));
            }
        }
        expansions.sort_by(|a, b| {
            b.2.partial_cmp(&a.2)
                .unwrap_or(Ordering::Equal)
                .then(a.0.cmp(&b.0))
                .then(a.1.cmp(&b.1))
        });
        expansions.truncate(config.width);

        let mut next_live = Vec::new();
        for (h, tok, lp, state) in expansions {
            let tokens = live[h].tokens.clone();
            if tok == eos {
                finished.push(Decoded {
                    tokens,
                    log_prob: lp,
                    finished: true,
                });
            } else {
                let mut tokens = tokens;
                tokens.push(tok);
                next_live.push(Hyp {
                    tokens,
                    log_prob: lp,
                    state,
                    last: tok,
                });
            }
        }
        live = next_live;
        if live.is_empty() {
            break;
        }
    }

    let key = |d: &Decoded| {
        if config.length_normalize {
            d.normalized()
        } else {
            d.log_prob
        }
    };
    let pool = if finished.is_empty() {
        live.into_iter()
            .map(|h| Decoded {
                tokens: h.tokens,
                log_prob: h.log_prob,
                finished: false,
            })
            .collect()
    } else {
        finished
    };
    // first maximum wins: earlier-finished hypotheses take ties
    let mut best: Option<Decoded> = None;
    for d in pool {
        if best.as_ref().is_none_or(|b| key(&d) > key(b)) {
            best = Some(d);
        }
    }
    best.ok_or_else(|| Error::Contract("decoder produced no hypothesis".into()))
}

/// Argmax decoding, token by token.
pub fn greedy<M: StepModel>(model: &M, max_len: usize) -> Result<Decoded> {
    let (mut state, mut last) = model.start()?;
    let mut tokens = Vec::new();
    let mut log_prob = 0.0;
    for _ in 0..max_len {
        let (lp, next) = model.step(&state, last)?;
        let mut best: Option<(usize, f64)> = None;
        for (tok, &l) in lp.iter().enumerate() {
            if model.banned().contains(&tok) || !l.is_finite() {
                continue;
            }
            if best.is_none_or(|(_, b)| l > b) {
                best = Some((tok, l));
            }
        }
        let (tok, l) = best.ok_or_else(|| Error::Contract("every token is banned".into()))?;
        log_prob += l;
        if tok == model.eos() {
            return Ok(Decoded {
                tokens,
                log_prob,
                finished: true,
            });
        }
        tokens.push(tok);
        state = next;
        last = tok;
    }
    Ok(Decoded {
        tokens,
        log_prob,
        finished: false,
    })
}
