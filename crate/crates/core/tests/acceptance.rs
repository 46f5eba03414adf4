//! Acceptance checks. Runs as a plain binary and prints one PASS/FAIL line
//! per criterion; exits non-zero if any criterion fails.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::time::Instant;

use candle_core::{Device, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

use refchain::corpus::{evaluate_extraction, meteor_fmean, Link, ReferenceChain, ReferenceSets};
use refchain::embed::{EmbeddingProvider, HashEmbedding};
use refchain::genmodels::{
    beam_search, greedy, mix_copy_distribution, BeamConfig, GenBatch, GenConfig, GenVariant, GenerationModel,
    StepModel,
};
use refchain::linganalysis::{
    analyze, cohens_d, profile_report, reuse, AnalysisConfig, ChainUtterance, Pos, PosTagger, SystemSummary,
};
use refchain::metrics::{accuracy_mrr, bleu2, cider, rouge_l, RankedTarget};
use refchain::pipeline::{extract_chains, run_pipeline, write_fixture, ExperimentManifest, Stage};
use refchain::resolver::{random_choice, ResBatch, ResolverConfig, ResolverModel, ResolverVariant};
use refchain::synthetic::{generation_set, random_gen_instance, resolution_set};
use refchain::textprep::{tokenize, GenInstance, StopwordList, NOHS};
use refchain::trainer::{train_generation, train_resolution, GenerationData, ResolutionData, SelectionMetric, TrainConfig};

// Tolerances and sizes, fixed here.
const ATTN_SUM_TOL: f64 = 1e-6;
const ATTN_DRAWS: usize = 1000;
const COPY_SUM_TOL: f64 = 1e-6;
const COPY_DRAWS: usize = 1000;
const NOHS_STEPS: usize = 10_000;
const OVERFIT_GEN_MIN_ACC: f64 = 95.0;
const OVERFIT_GEN_EPOCHS: usize = 300;
const OVERFIT_GEN_INSTANCES: usize = 50;
const OVERFIT_RES_EPOCHS: usize = 200;
const OVERFIT_RES_INSTANCES: usize = 30;
const OVERFIT_MAX_SECS: f64 = 300.0;
const BEAM_CASES: usize = 100;
const RANDOM_TRIALS: usize = 10_000;
const RANDOM_CHANCE: f64 = 100.0 / 6.0;
const RANDOM_TOL: f64 = 1.5;
const METRIC_DP4: f64 = 5e-5;
const HAND_TOL: f64 = 1e-9;
const REUSE_DRAWS: usize = 1000;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn close(name: &str, got: f64, want: f64, tol: f64) -> Result<(), String> {
    ensure((got - want).abs() <= tol, || format!("{name}: got {got}, expected {want} (tol {tol})"))
}

fn tiny_gen(variant: GenVariant, vocab_size: usize, visual_dim: usize) -> GenConfig {
    GenConfig {
        variant,
        vocab_size,
        embed_dim: 8,
        hidden_dim: 6,
        attn_dim: 5,
        visual_dim,
        context_size: 6,
        dropout: 0.0,
    }
}

fn tiny_res(universe: Vec<String>, visual_dim: usize) -> ResolverConfig {
    ResolverConfig {
        variant: ResolverVariant::Full,
        token_dim: 8,
        hidden_dim: 6,
        attn_dim: 5,
        visual_dim,
        context_size: 6,
        dropout: 0.0,
        image_universe: universe,
    }
}

fn check_rows(rows: &[Vec<f32>], valid: usize, what: &str) -> Result<(), String> {
    for row in rows {
        let s: f64 = row.iter().map(|&x| f64::from(x)).sum();
        ensure((s - 1.0).abs() <= ATTN_SUM_TOL, || format!("{what}: attention sums to {s}"))?;
        ensure(row.iter().all(|&x| x >= 0.0), || format!("{what}: negative attention weight"))?;
        ensure(row[valid..].iter().all(|&x| x == 0.0), || format!("{what}: weight on a masked position"))?;
    }
    Ok(())
}

fn c1_attention() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let set = generation_set(8, 4, 1);
    for variant in GenVariant::ALL {
        for draw in 0..ATTN_DRAWS {
            let model = GenerationModel::new(tiny_gen(variant, set.vocab.len(), 4), 1000 + draw as u64).unwrap();
            let insts: Vec<GenInstance> = (0..3).map(|_| random_gen_instance(&mut rng, &set.vocab, 12, 6)).collect();
            let refs: Vec<&GenInstance> = insts.iter().collect();
            let batch = GenBatch::new(&refs, &set.features, &set.vocab, 6).unwrap();
            let fwd = model.forward(&batch, None).unwrap();
            match (variant, fwd.attention) {
                // the baseline never sees a previous utterance, so has nothing to attend over
                (GenVariant::Ref, None) => {}
                (GenVariant::Ref, Some(_)) => return Err("Ref produced attention weights".into()),
                (_, None) => return Err(format!("{variant:?} produced no attention")),
                (_, Some(a)) => {
                    for (b, rows) in a.to_vec3::<f32>().unwrap().iter().enumerate() {
                        check_rows(rows, batch.source_lengths[b], &format!("{variant:?} draw {draw}"))?;
                    }
                }
            }
        }
    }
    for draw in 0..ATTN_DRAWS {
        let mut set = resolution_set(3, 4, 2000 + draw as u64);
        for inst in &mut set.instances {
            let n = rng.random_range(1..=8);
            inst.tokens = (0..n).map(|i| format!("w{}", rng.random_range(0..20) + i)).collect();
        }
        let universe: Vec<String> = set.features.ids().cloned().collect();
        let model = ResolverModel::new(tiny_res(universe, 4), 3000 + draw as u64).unwrap();
        let emb = HashEmbedding::new(8, draw as u64);
        let refs: Vec<_> = set.instances.iter().collect();
        let batch = ResBatch::new(&refs, &set.features, &emb, 6).unwrap();
        let a = model.forward(&batch, None).unwrap().attention.ok_or("resolver produced no attention")?;
        for (b, row) in a.to_vec2::<f32>().unwrap().iter().enumerate() {
            check_rows(std::slice::from_ref(row), batch.token_lengths[b], &format!("resolver draw {draw}"))?;
        }
    }
    Ok(format!(
        "{ATTN_DRAWS} draws each for ReRef, Copy and the resolver; Ref has no attention; |sum-1| <= {ATTN_SUM_TOL}"
    ))
}

fn tensor(rows: &[Vec<f32>]) -> Tensor {
    let n = rows[0].len();
    let flat: Vec<f32> = rows.iter().flatten().copied().collect();
    Tensor::from_vec(flat, (rows.len(), n), &Device::Cpu).unwrap()
}

fn random_simplex(rng: &mut ChaCha8Rng, n: usize) -> Vec<f32> {
    let v: Vec<f32> = (0..n).map(|_| rng.random_range(0.01f32..1.0)).collect();
    let s: f32 = v.iter().sum();
    v.into_iter().map(|x| x / s).collect()
}

fn c2_copy() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let set = generation_set(8, 4, 3);
    for draw in 0..COPY_DRAWS {
        let model = GenerationModel::new(tiny_gen(GenVariant::Copy, set.vocab.len(), 4), 4000 + draw as u64).unwrap();
        let inst = random_gen_instance(&mut rng, &set.vocab, 12, 6);
        let batch = GenBatch::new(&[&inst], &set.features, &set.vocab, 6).unwrap();
        let fwd = model.forward(&batch, None).unwrap();
        for row in &fwd.probs.ok_or("no copy distribution")?.to_vec3::<f32>().unwrap()[0] {
            let s: f64 = row.iter().map(|&x| f64::from(x)).sum();
            ensure((s - 1.0).abs() <= COPY_SUM_TOL, || format!("draw {draw}: distribution sums to {s}"))?;
        }
        for p in fwd.p_gen.ok_or("no p_gen")?.flatten_all().unwrap().to_vec1::<f32>().unwrap() {
            ensure(p > 0.0 && p < 1.0, || format!("draw {draw}: p_gen = {p}"))?;
        }
    }
    // limits, against the closed forms
    for draw in 0..COPY_DRAWS {
        let k = rng.random_range(6..12);
        let s = rng.random_range(1..=k.min(6));
        let p_vocab = random_simplex(&mut rng, k);
        let attn = random_simplex(&mut rng, s);
        // distinct source indices: each copy entry is a single attention weight
        let mut idx: Vec<u32> = (0..k as u32).collect();
        for i in (1..idx.len()).rev() {
            idx.swap(i, rng.random_range(0..=i));
        }
        idx.truncate(s);
        let src = Tensor::new(idx.as_slice(), &Device::Cpu).unwrap().unsqueeze(0).unwrap();
        let pv = tensor(&[p_vocab.clone()]);
        let at = tensor(&[attn.clone()]);
        let pure_copy = mix_copy_distribution(&pv, &at, &src, &tensor(&[vec![0.0]])).unwrap().to_vec2::<f32>().unwrap();
        let mut expect = vec![0f32; k];
        for (i, &w) in idx.iter().enumerate() {
            expect[w as usize] += attn[i];
        }
        ensure(pure_copy[0] == expect, || format!("draw {draw}: p_gen = 0 differs from pure copy"))?;
        let pure_gen = mix_copy_distribution(&pv, &at, &src, &tensor(&[vec![1.0]])).unwrap().to_vec2::<f32>().unwrap();
        ensure(pure_gen[0] == p_vocab, || format!("draw {draw}: p_gen = 1 differs from pure generation"))?;
    }
    Ok(format!(
        "{COPY_DRAWS} model draws, |sum-1| <= {COPY_SUM_TOL}, p_gen in (0,1); {COPY_DRAWS} exact limit checks"
    ))
}

/// Full-space index -> the index the variant's decoder expects as input.
fn to_output_space(variant: GenVariant, full: usize) -> usize {
    if variant != GenVariant::Copy && full > NOHS {
        full - 1
    } else {
        full
    }
}

fn c3_nohs() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let set = generation_set(8, 4, 5);
    for variant in GenVariant::ALL {
        let mut steps = 0usize;
        let mut model_seed = 5000u64;
        while steps < NOHS_STEPS {
            model_seed += 1;
            let model = GenerationModel::new(tiny_gen(variant, set.vocab.len(), 4), model_seed).unwrap();
            let inst = random_gen_instance(&mut rng, &set.vocab, 12, 6);
            let dec = model.decoder_for(&inst, &set.features, &set.vocab).unwrap();
            let (mut state, mut token) = dec.start().unwrap();
            for _ in 0..20 {
                let (probs, next) = dec.full_distribution(&state, token).unwrap();
                steps += 1;
                ensure(probs[NOHS] == 0.0, || format!("{variant:?}: P(<nohs>) = {}", probs[NOHS]))?;
                let u: f32 = rng.random_range(0.0..1.0);
                let mut acc = 0.0f32;
                let sampled = probs
                    .iter()
                    .position(|&p| {
                        acc += p;
                        acc > u
                    })
                    .unwrap_or(probs.len() - 1);
                if to_output_space(variant, sampled) == dec.eos() {
                    break;
                }
                state = next;
                token = to_output_space(variant, sampled);
            }
        }
    }
    Ok(format!("{NOHS_STEPS} sampled steps per variant, P(<nohs>) == 0 exactly"))
}

fn c4_overfit() -> Outcome {
    let mut lines = Vec::new();
    let set = generation_set(OVERFIT_GEN_INSTANCES, 16, 11);
    let emb = HashEmbedding::new(16, 0);
    for variant in GenVariant::ALL {
        let t = Instant::now();
        let config = TrainConfig {
            batch_size: 10,
            learning_rate: 1e-2,
            embed_dim: 32,
            hidden_dim: 64,
            attn_dim: 32,
            dropout: 0.0,
            max_epochs: OVERFIT_GEN_EPOCHS,
            patience: 40,
            seed: 7,
            selection: SelectionMetric::TokenAccuracy,
            max_decode_len: 8,
            ..TrainConfig::generation(variant)
        };
        let data = GenerationData {
            vocab: &set.vocab,
            features: &set.features,
            train: &set.instances,
            validation: &set.instances,
            embeddings: &emb,
        };
        let (model, record) = train_generation(&config, &data, None).map_err(|e| e.to_string())?;
        let refs: Vec<&GenInstance> = set.instances.iter().collect();
        let batch = GenBatch::new(&refs, &set.features, &set.vocab, 6).unwrap();
        let (correct, total) = model.token_accuracy(&model.forward(&batch, None).unwrap(), &batch).unwrap();
        let acc = 100.0 * correct as f64 / total as f64;
        let secs = t.elapsed().as_secs_f64();
        ensure(acc >= OVERFIT_GEN_MIN_ACC, || format!("{variant:?}: token accuracy {acc:.2}"))?;
        ensure(record.epochs.len() <= OVERFIT_GEN_EPOCHS, || format!("{variant:?}: too many epochs"))?;
        ensure(secs < OVERFIT_MAX_SECS, || format!("{variant:?}: took {secs:.0}s"))?;
        lines.push(format!("{variant:?} {acc:.1}% in {} epochs ({secs:.0}s)", record.epochs.len()));
    }

    let t = Instant::now();
    let set = resolution_set(OVERFIT_RES_INSTANCES, 16, 12);
    let emb = HashEmbedding::new(16, 0);
    let config = TrainConfig {
        batch_size: 10,
        learning_rate: 1e-2,
        hidden_dim: 32,
        attn_dim: 32,
        dropout: 0.0,
        max_epochs: OVERFIT_RES_EPOCHS,
        patience: 40,
        seed: 7,
        ..TrainConfig::resolution(ResolverVariant::Full)
    };
    let data = ResolutionData {
        features: &set.features,
        embeddings: &emb,
        train: &set.instances,
        validation: &set.instances,
    };
    let (model, record) = train_resolution(&config, &data, None).map_err(|e| e.to_string())?;
    let res = refchain::pipeline::resolve_all(&model, &set.instances, &set.features, &emb, 32).unwrap();
    let correct = res.iter().zip(&set.instances).filter(|(r, i)| r.predicted == i.target_pos).count();
    let secs = t.elapsed().as_secs_f64();
    ensure(correct == set.instances.len(), || format!("resolver {correct}/{}", set.instances.len()))?;
    ensure(secs < OVERFIT_MAX_SECS, || format!("resolver took {secs:.0}s"))?;
    lines.push(format!("resolver 100% in {} epochs ({secs:.0}s)", record.epochs.len()));
    Ok(lines.join("; "))
}

/// Decoder over explicit per-prefix log-probability tables.
struct Table {
    vocab: usize,
    eos: usize,
    table: HashMap<Vec<usize>, Vec<f64>>,
}

impl StepModel for Table {
    type State = Vec<usize>;

    fn start(&self) -> refchain::Result<(Vec<usize>, usize)> {
        Ok((Vec::new(), usize::MAX))
    }

    fn step(&self, prefix: &Vec<usize>, token: usize) -> refchain::Result<(Vec<f64>, Vec<usize>)> {
        let mut next = prefix.clone();
        if token != usize::MAX {
            next.push(token);
        }
        let lp = self.table.get(&next).cloned().unwrap_or_else(|| vec![f64::NEG_INFINITY; self.vocab]);
        Ok((lp, next))
    }

    fn eos(&self) -> usize {
        self.eos
    }

    fn banned(&self) -> &[usize] {
        &[]
    }
}

/// All finished sequences of at most `max_len` steps, scored as the beam ranks them.
fn exhaustive(t: &Table, max_len: usize) -> Option<(Vec<usize>, f64)> {
    let mut best: Option<(Vec<usize>, f64)> = None;
    let mut frontier = vec![(Vec::<usize>::new(), 0.0f64)];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for (prefix, lp) in &frontier {
            let row = &t.table[prefix];
            for (tok, &l) in row.iter().enumerate() {
                if !l.is_finite() {
                    continue;
                }
                if tok == t.eos {
                    let score = (lp + l) / (prefix.len() + 1) as f64;
                    if best.as_ref().is_none_or(|(_, b)| score > *b) {
                        best = Some((prefix.clone(), score));
                    }
                } else {
                    let mut p = prefix.clone();
                    p.push(tok);
                    next.push((p, lp + l));
                }
            }
        }
        frontier = next;
    }
    best
}

fn log_softmax(rng: &mut ChaCha8Rng, n: usize, allowed: &[usize]) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
    let z: f64 = allowed.iter().map(|&i| raw[i].exp()).sum::<f64>().ln();
    (0..n).map(|i| if allowed.contains(&i) { raw[i] - z } else { f64::NEG_INFINITY }).collect()
}

/// Random tables over every prefix of length < `depth`. `support` picks the
/// tokens allowed after a prefix.
fn random_table(
    rng: &mut ChaCha8Rng,
    vocab: usize,
    depth: usize,
    mut support: impl FnMut(&mut ChaCha8Rng, &[usize]) -> Vec<usize>,
) -> Table {
    let eos = vocab - 1;
    let mut table = HashMap::new();
    let mut level = vec![Vec::<usize>::new()];
    for _ in 0..depth {
        let mut next = Vec::new();
        for prefix in level {
            let allowed = support(rng, &prefix);
            for &tok in &allowed {
                if tok != eos {
                    let mut p = prefix.clone();
                    p.push(tok);
                    next.push(p);
                }
            }
            table.insert(prefix, log_softmax(rng, vocab, &allowed));
        }
        level = next;
    }
    Table { vocab, eos, table }
}

fn c5_beam() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let cfg = |width| BeamConfig { width, max_len: 3, length_normalize: true };
    for case in 0..BEAM_CASES {
        // width 3 on trees with at most three live expansions per step
        let mut budget: BTreeMap<usize, usize> = BTreeMap::new();
        let t = random_table(&mut rng, 4, 3, |rng, prefix| {
            let used = budget.entry(prefix.len()).or_insert(0);
            let left = 3usize.saturating_sub(*used);
            let mut allowed = vec![3usize];
            for tok in 0..3 {
                if allowed.len() < left && rng.random_bool(0.6) {
                    allowed.push(tok);
                }
            }
            *used += allowed.len();
            allowed
        });
        let (want, _) = exhaustive(&t, 3).ok_or("no finished sequence")?;
        let got = beam_search(&t, &cfg(3)).unwrap();
        ensure(got.finished && got.tokens == want, || format!("case {case}: width 3 gave {:?}, exhaustive {want:?}", got.tokens))?;

        // dense tables: a beam wide enough to hold every prefix is exhaustive
        let dense = random_table(&mut rng, 4, 3, |_, _| (0..4).collect());
        let (want, _) = exhaustive(&dense, 3).ok_or("no finished sequence")?;
        let got = beam_search(&dense, &cfg(64)).unwrap();
        ensure(got.tokens == want, || format!("case {case}: full-width beam differs from exhaustive"))?;

        let g = greedy(&dense, 3).unwrap();
        let b1 = beam_search(&dense, &cfg(1)).unwrap();
        ensure(g.tokens == b1.tokens && g.finished == b1.finished, || format!("case {case}: width 1 differs from greedy"))?;
    }
    Ok(format!("{BEAM_CASES} cases: width 3 == exhaustive, full width == exhaustive, width 1 == greedy"))
}

fn c6_baselines() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let hits = (0..RANDOM_TRIALS).filter(|_| random_choice(&mut rng, 6) == rng.random_range(0..6)).count();
    let acc = 100.0 * hits as f64 / RANDOM_TRIALS as f64;
    close("random accuracy", acc, RANDOM_CHANCE, RANDOM_TOL)?;
    for eval in 0..1000 {
        let n = rng.random_range(1..50);
        let rankings: Vec<RankedTarget> = (0..n)
            .map(|_| {
                let mut ranking: Vec<usize> = (0..6).collect();
                for i in (1..6).rev() {
                    ranking.swap(i, rng.random_range(0..=i));
                }
                RankedTarget { ranking, target: rng.random_range(0..6) }
            })
            .collect();
        let (a, m) = accuracy_mrr(&rankings).unwrap();
        ensure(a <= m + 1e-12, || format!("evaluation {eval}: accuracy {a} > MRR {m}"))?;
    }
    Ok(format!("random accuracy {acc:.2}% (target {RANDOM_CHANCE:.2} +/- {RANDOM_TOL}); acc <= MRR on 1000 evaluations"))
}

// Extraction oracle: a direct reading of the procedure over the raw JSON.

fn cosine(a: &[f32], b: &[f32]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| f64::from(*x) * f64::from(*y)).sum();
    let na: f64 = a.iter().map(|x| f64::from(*x).powi(2)).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| f64::from(*x).powi(2)).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

fn greedy_f1(emb: &HashEmbedding, cand: &[String], reference: &[String]) -> f64 {
    if cand.is_empty() || reference.is_empty() {
        return 0.0;
    }
    let c: Vec<Vec<f32>> = cand.iter().map(|t| emb.vector(t)).collect();
    let r: Vec<Vec<f32>> = reference.iter().map(|t| emb.vector(t)).collect();
    let p = c.iter().map(|x| r.iter().map(|y| cosine(x, y)).fold(f64::MIN, f64::max)).sum::<f64>() / c.len() as f64;
    let rc = r.iter().map(|y| c.iter().map(|x| cosine(x, y)).fold(f64::MIN, f64::max)).sum::<f64>() / r.len() as f64;
    if p + rc == 0.0 {
        0.0
    } else {
        2.0 * p * rc / (p + rc)
    }
}

fn fmean(cand: &[String], reference: &BTreeSet<String>) -> f64 {
    let matched: BTreeSet<&String> = cand.iter().filter(|t| reference.contains(*t)).collect();
    if matched.is_empty() {
        return 0.0;
    }
    let p = matched.len() as f64 / cand.len() as f64;
    let r = matched.len() as f64 / reference.len() as f64;
    10.0 * p * r / (r + 9.0 * p)
}

fn strs(v: &Value) -> Vec<String> {
    v.as_array().unwrap().iter().map(|s| s.as_str().unwrap().to_string()).collect()
}

/// (image, round) -> (message id, score) for one game.
fn oracle_game(
    game: &Value,
    captions: &BTreeMap<String, Vec<String>>,
    vg: &BTreeMap<String, BTreeSet<String>>,
    emb: &HashEmbedding,
    stop: &StopwordList,
    top_n: usize,
) -> BTreeMap<(String, u32), (u32, f64)> {
    let rounds = game["rounds"].as_array().unwrap();
    let sees = |r: &Value, spk: &str, img: &str| r["views"][spk].as_array().is_some_and(|v| v.iter().any(|i| i == img));
    let co_visible = |r: &Value, img: &str| r["views"].as_object().unwrap().keys().all(|s| sees(r, s, img));
    let filter = |text: &str| -> Vec<String> {
        tokenize(text).into_iter().filter(|t| t.chars().any(char::is_alphanumeric) && !stop.contains(t)).collect()
    };
    let filter_tokens = |toks: Vec<String>| -> Vec<String> { toks.into_iter().filter(|t| !stop.contains(t)).collect() };

    let mut dynamic: BTreeMap<String, Vec<String>> = BTreeMap::new();
    let mut out = BTreeMap::new();
    for (ri, round) in rounds.iter().enumerate() {
        let round_index = round["round_index"].as_u64().unwrap() as u32;
        let mut context: Vec<String> = Vec::new();
        for view in round["views"].as_object().unwrap().values() {
            for i in strs(view) {
                if !context.contains(&i) {
                    context.push(i);
                }
            }
        }
        let mut lists: BTreeMap<String, Vec<(u32, String, f64)>> = BTreeMap::new();
        for img in context.clone() {
            if !rounds[..=ri].iter().any(|r| co_visible(r, &img)) {
                continue;
            }
            let cut = round["selections"]
                .as_array()
                .unwrap()
                .iter()
                .filter(|s| s["image_id"] == img.as_str() && s["label"] == "common")
                .map(|s| s["after"].as_u64().unwrap() as u32)
                .min();
            let Some(cut) = cut else { continue };
            let mut target_only = vg.get(&img).cloned().unwrap_or_default();
            for other in context.iter().filter(|o| **o != img) {
                if let Some(d) = vg.get(other) {
                    target_only.retain(|t| !d.contains(t));
                }
            }
            let mut scored = Vec::new();
            for m in round["messages"].as_array().unwrap() {
                let id = m["message_id"].as_u64().unwrap() as u32;
                if id > cut || !sees(round, m["speaker"].as_str().unwrap(), &img) {
                    continue;
                }
                let text = m["text"].as_str().unwrap();
                let cand = filter(text);
                let refs = captions[&img].iter().chain(dynamic.get(&img).into_iter().flatten());
                let caption = refs.map(|c| greedy_f1(emb, &cand, &filter_tokens(tokenize(c)))).fold(0.0, f64::max);
                let has_vg = vg.get(&img).is_some_and(|s| !s.is_empty());
                let score = if has_vg { caption + fmean(&cand, &target_only) } else { caption };
                scored.push((id, text.to_string(), score));
            }
            if scored.is_empty() {
                continue;
            }
            scored.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)));
            scored.truncate(top_n);
            lists.insert(img, scored);
        }
        // every candidate assignment, keeping the one that obeys the rule
        let imgs: Vec<&String> = lists.keys().collect();
        let claimed = |img: &str, id: u32, score: f64| {
            lists.iter().any(|(o, l)| o != img && l.iter().any(|c| c.0 == id && (c.2 > score || (c.2 == score && o.as_str() < img))))
        };
        let mut choice: Vec<usize> = vec![0; imgs.len()];
        let mut found: Option<Vec<Option<usize>>> = None;
        loop {
            let pick: Vec<Option<usize>> =
                choice.iter().zip(&imgs).map(|(&c, img)| (c < lists[*img].len()).then_some(c)).collect();
            let valid = pick.iter().zip(&imgs).all(|(p, img)| {
                let l = &lists[*img];
                let before = p.unwrap_or(l.len());
                l[..before].iter().all(|c| claimed(img, c.0, c.2)) && p.is_none_or(|i| !claimed(img, l[i].0, l[i].2))
            });
            if valid {
                assert!(found.is_none(), "selection rule admits two assignments");
                found = Some(pick);
            }
            // odometer over 0..=len (len = nothing picked)
            let mut k = 0;
            while k < choice.len() {
                choice[k] += 1;
                if choice[k] <= lists[imgs[k]].len() {
                    break;
                }
                choice[k] = 0;
                k += 1;
            }
            if k == choice.len() {
                break;
            }
        }
        for (p, img) in found.unwrap_or_default().into_iter().zip(&imgs) {
            if let Some(i) = p {
                let (id, text, score) = lists[*img][i].clone();
                dynamic.entry((*img).clone()).or_default().push(text);
                out.insert(((*img).clone(), round_index), (id, score));
            }
        }
    }
    out
}

fn c7_extraction() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    write_fixture(dir.path()).unwrap();
    let d = dir.path();
    let read = |f: &str| std::fs::read_to_string(d.join(f)).unwrap();
    let games_raw: Vec<Value> = read("games.jsonl").lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    let captions: BTreeMap<String, Vec<String>> = serde_json::from_str(&read("captions.json")).unwrap();
    let sg: BTreeMap<String, Value> = serde_json::from_str(&read("scene_graphs.json")).unwrap();
    let vg: BTreeMap<String, BTreeSet<String>> = sg
        .into_iter()
        .map(|(k, v)| {
            let a: BTreeSet<String> = strs(&v["attributes"]).into_iter().map(|s| s.to_lowercase()).collect();
            let r: BTreeSet<String> = strs(&v["relationships"]).into_iter().map(|s| s.to_lowercase()).collect();
            (k, a.intersection(&r).cloned().collect())
        })
        .collect();
    let emb = HashEmbedding::new(32, 0);
    let stop = StopwordList::extraction();

    let games = refchain::corpus::load_games(&d.join("games.jsonl")).unwrap();
    let refsets = ReferenceSets::load(&d.join("captions.json"), &d.join("scene_graphs.json")).unwrap();
    let chains: Vec<ReferenceChain> = extract_chains(&games, &refsets, &emb as &dyn EmbeddingProvider, 4).unwrap();

    let mut n_links = 0;
    for g in &games_raw {
        let gid = g["game_id"].as_str().unwrap();
        let want = oracle_game(g, &captions, &vg, &emb, &stop, 4);
        let mut got = BTreeMap::new();
        for c in chains.iter().filter(|c| c.game_id == gid) {
            for e in &c.entries {
                got.insert((c.image_id.clone(), e.round_index), (e.message_id, e.score));
            }
        }
        ensure(got.keys().eq(want.keys()), || format!("{gid}: chain slots differ"))?;
        for (k, (id, score)) in &want {
            let (gid2, gscore) = got[k];
            ensure(gid2 == *id, || format!("{gid} {k:?}: message {gid2} vs oracle {id}"))?;
            close("score", gscore, *score, 1e-9)?;
        }
        n_links += want.len();
    }

    let link = |m: u32, img: &str| Link { game_id: "g".into(), round_index: 1, message_id: m, image_id: img.into() };
    let e = evaluate_extraction(&[link(1, "a"), link(2, "b"), link(3, "c")], &[link(1, "a"), link(2, "b"), link(4, "d"), link(5, "e")]);
    close("precision", e.precision.unwrap(), 2.0 / 3.0, HAND_TOL)?;
    close("recall", e.recall.unwrap(), 0.5, HAND_TOL)?;

    let gold: Vec<Link> = read("gold_links.jsonl").lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    let fx = evaluate_extraction(&Link::from_chains(&chains), &gold);
    Ok(format!(
        "{n_links} links match the oracle on 3 games; 3/2/4 -> P {:.3} R {:.3}; fixture P {:.3} R {:.3}",
        e.precision.unwrap(),
        e.recall.unwrap(),
        fx.precision.unwrap_or(0.0),
        fx.recall.unwrap_or(0.0)
    ))
}

fn toks(s: &str) -> Vec<String> {
    s.split_whitespace().map(String::from).collect()
}

fn c8_metrics() -> Outcome {
    let hyps = vec![toks("the red car on the road"), toks("man with a hat"), toks("two dogs")];
    let refs = vec![
        vec![toks("a red car on a road"), toks("the car is red")],
        vec![toks("a man wearing a hat")],
        vec![toks("two dogs playing"), toks("dogs in the grass")],
    ];
    // BLEU-2: 10/12 unigrams and 4/9 bigrams clip-match; lengths 12 vs closest 6+5+3
    let bleu_hand = 100.0 * (1.0f64 - 14.0 / 12.0).exp() * ((10.0 / 12.0) * (4.0 / 9.0f64)).sqrt();
    close("BLEU-2", bleu2(&hyps, &refs).unwrap(), bleu_hand, METRIC_DP4)?;
    close("BLEU-2 frozen", bleu_hand, 51.5152, METRIC_DP4)?;
    // ROUGE-L with beta 1.2 from the best LCS precision and recall per sentence
    let f = |p: f64, r: f64| 2.44 * p * r / (r + 1.44 * p);
    let rouge_hand = 100.0 * (f(4.0 / 6.0, 4.0 / 6.0) + f(3.0 / 4.0, 3.0 / 5.0) + f(1.0, 2.0 / 3.0)) / 3.0;
    close("ROUGE-L", rouge_l(&hyps, &refs).unwrap(), rouge_hand, METRIC_DP4)?;
    close("ROUGE-L frozen", rouge_hand, 69.7463, METRIC_DP4)?;
    // CIDEr value from an independent script over the same corpus
    close("CIDEr", cider(&hyps, &refs).unwrap(), 2.4981, METRIC_DP4)?;
    let set = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<BTreeSet<_>>();
    close("METEOR F-mean", meteor_fmean(&["guy", "camera"], &set(&["guy", "camera", "picture"])), 20.0 / 29.0, METRIC_DP4)?;
    close("METEOR F-mean 2", meteor_fmean(&["red", "car", "road", "sky"], &set(&["car", "road"])), 10.0 * 0.5 / (1.0 + 4.5), METRIC_DP4)?;
    let ranked = [
        RankedTarget { ranking: vec![2, 0, 1, 3, 4, 5], target: 2 },
        RankedTarget { ranking: vec![0, 2, 1, 3, 4, 5], target: 2 },
        RankedTarget { ranking: vec![5, 4, 3, 1, 0, 2], target: 1 },
    ];
    let (acc, mrr) = accuracy_mrr(&ranked).unwrap();
    close("accuracy", acc, 100.0 / 3.0, METRIC_DP4)?;
    close("MRR", mrr, 100.0 * (1.0 + 0.5 + 0.25) / 3.0, METRIC_DP4)?;

    // identity corpora; the sentences share no n-gram, so every idf is positive
    let ident = vec![toks("red car on a road"), toks("man wearing blue hat"), toks("two dogs playing outside")];
    let ident_refs: Vec<Vec<Vec<String>>> = ident.iter().map(|h| vec![h.clone()]).collect();
    close("BLEU-2 max", bleu2(&ident, &ident_refs).unwrap(), 100.0, METRIC_DP4)?;
    close("ROUGE-L max", rouge_l(&ident, &ident_refs).unwrap(), 100.0, METRIC_DP4)?;
    close("CIDEr max", cider(&ident, &ident_refs).unwrap(), 10.0, METRIC_DP4)?;
    close("METEOR max", meteor_fmean(&["car", "road"], &set(&["car", "road"])), 1.0, METRIC_DP4)?;
    let perfect: Vec<RankedTarget> = (0..6).map(|t| RankedTarget { ranking: vec![t], target: t }).collect();
    let (acc, mrr) = accuracy_mrr(&perfect).unwrap();
    close("accuracy max", acc, 100.0, METRIC_DP4)?;
    close("MRR max", mrr, 100.0, METRIC_DP4)?;
    Ok(format!("toy corpus and identity maxima within {METRIC_DP4}"))
}

/// Fixed word classes for the analysis fixture.
struct FixtureTagger;

impl PosTagger for FixtureTagger {
    fn tag(&self, tokens: &[String]) -> Vec<Pos> {
        const NOUNS: &[&str] = &[
            "man", "shirt", "dog", "table", "woman", "cake", "girl", "camera", "car", "truck", "bike", "guy", "pizza",
            "cat", "hat", "tree", "street",
        ];
        const ADJS: &[&str] = &["red", "big", "white", "old", "small"];
        const VERBS: &[&str] = &["holding", "riding", "wearing"];
        tokens
            .iter()
            .map(|t| {
                let t = t.as_str();
                if NOUNS.contains(&t) {
                    Pos::Noun
                } else if ADJS.contains(&t) {
                    Pos::Adj
                } else if VERBS.contains(&t) {
                    Pos::Verb
                } else {
                    Pos::Det
                }
            })
            .collect()
    }
}

const ANALYSIS_CHAINS: [(&str, &str); 10] = [
    ("a man with a red shirt", "the same man"),
    ("a dog on a table", "dog on table"),
    ("woman holding a cake", "the cake woman"),
    ("a girl with a camera", "camera girl"),
    ("a big white car", "the white truck again"),
    ("an old man riding a bike", "bike guy"),
    ("some pizza on a table", "the pizza"),
    ("a cat wearing a hat", "hat cat"),
    ("a small tree", "the same small tree"),
    ("a guy on the street", "street guy again"),
];

fn trend(s: &SystemSummary, m: &str) -> (f64, f64) {
    let t = s.trends.iter().find(|t| t.measure == m).unwrap();
    (t.first.unwrap(), t.later.unwrap())
}

fn c9_analysis() -> Outcome {
    let stop = StopwordList::parse("a\nan\nthe\nwith\non\nsame\nagain\nsome\n");
    let mut utts = Vec::new();
    for (i, (first, later)) in ANALYSIS_CHAINS.iter().enumerate() {
        utts.push(ChainUtterance { id: format!("{i}a"), chain_position: 1, tokens: toks(first), previous: None });
        utts.push(ChainUtterance { id: format!("{i}b"), chain_position: 2, tokens: toks(later), previous: Some(toks(first)) });
    }
    ensure(utts.len() == 20, || "fixture size".into())?;
    let a = analyze("human", &utts, &FixtureTagger, &stop, &AnalysisConfig::default());
    let r = profile_report(&a, &[]).unwrap();
    let s = &r.systems[0];

    // per-utterance counts are written out in the fixture comments below
    let pairs: [(&str, f64, f64); 6] = [
        // markers: only "the" in chain 10's first mention; later 2/3,0,1/3,0,2/4,0,1/2,0,2/4,1/3
        ("givenness", 0.2 / 10.0, 17.0 / 6.0 / 10.0),
        // tokens: 6 5 4 5 4 6 5 5 3 5 | 3 3 3 2 4 2 2 2 4 3
        ("length", 4.8, 2.8),
        // content tokens: 3 2 3 2 3 4 2 3 2 2 | 1 2 2 2 2 2 1 2 2 2
        ("length_c", 2.6, 1.8),
        // nouns over content: 2/3 1 2/3 1 1/3 2/4 1 2/3 1/2 1 | 1 1 1 1 1/2 1 1 1 1/2 1
        ("prop noun", 22.0 / 3.0 / 10.0, 0.9),
        // noun-noun over adjacent pairs: none first; later 1/2 1 1 1 1/2 (chains 3 4 6 8 10)
        ("nn bigrams", 0.0, 0.4),
        // indefinite: 2/6 2/5 1/4 2/5 1/4 2/6 2/5 2/5 1/3 1/5 | none
        ("indefinite", 0.33, 0.0),
    ];
    for (m, first, later) in pairs {
        let (f, l) = trend(s, m);
        close(&format!("{m} first"), f, first, HAND_TOL)?;
        close(&format!("{m} later"), l, later, HAND_TOL)?;
    }
    let reuse_mean = |m: &str| s.reuse_means.iter().find(|(k, _)| k == m).unwrap().1.unwrap();
    // reused content: 1 1 1 1 1/2 1/2 1 1 1 1
    close("reuse_c", reuse_mean("reuse_c"), 0.9, HAND_TOL)?;
    // content bigrams reused, over the 8 later mentions with two content tokens: chains 2 and 9
    close("reuse_bigrams_c", reuse_mean("reuse_bigrams_c"), 0.25, HAND_TOL)?;
    ensure(s.vocab_first == 30 && s.vocab_later == 21, || format!("vocab {} / {}", s.vocab_first, s.vocab_later))?;
    ensure(s.reuse_compounds == 4 && s.non_reuse_compounds == 1, || {
        format!("compounds {} / {}", s.reuse_compounds, s.non_reuse_compounds)
    })?;

    let d = cohens_d(&[1.0, 2.0, 3.0], &[2.0, 3.0, 4.0]).unwrap().unwrap();
    close("Cohen's d", d, -1.0, HAND_TOL)?;

    let mut rng = ChaCha8Rng::seed_from_u64(909);
    let words = ["dog", "man", "red", "the", "a", "on", "camera", "big", "tree", "again", "guy", ","];
    let big = StopwordList::analysis();
    let mut checked = 0;
    for _ in 0..REUSE_DRAWS {
        let n = rng.random_range(1..12);
        let mut u: Vec<String> = (0..n).map(|_| words[rng.random_range(0..words.len())].to_string()).collect();
        u.push(format!("w{}", rng.random_range(0..1000)));
        let tags = FixtureTagger.tag(&u);
        let r = reuse(&u, &u, &tags, &big).ok_or("content word missing")?;
        close("reuse(u,u)", r.reuse_c, 1.0, 0.0)?;
        checked += 1;
    }
    Ok(format!("20-utterance hand counts within {HAND_TOL}; d = {d}; reuse(u,u) = 1 on {checked} utterances"))
}

fn reports(out: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<(String, Vec<u8>)> = std::fs::read_dir(out.join("reports"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    v.sort();
    v
}

fn c10_determinism() -> Outcome {
    let t = Instant::now();
    let mut runs = Vec::new();
    for _ in 0..2 {
        let dir = tempfile::tempdir().unwrap();
        let m = ExperimentManifest::load(&write_fixture(dir.path()).unwrap()).unwrap();
        run_pipeline(&m, &Stage::ALL).map_err(|e| e.to_string())?;
        runs.push(reports(&m.output()));
    }
    ensure(runs[0].len() == 5, || format!("{} report files", runs[0].len()))?;
    ensure(runs[0] == runs[1], || "reports differ between runs".into())?;
    Ok(format!("{} report files byte-identical across two full runs ({:.0}s)", runs[0].len(), t.elapsed().as_secs_f64()))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("1 attention normalization", c1_attention),
        ("2 copy distribution", c2_copy),
        ("3 <nohs> exclusion", c3_nohs),
        ("4 overfit", c4_overfit),
        ("5 beam search", c5_beam),
        ("6 resolution baselines", c6_baselines),
        ("7 extraction oracle", c7_extraction),
        ("8 metric oracles", c8_metrics),
        ("9 linguistic analysis", c9_analysis),
        ("10 determinism", c10_determinism),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, f) in criteria {
        if !filter.is_empty() && !filter.iter().any(|x| name.contains(x.as_str())) {
            continue;
        }
        let outcome = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        match outcome {
            Ok(detail) => println!("criterion {name}: PASS ({detail})"),
            Err(why) => {
                failed += 1;
                println!("criterion {name}: FAIL ({why})");
            }
        }
    }
    println!("criterion 11 full-scale reproduction: SKIPPED (needs the original corpus and pretrained artifacts)");
    if failed > 0 {
        std::process::exit(1);
    }
}
