//! Seeded synthetic datasets for tests, benchmarks and overfitting checks.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::features::FeatureTable;
use crate::textprep::{
    extend_for_copy, GenInstance, History, ResInstance, Vocabulary, CONTEXT_SIZE, EOS, NOHS_TOKEN,
    SOS,
};

const WORDS: &[&str] = &[
    "red", "blue", "green", "dog", "cat", "man", "woman", "car", "tree", "pizza", "table", "hat",
    "small", "big", "with", "on", "the", "a", "two", "bike",
];

pub struct GenerationSet {
    pub vocab: Vocabulary,
    pub features: FeatureTable,
    pub instances: Vec<GenInstance>,
}

pub struct ResolutionSet {
    pub features: FeatureTable,
    pub instances: Vec<ResInstance>,
}

fn image_id(i: usize) -> String {
    format!("img_{i}")
}

/// A context of six distinct images containing `target`, shuffled.
fn context(rng: &mut ChaCha8Rng, images: usize, target: usize) -> (Vec<String>, usize) {
    let mut others: Vec<usize> = (0..images).filter(|&i| i != target).collect();
    others.shuffle(rng);
    let mut ctx: Vec<usize> = others.into_iter().take(CONTEXT_SIZE - 1).collect();
    ctx.push(target);
    ctx.shuffle(rng);
    let pos = ctx.iter().position(|&i| i == target).unwrap();
    (ctx.into_iter().map(image_id).collect(), pos)
}

/// Encodes a generation instance from surface tokens.
pub fn gen_instance(
    id: String,
    context: Vec<String>,
    target_pos: usize,
    source_tokens: Vec<String>,
    target_tokens: Vec<String>,
    chain_position: usize,
    vocab: &Vocabulary,
) -> GenInstance {
    let (ext, source_ext) = extend_for_copy(&source_tokens, vocab);
    let mut target = vec![SOS];
    target.extend(vocab.encode(&target_tokens));
    target.push(EOS);
    let mut target_ext = vec![SOS];
    target_ext.extend(ext.map_target(&target_tokens, vocab));
    target_ext.push(EOS);
    GenInstance {
        id,
        game_id: "synthetic".into(),
        round_index: chain_position as u32,
        message_id: 0,
        image_id: context[target_pos].clone(),
        chain_position,
        context,
        target_pos,
        source: vocab.encode(&source_tokens),
        source_ext,
        extra: ext.extra,
        source_tokens,
        target_tokens: target_tokens.clone(),
        target,
        target_ext,
        chain_refs: vec![target_tokens],
    }
}

/// `n` instances over 12 images; each image has a fixed 2-4 word
/// description, so the target features determine the utterance. Half of the
/// instances are later mentions whose source is the image's description.
pub fn generation_set(n: usize, visual_dim: usize, seed: u64) -> GenerationSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let images = 12;
    let descriptions: Vec<Vec<String>> = (0..images)
        .map(|_| {
            let len = rng.random_range(2..=4);
            (0..len)
                .map(|_| WORDS[rng.random_range(0..WORDS.len())].to_string())
                .collect()
        })
        .collect();
    let vocab = Vocabulary::build(WORDS.iter().map(|w| vec![w.to_string()]), 1);
    let features = FeatureTable::synthetic((0..images).map(image_id), visual_dim, seed);
    let instances = (0..n)
        .map(|k| {
            let target = rng.random_range(0..images);
            let (ctx, pos) = context(&mut rng, images, target);
            let later = k % 2 == 1;
            let source = if later {
                descriptions[target].clone()
            } else {
                vec![NOHS_TOKEN.to_string()]
            };
            gen_instance(
                format!("syn:{k}"),
                ctx,
                pos,
                source,
                descriptions[target].clone(),
                if later { 2 } else { 1 },
                &vocab,
            )
        })
        .collect();
    GenerationSet {
        vocab,
        features,
        instances,
    }
}

/// Random instance over `vocab` for property tests: arbitrary source (or
/// `<nohs>`), optional out-of-vocabulary source words copied into the target.
pub fn random_gen_instance(
    rng: &mut ChaCha8Rng,
    vocab: &Vocabulary,
    images: usize,
    max_len: usize,
) -> GenInstance {
    let words: Vec<String> = vocab.tokens()[5..].to_vec();
    let pick = |rng: &mut ChaCha8Rng| -> String {
        if rng.random_bool(0.2) || words.is_empty() {
            format!("oov{}", rng.random_range(0..3))
        } else {
            words[rng.random_range(0..words.len())].clone()
        }
    };
    let source: Vec<String> = if rng.random_bool(0.3) {
        vec![NOHS_TOKEN.to_string()]
    } else {
        (0..rng.random_range(1..=max_len)).map(|_| pick(rng)).collect()
    };
    let target: Vec<String> = (0..rng.random_range(1..=max_len)).map(|_| pick(rng)).collect();
    let t = rng.random_range(0..images);
    let (ctx, pos) = context(rng, images, t);
    let later = source[0] != NOHS_TOKEN;
    gen_instance("rand".into(), ctx, pos, source, target, if later { 2 } else { 1 }, vocab)
}

/// `n` resolution instances over 12 images whose features are separable.
/// Utterances name the target's word; some candidates carry histories.
pub fn resolution_set(n: usize, visual_dim: usize, seed: u64) -> ResolutionSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let images = 12;
    let features = FeatureTable::synthetic((0..images).map(image_id), visual_dim, seed);
    let instances = (0..n)
        .map(|k| {
            let target = rng.random_range(0..images);
            let (ctx, pos) = context(&mut rng, images, target);
            let word = WORDS[target % WORDS.len()].to_string();
            let histories = ctx
                .iter()
                .map(|img| {
                    rng.random_bool(0.3).then(|| History {
                        utterance_id: format!("synthetic:0:0:{img}"),
                        tokens: vec!["the".into(), img.clone()],
                    })
                })
                .collect();
            ResInstance {
                id: format!("res:{k}"),
                game_id: "synthetic".into(),
                round_index: 1,
                message_id: k as u32,
                image_id: ctx[pos].clone(),
                chain_position: 1,
                tokens: vec!["the".into(), word, image_id(target)],
                context: ctx,
                target_pos: pos,
                histories,
            }
        })
        .collect();
    ResolutionSet {
        features,
        instances,
    }
}
