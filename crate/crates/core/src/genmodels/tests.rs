use candle_core::{IndexOp, Tensor, D};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::synthetic::{gen_instance, generation_set, random_gen_instance};
use crate::textprep::{GenInstance, Vocabulary, NOHS};

fn tiny(variant: GenVariant, vocab: &Vocabulary) -> GenConfig {
    GenConfig {
        variant,
        vocab_size: vocab.len(),
        embed_dim: 8,
        hidden_dim: 6,
        attn_dim: 5,
        visual_dim: 4,
        context_size: 6,
        dropout: 0.0,
    }
}

fn zero_param(model: &GenerationModel, name: &str) {
    let v = model.params().get(name).unwrap();
    v.set(&v.as_tensor().zeros_like().unwrap()).unwrap();
}

fn per_position(fwd: &GenForward) -> Tensor {
    match (&fwd.logits, &fwd.probs) {
        (Some(l), _) => candle_nn::ops::softmax(l, D::Minus1).unwrap(),
        (None, Some(p)) => p.clone(),
        _ => unreachable!(),
    }
}

#[test]
fn attention_is_normalised_and_masked_in_padded_batches() {
    let set = generation_set(8, 4, 1);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let insts: Vec<GenInstance> = (0..6).map(|_| random_gen_instance(&mut rng, &set.vocab, 12, 5)).collect();
    let refs: Vec<&GenInstance> = insts.iter().collect();
    for variant in [GenVariant::ReRef, GenVariant::Copy] {
        let model = GenerationModel::new(tiny(variant, &set.vocab), 3).unwrap();
        let batch = GenBatch::new(&refs, &set.features, &set.vocab, 6).unwrap();
        let fwd = model.forward(&batch, None).unwrap();
        let a = fwd.attention.unwrap().to_vec3::<f32>().unwrap();
        for (b, rows) in a.iter().enumerate() {
            let len = batch.source_lengths[b];
            for row in rows {
                let s: f64 = row.iter().map(|&x| f64::from(x)).sum();
                assert!((s - 1.0).abs() < 1e-6);
                assert!(row[len..].iter().all(|&x| x == 0.0));
                assert!(row.iter().all(|&x| x >= 0.0));
            }
        }
    }
}

#[test]
fn batched_forward_matches_single_instances() {
    let set = generation_set(8, 4, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let insts: Vec<GenInstance> = (0..5).map(|_| random_gen_instance(&mut rng, &set.vocab, 12, 6)).collect();
    let refs: Vec<&GenInstance> = insts.iter().collect();
    for variant in GenVariant::ALL {
        let model = GenerationModel::new(tiny(variant, &set.vocab), 6).unwrap();
        let batch = GenBatch::new(&refs, &set.features, &set.vocab, 6).unwrap();
        let all = per_position(&model.forward(&batch, None).unwrap()).to_vec3::<f32>().unwrap();
        for (b, inst) in insts.iter().enumerate() {
            let single = GenBatch::new(&[inst], &set.features, &set.vocab, 6).unwrap();
            let one = per_position(&model.forward(&single, None).unwrap()).to_vec3::<f32>().unwrap();
            let steps = inst.target.len() - 1;
            for t in 0..steps {
                let k = one[0][t].len();
                for j in 0..k {
                    assert!((one[0][t][j] - all[b][t][j]).abs() < 1e-5, "{variant} b{b} t{t} j{j}");
                }
                // extra batch slots beyond this instance's extension stay empty
                assert!(all[b][t][k..].iter().all(|&x| x == 0.0));
            }
        }
    }
}

#[test]
fn copy_distribution_sums_to_one_and_skips_nohs() {
    let set = generation_set(8, 4, 7);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let model = GenerationModel::new(tiny(GenVariant::Copy, &set.vocab), 9).unwrap();
    for _ in 0..20 {
        let inst = random_gen_instance(&mut rng, &set.vocab, 12, 5);
        let batch = GenBatch::new(&[&inst], &set.features, &set.vocab, 6).unwrap();
        let fwd = model.forward(&batch, None).unwrap();
        for row in &fwd.probs.unwrap().to_vec3::<f32>().unwrap()[0] {
            let s: f64 = row.iter().map(|&x| f64::from(x)).sum();
            assert!((s - 1.0).abs() < 1e-6);
            assert_eq!(row[NOHS], 0.0);
        }
        for p in fwd.p_gen.unwrap().flatten_all().unwrap().to_vec1::<f32>().unwrap() {
            assert!(p > 0.0 && p < 1.0);
        }
    }
}

#[test]
fn zero_gate_weights_give_half() {
    let set = generation_set(4, 4, 1);
    let model = GenerationModel::new(tiny(GenVariant::Copy, &set.vocab), 2).unwrap();
    for n in ["copy.w_h.weight", "copy.w_s.weight", "copy.w_x.weight"] {
        zero_param(&model, n);
    }
    let batch = GenBatch::new(&[&set.instances[1]], &set.features, &set.vocab, 6).unwrap();
    let fwd = model.forward(&batch, None).unwrap();
    for p in fwd.p_gen.unwrap().flatten_all().unwrap().to_vec1::<f32>().unwrap() {
        assert_eq!(p, 0.5);
    }
}

#[test]
fn nohs_source_means_pure_generation() {
    let set = generation_set(4, 4, 1);
    let model = GenerationModel::new(tiny(GenVariant::Copy, &set.vocab), 2).unwrap();
    let inst = &set.instances[0];
    assert!(!inst.has_history());
    let batch = GenBatch::new(&[inst], &set.features, &set.vocab, 6).unwrap();
    let (ctx, h, c) = model.prepare(&batch, None).unwrap();
    let x = batch.input.i((.., 0)).unwrap().contiguous().unwrap();
    let out = model.decode_step(&ctx, &x, &h, &c).unwrap();
    let probs = out.probs.unwrap().to_vec2::<f32>().unwrap();
    assert_eq!(probs[0][NOHS], 0.0);
    let s: f64 = probs[0].iter().map(|&x| f64::from(x)).sum();
    assert!((s - 1.0).abs() < 1e-6);
}


#[test]
fn uniform_prediction_loss_is_t_ln_k() {
    let set = generation_set(6, 4, 11);
    for variant in [GenVariant::Ref, GenVariant::ReRef] {
        let model = GenerationModel::new(tiny(variant, &set.vocab), 3).unwrap();
        zero_param(&model, "output.weight");
        let refs: Vec<&GenInstance> = set.instances.iter().collect();
        let batch = GenBatch::new(&refs, &set.features, &set.vocab, 6).unwrap();
        let fwd = model.forward(&batch, None).unwrap();
        let loss = model.loss(&fwd, &batch).unwrap().to_scalar::<f32>().unwrap();
        let tokens: usize = set.instances.iter().map(|i| i.target.len() - 1).sum();
        let k = (set.vocab.len() - 1) as f64;
        let expect = tokens as f64 * k.ln();
        assert!((f64::from(loss) - expect).abs() < 1e-3 * expect, "{loss} vs {expect}");
    }
}

#[test]
fn gradients_reach_every_parameter() {
    let set = generation_set(10, 4, 12);
    let refs: Vec<&GenInstance> = set.instances.iter().collect();
    for variant in GenVariant::ALL {
        let model = GenerationModel::new(tiny(variant, &set.vocab), 13).unwrap();
        let batch = GenBatch::new(&refs, &set.features, &set.vocab, 6).unwrap();
        let fwd = model.forward(&batch, None).unwrap();
        let loss = model.loss(&fwd, &batch).unwrap();
        let grads = loss.backward().unwrap();
        for (name, var) in model.params().named() {
            let g = grads.get(var).unwrap_or_else(|| panic!("{variant}: no gradient for {name}"));
            let n = g.sqr().unwrap().sum_all().unwrap().to_scalar::<f32>().unwrap();
            assert!(n > 0.0, "{variant}: zero gradient for {name}");
        }
    }
}

#[test]
fn ref_ignores_previous_utterance() {
    let set = generation_set(4, 4, 14);
    let model = GenerationModel::new(tiny(GenVariant::Ref, &set.vocab), 15).unwrap();
    let base = &set.instances[1];
    let mut other = base.clone();
    other = gen_instance(other.id, other.context, other.target_pos, vec!["pizza".into(), "dog".into()], other.target_tokens, 2, &set.vocab);
    let a = model.forward(&GenBatch::new(&[base], &set.features, &set.vocab, 6).unwrap(), None).unwrap();
    let b = model.forward(&GenBatch::new(&[&other], &set.features, &set.vocab, 6).unwrap(), None).unwrap();
    assert_eq!(
        a.logits.unwrap().to_vec3::<f32>().unwrap(),
        b.logits.unwrap().to_vec3::<f32>().unwrap()
    );
}

#[test]
fn history_variants_react_to_previous_utterance() {
    let set = generation_set(4, 4, 16);
    let base = &set.instances[1];
    let other = gen_instance(base.id.clone(), base.context.clone(), base.target_pos, vec!["pizza".into(), "dog".into(), "red".into()], base.target_tokens.clone(), 2, &set.vocab);
    for variant in [GenVariant::ReRef, GenVariant::Copy] {
        let model = GenerationModel::new(tiny(variant, &set.vocab), 17).unwrap();
        let a = per_position(&model.forward(&GenBatch::new(&[base], &set.features, &set.vocab, 6).unwrap(), None).unwrap());
        let b = per_position(&model.forward(&GenBatch::new(&[&other], &set.features, &set.vocab, 6).unwrap(), None).unwrap());
        let n = a.dims()[2].min(b.dims()[2]);
        let diff = (a.narrow(2, 0, n).unwrap() - b.narrow(2, 0, n).unwrap()).unwrap().abs().unwrap().sum_all().unwrap().to_scalar::<f32>().unwrap();
        assert!(diff > 0.0);
    }
}

#[test]
fn visual_encoding_checks_shapes() {
    let set = generation_set(4, 4, 1);
    let model = GenerationModel::new(tiny(GenVariant::Ref, &set.vocab), 2).unwrap();
    let zero = vec![0.0f32; 4];
    let ctx: Vec<&[f32]> = vec![&zero; 6];
    let h = model.encode_visual_slices(&ctx, &zero).unwrap();
    // zero input with zero biases stays zero through ReLU and the fusion layer
    assert!(h.flatten_all().unwrap().to_vec1::<f32>().unwrap().iter().all(|&x| x == 0.0));
    assert!(model.encode_visual_slices(&ctx[..5], &zero).is_err());
    let short = vec![0.0f32; 3];
    assert!(model.encode_visual_slices(&ctx, &short).is_err());
}

#[test]
fn checkpoint_round_trip_preserves_outputs() {
    let set = generation_set(4, 4, 18);
    let dir = tempfile::tempdir().unwrap();
    for variant in GenVariant::ALL {
        let model = GenerationModel::new(tiny(variant, &set.vocab), 19).unwrap();
        let path = dir.path().join(format!("{variant}.ckpt"));
        model.save(&path, &set.vocab.content_hash()).unwrap();
        let (loaded, meta) = GenerationModel::load(&path).unwrap();
        assert_eq!(meta.variant, variant);
        let batch = GenBatch::new(&[&set.instances[1]], &set.features, &set.vocab, 6).unwrap();
        let a = per_position(&model.forward(&batch, None).unwrap()).to_vec3::<f32>().unwrap();
        let b = per_position(&loaded.forward(&batch, None).unwrap()).to_vec3::<f32>().unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn decoding_never_emits_nohs_and_width_one_is_greedy() {
    let set = generation_set(4, 4, 20);
    for variant in GenVariant::ALL {
        let model = GenerationModel::new(tiny(variant, &set.vocab), 21).unwrap();
        for inst in &set.instances {
            let dec = model.decoder_for(inst, &set.features, &set.vocab).unwrap();
            let g = greedy(&dec, 8).unwrap();
            let b = beam_search(&dec, &BeamConfig { width: 1, max_len: 8, length_normalize: true }).unwrap();
            assert_eq!(g.tokens, b.tokens);
            let out = model.generate(inst, &set.features, &set.vocab, &BeamConfig { width: 3, max_len: 8, length_normalize: true }).unwrap();
            assert!(!out.tokens.iter().any(|t| t == "<nohs>"));
        }
    }
}

#[test]
fn dropout_free_forward_is_bitwise_reproducible() {
    let set = generation_set(6, 4, 22);
    let refs: Vec<&GenInstance> = set.instances.iter().collect();
    for variant in GenVariant::ALL {
        let a = GenerationModel::new(tiny(variant, &set.vocab), 23).unwrap();
        let b = GenerationModel::new(tiny(variant, &set.vocab), 23).unwrap();
        let batch = GenBatch::new(&refs, &set.features, &set.vocab, 6).unwrap();
        let x = per_position(&a.forward(&batch, None).unwrap()).to_vec3::<f32>().unwrap();
        let y = per_position(&b.forward(&batch, None).unwrap()).to_vec3::<f32>().unwrap();
        assert_eq!(x, y);
    }
}
