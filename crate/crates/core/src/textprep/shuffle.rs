use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::instance::{GenInstance, ResInstance};
use crate::util::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShuffleMode {
    /// Reshuffled at the start of every epoch (resolution models).
    PerEpoch,
    /// Shuffled once before training (generation models).
    Once,
}

/// Instances whose candidate order can be permuted.
pub trait Shuffleable {
    fn context_len(&self) -> usize;
    /// Reorders candidates so that new position `i` holds old position `perm[i]`.
    fn permute(&mut self, perm: &[usize]);
}

/// Applies `perm` (new[i] = old[perm[i]]) and returns the updated target position.
pub fn apply_permutation<T: Clone>(items: &mut Vec<T>, target_pos: usize, perm: &[usize]) -> usize {
    assert_eq!(items.len(), perm.len(), "permutation length mismatch");
    let old = items.clone();
    *items = perm.iter().map(|&p| old[p].clone()).collect();
    perm.iter()
        .position(|&p| p == target_pos)
        .expect("perm is a permutation")
}

impl Shuffleable for GenInstance {
    fn context_len(&self) -> usize {
        self.context.len()
    }

    fn permute(&mut self, perm: &[usize]) {
        self.target_pos = apply_permutation(&mut self.context, self.target_pos, perm);
    }
}

impl Shuffleable for ResInstance {
    fn context_len(&self) -> usize {
        self.context.len()
    }

    fn permute(&mut self, perm: &[usize]) {
        let old_target = self.target_pos;
        self.target_pos = apply_permutation(&mut self.context, old_target, perm);
        apply_permutation(&mut self.histories, old_target, perm);
    }
}

/// Uniformly permutes every instance's candidates. The permutation of each
/// instance depends only on `(seed, epoch, position in dataset)`; with
/// [`ShuffleMode::Once`] the epoch is ignored.
pub fn shuffle_contexts<T: Shuffleable>(data: &mut [T], mode: ShuffleMode, seed: u64, epoch: usize) {
    let epoch = match mode {
        ShuffleMode::PerEpoch => epoch as u64,
        ShuffleMode::Once => 0,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "context-shuffle", epoch));
    for inst in data.iter_mut() {
        let n = inst.context_len();
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);
        inst.permute(&perm);
    }
}
