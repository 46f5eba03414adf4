//! Referring-utterance generators.
//!
//! All three variants encode the six candidate images and the target into a
//! vector `h_d`. **Ref** feeds `h_d` to the decoder at every step. **ReRef**
//! initialises a bidirectional encoder over the previous mention with `h_d`
//! and attends over its outputs. **Copy** adds a gate that mixes generation
//! with copying source tokens, including ones outside the vocabulary.
//!
//! The decoder output space never contains `<nohs>`: Ref and ReRef predict
//! over `|V| - 1` tokens, Copy over `|V| + extra` with `<nohs>` pinned to 0.

mod batch;
mod beam;
mod config;
mod copy;
mod model;

pub use batch::{visual_inputs, GenBatch};
pub use beam::{beam_search, greedy, BeamConfig, Decoded, StepModel};
pub use config::{GenConfig, GenVariant};
pub use copy::{expand_output_distribution, mix_copy_distribution};
pub use model::{
    Attention, DecoderContext, EncoderState, GenCheckpointMeta, GenForward, Generated,
    GenerationModel, InstanceDecoder, StepOutput,
};

#[cfg(test)]
mod tests;
