//! Utterance-level pooling and the contrastive alignment objective.

mod head;
mod infonce;
mod pool;

pub use head::{HeadCache, ProjectionHead};
pub use infonce::{infonce_backward, infonce_bidirectional, InfoNce};
pub use pool::{masked_attention_pool, AttentionPool, PoolOutput, MASKED_SCORE};

/// Temperature, shared width and head hidden width of the alignment stage.
#[derive(Clone, Debug, PartialEq)]
pub struct CpaConfig {
    pub temperature: f64,
    pub d_align: usize,
    pub hidden: usize,
}

impl Default for CpaConfig {
    fn default() -> Self {
        CpaConfig {
            temperature: 0.25,
            d_align: 256,
            hidden: 512,
        }
    }
}
