//! Two-token transformer fusion of the branch embeddings and the classifier.

mod attention;
mod classifier;
mod encoder;

pub use attention::{AttentionCache, MultiHeadAttention};
pub use classifier::{classify, ClassifierCache, cross_entropy, cross_entropy_grad, ClassifierHead, Prediction};
pub use encoder::{LayerCache, FusionCache, FusionConfig, FusionEncoder, FusionLayer};
