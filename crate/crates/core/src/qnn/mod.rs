//! Quaternion layers and the spectral encoder built from them.
//!
//! Every layer has an explicit forward and backward pass; there is no
//! general autodiff. Feature maps are [`QTensor`]s of shape
//! `[channels, 4, frames, bins]` whose masked frames stay zero throughout.

mod block;
mod bn;
mod conv;
mod encoder;
mod pool;
mod relu;
mod tensor;

pub use block::{BlockCache, QseBlock};
pub use bn::{BnCache, Mode, QBatchNorm};
pub use conv::{FreqPadding, QConvLayer, BANK_NAMES};
pub use encoder::{vectorize, QseConfig, QseEncoder, QseTrace};
pub use pool::{FreqPool, PoolRoute};
pub use relu::QRelu;
pub use tensor::QTensor;
