//! Decoders from network state to predictions.

mod bucket;
mod softmax;
mod symbols;

pub use bucket::Bucketizer;
pub use softmax::{argmax, softmax, PointEstimate, SoftmaxClassifier, SoftmaxParams};
pub use symbols::{Ranked, SymbolTable};
