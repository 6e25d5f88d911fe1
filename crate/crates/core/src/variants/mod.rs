//! Assembly of each compared variant from the shared encoder blocks.

mod config;
mod kind;
mod model;

pub use config::{VariantConfig, DEFAULT_RELATIVE_CLIP, DEFAULT_DROPOUT, DEFAULT_SEQ_LEN};
pub use kind::{Tier, VariantKind, CONVBERT_REASON};
pub use model::{build, check_layout, EncoderModel, EncoderOutput, FrontEnd, PretrainHeads};
