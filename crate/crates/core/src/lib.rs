//! Numerical core for comparing BERT-style encoder variants.
//!
//! Everything here is `no_std` + `alloc`: dense `f64` tensors with a
//! reverse-mode tape, Adam, the shared encoder blocks, the eight variant
//! topologies, character vocabularies, masked-LM/NSP example generation and
//! the training loops. File formats, checkpoints and the CLI live in the
//! `bertlab` crate.
#![no_std]

extern crate alloc;

pub mod encoder;
pub mod error;
pub mod finetune;
pub mod gradcheck;
pub mod optim;
pub mod parity;
pub mod params;
pub mod pretrain;
pub mod rng;
pub mod synthetic;
pub mod tape;
pub mod tensor;
pub mod variants;
pub mod vocab;

pub use error::{Error, Result};
pub use optim::{adam_step, AdamConfig, AdamState};
pub use params::{Init, ParamId, ParamStore, StoreTag};
pub use rng::SeedRng;
pub use tape::{Gradients, Graph, ParamGrads, Var};
pub use tensor::Tensor;
