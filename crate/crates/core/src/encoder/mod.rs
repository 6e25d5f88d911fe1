//! Shared building blocks every variant is assembled from.

mod attention;
mod conv;
mod embedding;
mod layer;
mod lstm;

pub use attention::{relative_index, AttentionParams, AttentionTrace, RelativeTables, MASK_LOGIT};
pub use conv::ConvFrontEnd;
pub use embedding::EmbeddingStack;
pub use layer::{FeedForward, TransformerLayer, FFN_MULTIPLIER};
pub use lstm::{LstmBlock, LstmParams};

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::params::{Init, ParamId, ParamStore, WEIGHT_STD};
use crate::rng::SeedRng;
use crate::tape::{Graph, Var};

pub const LAYER_NORM_EPS: f64 = 1e-12;

/// One forward pass: the tape plus the dropout policy. A pass built with
/// [`Pass::train`] applies dropout from the supplied generator; [`Pass::eval`]
/// never does.
pub struct Pass<'r> {
    pub g: Graph,
    rng: Option<&'r mut SeedRng>,
}

impl<'r> Pass<'r> {
    pub fn eval() -> Self {
        Self { g: Graph::new(), rng: None }
    }

    pub fn train(rng: &'r mut SeedRng) -> Self {
        Self {
            g: Graph::new(),
            rng: Some(rng),
        }
    }

    pub fn training(&self) -> bool {
        self.rng.is_some()
    }

    pub fn dropout(&mut self, x: Var, p: f64) -> Result<Var> {
        self.g.dropout(x, p, self.rng.as_deref_mut())
    }
}

/// Token ids, segment ids and validity flags for a `[batch, len]` block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenBatch {
    pub batch: usize,
    pub len: usize,
    pub ids: Vec<usize>,
    pub segments: Vec<usize>,
    pub valid: Vec<bool>,
}

impl TokenBatch {
    pub fn new(batch: usize, len: usize, ids: Vec<usize>, segments: Vec<usize>, valid: Vec<bool>) -> Result<Self> {
        let n = batch * len;
        if n == 0 || ids.len() != n || segments.len() != n || valid.len() != n {
            return Err(Error::dim("token batch", &[batch, len], &[ids.len(), segments.len(), valid.len()]));
        }
        Ok(Self {
            batch,
            len,
            ids,
            segments,
            valid,
        })
    }

    /// Single-segment batch with every position valid.
    pub fn from_ids(batch: usize, len: usize, ids: Vec<usize>) -> Result<Self> {
        let n = ids.len();
        Self::new(batch, len, ids, alloc::vec![0; n], alloc::vec![true; n])
    }
}

/// Dense layer `x · W (+ b)` with `W` stored as `[in, out]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
}

impl Linear {
    pub fn new(store: &mut ParamStore, name: &str, fan_in: usize, fan_out: usize, bias: bool, rng: &mut SeedRng) -> Self {
        let weight = store.init(format!("{name}.weight"), &[fan_in, fan_out], Init::TruncatedNormal(WEIGHT_STD), rng);
        let bias = bias.then(|| store.init(format!("{name}.bias"), &[fan_out], Init::Zeros, rng));
        Self { weight, bias }
    }

    pub fn forward(&self, pass: &mut Pass, store: &ParamStore, x: Var) -> Result<Var> {
        let w = pass.g.param(store, self.weight);
        let y = pass.g.matmul(x, w)?;
        match self.bias {
            Some(b) => {
                let b = pass.g.param(store, b);
                pass.g.add(y, b)
            }
            None => Ok(y),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerNormParams {
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl LayerNormParams {
    pub fn new(store: &mut ParamStore, name: &str, width: usize, rng: &mut SeedRng) -> Self {
        Self {
            gamma: store.init(format!("{name}.gamma"), &[width], Init::Ones, rng),
            beta: store.init(format!("{name}.beta"), &[width], Init::Zeros, rng),
        }
    }

    pub fn forward(&self, pass: &mut Pass, store: &ParamStore, x: Var) -> Result<Var> {
        let gamma = pass.g.param(store, self.gamma);
        let beta = pass.g.param(store, self.beta);
        pass.g.layer_norm(x, gamma, beta, LAYER_NORM_EPS)
    }
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    format!("{prefix}.{name}")
}
