use super::{join, Pass};
use crate::error::Result;
use crate::params::{Init, ParamId, ParamStore, WEIGHT_STD};
use crate::rng::SeedRng;
use crate::tape::Var;

/// Height-1 convolution with one input channel and `N` output channels: `N`
/// filters of shape `1 × N`, stride 1, ReLU, no pooling. Maps `[B,L,N]` to
/// `[B,L,N]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvFrontEnd {
    /// `[N_in, N_out]`; column `c` is filter `c`.
    pub kernel: ParamId,
    pub bias: ParamId,
}

impl ConvFrontEnd {
    pub fn new(store: &mut ParamStore, prefix: &str, hidden: usize, rng: &mut SeedRng) -> Self {
        Self {
            kernel: store.init(join(prefix, "kernel"), &[hidden, hidden], Init::TruncatedNormal(WEIGHT_STD), rng),
            bias: store.init(join(prefix, "bias"), &[hidden], Init::Zeros, rng),
        }
    }

    pub fn conv_extract(&self, pass: &mut Pass, store: &ParamStore, x: Var) -> Result<Var> {
        let k = pass.g.param(store, self.kernel);
        let b = pass.g.param(store, self.bias);
        let y = pass.g.matmul(x, k)?;
        let y = pass.g.add(y, b)?;
        Ok(pass.g.relu(y))
    }
}
