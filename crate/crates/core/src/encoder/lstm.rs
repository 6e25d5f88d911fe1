use alloc::vec::Vec;

use super::{join, Pass};
use crate::error::{Error, Result};
use crate::params::{Init, ParamId, ParamStore, WEIGHT_STD};
use crate::rng::SeedRng;
use crate::tape::Var;
use crate::tensor::Tensor;

/// Single-direction LSTM. Gate blocks along the last axis of every matrix are
/// ordered input, forget, cell, output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LstmParams {
    /// `[in, 4h]`
    pub input: ParamId,
    /// `[h, 4h]`
    pub recurrent: ParamId,
    /// `[4h]`
    pub bias: ParamId,
    pub width: usize,
}

impl LstmParams {
    pub fn new(store: &mut ParamStore, prefix: &str, fan_in: usize, width: usize, rng: &mut SeedRng) -> Self {
        let std = Init::TruncatedNormal(WEIGHT_STD);
        Self {
            input: store.init(join(prefix, "input"), &[fan_in, 4 * width], std, rng),
            recurrent: store.init(join(prefix, "recurrent"), &[width, 4 * width], std, rng),
            bias: store.init(join(prefix, "bias"), &[4 * width], Init::Zeros, rng),
            width,
        }
    }

    /// `[B,L,in]` → `[B,L,h]`, zero initial state, full output sequence.
    pub fn lstm_forward(&self, pass: &mut Pass, store: &ParamStore, x: Var) -> Result<Var> {
        let shape = pass.g.shape(x).to_vec();
        let [b, l, _] = shape[..] else {
            return Err(Error::dim("lstm", &shape, &[0, 0, 0]));
        };
        let h = self.width;
        let w_in = pass.g.param(store, self.input);
        let w_rec = pass.g.param(store, self.recurrent);
        let bias = pass.g.param(store, self.bias);
        let projected = pass.g.matmul(x, w_in)?;
        let projected = pass.g.add(projected, bias)?;
        let mut hidden = pass.g.constant(Tensor::zeros(&[b, h]));
        let mut cell = pass.g.constant(Tensor::zeros(&[b, h]));
        let mut outputs = Vec::with_capacity(l);
        for t in 0..l {
            let xt = pass.g.slice(projected, 1, t, 1)?;
            let xt = pass.g.reshape(xt, &[b, 4 * h])?;
            let rec = pass.g.matmul(hidden, w_rec)?;
            let gates = pass.g.add(xt, rec)?;
            let i = pass.g.slice(gates, 1, 0, h)?;
            let f = pass.g.slice(gates, 1, h, h)?;
            let c = pass.g.slice(gates, 1, 2 * h, h)?;
            let o = pass.g.slice(gates, 1, 3 * h, h)?;
            let i = pass.g.sigmoid(i);
            let f = pass.g.sigmoid(f);
            let c = pass.g.tanh(c);
            let o = pass.g.sigmoid(o);
            let kept = pass.g.mul(f, cell)?;
            let fresh = pass.g.mul(i, c)?;
            cell = pass.g.add(kept, fresh)?;
            let squashed = pass.g.tanh(cell);
            hidden = pass.g.mul(o, squashed)?;
            outputs.push(pass.g.reshape(hidden, &[b, 1, h])?);
        }
        pass.g.concat(&outputs, 1)
    }
}

/// LSTM whose output is brought back to the model width. When the LSTM is
/// narrower than the model a bias-free `[h, N]` projection follows it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LstmBlock {
    pub lstm: LstmParams,
    pub projection: Option<ParamId>,
}

impl LstmBlock {
    pub fn new(store: &mut ParamStore, prefix: &str, hidden: usize, width: usize, rng: &mut SeedRng) -> Self {
        let lstm = LstmParams::new(store, prefix, hidden, width, rng);
        let projection = (width != hidden)
            .then(|| store.init(join(prefix, "projection"), &[width, hidden], Init::TruncatedNormal(WEIGHT_STD), rng));
        Self { lstm, projection }
    }

    pub fn forward(&self, pass: &mut Pass, store: &ParamStore, x: Var) -> Result<Var> {
        let y = self.lstm.lstm_forward(pass, store, x)?;
        match self.projection {
            Some(p) => {
                let p = pass.g.param(store, p);
                pass.g.matmul(y, p)
            }
            None => Ok(y),
        }
    }

    /// Every parameter of the block.
    pub fn params(&self) -> Vec<ParamId> {
        let mut ids = alloc::vec![self.lstm.input, self.lstm.recurrent, self.lstm.bias];
        ids.extend(self.projection);
        ids
    }
}
