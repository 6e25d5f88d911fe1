use alloc::format;
use alloc::vec::Vec;

use super::{join, Linear, Pass};
use crate::error::{Error, Result};
use crate::params::{Init, ParamId, ParamStore, WEIGHT_STD};
use crate::rng::SeedRng;
use crate::tape::Var;
use crate::tensor::Tensor;

/// Logit assigned to keys at invalid (padding) positions.
pub const MASK_LOGIT: f64 = -1e9;

/// Clipped-distance relative position tables, shared by all heads of one
/// layer: `[2k+1, N/H]` on the key side and on the value side.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RelativeTables {
    pub keys: ParamId,
    pub values: ParamId,
    pub clip: usize,
}

/// Row of the relative tables used by query `i` attending to key `j`:
/// `clip(j - i, -k, k) + k`.
pub fn relative_index(i: usize, j: usize, clip: usize) -> usize {
    let k = clip as isize;
    ((j as isize - i as isize).clamp(-k, k) + k) as usize
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AttentionParams {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub output: Linear,
    pub heads: usize,
    pub relative: Option<RelativeTables>,
}

/// Intermediate tensors of one attention call, `[B, H, L, L]` each.
#[derive(Debug, Clone, Copy)]
pub struct AttentionTrace {
    /// Scaled logits after masking, as fed to the softmax.
    pub logits: Var,
    /// Post-softmax, pre-dropout weights.
    pub weights: Var,
}

impl AttentionParams {
    pub fn new(
        store: &mut ParamStore,
        prefix: &str,
        hidden: usize,
        heads: usize,
        relative_clip: Option<usize>,
        rng: &mut SeedRng,
    ) -> Result<Self> {
        if heads == 0 || !hidden.is_multiple_of(heads) {
            return Err(Error::Config(format!("hidden size {hidden} not divisible by {heads} heads")));
        }
        let relative = relative_clip.map(|clip| {
            let shape = [2 * clip + 1, hidden / heads];
            RelativeTables {
                keys: store.init(join(prefix, "relative_keys"), &shape, Init::TruncatedNormal(WEIGHT_STD), rng),
                values: store.init(join(prefix, "relative_values"), &shape, Init::TruncatedNormal(WEIGHT_STD), rng),
                clip,
            }
        });
        Ok(Self {
            query: Linear::new(store, &join(prefix, "query"), hidden, hidden, true, rng),
            key: Linear::new(store, &join(prefix, "key"), hidden, hidden, true, rng),
            value: Linear::new(store, &join(prefix, "value"), hidden, hidden, true, rng),
            output: Linear::new(store, &join(prefix, "output"), hidden, hidden, true, rng),
            heads,
            relative,
        })
    }

    pub fn self_attention(&self, pass: &mut Pass, store: &ParamStore, x: Var, valid: &[bool], dropout: f64) -> Result<Var> {
        self.self_attention_traced(pass, store, x, valid, dropout).map(|(y, _)| y)
    }

    /// Multi-head scaled dot-product self-attention over `x: [B, L, N]`.
    /// `valid` holds `B * L` key-validity flags.
    pub fn self_attention_traced(
        &self,
        pass: &mut Pass,
        store: &ParamStore,
        x: Var,
        valid: &[bool],
        dropout: f64,
    ) -> Result<(Var, AttentionTrace)> {
        let shape = pass.g.shape(x).to_vec();
        let [b, l, n] = shape[..] else {
            return Err(Error::dim("self_attention", &shape, &[0, 0, 0]));
        };
        let h = self.heads;
        if h == 0 || n % h != 0 {
            return Err(Error::Config(format!("hidden size {n} not divisible by {h} heads")));
        }
        if valid.len() != b * l {
            return Err(Error::dim("attention mask", &[b, l], &[valid.len()]));
        }
        let d = n / h;

        let split_heads = |pass: &mut Pass, t: Var| -> Result<Var> {
            let t = pass.g.reshape(t, &[b, l, h, d])?;
            pass.g.permute(t, &[0, 2, 1, 3])
        };
        let q = self.query.forward(pass, store, x)?;
        let q = split_heads(pass, q)?;
        let k = self.key.forward(pass, store, x)?;
        let k = pass.g.reshape(k, &[b, l, h, d])?;
        let kt = pass.g.permute(k, &[0, 2, 3, 1])?;
        let v = self.value.forward(pass, store, x)?;
        let v = split_heads(pass, v)?;

        let mut logits = pass.g.matmul(q, kt)?;
        let rel_rows: Vec<usize> = match self.relative {
            Some(rel) => (0..l).flat_map(|i| (0..l).map(move |j| relative_index(i, j, rel.clip))).collect(),
            None => Vec::new(),
        };
        if let Some(rel) = self.relative {
            // q_i · a^K_{ij}, batched over query position i.
            let table = pass.g.param(store, rel.keys);
            let rk = pass.g.gather(table, &rel_rows)?;
            let rk = pass.g.reshape(rk, &[l, l, d])?;
            let rk = pass.g.permute(rk, &[0, 2, 1])?;
            let qp = pass.g.permute(q, &[2, 0, 1, 3])?;
            let qp = pass.g.reshape(qp, &[l, b * h, d])?;
            let rel_logits = pass.g.matmul(qp, rk)?;
            let rel_logits = pass.g.reshape(rel_logits, &[l, b, h, l])?;
            let rel_logits = pass.g.permute(rel_logits, &[1, 2, 0, 3])?;
            logits = pass.g.add(logits, rel_logits)?;
        }
        let logits = pass.g.scale(logits, 1.0 / libm::sqrt(d as f64));
        let logits = if valid.iter().all(|&v| v) {
            logits
        } else {
            let bias = valid.iter().map(|&v| if v { 0.0 } else { MASK_LOGIT }).collect();
            let bias = pass.g.constant(Tensor::new(&[b, 1, 1, l], bias)?);
            pass.g.add(logits, bias)?
        };
        let weights = pass.g.softmax(logits, 3)?;
        let dropped = pass.dropout(weights, dropout)?;
        let mut ctx = pass.g.matmul(dropped, v)?;
        if let Some(rel) = self.relative {
            // Σ_j w_ij a^V_{ij}
            let table = pass.g.param(store, rel.values);
            let rv = pass.g.gather(table, &rel_rows)?;
            let rv = pass.g.reshape(rv, &[l, l, d])?;
            let wp = pass.g.permute(dropped, &[2, 0, 1, 3])?;
            let wp = pass.g.reshape(wp, &[l, b * h, l])?;
            let rel_ctx = pass.g.matmul(wp, rv)?;
            let rel_ctx = pass.g.reshape(rel_ctx, &[l, b, h, d])?;
            let rel_ctx = pass.g.permute(rel_ctx, &[1, 2, 0, 3])?;
            ctx = pass.g.add(ctx, rel_ctx)?;
        }
        let ctx = pass.g.permute(ctx, &[0, 2, 1, 3])?;
        let ctx = pass.g.reshape(ctx, &[b, l, n])?;
        let out = self.output.forward(pass, store, ctx)?;
        Ok((out, AttentionTrace { logits, weights }))
    }
}
