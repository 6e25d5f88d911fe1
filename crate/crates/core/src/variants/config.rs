use alloc::format;

use super::{Tier, VariantKind};
use crate::error::{Error, Result};
use crate::vocab::RESERVED;

/// Default clip distance for relative attention.
pub const DEFAULT_RELATIVE_CLIP: usize = 16;
/// Sequence length for pre-training and fine-tuning.
pub const DEFAULT_SEQ_LEN: usize = 64;
pub const DEFAULT_DROPOUT: f64 = 0.1;

/// Complete architectural description of one variant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VariantConfig {
    pub kind: VariantKind,
    pub layers: usize,
    pub hidden: usize,
    pub heads: usize,
    pub vocab: usize,
    /// Longest accepted input (before any sequence doubling).
    pub max_len: usize,
    pub dropout: f64,
    /// Relative attention clip distance `k` (RTE only).
    pub relative_clip: usize,
    /// LSTM state width (RNN and RNN-IN only).
    pub lstm_hidden: usize,
}

impl VariantConfig {
    /// Preset for `kind` at its default tier.
    pub fn preset(kind: VariantKind, vocab: usize) -> Self {
        let tier = kind.tier();
        Self::sized(kind, tier.layers(), tier.hidden(), tier.heads(), vocab, DEFAULT_SEQ_LEN)
    }

    /// Origin topology at the given tier; the parity baseline.
    pub fn baseline(tier: Tier, vocab: usize) -> Self {
        Self::sized(VariantKind::Origin, tier.layers(), tier.hidden(), tier.heads(), vocab, DEFAULT_SEQ_LEN)
    }

    pub fn sized(kind: VariantKind, layers: usize, hidden: usize, heads: usize, vocab: usize, max_len: usize) -> Self {
        Self {
            kind,
            layers,
            hidden,
            heads,
            vocab,
            max_len,
            dropout: DEFAULT_DROPOUT,
            relative_clip: DEFAULT_RELATIVE_CLIP,
            lstm_hidden: (hidden / 4).max(1),
        }
    }

    /// V=100, L=8, N=16, H=2, 2 layers, k=4.
    pub fn tiny(kind: VariantKind) -> Self {
        Self {
            relative_clip: 4,
            ..Self::sized(kind, 2, 16, 2, 100, 8)
        }
    }

    pub fn with_kind(self, kind: VariantKind) -> Self {
        Self { kind, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.kind.is_supported() {
            return Err(self.kind.unsupported_error());
        }
        let fail = |msg: alloc::string::String| Err(Error::Config(msg));
        if self.layers == 0 || self.hidden == 0 || self.max_len == 0 || self.lstm_hidden == 0 {
            return fail(format!("layers, hidden, max_len and lstm_hidden must be positive: {self:?}"));
        }
        if self.heads == 0 || !self.hidden.is_multiple_of(self.heads) {
            return fail(format!("hidden size {} not divisible by {} heads", self.hidden, self.heads));
        }
        if self.vocab <= RESERVED.len() {
            return fail(format!("vocabulary of {} leaves no room beyond reserved tokens", self.vocab));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail(format!("dropout probability {} outside [0, 1)", self.dropout));
        }
        Ok(())
    }

    /// Number of positions the attention layers see for an input of length `len`.
    pub fn attention_len(&self, len: usize) -> usize {
        if self.kind.doubles_sequence() {
            2 * len
        } else {
            len
        }
    }

    /// "3 layer, 768 hidden size"
    pub fn layer_setting(&self) -> alloc::string::String {
        format!("{} layer, {} hidden size", self.layers, self.hidden)
    }
}
