//! Trainable-parameter accounting and the ±20% parity budget.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::params::ParamStore;
use crate::variants::{EncoderModel, Tier, VariantKind};

/// Largest accepted relative deviation from the tier baseline.
pub const PARITY_BUDGET: f64 = 0.20;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamCount {
    pub total: usize,
    /// Subtotals per named block, in first-appearance order.
    pub blocks: Vec<(String, usize)>,
}

fn block_of(name: &str) -> String {
    let parts: Vec<&str> = name.split('.').collect();
    let numeric = |s: &str| s.bytes().all(|b| b.is_ascii_digit());
    let mut take = 1;
    if parts[0] == "lstm" {
        take = 2;
    }
    if parts.len() > take && numeric(parts[take]) {
        take += 1;
    }
    parts[..take.min(parts.len())].join(".")
}

pub fn count_store(store: &ParamStore) -> ParamCount {
    let mut blocks: Vec<(String, usize)> = Vec::new();
    for (name, t) in store.iter() {
        let key = block_of(name);
        match blocks.iter_mut().find(|(k, _)| *k == key) {
            Some((_, n)) => *n += t.len(),
            None => blocks.push((key, t.len())),
        }
    }
    ParamCount {
        total: store.scalar_count(),
        blocks,
    }
}

pub fn count_params(model: &EncoderModel) -> ParamCount {
    count_store(&model.store)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParityVerdict {
    pub kind: VariantKind,
    pub count: usize,
    pub baseline: usize,
    pub ratio: f64,
    pub pass: bool,
}

/// `|count - baseline| / baseline`
pub fn parity_ratio(count: usize, baseline: usize) -> f64 {
    (count as f64 - baseline as f64).abs() / baseline as f64
}

/// Judges every `(kind, count)` against the baseline of its tier.
pub fn check_parity(counts: &[(VariantKind, usize)], baselines: &BTreeMap<Tier, usize>) -> Result<Vec<ParityVerdict>> {
    counts
        .iter()
        .map(|&(kind, count)| {
            let baseline = *baselines
                .get(&kind.tier())
                .ok_or_else(|| Error::Config(format!("no parity baseline for the {:?} tier", kind.tier())))?;
            if baseline == 0 {
                return Err(Error::Config("parity baseline of zero parameters".into()));
            }
            let ratio = parity_ratio(count, baseline);
            Ok(ParityVerdict {
                kind,
                count,
                baseline,
                ratio,
                pass: ratio <= PARITY_BUDGET,
            })
        })
        .collect()
}
