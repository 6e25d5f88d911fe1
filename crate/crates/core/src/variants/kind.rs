use core::fmt;
use core::str::FromStr;

use alloc::string::ToString;

use crate::error::{Error, Result};

/// One row of the comparison table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum VariantKind {
    Origin,
    TextCnn,
    Ngram,
    Dense,
    /// Listed for completeness; its span-based dynamic convolution is not
    /// implemented and every build request is rejected.
    ConvBertExternal,
    BortPreset,
    Rte,
    Rnn,
    RnnIn,
}

/// Preset size class a variant is compared within.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Tier {
    /// 3 layers, hidden 768.
    Base,
    /// 4 layers, hidden 1024.
    Large,
}

pub const CONVBERT_REASON: &str = "span-based dynamic convolution is out of scope for this toolkit";

impl VariantKind {
    /// Table order, including the rejected ConvBERT row.
    pub const TABLE_ORDER: [VariantKind; 9] = [
        VariantKind::Origin,
        VariantKind::TextCnn,
        VariantKind::Ngram,
        VariantKind::Dense,
        VariantKind::ConvBertExternal,
        VariantKind::BortPreset,
        VariantKind::Rte,
        VariantKind::Rnn,
        VariantKind::RnnIn,
    ];

    /// The eight buildable variants, in table order.
    pub const IMPLEMENTED: [VariantKind; 8] = [
        VariantKind::Origin,
        VariantKind::TextCnn,
        VariantKind::Ngram,
        VariantKind::Dense,
        VariantKind::BortPreset,
        VariantKind::Rte,
        VariantKind::Rnn,
        VariantKind::RnnIn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            VariantKind::Origin => "origin",
            VariantKind::TextCnn => "textcnn",
            VariantKind::Ngram => "ngram",
            VariantKind::Dense => "dense",
            VariantKind::ConvBertExternal => "convbert",
            VariantKind::BortPreset => "bort",
            VariantKind::Rte => "rte",
            VariantKind::Rnn => "rnn",
            VariantKind::RnnIn => "rnn-in",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            VariantKind::Origin => "Origin BERT",
            VariantKind::TextCnn => "TextCNN-BERT",
            VariantKind::Ngram => "Ngram-BERT",
            VariantKind::Dense => "Dense-BERT",
            VariantKind::ConvBertExternal => "ConvBERT",
            VariantKind::BortPreset => "BORT",
            VariantKind::Rte => "RTE-BERT",
            VariantKind::Rnn => "RNN-BERT",
            VariantKind::RnnIn => "RNN-IN-BERT",
        }
    }

    pub fn tier(self) -> Tier {
        match self {
            VariantKind::Dense | VariantKind::BortPreset => Tier::Large,
            _ => Tier::Base,
        }
    }

    pub fn is_supported(self) -> bool {
        self != VariantKind::ConvBertExternal
    }

    /// Whether the attention stack runs over `2L` positions.
    pub fn doubles_sequence(self) -> bool {
        matches!(self, VariantKind::TextCnn | VariantKind::Ngram)
    }

    pub fn unsupported_error(self) -> Error {
        Error::Unsupported {
            name: self.name().to_string(),
            reason: CONVBERT_REASON,
        }
    }
}

impl fmt::Display for VariantKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for VariantKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::TABLE_ORDER
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(alloc::format!("unknown variant `{s}`")))
    }
}

impl Tier {
    pub fn layers(self) -> usize {
        match self {
            Tier::Base => 3,
            Tier::Large => 4,
        }
    }

    pub fn hidden(self) -> usize {
        match self {
            Tier::Base => 768,
            Tier::Large => 1024,
        }
    }

    pub fn heads(self) -> usize {
        match self {
            Tier::Base => 12,
            Tier::Large => 16,
        }
    }

    /// "3 layer, 768 hidden size"
    pub fn layer_setting(self) -> alloc::string::String {
        alloc::format!("{} layer, {} hidden size", self.layers(), self.hidden())
    }
}
