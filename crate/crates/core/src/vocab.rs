//! Character-level vocabulary with five reserved ids.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const CLS: usize = 2;
pub const SEP: usize = 3;
pub const MASK: usize = 4;
pub const RESERVED: [&str; 5] = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: BTreeMap<String, usize>,
}

/// Output of [`Vocab::encode`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Encoded {
    pub ids: Vec<usize>,
    pub valid: Vec<bool>,
    /// The sentence did not fit and was truncated.
    pub overflow: bool,
}

impl Vocab {
    /// Characters ranked by frequency (descending) then code point, after the
    /// reserved tokens. At most `max_size` entries in total; characters seen
    /// fewer than `min_count` times are dropped.
    pub fn build<'a>(sentences: impl IntoIterator<Item = &'a str>, max_size: usize, min_count: usize) -> Result<Self> {
        if max_size <= RESERVED.len() {
            return Err(Error::Config(format!("max_size {max_size} must exceed {} reserved tokens", RESERVED.len())));
        }
        let mut counts: BTreeMap<char, usize> = BTreeMap::new();
        for s in sentences {
            for c in s.chars() {
                *counts.entry(c).or_default() += 1;
            }
        }
        if counts.is_empty() {
            return Err(Error::Data("cannot build a vocabulary from an empty corpus".into()));
        }
        let mut ranked: Vec<(char, usize)> = counts.into_iter().filter(|&(_, n)| n >= min_count.max(1)).collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        let tokens = RESERVED
            .iter()
            .map(|s| s.to_string())
            .chain(ranked.into_iter().map(|(c, _)| c.to_string()))
            .take(max_size)
            .collect();
        Self::from_tokens(tokens)
    }

    /// Rebuilds a vocabulary from its ordered token list.
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < RESERVED.len() || tokens.iter().zip(RESERVED).any(|(t, r)| t != r) {
            return Err(Error::Data("vocabulary must start with the reserved tokens".into()));
        }
        let mut index = BTreeMap::new();
        for (id, tok) in tokens.iter().enumerate() {
            if id >= RESERVED.len() && tok.chars().count() != 1 {
                return Err(Error::Data(format!("token `{tok}` at id {id} is not a single character")));
            }
            if index.insert(tok.clone(), id).is_some() {
                return Err(Error::Data(format!("duplicate token `{tok}`")));
            }
        }
        Ok(Self { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn char_id(&self, c: char) -> usize {
        let mut buf = [0u8; 4];
        self.id(c.encode_utf8(&mut buf))
    }

    pub fn tokenize(&self, sentence: &str) -> Vec<usize> {
        sentence.chars().map(|c| self.char_id(c)).collect()
    }

    /// `[CLS] chars [SEP]` padded with `[PAD]` to `len`.
    pub fn encode(&self, sentence: &str, len: usize) -> Result<Encoded> {
        if len < 3 {
            return Err(Error::Usage(format!("sequence length {len} leaves no room for [CLS] x [SEP]")));
        }
        let mut chars = self.tokenize(sentence);
        let overflow = chars.len() > len - 2;
        chars.truncate(len - 2);
        let mut ids = Vec::with_capacity(len);
        ids.push(CLS);
        ids.extend(chars);
        ids.push(SEP);
        let used = ids.len();
        ids.resize(len, PAD);
        let valid = (0..len).map(|i| i < used).collect();
        Ok(Encoded { ids, valid, overflow })
    }

    /// Text of the non-structural tokens; `[CLS]`, `[SEP]` and `[PAD]` are
    /// dropped, other reserved tokens are spelled out.
    pub fn decode(&self, ids: &[usize]) -> String {
        ids.iter()
            .filter(|&&id| !matches!(id, PAD | CLS | SEP))
            .map(|&id| self.token(id).unwrap_or(RESERVED[UNK]))
            .collect()
    }
}
