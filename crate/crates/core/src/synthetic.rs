//! Generated toy data with learnable structure, for smoke runs and tests.
//!
//! Characters come from the CJK block starting at U+4E00. Each document
//! draws all its sentences from one topic, a small disjoint group of
//! characters, so a masked token is predictable from its context and a
//! true next sentence shares the first sentence's topic.

use alloc::string::String;
use alloc::vec::Vec;

use crate::rng::SeedRng;

const BASE: u32 = 0x4E00;

fn glyph(i: usize) -> char {
    char::from_u32(BASE + i as u32).expect("CJK block")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TopicCorpus {
    pub topics: usize,
    pub topic_size: usize,
    pub sentences_per_doc: usize,
    pub min_len: usize,
    pub max_len: usize,
}

impl Default for TopicCorpus {
    fn default() -> Self {
        Self {
            topics: 19,
            topic_size: 5,
            sentences_per_doc: 5,
            min_len: 4,
            max_len: 10,
        }
    }
}

impl TopicCorpus {
    /// Distinct characters the corpus can contain.
    pub fn alphabet(&self) -> usize {
        self.topics * self.topic_size
    }

    /// `sentences` sentences grouped into documents.
    pub fn generate(&self, sentences: usize, rng: &mut SeedRng) -> Vec<Vec<String>> {
        let mut docs = Vec::new();
        let mut left = sentences;
        while left > 0 {
            let topic = rng.below(self.topics);
            let take = self.sentences_per_doc.min(left);
            let doc = (0..take)
                .map(|_| {
                    let len = self.min_len + rng.below(self.max_len - self.min_len + 1);
                    (0..len).map(|_| glyph(topic * self.topic_size + rng.below(self.topic_size))).collect()
                })
                .collect();
            docs.push(doc);
            left -= take;
        }
        docs
    }
}

/// Two-class set: class `c` sentences use only characters of group `c`.
pub fn separable_set(examples: usize, len: usize, rng: &mut SeedRng) -> Vec<(String, usize)> {
    const GROUP: usize = 8;
    (0..examples)
        .map(|i| {
            let label = i % 2;
            let text = (0..len).map(|_| glyph(label * GROUP + rng.below(GROUP))).collect();
            (text, label)
        })
        .collect()
}
