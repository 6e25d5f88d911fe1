//! Versioned text formats: corpus, vocabulary and labeled datasets.
//!
//! Every file starts with a magic line. Corpus files hold one sentence per
//! line with blank lines between documents. Vocab files hold one token per
//! line, the id being the line index after the magic line. Labeled files
//! hold `label<TAB>text` per line.

use std::fs;
use std::io::Write;
use std::path::Path;

use bertlab_core::vocab::Vocab;

use crate::error::{Error, IoContext, Result};

pub const CORPUS_MAGIC: &str = "#bertlab-corpus v1";
pub const VOCAB_MAGIC: &str = "#bertlab-vocab v1";
pub const LABELED_MAGIC: &str = "#bertlab-labeled v1";

fn read_body<'a>(path: &Path, text: &'a str, magic: &str) -> Result<std::iter::Skip<std::str::Lines<'a>>> {
    match text.lines().next() {
        Some(first) if first.trim_end() == magic => Ok(text.lines().skip(1)),
        _ => Err(Error::Format {
            path: path.into(),
            line: 1,
            message: format!("expected `{magic}` header"),
        }),
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).at(path)
}

fn write(path: &Path, body: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).at(dir)?;
    }
    fs::write(path, body).at(path)
}

/// Documents of sentences.
pub fn read_corpus(path: &Path) -> Result<Vec<Vec<String>>> {
    let text = read(path)?;
    let mut docs = vec![Vec::new()];
    for line in read_body(path, &text, CORPUS_MAGIC)? {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            if !docs.last().expect("non-empty").is_empty() {
                docs.push(Vec::new());
            }
        } else {
            docs.last_mut().expect("non-empty").push(line.to_string());
        }
    }
    docs.retain(|d| !d.is_empty());
    Ok(docs)
}

pub fn write_corpus(path: &Path, docs: &[Vec<String>]) -> Result<()> {
    let mut out = format!("{CORPUS_MAGIC}\n");
    for (i, doc) in docs.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        for sentence in doc {
            if sentence.contains('\n') || sentence.trim().is_empty() {
                return Err(Error::Format {
                    path: path.into(),
                    line: 0,
                    message: format!("sentence {sentence:?} cannot be stored one per line"),
                });
            }
            out.push_str(sentence);
            out.push('\n');
        }
    }
    write(path, &out)
}

pub fn read_vocab(path: &Path) -> Result<Vocab> {
    let text = read(path)?;
    let tokens = read_body(path, &text, VOCAB_MAGIC)?.map(|l| l.trim_end_matches('\r').to_string()).collect();
    Ok(Vocab::from_tokens(tokens)?)
}

pub fn write_vocab(path: &Path, vocab: &Vocab) -> Result<()> {
    let mut out = format!("{VOCAB_MAGIC}\n");
    for token in vocab.tokens() {
        out.push_str(token);
        out.push('\n');
    }
    write(path, &out)
}

pub fn read_labeled(path: &Path) -> Result<Vec<(String, usize)>> {
    let text = read(path)?;
    let mut items = Vec::new();
    for (i, line) in read_body(path, &text, LABELED_MAGIC)?.enumerate() {
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let bad = |message: String| Error::Format {
            path: path.into(),
            line: i + 2,
            message,
        };
        let (label, sentence) = line.split_once('\t').ok_or_else(|| bad("expected `label<TAB>text`".into()))?;
        let label = label.parse().map_err(|_| bad(format!("label `{label}` is not a class index")))?;
        items.push((sentence.to_string(), label));
    }
    Ok(items)
}

pub fn write_labeled(path: &Path, items: &[(String, usize)]) -> Result<()> {
    let mut out = Vec::new();
    writeln!(out, "{LABELED_MAGIC}").expect("in-memory write");
    for (text, label) in items {
        writeln!(out, "{label}\t{text}").expect("in-memory write");
    }
    write(path, &String::from_utf8(out).expect("utf-8"))
}
