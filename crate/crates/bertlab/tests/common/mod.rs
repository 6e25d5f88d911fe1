use std::path::Path;

use bertlab::formats::{write_corpus, write_labeled};
use bertlab_core::synthetic::{separable_set, TopicCorpus};
use bertlab_core::SeedRng;

/// Writes a toy corpus and labeled sets into `dir`.
pub fn toy_data(dir: &Path, sentences: usize) {
    let mut rng = SeedRng::new(42);
    write_corpus(&dir.join("corpus.txt"), &TopicCorpus::default().generate(sentences, &mut rng)).unwrap();
    write_labeled(&dir.join("train.tsv"), &separable_set(32, 6, &mut rng)).unwrap();
    write_labeled(&dir.join("dev.tsv"), &separable_set(16, 6, &mut rng)).unwrap();
}

/// Small spec over the files written by [`toy_data`].
pub fn toy_spec(variants: &[&str], out_dir: &str) -> String {
    let names: Vec<String> = variants.iter().map(|v| format!("\"{v}\"")).collect();
    format!(
        r#"variants = [{}]
layers = 2
hidden = 16
heads = 2
corpus_path = "corpus.txt"
train_path = "train.tsv"
dev_path = "dev.tsv"
pretrain_steps = 6
pretrain_batch = 8
pretrain_lr = 1e-3
epochs = 2
batch = 8
lr = 1e-3
seq_len = 16
checkpoint_every = 3
seed = 11
out_dir = "{out_dir}"
"#,
        names.join(", ")
    )
}
