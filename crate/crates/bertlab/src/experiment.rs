//! Experiment specs, the per-variant pipeline and comparison reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use bertlab_core::finetune::{evaluate, finetune_run, ClassifierHead, FinetuneConfig, LabeledSet};
use bertlab_core::parity::{check_parity, count_params};
use bertlab_core::pretrain::{pretrain_run, ExampleGenerator, MaskingConfig, PretrainConfig};
use bertlab_core::variants::{build, Tier, VariantConfig, VariantKind, DEFAULT_SEQ_LEN};
use bertlab_core::vocab::Vocab;
use bertlab_core::SeedRng;
use serde::Deserialize;

use crate::checkpoint::{save_checkpoint, Checkpoint};
use crate::error::{Error, IoContext, Result};
use crate::formats::{read_corpus, read_labeled, read_vocab, write_vocab};
use crate::logs::{write_metrics, TrainLogWriter};

fn default_epochs() -> usize {
    3
}
fn default_batch() -> usize {
    100
}
fn default_lr() -> f64 {
    1e-5
}
fn default_seq_len() -> usize {
    DEFAULT_SEQ_LEN
}
fn default_mask_rate() -> f64 {
    0.15
}
fn default_true() -> bool {
    true
}
fn default_vocab_size() -> usize {
    1000
}

/// Everything one comparison run needs. Relative paths resolve against the
/// spec file's directory.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub variants: Vec<String>,
    /// Base-tier shape overrides; the large tier follows them unless its
    /// own `large_*` keys are set.
    pub layers: Option<usize>,
    pub hidden: Option<usize>,
    pub heads: Option<usize>,
    pub large_layers: Option<usize>,
    pub large_hidden: Option<usize>,
    pub large_heads: Option<usize>,
    /// Built from the corpus when absent.
    pub vocab_path: Option<PathBuf>,
    #[serde(default = "default_vocab_size")]
    pub vocab_size: usize,
    pub corpus_path: PathBuf,
    pub train_path: PathBuf,
    pub dev_path: PathBuf,
    pub pretrain_steps: usize,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub batch: usize,
    pub pretrain_batch: Option<usize>,
    #[serde(default = "default_lr")]
    pub lr: f64,
    pub pretrain_lr: Option<f64>,
    pub finetune_max_steps: Option<usize>,
    #[serde(default = "default_seq_len")]
    pub seq_len: usize,
    #[serde(default = "default_mask_rate")]
    pub mask_rate: f64,
    #[serde(default = "default_true")]
    pub nsp: bool,
    pub dropout: Option<f64>,
    pub checkpoint_every: Option<usize>,
    pub seed: u64,
    pub out_dir: PathBuf,
}

impl ExperimentSpec {
    pub fn from_toml(text: &str, base: &Path) -> Result<Self> {
        let mut spec: Self = toml::from_str(text).map_err(|e| Error::Spec(e.to_string()))?;
        for p in [&mut spec.corpus_path, &mut spec.train_path, &mut spec.dev_path, &mut spec.out_dir]
            .into_iter()
            .chain(spec.vocab_path.as_mut())
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        spec.kinds()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).at(path)?;
        Self::from_toml(&text, path.parent().unwrap_or(Path::new(".")))
    }

    /// Requested variants in table order, without repeats.
    pub fn kinds(&self) -> Result<Vec<VariantKind>> {
        let requested = self
            .variants
            .iter()
            .map(|name| name.parse::<VariantKind>().map_err(|_| Error::Spec(format!("unknown variant `{name}`"))))
            .collect::<Result<Vec<_>>>()?;
        if requested.is_empty() {
            return Err(Error::Spec("no variants listed".into()));
        }
        Ok(VariantKind::TABLE_ORDER.into_iter().filter(|k| requested.contains(k)).collect())
    }

    fn tier_shape(&self, tier: Tier) -> (usize, usize, usize) {
        let base = (
            self.layers.unwrap_or(Tier::Base.layers()),
            self.hidden.unwrap_or(Tier::Base.hidden()),
            self.heads.unwrap_or(Tier::Base.heads()),
        );
        let overridden = self.layers.is_some() || self.hidden.is_some() || self.heads.is_some();
        match tier {
            Tier::Base => base,
            Tier::Large => {
                let fallback = if overridden {
                    base
                } else {
                    (Tier::Large.layers(), Tier::Large.hidden(), Tier::Large.heads())
                };
                (
                    self.large_layers.unwrap_or(fallback.0),
                    self.large_hidden.unwrap_or(fallback.1),
                    self.large_heads.unwrap_or(fallback.2),
                )
            }
        }
    }

    pub fn variant_config(&self, kind: VariantKind, vocab: usize) -> VariantConfig {
        let (layers, hidden, heads) = self.tier_shape(kind.tier());
        let mut config = VariantConfig::sized(kind, layers, hidden, heads, vocab, self.seq_len);
        if let Some(p) = self.dropout {
            config.dropout = p;
        }
        config
    }

    /// ORIGIN at `tier`'s shape, the parity reference for that tier.
    pub fn baseline_config(&self, tier: Tier, vocab: usize) -> VariantConfig {
        let (layers, hidden, heads) = self.tier_shape(tier);
        VariantConfig::sized(VariantKind::Origin, layers, hidden, heads, vocab, self.seq_len)
    }

    pub fn protocol(&self) -> Protocol {
        Protocol {
            pretrain_steps: self.pretrain_steps,
            pretrain_batch: self.pretrain_batch.unwrap_or(self.batch),
            pretrain_lr: self.pretrain_lr.unwrap_or(self.lr),
            epochs: self.epochs,
            batch: self.batch,
            lr: self.lr,
            seq_len: self.seq_len,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Protocol {
    pub pretrain_steps: usize,
    pub pretrain_batch: usize,
    pub pretrain_lr: f64,
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub seq_len: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RowStatus {
    Ok,
    Failed(String),
    Unsupported(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub kind: VariantKind,
    pub layer_setting: Option<String>,
    pub params: Option<usize>,
    pub parity_ratio: Option<f64>,
    pub parity_pass: Option<bool>,
    pub accuracy: Option<f64>,
    pub status: RowStatus,
}

impl ReportRow {
    fn unsupported(kind: VariantKind) -> Self {
        Self {
            kind,
            layer_setting: None,
            params: None,
            parity_ratio: None,
            parity_pass: None,
            accuracy: None,
            status: RowStatus::Unsupported(match kind.unsupported_error() {
                bertlab_core::Error::Unsupported { reason, .. } => reason.to_string(),
                other => other.to_string(),
            }),
        }
    }

    pub fn ok(&self) -> bool {
        self.status == RowStatus::Ok && self.parity_pass != Some(false)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    /// `None` for count-only reports.
    pub protocol: Option<Protocol>,
    pub rows: Vec<ReportRow>,
}

fn clean(s: &str) -> String {
    s.replace(['\t', '\n', '\r'], " ")
}

impl ComparisonReport {
    /// Every supported row ran and met the parity budget. Unsupported rows
    /// are expected and do not count against the run.
    pub fn all_ok(&self) -> bool {
        self.rows.iter().filter(|r| r.kind.is_supported()).all(ReportRow::ok)
    }

    fn protocol_line(&self) -> Option<String> {
        self.protocol.map(|p| {
            format!(
                "pretrain_steps={} pretrain_batch={} pretrain_lr={} epochs={} batch={} lr={} seq_len={} seed={} (one seed for pre-training and fine-tuning)",
                p.pretrain_steps, p.pretrain_batch, p.pretrain_lr, p.epochs, p.batch, p.lr, p.seq_len, p.seed
            )
        })
    }

    /// Tab-delimited form with a header row; protocol echo as `#` lines.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        if let Some(line) = self.protocol_line() {
            writeln!(out, "# {line}").expect("string write");
        }
        out.push_str("variant\tlayer_setting\tparams\tparity_ratio\tparity\tdev_accuracy\tstatus\n");
        let dash = || "-".to_string();
        for r in &self.rows {
            let status = match &r.status {
                RowStatus::Ok => "ok".to_string(),
                RowStatus::Failed(cause) => format!("failed: {}", clean(cause)),
                RowStatus::Unsupported(reason) => format!("unsupported: {}", clean(reason)),
            };
            writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}\t{status}",
                r.kind.name(),
                r.layer_setting.clone().unwrap_or_else(dash),
                r.params.map_or_else(dash, |n| n.to_string()),
                r.parity_ratio.map_or_else(dash, |x| format!("{x:.6}")),
                r.parity_pass.map_or_else(dash, |p| if p { "pass" } else { "fail" }.to_string()),
                r.accuracy.map_or_else(dash, |a| format!("{a:.6}")),
            )
            .expect("string write");
        }
        out
    }

    /// Aligned, human-readable table.
    pub fn to_text(&self) -> String {
        let mut cells = vec![["Model", "Layer setting", "Params", "Parity", "Accuracy", "Note"].map(String::from)];
        for r in &self.rows {
            let parity = match (r.parity_pass, r.parity_ratio) {
                (Some(pass), Some(ratio)) => format!("{} {:.1}%", if pass { "pass" } else { "FAIL" }, ratio * 100.0),
                _ => "-".into(),
            };
            let note = match &r.status {
                RowStatus::Ok => String::new(),
                RowStatus::Failed(cause) => format!("failed: {}", clean(cause)),
                RowStatus::Unsupported(_) => "unsupported".into(),
            };
            cells.push([
                r.kind.display_name().to_string(),
                r.layer_setting.clone().unwrap_or_else(|| "-".into()),
                r.params.map_or_else(|| "-".into(), |n| n.to_string()),
                parity,
                r.accuracy.map_or_else(|| "-".into(), |a| format!("{:.2}%", a * 100.0)),
                note,
            ]);
        }
        let widths: Vec<usize> = (0..6).map(|c| cells.iter().map(|row| row[c].chars().count()).max().unwrap_or(0)).collect();
        let mut out = String::new();
        for (i, row) in cells.iter().enumerate() {
            let line: Vec<String> = row
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(c, (cell, &w))| if c == 2 { format!("{cell:>w$}") } else { format!("{cell:<w$}") })
                .collect();
            writeln!(out, "{}", line.join("  ").trim_end()).expect("string write");
            if i == 0 {
                writeln!(out, "{}", "-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1))).expect("string write");
            }
        }
        if let Some(line) = self.protocol_line() {
            writeln!(out, "\n{line}").expect("string write");
        }
        out
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).at(dir)?;
        let text = dir.join("report.txt");
        fs::write(&text, self.to_text()).at(&text)?;
        let tsv = dir.join("report.tsv");
        fs::write(&tsv, self.to_tsv()).at(&tsv)
    }
}

/// Parameter counts and parity of `configs`, each judged against ORIGIN
/// built at its tier's shape. No training.
pub fn count_report(configs: &[VariantConfig], baselines: &[(Tier, VariantConfig)]) -> ComparisonReport {
    let mut tiers = BTreeMap::new();
    for (tier, base) in baselines {
        // a tier whose baseline cannot be built fails only its own rows
        if let Ok(model) = build(base, &mut SeedRng::new(0)) {
            tiers.insert(*tier, count_params(&model).total);
        }
    }
    let rows = configs
        .iter()
        .map(|config| {
            if !config.kind.is_supported() {
                return ReportRow::unsupported(config.kind);
            }
            let mut row = ReportRow {
                kind: config.kind,
                layer_setting: Some(config.layer_setting()),
                params: None,
                parity_ratio: None,
                parity_pass: None,
                accuracy: None,
                status: RowStatus::Ok,
            };
            let verdict = build(config, &mut SeedRng::new(0)).and_then(|model| {
                let count = count_params(&model).total;
                row.params = Some(count);
                check_parity(&[(config.kind, count)], &tiers)
            });
            match verdict {
                Ok(v) => {
                    row.parity_ratio = Some(v[0].ratio);
                    row.parity_pass = Some(v[0].pass);
                }
                Err(e) => row.status = RowStatus::Failed(e.to_string()),
            }
            row
        })
        .collect();
    ComparisonReport { protocol: None, rows }
}

/// Every table row at its preset shape with vocabulary size `vocab`.
pub fn preflight(vocab: usize) -> ComparisonReport {
    let configs: Vec<VariantConfig> = VariantKind::TABLE_ORDER
        .into_iter()
        .map(|k| VariantConfig::preset(k, vocab))
        .collect();
    let baselines = [Tier::Base, Tier::Large].map(|t| (t, VariantConfig::baseline(t, vocab)));
    count_report(&configs, &baselines)
}

/// Loaded, encoded inputs shared by every variant of a run.
pub struct ExperimentData {
    pub vocab: Vocab,
    pub documents: Vec<Vec<String>>,
    pub train: LabeledSet,
    pub dev: LabeledSet,
}

impl ExperimentData {
    pub fn load(spec: &ExperimentSpec) -> Result<Self> {
        let documents = read_corpus(&spec.corpus_path)?;
        let vocab = match &spec.vocab_path {
            Some(path) => read_vocab(path)?,
            None => Vocab::build(documents.iter().flatten().map(String::as_str), spec.vocab_size, 1)?,
        };
        let train = read_labeled(&spec.train_path)?;
        let dev = read_labeled(&spec.dev_path)?;
        let classes = train.iter().chain(&dev).map(|(_, l)| l + 1).max().unwrap_or(0).max(2);
        Ok(Self {
            train: LabeledSet::encode(&vocab, &train, spec.seq_len, classes)?,
            dev: LabeledSet::encode(&vocab, &dev, spec.seq_len, classes)?,
            vocab,
            documents,
        })
    }
}

struct VariantResult {
    accuracy: f64,
}

fn run_variant(spec: &ExperimentSpec, data: &ExperimentData, config: &VariantConfig, dir: &Path) -> Result<VariantResult> {
    let protocol = spec.protocol();
    let mut rng = SeedRng::new(spec.seed);
    let mut init_rng = rng.fork(1);
    let mut model = build(config, &mut init_rng)?;
    if spec.pretrain_steps > 0 {
        let masking = MaskingConfig {
            mask_rate: spec.mask_rate,
            ..MaskingConfig::default()
        };
        let mut examples = ExampleGenerator::new(data.documents.iter().map(|d| d.iter()), &data.vocab, spec.seq_len, masking)?;
        let pretrain = PretrainConfig {
            steps: spec.pretrain_steps,
            batch_size: protocol.pretrain_batch,
            learning_rate: protocol.pretrain_lr,
            with_nsp: spec.nsp,
            checkpoint_every: spec.checkpoint_every,
        };
        let checkpoints = spec.checkpoint_every.map(|_| dir.join("checkpoints"));
        let mut log = TrainLogWriter::create(&dir.join("pretrain.log"), checkpoints.as_deref())?;
        pretrain_run(&mut model, &mut examples, &pretrain, &mut rng.fork(2), &mut log)?;
        save_checkpoint(&dir.join("pretrained.ckpt"), &Checkpoint::from_model(&model))?;
    }
    let mut head = ClassifierHead::new(config.hidden, data.train.classes, &mut init_rng)?;
    let finetune = FinetuneConfig {
        epochs: spec.epochs,
        batch_size: spec.batch,
        learning_rate: spec.lr,
        max_steps: spec.finetune_max_steps,
    };
    let outcome = finetune_run(&mut model, &mut head, &data.train, &data.dev, &finetune, &mut rng.fork(3))?;
    write_metrics(&dir.join("finetune.log"), &outcome.log)?;
    save_checkpoint(
        &dir.join("finetuned.ckpt"),
        &Checkpoint::from_model(&outcome.best_model).with_head(&outcome.best_head),
    )?;
    Ok(VariantResult {
        accuracy: evaluate(&outcome.best_model, &outcome.best_head, &data.dev)?,
    })
}

/// Builds, pre-trains, fine-tunes and evaluates every listed variant, then
/// writes `report.txt` and `report.tsv` into the output directory. A stage
/// failure marks that row failed and leaves the others alone.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ComparisonReport> {
    let data = ExperimentData::load(spec)?;
    fs::create_dir_all(&spec.out_dir).at(&spec.out_dir)?;
    write_vocab(&spec.out_dir.join("vocab.txt"), &data.vocab)?;
    let kinds = spec.kinds()?;
    let vocab = data.vocab.len();
    let configs: Vec<VariantConfig> = kinds.iter().map(|&k| spec.variant_config(k, vocab)).collect();
    let baselines = [Tier::Base, Tier::Large].map(|t| (t, spec.baseline_config(t, vocab)));
    let mut report = count_report(&configs, &baselines);
    report.protocol = Some(spec.protocol());
    for (row, config) in report.rows.iter_mut().zip(&configs) {
        if row.status != RowStatus::Ok {
            continue;
        }
        match run_variant(spec, &data, config, &spec.out_dir.join(config.kind.name())) {
            Ok(result) => row.accuracy = Some(result.accuracy),
            Err(e) => row.status = RowStatus::Failed(e.to_string()),
        }
    }
    report.write(&spec.out_dir)?;
    Ok(report)
}
