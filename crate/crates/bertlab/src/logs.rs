//! Append-only training and fine-tuning logs.

use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use bertlab_core::finetune::EpochRecord;
use bertlab_core::pretrain::{StepRecord, TrainingObserver};
use bertlab_core::variants::EncoderModel;
use bertlab_core::AdamState;

use crate::checkpoint::{save_checkpoint, Checkpoint};
use crate::error::{IoContext, Result};

pub const TRAIN_LOG_MAGIC: &str = "#bertlab-trainlog v1";
pub const METRICS_LOG_MAGIC: &str = "#bertlab-metrics v1";

/// Opens `path` for appending, writing `magic` and `columns` when new.
fn open_log(path: &Path, magic: &str, columns: &str) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).at(dir)?;
    }
    let fresh = fs::metadata(path).map_or(true, |m| m.len() == 0);
    let file = OpenOptions::new().create(true).append(true).open(path).at(path)?;
    let mut out = BufWriter::new(file);
    if fresh {
        writeln!(out, "{magic}\n{columns}").at(path)?;
    }
    Ok(out)
}

/// Writes one line per pre-training step and saves periodic checkpoints.
pub struct TrainLogWriter {
    path: PathBuf,
    out: BufWriter<File>,
    started: Instant,
    checkpoint_dir: Option<PathBuf>,
}

impl TrainLogWriter {
    pub fn create(path: &Path, checkpoint_dir: Option<&Path>) -> Result<Self> {
        Ok(Self {
            path: path.into(),
            out: open_log(path, TRAIN_LOG_MAGIC, "step\tmlm\tnsp\ttotal\twall_ms")?,
            started: Instant::now(),
            checkpoint_dir: checkpoint_dir.map(Into::into),
        })
    }

    pub fn checkpoint_path(dir: &Path, step: usize) -> PathBuf {
        dir.join(format!("step-{step:08}.ckpt"))
    }

    fn io(&self, e: std::io::Error) -> bertlab_core::Error {
        bertlab_core::Error::Data(format!("{}: {e}", self.path.display()))
    }
}

impl TrainingObserver for TrainLogWriter {
    fn on_step(&mut self, r: &StepRecord) -> bertlab_core::Result<()> {
        let wall_ms = self.started.elapsed().as_millis();
        writeln!(self.out, "{}\t{:.6}\t{:.6}\t{:.6}\t{wall_ms}", r.step, r.mlm, r.nsp, r.total).map_err(|e| self.io(e))?;
        self.out.flush().map_err(|e| self.io(e))
    }

    fn on_checkpoint(&mut self, step: usize, model: &EncoderModel, optimizer: &AdamState) -> bertlab_core::Result<()> {
        let Some(dir) = &self.checkpoint_dir else { return Ok(()) };
        let checkpoint = Checkpoint::from_model(model).with_optimizer(optimizer);
        save_checkpoint(&Self::checkpoint_path(dir, step), &checkpoint).map_err(|e| bertlab_core::Error::Data(e.to_string()))
    }
}

/// Appends one line per fine-tuning epoch.
pub fn write_metrics(path: &Path, records: &[EpochRecord]) -> Result<()> {
    let mut out = open_log(path, METRICS_LOG_MAGIC, "epoch\ttrain_loss\tdev_accuracy\tbest")?;
    for r in records {
        writeln!(out, "{}\t{:.6}\t{:.6}\t{}", r.epoch, r.train_loss, r.dev_accuracy, u8::from(r.best)).at(path)?;
    }
    out.flush().at(path)
}
