//! Binary checkpoints.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! magic    8 bytes  "BLABCKPT"
//! version  u32
//! length   u64      payload byte count
//! payload
//! checksum u64      first 8 bytes of SHA-256(payload)
//! ```
//!
//! The payload holds the variant config, the encoder tensors, an optional
//! classifier head and optional Adam moments for the encoder. Strings are
//! u32-length-prefixed UTF-8; tensors are name, u32 rank, u64 dims, f64 data.

use std::fs;
use std::path::Path;

use bertlab_core::finetune::ClassifierHead;
use bertlab_core::variants::{build, check_layout, EncoderModel, VariantConfig, VariantKind};
use bertlab_core::{AdamConfig, AdamState, ParamStore, SeedRng, StoreTag, Tensor};
use sha2::{Digest, Sha256};

use crate::error::{Error, IoContext, Result};

pub const MAGIC: &[u8; 8] = b"BLABCKPT";
pub const VERSION: u32 = 1;
const HEADER: usize = 8 + 4 + 8;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: VariantConfig,
    pub encoder: ParamStore,
    pub head: Option<ParamStore>,
    pub optimizer: Option<AdamState>,
}

impl Checkpoint {
    pub fn from_model(model: &EncoderModel) -> Self {
        Self {
            config: model.config,
            encoder: model.store.clone(),
            head: None,
            optimizer: None,
        }
    }

    pub fn with_head(mut self, head: &ClassifierHead) -> Self {
        self.head = Some(head.store.clone());
        self
    }

    pub fn with_optimizer(mut self, state: &AdamState) -> Self {
        self.optimizer = Some(state.clone());
        self
    }

    /// Rebuilds the encoder described by the stored config.
    pub fn model(&self) -> Result<EncoderModel> {
        let mut model = build(&self.config, &mut SeedRng::new(0))?;
        model.replace_params(self.encoder.clone())?;
        Ok(model)
    }

    /// Rebuilds the classifier head, if one was saved.
    pub fn classifier(&self) -> Result<Option<ClassifierHead>> {
        let Some(store) = &self.head else { return Ok(None) };
        let classes = store.iter().last().map_or(0, |(_, t)| t.len());
        let mut head = ClassifierHead::new(self.config.hidden, classes, &mut SeedRng::new(0))?;
        check_layout(&head.store, store)?;
        head.store = store.clone();
        Ok(Some(head))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut p = Vec::new();
        put_config(&mut p, &self.config);
        put_store(&mut p, &self.encoder);
        put_optional(&mut p, self.head.as_ref(), put_store);
        put_optional(&mut p, self.optimizer.as_ref(), put_adam);
        let mut out = Vec::with_capacity(HEADER + p.len() + 8);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(p.len() as u64).to_le_bytes());
        out.extend_from_slice(&p);
        out.extend_from_slice(&checksum(&p).to_le_bytes());
        out
    }

    /// Parses `bytes`; `path` only labels errors.
    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let format = |message: &str| Error::Format {
            path: path.into(),
            line: 0,
            message: message.into(),
        };
        if bytes.len() < MAGIC.len() || &bytes[..8] != MAGIC {
            return Err(format("not a bertlab checkpoint"));
        }
        if bytes.len() < 12 {
            return Err(Error::Checksum { path: path.into() });
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != VERSION {
            return Err(Error::Version {
                path: path.into(),
                found: version,
                supported: VERSION,
            });
        }
        let corrupt = || Error::Checksum { path: path.into() };
        if bytes.len() < HEADER {
            return Err(corrupt());
        }
        let len = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes"));
        let len = usize::try_from(len).map_err(|_| corrupt())?;
        if bytes.len() != HEADER.checked_add(len).and_then(|n| n.checked_add(8)).ok_or_else(corrupt)? {
            return Err(corrupt());
        }
        let payload = &bytes[HEADER..HEADER + len];
        let stored = u64::from_le_bytes(bytes[HEADER + len..].try_into().expect("8 bytes"));
        if stored != checksum(payload) {
            return Err(corrupt());
        }
        let mut r = Reader { buf: payload, pos: 0 };
        let parsed = (|| -> Option<Self> {
            let config = r.config()?;
            let encoder = r.store(StoreTag::Encoder)?;
            let head = r.optional(|r| r.store(StoreTag::Head))?;
            let optimizer = r.optional(|r| r.adam(&encoder))?;
            (r.pos == r.buf.len()).then_some(Self {
                config,
                encoder,
                head,
                optimizer,
            })
        })();
        parsed.ok_or_else(|| format("malformed checkpoint payload"))
    }
}

fn checksum(payload: &[u8]) -> u64 {
    let digest = Sha256::digest(payload);
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

pub fn save_checkpoint(path: &Path, checkpoint: &Checkpoint) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).at(dir)?;
    }
    let tmp = path.with_extension("partial");
    fs::write(&tmp, checkpoint.to_bytes()).at(&tmp)?;
    fs::rename(&tmp, path).at(path)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).at(path)?;
    Checkpoint::from_bytes(&bytes, path)
}

/// Loads the encoder at `path` into a model built from `expected`; a
/// checkpoint of a different architecture is a layout error naming the
/// first tensor that does not fit.
pub fn load_model_as(path: &Path, expected: &VariantConfig) -> Result<EncoderModel> {
    let checkpoint = load_checkpoint(path)?;
    let mut model = build(expected, &mut SeedRng::new(0))?;
    model.replace_params(checkpoint.encoder).map_err(|e| match e {
        bertlab_core::Error::Data(detail) => Error::Layout {
            path: path.into(),
            detail,
        },
        other => other.into(),
    })?;
    Ok(model)
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_f64(out: &mut Vec<u8>, v: f64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    put_u32(out, s.len() as u32);
    out.extend_from_slice(s.as_bytes());
}

fn put_optional<T>(out: &mut Vec<u8>, value: Option<&T>, put: fn(&mut Vec<u8>, &T)) {
    match value {
        Some(v) => {
            out.push(1);
            put(out, v);
        }
        None => out.push(0),
    }
}

fn put_config(out: &mut Vec<u8>, c: &VariantConfig) {
    put_str(out, c.kind.name());
    for v in [c.layers, c.hidden, c.heads, c.vocab, c.max_len, c.relative_clip, c.lstm_hidden] {
        put_u64(out, v as u64);
    }
    put_f64(out, c.dropout);
}

fn put_store(out: &mut Vec<u8>, store: &ParamStore) {
    put_u64(out, store.len() as u64);
    for (name, t) in store.iter() {
        put_str(out, name);
        put_u32(out, t.shape().len() as u32);
        for &d in t.shape() {
            put_u64(out, d as u64);
        }
        for &v in t.data() {
            put_f64(out, v);
        }
    }
}

fn put_adam(out: &mut Vec<u8>, s: &AdamState) {
    let c = s.config;
    for v in [c.learning_rate, c.beta1, c.beta2, c.epsilon] {
        put_f64(out, v);
    }
    put_u64(out, s.step);
    for (m, v) in s.first.iter().zip(&s.second) {
        m.iter().chain(v).for_each(|&x| put_f64(out, x));
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Option<&[u8]> {
        let end = self.pos.checked_add(n)?;
        let bytes = self.buf.get(self.pos..end)?;
        self.pos = end;
        Some(bytes)
    }

    fn u8(&mut self) -> Option<u8> {
        Some(self.take(1)?[0])
    }

    fn u32(&mut self) -> Option<u32> {
        Some(u32::from_le_bytes(self.take(4)?.try_into().ok()?))
    }

    fn u64(&mut self) -> Option<u64> {
        Some(u64::from_le_bytes(self.take(8)?.try_into().ok()?))
    }

    fn usize(&mut self) -> Option<usize> {
        usize::try_from(self.u64()?).ok()
    }

    fn f64(&mut self) -> Option<f64> {
        Some(f64::from_le_bytes(self.take(8)?.try_into().ok()?))
    }

    fn str(&mut self) -> Option<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).ok()
    }

    fn f64s(&mut self, n: usize) -> Option<Vec<f64>> {
        let bytes = self.take(n.checked_mul(8)?)?;
        Some(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
    }

    fn optional<T>(&mut self, read: impl FnOnce(&mut Self) -> Option<T>) -> Option<Option<T>> {
        match self.u8()? {
            0 => Some(None),
            1 => read(self).map(Some),
            _ => None,
        }
    }

    fn config(&mut self) -> Option<VariantConfig> {
        let kind: VariantKind = self.str()?.parse().ok()?;
        let mut sizes = [0usize; 7];
        for s in &mut sizes {
            *s = self.usize()?;
        }
        let [layers, hidden, heads, vocab, max_len, relative_clip, lstm_hidden] = sizes;
        Some(VariantConfig {
            kind,
            layers,
            hidden,
            heads,
            vocab,
            max_len,
            dropout: self.f64()?,
            relative_clip,
            lstm_hidden,
        })
    }

    fn store(&mut self, tag: StoreTag) -> Option<ParamStore> {
        let mut store = ParamStore::new(tag);
        for _ in 0..self.usize()? {
            let name = self.str()?;
            let rank = self.u32()? as usize;
            let shape = (0..rank).map(|_| self.usize()).collect::<Option<Vec<_>>>()?;
            let n = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d))?;
            let data = self.f64s(n)?;
            if store.find(&name).is_some() {
                return None;
            }
            store.insert(name, Tensor::new(&shape, data).ok()?);
        }
        Some(store)
    }

    fn adam(&mut self, store: &ParamStore) -> Option<AdamState> {
        let config = AdamConfig {
            learning_rate: self.f64()?,
            beta1: self.f64()?,
            beta2: self.f64()?,
            epsilon: self.f64()?,
        };
        let mut state = AdamState::new(store, config);
        state.step = self.u64()?;
        for (i, (_, t)) in store.iter().enumerate() {
            state.first[i] = self.f64s(t.len())?;
            state.second[i] = self.f64s(t.len())?;
        }
        Some(state)
    }
}
