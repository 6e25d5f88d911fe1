use alloc::string::String;
use alloc::vec::Vec;

use crate::rng::SeedRng;
use crate::tensor::Tensor;

/// Handle to one named tensor inside a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamId {
    pub(crate) store: u16,
    pub(crate) index: u32,
}

impl ParamId {
    pub fn index(self) -> usize {
        self.index as usize
    }
}

/// Which store a parameter belongs to; a single pass may bind several.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StoreTag {
    Encoder = 0,
    Head = 1,
}

/// Initialisation policy for new parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    TruncatedNormal(f64),
    Zeros,
    Ones,
}

pub const WEIGHT_STD: f64 = 0.02;

/// Ordered, named collection of trainable tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore {
    tag: u16,
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParamStore {
    pub fn new(tag: StoreTag) -> Self {
        Self {
            tag: tag as u16,
            names: Vec::new(),
            tensors: Vec::new(),
        }
    }

    pub fn tag(&self) -> u16 {
        self.tag
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) -> ParamId {
        let name = name.into();
        debug_assert!(self.find(&name).is_none(), "duplicate parameter {name}");
        self.names.push(name);
        self.tensors.push(tensor);
        ParamId {
            store: self.tag,
            index: (self.tensors.len() - 1) as u32,
        }
    }

    pub fn init(&mut self, name: impl Into<String>, shape: &[usize], init: Init, rng: &mut SeedRng) -> ParamId {
        let tensor = match init {
            Init::Zeros => Tensor::zeros(shape),
            Init::Ones => Tensor::ones(shape),
            Init::TruncatedNormal(std) => {
                let n = shape.iter().product();
                let data = (0..n).map(|_| rng.truncated_normal(std)).collect();
                Tensor::new(shape, data).expect("nonzero shape")
            }
        };
        self.insert(name, tensor)
    }

    fn check(&self, id: ParamId) {
        assert_eq!(id.store, self.tag, "parameter handle from another store");
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        self.check(id);
        &self.tensors[id.index()]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        self.check(id);
        &mut self.tensors[id.index()]
    }

    pub fn name(&self, id: ParamId) -> &str {
        self.check(id);
        &self.names[id.index()]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(|i| ParamId {
            store: self.tag,
            index: i as u32,
        })
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        (0..self.tensors.len()).map(move |i| ParamId {
            store: self.tag,
            index: i as u32,
        })
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total trainable scalars.
    pub fn scalar_count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }
}
