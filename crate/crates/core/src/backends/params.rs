//! Named parameter tensors, gradients and the checkpoint archive.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::tokenizer::fnv1a64;
use super::BackendError;

pub const CHECKPOINT_FORMAT: &str = "lgvqa-checkpoint/1";

/// Dense row-major tensor of `f64`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut() -> f64) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: (0..n).map(|_| f()).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Row `i` of a 2-D tensor.
    pub fn row(&self, i: usize) -> &[f64] {
        let cols = self.shape[1];
        &self.data[i * cols..(i + 1) * cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let cols = self.shape[1];
        &mut self.data[i * cols..(i + 1) * cols]
    }
}

/// Gaussian-initialized tensor; the stream is keyed by `(seed, name)` so that
/// adding a tensor never perturbs the others.
pub fn init_normal(seed: u64, name: &str, shape: &[usize], std: f64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ fnv1a64(name.as_bytes()));
    let normal = Normal::new(0.0, std).expect("std is finite and non-negative");
    Tensor::from_fn(shape, || normal.sample(&mut rng))
}

pub fn init_uniform(seed: u64, name: &str, shape: &[usize], bound: f64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ fnv1a64(name.as_bytes()));
    Tensor::from_fn(shape, || rng.random_range(-bound..bound))
}

/// Ordered map of parameter name to tensor. Iteration order is the sorted
/// name order, which makes hashing and serialization stable.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ParamStore {
    tensors: BTreeMap<String, Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) {
        self.tensors.insert(name.into(), tensor);
    }

    pub fn get(&self, name: &str) -> &Tensor {
        self.tensors
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"))
    }

    pub fn get_mut(&mut self, name: &str) -> &mut Tensor {
        self.tensors
            .get_mut(name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"))
    }

    pub fn try_get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.tensors.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            tensors: self
                .tensors
                .iter()
                .map(|(k, v)| (k.clone(), Tensor::zeros(&v.shape)))
                .collect(),
        }
    }

    pub fn fill_zero(&mut self) {
        for t in self.tensors.values_mut() {
            t.data.iter_mut().for_each(|x| *x = 0.0);
        }
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.values().all(|t| t.data.iter().all(|x| x.is_finite()))
    }

    /// SHA-256 over names, shapes and little-endian values.
    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        for (name, t) in &self.tensors {
            hasher.update((name.len() as u64).to_le_bytes());
            hasher.update(name.as_bytes());
            hasher.update((t.shape.len() as u64).to_le_bytes());
            for &s in &t.shape {
                hasher.update((s as u64).to_le_bytes());
            }
            for &x in &t.data {
                hasher.update(x.to_le_bytes());
            }
        }
        hex::encode(hasher.finalize())
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct NamedTensor {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}

/// On-disk checkpoint: a JSON manifest carrying the backend configuration and
/// every named tensor inline.
#[derive(Debug, Serialize, Deserialize)]
pub struct Checkpoint<C> {
    pub format: String,
    pub backend: C,
    pub param_hash: String,
    tensors: Vec<NamedTensor>,
}

impl<C: Serialize + for<'de> Deserialize<'de>> Checkpoint<C> {
    pub fn new(backend: C, params: &ParamStore) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.to_string(),
            backend,
            param_hash: params.content_hash(),
            tensors: params
                .iter()
                .map(|(name, t)| NamedTensor {
                    name: name.to_string(),
                    shape: t.shape.clone(),
                    data: t.data.clone(),
                })
                .collect(),
        }
    }

    pub fn params(&self) -> Result<ParamStore, BackendError> {
        let mut store = ParamStore::new();
        for t in &self.tensors {
            if t.shape.iter().product::<usize>() != t.data.len() {
                return Err(BackendError::Checkpoint(format!(
                    "tensor {} has shape {:?} but {} values",
                    t.name,
                    t.shape,
                    t.data.len()
                )));
            }
            store.insert(
                t.name.clone(),
                Tensor {
                    shape: t.shape.clone(),
                    data: t.data.clone(),
                },
            );
        }
        if store.content_hash() != self.param_hash {
            return Err(BackendError::Checkpoint("parameter hash mismatch".into()));
        }
        Ok(store)
    }

    pub fn save(&self, path: &Path) -> Result<(), BackendError> {
        let text = serde_json::to_string(self).map_err(|e| BackendError::Checkpoint(e.to_string()))?;
        fs::write(path, text).map_err(|e| BackendError::Checkpoint(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self, BackendError> {
        let text = fs::read_to_string(path)
            .map_err(|e| BackendError::Checkpoint(format!("{}: {e}", path.display())))?;
        let ckpt: Self =
            serde_json::from_str(&text).map_err(|e| BackendError::Checkpoint(e.to_string()))?;
        if ckpt.format != CHECKPOINT_FORMAT {
            return Err(BackendError::Checkpoint(format!(
                "unsupported checkpoint format {:?}",
                ckpt.format
            )));
        }
        Ok(ckpt)
    }
}
