//! Weight storage: named f32 tensors, a binary container format, seeded
//! random initialization, and a strict reader that verifies every tensor is
//! present with the right shape and nothing goes unused.
//!
//! Container layout (little-endian): magic `TCEW`, version u32, tensor count
//! u32, then per tensor { name_len u32, name utf-8, rank u32, dims u64 each,
//! f32 data }.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;

use crate::net::config::{parameter_specs, ModelConfig};
use crate::net::NetError;
use crate::seeding::derive_rng_keyed;

const MAGIC: &[u8; 4] = b"TCEW";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        Self { shape: shape.to_vec(), data: vec![0.0; shape.iter().product()] }
    }
}

/// Named tensor map with deterministic iteration order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WeightStore {
    tensors: BTreeMap<String, Tensor>,
}

impl WeightStore {
    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) {
        self.tensors.insert(name.into(), tensor);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.tensors.get_mut(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(|s| s.as_str())
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn param_count(&self) -> usize {
        self.tensors.values().map(|t| t.data.len()).sum()
    }

    /// Seeded uniform init on the inventory of `cfg`: weights (rank ≥ 2)
    /// drawn from ±1/√fan_in with fan_in the per-output input count, vectors
    /// from ±1/√len, and PReLU slopes fixed at 0.25.
    pub fn random_init(cfg: &ModelConfig, seed: u64) -> Self {
        let mut store = WeightStore::default();
        for (name, shape) in parameter_specs(cfg) {
            let n: usize = shape.iter().product();
            let data = if name.ends_with(".prelu") {
                vec![0.25; n]
            } else {
                let fan_in = if shape.len() >= 2 { n / shape[0] } else { shape[0] };
                let bound = 1.0 / (fan_in as f64).sqrt();
                let mut rng = derive_rng_keyed(seed, "weights.init", &name);
                (0..n)
                    .map(|_| rng.random_range(-bound..=bound) as f32)
                    .collect()
            };
            store.insert(name, Tensor { shape, data });
        }
        store
    }

    pub fn save(&self, path: &Path) -> Result<(), NetError> {
        let mut out: Vec<u8> = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, t) in &self.tensors {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(t.shape.len() as u32).to_le_bytes());
            for &d in &t.shape {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for &v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let mut file = std::fs::File::create(path)?;
        file.write_all(&out)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, NetError> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        let mut pos = 0usize;
        let take = |pos: &mut usize, n: usize| -> Result<&[u8], NetError> {
            if *pos + n > bytes.len() {
                return Err(NetError::BadWeightFile("truncated file".into()));
            }
            let s = &bytes[*pos..*pos + n];
            *pos += n;
            Ok(s)
        };
        let u32_at = |pos: &mut usize| -> Result<u32, NetError> {
            Ok(u32::from_le_bytes(take(pos, 4)?.try_into().unwrap()))
        };
        if take(&mut pos, 4)? != MAGIC {
            return Err(NetError::BadWeightFile("bad magic, not a TCEW file".into()));
        }
        let version = u32_at(&mut pos)?;
        if version != VERSION {
            return Err(NetError::BadWeightFile(format!("unsupported version {version}")));
        }
        let count = u32_at(&mut pos)? as usize;
        let mut store = WeightStore::default();
        for _ in 0..count {
            let name_len = u32_at(&mut pos)? as usize;
            let name = String::from_utf8(take(&mut pos, name_len)?.to_vec())
                .map_err(|_| NetError::BadWeightFile("tensor name is not utf-8".into()))?;
            let rank = u32_at(&mut pos)? as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                let d = u64::from_le_bytes(take(&mut pos, 8)?.try_into().unwrap());
                shape.push(d as usize);
            }
            let n: usize = shape.iter().product();
            let raw = take(&mut pos, 4 * n)?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            store.insert(name, Tensor { shape, data });
        }
        if pos != bytes.len() {
            return Err(NetError::BadWeightFile(format!(
                "{} trailing bytes after last tensor",
                bytes.len() - pos
            )));
        }
        Ok(store)
    }
}

/// Strict accessor over a [`WeightStore`]: every `get` checks the shape and
/// marks the tensor used; [`WeightReader::finish`] fails if any stored
/// tensor was never read.
pub struct WeightReader<'a> {
    store: &'a WeightStore,
    used: RefCell<BTreeSet<String>>,
}

impl<'a> WeightReader<'a> {
    pub fn new(store: &'a WeightStore) -> Self {
        Self { store, used: RefCell::new(BTreeSet::new()) }
    }

    pub fn get(&self, name: &str, shape: &[usize]) -> Result<&'a Tensor, NetError> {
        let t = self
            .store
            .get(name)
            .ok_or_else(|| NetError::WeightMismatch(format!("missing tensor {name}")))?;
        if t.shape != shape {
            return Err(NetError::WeightMismatch(format!(
                "tensor {name} has shape {:?}, expected {:?}",
                t.shape, shape
            )));
        }
        self.used.borrow_mut().insert(name.to_string());
        Ok(t)
    }

    pub fn finish(self) -> Result<(), NetError> {
        let used = self.used.into_inner();
        let unused: Vec<&str> = self
            .store
            .names()
            .filter(|n| !used.contains(*n))
            .collect();
        if !unused.is_empty() {
            return Err(NetError::WeightMismatch(format!(
                "unused tensors in weight store: {}",
                unused.join(", ")
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::config::param_count;

    fn tiny_cfg() -> ModelConfig {
        ModelConfig {
            d: 4,
            b: 1,
            w: 4,
            s: 4,
            h: 3,
            l: 1,
            e: 5,
            ..ModelConfig::default()
        }
    }

    #[test]
    fn random_init_matches_inventory_and_is_deterministic() {
        let cfg = tiny_cfg();
        let a = WeightStore::random_init(&cfg, 42);
        let b = WeightStore::random_init(&cfg, 42);
        let c = WeightStore::random_init(&cfg, 43);
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.param_count(), param_count(&cfg));
        // prelu constant, weights within bound
        let prelu = a.get("block0.global.ffn.prelu").unwrap();
        assert_eq!(prelu.data, vec![0.25]);
        let w = a.get("encode.conv.weight").unwrap();
        let bound = 1.0 / (18f32).sqrt(); // fan_in = 2·3·3
        assert!(w.data.iter().all(|v| v.abs() <= bound + 1e-7));
    }

    #[test]
    fn container_round_trips_bit_exactly() {
        let cfg = tiny_cfg();
        let store = WeightStore::random_init(&cfg, 7);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.tcew");
        store.save(&path).unwrap();
        let loaded = WeightStore::load(&path).unwrap();
        assert_eq!(store, loaded);
        // header sanity
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[..4], b"TCEW");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        assert_eq!(
            u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize,
            store.len()
        );
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.tcew");
        std::fs::write(&path, b"NOPE").unwrap();
        assert!(matches!(WeightStore::load(&path), Err(NetError::BadWeightFile(_))));
        // truncated header
        std::fs::write(&path, b"TC").unwrap();
        assert!(matches!(WeightStore::load(&path), Err(NetError::BadWeightFile(_))));
        // valid store with trailing garbage
        let store = WeightStore::random_init(&tiny_cfg(), 1);
        store.save(&path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.push(0);
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(WeightStore::load(&path), Err(NetError::BadWeightFile(_))));
    }

    #[test]
    fn strict_reader_flags_missing_wrong_shape_and_unused() {
        let mut store = WeightStore::default();
        store.insert("a", Tensor::zeros(&[2, 3]));
        store.insert("b", Tensor::zeros(&[4]));

        let r = WeightReader::new(&store);
        assert!(matches!(r.get("missing", &[1]), Err(NetError::WeightMismatch(_))));
        assert!(matches!(r.get("a", &[3, 2]), Err(NetError::WeightMismatch(_))));
        r.get("a", &[2, 3]).unwrap();
        // "b" unused
        let err = r.finish();
        match err {
            Err(NetError::WeightMismatch(msg)) => assert!(msg.contains("b")),
            other => panic!("expected unused-tensor error, got {other:?}"),
        }

        let r = WeightReader::new(&store);
        r.get("a", &[2, 3]).unwrap();
        r.get("b", &[4]).unwrap();
        r.finish().unwrap();
    }
}
