//! Parameter snapshots. The JSON form is human-readable; the binary form
//! stores raw little-endian `f64` bits and round-trips exactly.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::NeuralError;
use crate::tensor::{ParamStore, Tensor};

const MAGIC: &[u8; 4] = b"VGCK";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Json,
    Binary,
}

impl Format {
    /// `.json` selects JSON, anything else binary.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => Format::Json,
            _ => Format::Binary,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredTensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub meta: serde_json::Value,
    pub params: BTreeMap<String, StoredTensor>,
}

impl Checkpoint {
    pub fn from_store(store: &ParamStore, meta: serde_json::Value) -> Self {
        let params = store
            .iter()
            .map(|(_, name, t)| {
                (
                    name.to_string(),
                    StoredTensor {
                        shape: t.shape().to_vec(),
                        data: t.data().to_vec(),
                    },
                )
            })
            .collect();
        Self { meta, params }
    }

    /// Copies values into an already-built store. Names and shapes must match
    /// exactly in both directions.
    pub fn apply(&self, store: &mut ParamStore) -> Result<(), NeuralError> {
        if self.params.len() != store.len() {
            return Err(NeuralError::Checkpoint(format!(
                "checkpoint has {} parameters, model has {}",
                self.params.len(),
                store.len()
            )));
        }
        for (name, st) in &self.params {
            let id = store
                .id(name)
                .ok_or_else(|| NeuralError::Checkpoint(format!("unknown parameter {name}")))?;
            if store.get(id).shape() != st.shape.as_slice() {
                return Err(NeuralError::Checkpoint(format!(
                    "shape mismatch for {name}: {:?} vs {:?}",
                    st.shape,
                    store.get(id).shape()
                )));
            }
            *store.get_mut(id) = Tensor::new(st.shape.clone(), st.data.clone())
                .map_err(|e| NeuralError::Checkpoint(format!("{name}: {e}")))?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        let meta = serde_json::to_vec(&self.meta).expect("json value serializes");
        out.extend_from_slice(&(meta.len() as u64).to_le_bytes());
        out.extend_from_slice(&meta);
        out.extend_from_slice(&(self.params.len() as u64).to_le_bytes());
        for (name, st) in &self.params {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(st.shape.len() as u32).to_le_bytes());
            for &d in &st.shape {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for &v in &st.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, NeuralError> {
        let mut r = bytes;
        let mut magic = [0u8; 4];
        read_exact(&mut r, &mut magic)?;
        if &magic != MAGIC {
            return Err(NeuralError::Checkpoint("bad magic".into()));
        }
        let version = read_u32(&mut r)?;
        if version != VERSION {
            return Err(NeuralError::Checkpoint(format!("unsupported version {version}")));
        }
        let meta_len = read_u64(&mut r)? as usize;
        let meta_bytes = take(&mut r, meta_len)?;
        let meta = serde_json::from_slice(meta_bytes)
            .map_err(|e| NeuralError::Checkpoint(format!("meta: {e}")))?;
        let count = read_u64(&mut r)?;
        let mut params = BTreeMap::new();
        for _ in 0..count {
            let name_len = read_u32(&mut r)? as usize;
            let name = std::str::from_utf8(take(&mut r, name_len)?)
                .map_err(|e| NeuralError::Checkpoint(format!("name: {e}")))?
                .to_string();
            let ndim = read_u32(&mut r)? as usize;
            let shape = (0..ndim)
                .map(|_| read_u64(&mut r).map(|d| d as usize))
                .collect::<Result<Vec<_>, _>>()?;
            let n: usize = shape.iter().product();
            let raw = take(&mut r, n.checked_mul(8).ok_or_else(truncated)?)?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            params.insert(name, StoredTensor { shape, data });
        }
        if !r.is_empty() {
            return Err(NeuralError::Checkpoint("trailing bytes".into()));
        }
        Ok(Self { meta, params })
    }

    pub fn save(&self, path: &Path, format: Format) -> Result<(), NeuralError> {
        let bytes = match format {
            Format::Json => serde_json::to_vec_pretty(self)
                .map_err(|e| NeuralError::Checkpoint(e.to_string()))?,
            Format::Binary => self.to_bytes(),
        };
        let mut f = std::fs::File::create(path)?;
        f.write_all(&bytes)?;
        Ok(())
    }

    /// Detects the format from the leading magic bytes.
    pub fn load(path: &Path) -> Result<Self, NeuralError> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        if bytes.starts_with(MAGIC) {
            Self::from_bytes(&bytes)
        } else {
            serde_json::from_slice(&bytes).map_err(|e| NeuralError::Checkpoint(e.to_string()))
        }
    }
}

fn truncated() -> NeuralError {
    NeuralError::Checkpoint("truncated checkpoint".into())
}

fn take<'a>(r: &mut &'a [u8], n: usize) -> Result<&'a [u8], NeuralError> {
    if r.len() < n {
        return Err(truncated());
    }
    let (head, tail) = r.split_at(n);
    *r = tail;
    Ok(head)
}

fn read_exact(r: &mut &[u8], buf: &mut [u8]) -> Result<(), NeuralError> {
    buf.copy_from_slice(take(r, buf.len())?);
    Ok(())
}

fn read_u32(r: &mut &[u8]) -> Result<u32, NeuralError> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut &[u8]) -> Result<u64, NeuralError> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b)?;
    Ok(u64::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::neural::{Activation, Mlp};

    fn sample_store() -> ParamStore {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut store = ParamStore::new();
        Mlp::new(&mut store, "net", &[3, 4, 2], Activation::Identity, &mut rng);
        let id = store.id("net/layer0/b").unwrap();
        store.get_mut(id).data_mut().copy_from_slice(&[
            0.1 + 0.2,
            f64::MIN_POSITIVE,
            -1.0 / 3.0,
            1e300,
        ]);
        store
    }

    fn bits(s: &ParamStore) -> Vec<u64> {
        s.iter()
            .flat_map(|(_, _, t)| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>())
            .collect()
    }

    #[test]
    fn binary_round_trip_is_bit_exact() {
        let store = sample_store();
        let meta = serde_json::json!({"seed": 12, "kind": "test"});
        let ck = Checkpoint::from_store(&store, meta.clone());
        let back = Checkpoint::from_bytes(&ck.to_bytes()).unwrap();
        assert_eq!(back.meta, meta);
        let mut fresh = sample_store();
        for id in fresh.ids().collect::<Vec<_>>() {
            fresh.get_mut(id).data_mut().fill(0.0);
        }
        back.apply(&mut fresh).unwrap();
        assert_eq!(bits(&fresh), bits(&store));
    }

    #[test]
    fn json_round_trip_through_files() {
        let dir = tempfile::tempdir().unwrap();
        let store = sample_store();
        for (file, fmt) in [("a.json", Format::Json), ("a.ck", Format::Binary)] {
            let path = dir.path().join(file);
            assert_eq!(Format::from_path(&path), fmt);
            Checkpoint::from_store(&store, serde_json::Value::Null)
                .save(&path, fmt)
                .unwrap();
            let mut target = sample_store();
            target.get_mut(target.id("net/layer1/W").unwrap()).data_mut()[0] = 99.0;
            Checkpoint::load(&path).unwrap().apply(&mut target).unwrap();
            assert_eq!(bits(&target), bits(&store));
        }
    }

    #[test]
    fn mismatches_are_rejected() {
        let store = sample_store();
        let ck = Checkpoint::from_store(&store, serde_json::Value::Null);
        let mut other = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        Mlp::new(&mut other, "net", &[3, 5, 2], Activation::Identity, &mut rng);
        assert!(ck.apply(&mut other).unwrap_err().to_string().contains("shape"));
        let mut renamed = ParamStore::new();
        Mlp::new(&mut renamed, "other", &[3, 4, 2], Activation::Identity, &mut rng);
        assert!(ck.apply(&mut renamed).is_err());
        let bytes = ck.to_bytes();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        assert!(Checkpoint::from_bytes(b"XXXX").is_err());
    }
}
