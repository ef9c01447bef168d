//! Single-file checkpoint container: magic + JSON header + raw little-endian
//! weight blobs. Loading restores values bit-exactly for the stored dtype.
//!
//! Layout:
//! ```text
//! bytes 0..8   magic "SYNFPCK1"
//! bytes 8..16  header length (u64 LE)
//! header JSON  { format_version, kind, dtype, step, ada_p, config, tensors }
//! blob         concatenated tensor bytes at the offsets named in the header
//! ```

use crate::error::{Error, Result};
use crate::params::{ParamRef, ParamStore};
use crate::real::Real;
use crate::tape::Arr;
use ndarray::IxDyn;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

const MAGIC: &[u8; 8] = b"SYNFPCK1";
const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    kind: String,
    dtype: String,
    step: u64,
    ada_p: Option<f64>,
    config: serde_json::Value,
    tensors: Vec<TensorMeta>,
}

#[derive(Serialize, Deserialize, Clone)]
struct TensorMeta {
    name: String,
    shape: Vec<usize>,
    offset: u64,
    byte_len: u64,
}

#[derive(Clone)]
struct TensorData {
    shape: Vec<usize>,
    bytes: Vec<u8>,
}

pub struct Checkpoint {
    pub kind: String,
    pub dtype: String,
    pub step: u64,
    pub ada_p: Option<f64>,
    pub config: serde_json::Value,
    tensors: BTreeMap<String, TensorData>,
}

impl Checkpoint {
    pub fn new(kind: impl Into<String>, dtype: &str, config: serde_json::Value) -> Self {
        Checkpoint {
            kind: kind.into(),
            dtype: dtype.to_string(),
            step: 0,
            ada_p: None,
            config,
            tensors: BTreeMap::new(),
        }
    }

    pub fn tensor_names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(|s| s.as_str())
    }

    pub fn insert_tensor<F: Real>(&mut self, name: impl Into<String>, value: &Arr<F>) {
        assert_eq!(F::DTYPE, self.dtype, "checkpoint dtype mismatch");
        let flat: Vec<F> = value.iter().cloned().collect();
        let mut bytes = Vec::with_capacity(flat.len() * std::mem::size_of::<F>());
        F::write_le_bytes(&flat, &mut bytes);
        self.tensors
            .insert(name.into(), TensorData { shape: value.shape().to_vec(), bytes });
    }

    /// Stores every parameter of `store` under `prefix.`.
    pub fn insert_store<F: Real>(&mut self, prefix: &str, store: &ParamStore<F>) {
        for i in 0..store.len() {
            let r = ParamRef(i);
            self.insert_tensor(format!("{prefix}.{}", store.name(r)), store.value(r));
        }
    }

    pub fn tensor<F: Real>(&self, name: &str) -> Option<Arr<F>> {
        let t = self.tensors.get(name)?;
        assert_eq!(F::DTYPE, self.dtype, "checkpoint dtype mismatch");
        let values = F::read_le_bytes(&t.bytes);
        Some(Arr::from_shape_vec(IxDyn(&t.shape), values).expect("shape matches byte count"))
    }

    /// Reads a tensor converting from the stored dtype to f64.
    pub fn tensor_f64(&self, name: &str) -> Option<ndarray::ArrayD<f64>> {
        let t = self.tensors.get(name)?;
        let values: Vec<f64> = match self.dtype.as_str() {
            "f32" => f32::read_le_bytes(&t.bytes).into_iter().map(f64::from).collect(),
            "f64" => f64::read_le_bytes(&t.bytes),
            other => panic!("unknown checkpoint dtype {other:?}"),
        };
        Some(ndarray::ArrayD::from_shape_vec(IxDyn(&t.shape), values).expect("shape"))
    }

    /// Assigns stored values into an existing store by name; every parameter
    /// of the store must be present with a matching shape.
    pub fn assign_into<F: Real>(&self, prefix: &str, store: &mut ParamStore<F>) -> Result<()> {
        for i in 0..store.len() {
            let r = ParamRef(i);
            let key = format!("{prefix}.{}", store.name(r));
            let value = self.tensor::<F>(&key).ok_or_else(|| {
                Error::invalid(format!("checkpoint is missing tensor {key}"))
            })?;
            if value.shape() != store.value(r).shape() {
                return Err(Error::shape(format!(
                    "tensor {key}: checkpoint {:?} vs model {:?}",
                    value.shape(),
                    store.value(r).shape()
                )));
            }
            *store.value_mut(r) = value;
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut metas = Vec::with_capacity(self.tensors.len());
        let mut blob: Vec<u8> = Vec::new();
        for (name, t) in &self.tensors {
            metas.push(TensorMeta {
                name: name.clone(),
                shape: t.shape.clone(),
                offset: blob.len() as u64,
                byte_len: t.bytes.len() as u64,
            });
            blob.extend_from_slice(&t.bytes);
        }
        let header = Header {
            format_version: FORMAT_VERSION,
            kind: self.kind.clone(),
            dtype: self.dtype.clone(),
            step: self.step,
            ada_p: self.ada_p,
            config: self.config.clone(),
            tensors: metas,
        };
        let header_json = serde_json::to_vec(&header)
            .map_err(|e| Error::checkpoint(path, format!("header encode: {e}")))?;

        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(MAGIC).map_err(|e| Error::io(path, e))?;
        f.write_all(&(header_json.len() as u64).to_le_bytes())
            .map_err(|e| Error::io(path, e))?;
        f.write_all(&header_json).map_err(|e| Error::io(path, e))?;
        f.write_all(&blob).map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Checkpoint> {
        let path = path.as_ref();
        let mut f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut magic = [0u8; 8];
        f.read_exact(&mut magic).map_err(|e| Error::io(path, e))?;
        if &magic != MAGIC {
            return Err(Error::checkpoint(path, "bad magic; not a checkpoint file"));
        }
        let mut len_bytes = [0u8; 8];
        f.read_exact(&mut len_bytes).map_err(|e| Error::io(path, e))?;
        let header_len = u64::from_le_bytes(len_bytes) as usize;
        let mut header_json = vec![0u8; header_len];
        f.read_exact(&mut header_json).map_err(|e| Error::io(path, e))?;
        let header: Header = serde_json::from_slice(&header_json)
            .map_err(|e| Error::checkpoint(path, format!("header decode: {e}")))?;
        if header.format_version != FORMAT_VERSION {
            return Err(Error::checkpoint(
                path,
                format!("unsupported format version {}", header.format_version),
            ));
        }
        let mut blob = Vec::new();
        f.read_to_end(&mut blob).map_err(|e| Error::io(path, e))?;

        let mut tensors = BTreeMap::new();
        for meta in header.tensors {
            let start = meta.offset as usize;
            let end = start + meta.byte_len as usize;
            if end > blob.len() {
                return Err(Error::checkpoint(
                    path,
                    format!("tensor {} extends past end of file", meta.name),
                ));
            }
            tensors.insert(
                meta.name,
                TensorData { shape: meta.shape, bytes: blob[start..end].to_vec() },
            );
        }
        Ok(Checkpoint {
            kind: header.kind,
            dtype: header.dtype,
            step: header.step,
            ada_p: header.ada_p,
            config: header.config,
            tensors,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::init;

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let mut store: ParamStore<f32> = ParamStore::new();
        let mut rng = synfp_core::rng::fork(3, "ckpt", 0);
        store.add("layer.weight", init::normal(&mut rng, &[4, 3], 1.0));
        store.add("layer.bias", init::normal(&mut rng, &[4], 0.5));
        let hash_before = store.content_hash();

        let mut ck = Checkpoint::new("test", "f32", serde_json::json!({"res": 8}));
        ck.step = 42;
        ck.ada_p = Some(0.6);
        ck.insert_store("model", &store);
        ck.save(&path).unwrap();

        let loaded = Checkpoint::load(&path).unwrap();
        assert_eq!(loaded.step, 42);
        assert_eq!(loaded.ada_p, Some(0.6));
        assert_eq!(loaded.config["res"], 8);

        let mut store2: ParamStore<f32> = ParamStore::new();
        store2.add("layer.weight", init::zeros(&[4, 3]));
        store2.add("layer.bias", init::zeros(&[4]));
        loaded.assign_into("model", &mut store2).unwrap();
        assert_eq!(store2.content_hash(), hash_before);
    }

    #[test]
    fn save_is_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let (p1, p2) = (dir.path().join("a.ckpt"), dir.path().join("b.ckpt"));
        let mut store: ParamStore<f64> = ParamStore::new();
        let mut rng = synfp_core::rng::fork(9, "ckpt", 1);
        store.add("w", init::normal(&mut rng, &[8], 1.0));
        let mut ck = Checkpoint::new("t", "f64", serde_json::Value::Null);
        ck.insert_store("m", &store);
        ck.save(&p1).unwrap();
        ck.save(&p2).unwrap();
        assert_eq!(std::fs::read(p1).unwrap(), std::fs::read(p2).unwrap());
    }

    #[test]
    fn missing_tensor_is_reported() {
        let ck = Checkpoint::new("t", "f32", serde_json::Value::Null);
        let mut store: ParamStore<f32> = ParamStore::new();
        store.add("w", init::zeros(&[2]));
        let err = ck.assign_into("m", &mut store).unwrap_err();
        assert!(err.to_string().contains("m.w"));
    }

    #[test]
    fn rejects_non_checkpoint_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk.ckpt");
        std::fs::write(&path, b"not a checkpoint").unwrap();
        assert!(Checkpoint::load(&path).is_err());
    }
}
