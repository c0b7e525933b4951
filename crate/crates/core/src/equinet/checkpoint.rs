//! Self-describing checkpoint container: a JSON header (metadata, array
//! names and shapes) followed by raw little-endian f64 data. Values pass
//! through f64 losslessly for both f32 and f64 parameter stores, so
//! round-trips are bit-exact.

use super::NnError;
use crate::autodiff::{ParamStore, Scalar};
use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::{ArrayD, IxDyn};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

const MAGIC: &[u8; 8] = b"EQSACKPT";

#[derive(serde::Serialize, serde::Deserialize)]
struct Header {
    meta: serde_json::Value,
    arrays: Vec<ArrayInfo>,
}

#[derive(serde::Serialize, serde::Deserialize)]
struct ArrayInfo {
    name: String,
    shape: Vec<usize>,
}

pub struct Checkpoint {
    pub meta: serde_json::Value,
    pub arrays: Vec<(String, ArrayD<f64>)>,
}

impl Checkpoint {
    pub fn array(&self, name: &str) -> Option<&ArrayD<f64>> {
        self.arrays.iter().find(|(n, _)| n == name).map(|(_, a)| a)
    }

    /// Copy arrays named `prefix.<param>` into `store`, checking shapes.
    pub fn load_into<T: Scalar>(
        &self,
        prefix: &str,
        store: &mut ParamStore<T>,
    ) -> Result<(), NnError> {
        for i in 0..store.len() {
            let id = crate::autodiff::ParamId(i);
            let name = format!("{}.{}", prefix, store.iter().nth(i).unwrap().1.name);
            let src = self
                .array(&name)
                .ok_or_else(|| NnError::Checkpoint(format!("missing array {name}")))?;
            if src.shape() != store.value(id).shape() {
                return Err(NnError::Checkpoint(format!(
                    "shape mismatch for {name}: {:?} vs {:?}",
                    src.shape(),
                    store.value(id).shape()
                )));
            }
            let cast = src.mapv(|v| T::from_f(v));
            store.value_mut(id).assign(&cast);
        }
        store.version += 1;
        Ok(())
    }
}

fn io_err(e: std::io::Error) -> NnError {
    NnError::Checkpoint(e.to_string())
}

/// Save parameter stores under name prefixes, with arbitrary JSON metadata.
pub fn save_checkpoint<T: Scalar>(
    path: &Path,
    meta: &serde_json::Value,
    parts: &[(&str, &ParamStore<T>)],
) -> Result<(), NnError> {
    let mut arrays: Vec<(String, Vec<usize>)> = Vec::new();
    for (prefix, store) in parts {
        for (_, entry) in store.iter() {
            arrays.push((format!("{prefix}.{}", entry.name), entry.value.shape().to_vec()));
        }
    }
    let header = Header {
        meta: meta.clone(),
        arrays: arrays
            .iter()
            .map(|(name, shape)| ArrayInfo { name: name.clone(), shape: shape.clone() })
            .collect(),
    };
    let header_bytes = serde_json::to_vec(&header).map_err(|e| NnError::Checkpoint(e.to_string()))?;

    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(io_err)?;
    }
    let file = std::fs::File::create(path).map_err(io_err)?;
    let mut w = BufWriter::new(file);
    w.write_all(MAGIC).map_err(io_err)?;
    w.write_u64::<LittleEndian>(header_bytes.len() as u64).map_err(io_err)?;
    w.write_all(&header_bytes).map_err(io_err)?;
    for (_, store) in parts {
        for (_, entry) in store.iter() {
            for v in entry.value.iter() {
                w.write_f64::<LittleEndian>(v.to_f()).map_err(io_err)?;
            }
        }
    }
    w.flush().map_err(io_err)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, NnError> {
    let file = std::fs::File::open(path)
        .map_err(|e| NnError::Checkpoint(format!("{}: {e}", path.display())))?;
    let mut r = BufReader::new(file);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(io_err)?;
    if &magic != MAGIC {
        return Err(NnError::Checkpoint("bad magic".into()));
    }
    let hlen = r.read_u64::<LittleEndian>().map_err(io_err)? as usize;
    let mut hbytes = vec![0u8; hlen];
    r.read_exact(&mut hbytes).map_err(io_err)?;
    let header: Header =
        serde_json::from_slice(&hbytes).map_err(|e| NnError::Checkpoint(e.to_string()))?;
    let mut arrays = Vec::with_capacity(header.arrays.len());
    for info in &header.arrays {
        let n: usize = info.shape.iter().product();
        let mut data = vec![0.0f64; n];
        r.read_f64_into::<LittleEndian>(&mut data).map_err(io_err)?;
        let arr = ArrayD::from_shape_vec(IxDyn(&info.shape), data)
            .map_err(|e| NnError::Checkpoint(e.to_string()))?;
        arrays.push((info.name.clone(), arr));
    }
    Ok(Checkpoint { meta: header.meta, arrays })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("test.ckpt");
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut store = ParamStore::<f32>::new();
        store.insert("w", ArrayD::from_shape_simple_fn(IxDyn(&[3, 4]), || rng.gen::<f32>()));
        store.insert("b", ArrayD::from_shape_simple_fn(IxDyn(&[4]), || rng.gen::<f32>()));
        let meta = serde_json::json!({"group": "d4"});
        save_checkpoint(&path, &meta, &[("actor", &store)]).unwrap();

        let ck = load_checkpoint(&path).unwrap();
        assert_eq!(ck.meta["group"], "d4");
        let mut store2 = ParamStore::<f32>::new();
        store2.insert("w", ArrayD::zeros(IxDyn(&[3, 4])));
        store2.insert("b", ArrayD::zeros(IxDyn(&[4])));
        ck.load_into("actor", &mut store2).unwrap();
        for i in 0..store.len() {
            let id = crate::autodiff::ParamId(i);
            let a = store.value(id);
            let b = store2.value(id);
            assert!(a.iter().zip(b.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }

    #[test]
    fn missing_array_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("test.ckpt");
        let store = ParamStore::<f32>::new();
        save_checkpoint(&path, &serde_json::json!({}), &[("actor", &store)]).unwrap();
        let ck = load_checkpoint(&path).unwrap();
        let mut other = ParamStore::<f32>::new();
        other.insert("w", ArrayD::zeros(IxDyn(&[2])));
        assert!(ck.load_into("actor", &mut other).is_err());
    }
}
