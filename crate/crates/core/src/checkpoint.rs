//! Parameter checkpoints: a flat binary container of named double-precision
//! tensors behind a text manifest.
//!
//! Layout (all little-endian):
//!
//! ```text
//! VNHGCN-CKPT v1
//! meta <json: augmentation config, schema, dimension plan>
//! tensor <rows> <cols> <byte offset> <name>
//! ...
//! data <blob length in bytes>
//! <raw f64 blob>
//! ```
//!
//! Writes are atomic: the file is assembled in a temp file next to the
//! target and renamed into place.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::augment::AugmentationConfig;
use crate::error::{Error, Result};
use crate::graph::NetworkSchema;
use crate::model::{DimensionPlan, ModelParams};
use crate::numerics::DenseMatrix;

const MAGIC: &str = "VNHGCN-CKPT v1";

/// A trained model plus the augmentation it was trained with (`None` for
/// models trained on the plain, non-augmented graph).
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub params: ModelParams,
    pub augmentation: Option<AugmentationConfig>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointMeta {
    augmentation: Option<AugmentationConfig>,
    schema: NetworkSchema,
    plan: DimensionPlan,
}

pub fn save_checkpoint(path: &Path, model: &TrainedModel) -> Result<()> {
    let meta = CheckpointMeta {
        augmentation: model.augmentation,
        schema: model.params.schema().clone(),
        plan: model.params.plan().clone(),
    };
    let meta_json = serde_json::to_string(&meta)
        .map_err(|e| Error::data(format!("checkpoint meta serialization: {e}")))?;

    let names = model.params.tensor_names();
    let tensors = model.params.flat();
    let mut manifest = format!("{MAGIC}\nmeta {meta_json}\n");
    let mut blob = Vec::new();
    for (name, tensor) in names.iter().zip(&tensors) {
        manifest.push_str(&format!(
            "tensor {} {} {} {name}\n",
            tensor.rows(),
            tensor.cols(),
            blob.len()
        ));
        for v in tensor.data() {
            blob.extend_from_slice(&v.to_le_bytes());
        }
    }
    manifest.push_str(&format!("data {}\n", blob.len()));

    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(manifest.as_bytes())?;
    tmp.write_all(&blob)?;
    tmp.persist(path)
        .map_err(|e| Error::Io(e.error))?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<TrainedModel> {
    let bytes = fs::read(path)
        .map_err(|e| Error::data(format!("cannot read checkpoint {}: {e}", path.display())))?;
    let mut offset = 0usize;
    let mut next_line = || -> Result<&str> {
        let rest = &bytes[offset..];
        let end = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::data("truncated checkpoint manifest".to_string()))?;
        let line = std::str::from_utf8(&rest[..end])
            .map_err(|_| Error::data("non-UTF-8 checkpoint manifest".to_string()))?;
        offset += end + 1;
        Ok(line)
    };

    if next_line()? != MAGIC {
        return Err(Error::data(format!(
            "{} is not a {MAGIC} checkpoint",
            path.display()
        )));
    }
    let meta_line = next_line()?;
    let meta_json = meta_line
        .strip_prefix("meta ")
        .ok_or_else(|| Error::data("missing checkpoint meta line".to_string()))?;
    let meta: CheckpointMeta = serde_json::from_str(meta_json)
        .map_err(|e| Error::data(format!("bad checkpoint meta: {e}")))?;

    let mut specs: Vec<(usize, usize, usize, String)> = Vec::new();
    let blob_len;
    loop {
        let line = next_line()?;
        if let Some(rest) = line.strip_prefix("tensor ") {
            let mut it = rest.splitn(4, ' ');
            let parse = |s: Option<&str>| -> Result<usize> {
                s.and_then(|v| v.parse().ok())
                    .ok_or_else(|| Error::data(format!("bad tensor line '{line}'")))
            };
            let rows = parse(it.next())?;
            let cols = parse(it.next())?;
            let off = parse(it.next())?;
            let name = it
                .next()
                .ok_or_else(|| Error::data(format!("bad tensor line '{line}'")))?
                .to_string();
            specs.push((rows, cols, off, name));
        } else if let Some(rest) = line.strip_prefix("data ") {
            blob_len = rest
                .parse::<usize>()
                .map_err(|_| Error::data(format!("bad data line '{line}'")))?;
            break;
        } else {
            return Err(Error::data(format!("unexpected manifest line '{line}'")));
        }
    }
    let blob = &bytes[offset..];
    if blob.len() != blob_len {
        return Err(Error::data(format!(
            "checkpoint blob is {} bytes, manifest says {blob_len}",
            blob.len()
        )));
    }

    let mut tensors = Vec::with_capacity(specs.len());
    for (rows, cols, off, name) in specs {
        let len = rows * cols * 8;
        let slice = blob.get(off..off + len).ok_or_else(|| {
            Error::data(format!("tensor '{name}' extends past the checkpoint blob"))
        })?;
        let data: Vec<f64> = slice
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        tensors.push((name, DenseMatrix::from_vec(rows, cols, data)?));
    }

    let params = ModelParams::from_named_tensors(meta.schema, meta.plan, tensors)?;
    Ok(TrainedModel {
        params,
        augmentation: meta.augmentation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_graph, NodeTypeId};
    use crate::model::init_params;

    fn model() -> TrainedModel {
        let mut schema = NetworkSchema::new();
        let a = schema.add_node_type("a");
        let b = schema.add_node_type("b");
        schema.add_relation_pair("ab", "ba", a, b);
        let g = build_graph(
            schema,
            vec![DenseMatrix::zeros(3, 4), DenseMatrix::zeros(2, 5)],
            vec![vec![(0, 0)], vec![]],
            None,
        )
        .unwrap();
        let plan = DimensionPlan::uniform(&[4, 5], 2, 6, 3, NodeTypeId(0), 3);
        TrainedModel {
            params: init_params(g.schema(), plan, 123).unwrap(),
            augmentation: Some(AugmentationConfig::default()),
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let m = model();
        save_checkpoint(&path, &m).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        assert_eq!(m, loaded);

        // Saving twice produces identical bytes.
        let path2 = dir.path().join("model2.ckpt");
        save_checkpoint(&path2, &m).unwrap();
        assert_eq!(fs::read(&path).unwrap(), fs::read(&path2).unwrap());
    }

    #[test]
    fn wrong_magic_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk.ckpt");
        fs::write(&path, b"not a checkpoint\n").unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::Data(_))));
    }

    #[test]
    fn class_count_mismatch_lists_tensors() {
        let m = model();
        // Rebuild with a 4-class plan against 3-class tensors.
        let schema = m.params.schema().clone();
        let plan = DimensionPlan::uniform(&[4, 5], 2, 6, 3, NodeTypeId(0), 4);
        let names = m.params.tensor_names();
        let tensors: Vec<(String, DenseMatrix)> = names
            .into_iter()
            .zip(m.params.flat().into_iter().cloned())
            .collect();
        let err = ModelParams::from_named_tensors(schema, plan, tensors).unwrap_err();
        match err {
            Error::Shape(msg) => assert!(msg.contains("L1.self.a"), "{msg}"),
            other => panic!("expected shape error, got {other:?}"),
        }
    }
}
