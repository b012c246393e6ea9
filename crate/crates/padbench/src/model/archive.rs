//! Model file format: a single binary archive holding all tensors plus a
//! JSON metadata block (spec echo, schema version, class-index and
//! preprocessing conventions).
//!
//! Layout: 8-byte magic, u32 schema version, u64 metadata length, metadata
//! JSON, u64 tensor count, then per tensor: u64 name length, name bytes,
//! u64 ndim, u64 dims, little-endian f64 data. Tensor order is fixed, so
//! identical models serialize to identical bytes.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};

use crate::error::{PadError, Result};
use crate::nn::backbone::{Backbone, BackboneConfig};
use crate::nn::layers::Linear;

use super::{PadNet, PadNetSpec};

const MAGIC: &[u8; 8] = b"PADBENCH";
pub const ARCHIVE_SCHEMA_VERSION: u32 = 1;

/// Fixed in the schema: sigmoid unit 0 is bona fide, unit 1 is attack.
pub const CLASS_CONVENTION: &str = "unit0=bonafide,unit1=attack";
/// Fixed in the schema: bilinear resize to 224×224, pixels scaled to [−1, 1].
pub const PREPROCESSING_CONVENTION: &str = "bilinear-224x224,scale-[-1,1]";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum ArchiveKind {
    Backbone,
    PadNet,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ArchiveMeta {
    kind: ArchiveKind,
    backbone_config: BackboneConfig,
    spec: Option<PadNetSpec>,
    class_convention: String,
    preprocessing: String,
}

fn corrupt(path: &Path, what: impl std::fmt::Display) -> PadError {
    PadError::Format(format!("{}: {what}", path.display()))
}

fn write_archive(
    path: &Path,
    meta: &ArchiveMeta,
    tensors: &[(String, ndarray::ArrayD<f64>)],
) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| PadError::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    let io_err = |e: std::io::Error| PadError::io(path, e);

    w.write_all(MAGIC).map_err(io_err)?;
    w.write_u32::<LittleEndian>(ARCHIVE_SCHEMA_VERSION).map_err(io_err)?;
    let meta_json = serde_json::to_vec(meta)
        .map_err(|e| PadError::Format(format!("metadata serialization: {e}")))?;
    w.write_u64::<LittleEndian>(meta_json.len() as u64).map_err(io_err)?;
    w.write_all(&meta_json).map_err(io_err)?;

    w.write_u64::<LittleEndian>(tensors.len() as u64).map_err(io_err)?;
    for (name, tensor) in tensors {
        w.write_u64::<LittleEndian>(name.len() as u64).map_err(io_err)?;
        w.write_all(name.as_bytes()).map_err(io_err)?;
        w.write_u64::<LittleEndian>(tensor.ndim() as u64).map_err(io_err)?;
        for &d in tensor.shape() {
            w.write_u64::<LittleEndian>(d as u64).map_err(io_err)?;
        }
        for &v in tensor.iter() {
            w.write_f64::<LittleEndian>(v).map_err(io_err)?;
        }
    }
    w.flush().map_err(io_err)
}

fn read_archive(path: &Path) -> Result<(ArchiveMeta, BTreeMap<String, ndarray::ArrayD<f64>>)> {
    let file = std::fs::File::open(path).map_err(|e| PadError::io(path, e))?;
    let mut r = std::io::BufReader::new(file);

    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)
        .map_err(|_| corrupt(path, "file too short for magic header"))?;
    if &magic != MAGIC {
        return Err(corrupt(path, "not a padbench archive (bad magic)"));
    }
    let version = r
        .read_u32::<LittleEndian>()
        .map_err(|_| corrupt(path, "truncated schema version"))?;
    if version != ARCHIVE_SCHEMA_VERSION {
        return Err(corrupt(
            path,
            format!("unsupported schema_version {version} (expected {ARCHIVE_SCHEMA_VERSION})"),
        ));
    }
    let meta_len = r
        .read_u64::<LittleEndian>()
        .map_err(|_| corrupt(path, "truncated metadata length"))? as usize;
    if meta_len > 16 << 20 {
        return Err(corrupt(path, "metadata block implausibly large"));
    }
    let mut meta_json = vec![0u8; meta_len];
    r.read_exact(&mut meta_json)
        .map_err(|_| corrupt(path, "truncated metadata block"))?;
    let meta: ArchiveMeta = serde_json::from_slice(&meta_json)
        .map_err(|e| corrupt(path, format!("metadata JSON: {e}")))?;

    let n_tensors = r
        .read_u64::<LittleEndian>()
        .map_err(|_| corrupt(path, "truncated tensor count"))? as usize;
    let mut tensors = BTreeMap::new();
    for _ in 0..n_tensors {
        let name_len = r
            .read_u64::<LittleEndian>()
            .map_err(|_| corrupt(path, "truncated tensor name length"))? as usize;
        if name_len > 4096 {
            return Err(corrupt(path, "tensor name implausibly long"));
        }
        let mut name_bytes = vec![0u8; name_len];
        r.read_exact(&mut name_bytes)
            .map_err(|_| corrupt(path, "truncated tensor name"))?;
        let name = String::from_utf8(name_bytes)
            .map_err(|_| corrupt(path, "tensor name is not UTF-8"))?;
        let ndim = r
            .read_u64::<LittleEndian>()
            .map_err(|_| corrupt(path, "truncated tensor rank"))? as usize;
        if ndim > 8 {
            return Err(corrupt(path, format!("tensor `{name}` rank {ndim} too large")));
        }
        let mut dims = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            dims.push(
                r.read_u64::<LittleEndian>()
                    .map_err(|_| corrupt(path, "truncated tensor dims"))? as usize,
            );
        }
        let len: usize = dims.iter().product();
        if len > 1 << 28 {
            return Err(corrupt(path, format!("tensor `{name}` implausibly large")));
        }
        let mut data = vec![0.0f64; len];
        r.read_f64_into::<LittleEndian>(&mut data)
            .map_err(|_| corrupt(path, format!("truncated data for tensor `{name}`")))?;
        let tensor = ndarray::ArrayD::from_shape_vec(dims, data)
            .map_err(|e| corrupt(path, format!("tensor `{name}`: {e}")))?;
        tensors.insert(name, tensor);
    }
    Ok((meta, tensors))
}

/// Saves a bare backbone checkpoint.
pub fn save_backbone(backbone: &Backbone, path: &Path) -> Result<()> {
    let meta = ArchiveMeta {
        kind: ArchiveKind::Backbone,
        backbone_config: backbone.config.clone(),
        spec: None,
        class_convention: CLASS_CONVENTION.to_string(),
        preprocessing: PREPROCESSING_CONVENTION.to_string(),
    };
    write_archive(path, &meta, &backbone.tensors())
}

/// Loads a backbone checkpoint saved by [`save_backbone`].
pub fn load_backbone(path: &Path) -> Result<Backbone> {
    let (meta, tensors) = read_archive(path)?;
    if meta.kind != ArchiveKind::Backbone {
        return Err(corrupt(path, "archive holds a full model, not a backbone"));
    }
    let mut backbone = Backbone::build(&meta.backbone_config)?;
    backbone.load_tensors(&tensors)?;
    Ok(backbone)
}

/// Saves the full model: backbone, head, and the model-spec echo.
pub fn save_model(model: &PadNet, path: &Path) -> Result<()> {
    let meta = ArchiveMeta {
        kind: ArchiveKind::PadNet,
        backbone_config: model.backbone.config.clone(),
        spec: Some(model.spec.clone()),
        class_convention: CLASS_CONVENTION.to_string(),
        preprocessing: PREPROCESSING_CONVENTION.to_string(),
    };
    let mut tensors = model.backbone.tensors();
    for p in model.head_params() {
        tensors.push((p.name.clone(), p.value.clone()));
    }
    write_archive(path, &meta, &tensors)
}

/// Loads a model saved by [`save_model`]; predictions round-trip exactly.
pub fn load_model(path: &Path) -> Result<PadNet> {
    let (meta, tensors) = read_archive(path)?;
    let spec = match (meta.kind, meta.spec) {
        (ArchiveKind::PadNet, Some(spec)) => spec,
        _ => return Err(corrupt(path, "archive is not a full model")),
    };
    spec.validate()?;
    let mut backbone = Backbone::build(&meta.backbone_config)?;
    backbone.load_tensors(&tensors)?;
    backbone.set_trainable_from(spec.freeze_plan.first_trainable());

    let mut rng = rand::SeedableRng::seed_from_u64(0);
    let mut head = Vec::new();
    let mut input = crate::nn::backbone::FEATURE_DIM;
    for (i, layer) in spec.head.layers.iter().enumerate() {
        let mut linear = Linear::new(&format!("head.dense{}", i + 1), &mut rng, input, layer.width);
        for p in [&mut linear.weight, &mut linear.bias] {
            let t = tensors.get(&p.name).ok_or_else(|| {
                corrupt(path, format!("archive is missing tensor `{}`", p.name))
            })?;
            if t.shape() != p.value.shape() {
                return Err(corrupt(
                    path,
                    format!(
                        "tensor `{}` has shape {:?}, expected {:?}",
                        p.name,
                        t.shape(),
                        p.value.shape()
                    ),
                ));
            }
            p.value.assign(t);
        }
        input = layer.width;
        head.push(linear);
    }
    Ok(PadNet::from_parts(spec, backbone, head))
}
