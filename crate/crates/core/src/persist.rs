//! Model container format.
//!
//! ```text
//! offset  size  content
//! 0       8     magic "SEMTRACK"
//! 8       4     format version, u32 little-endian (currently 1)
//! 12      8     header length H in bytes, u64 little-endian
//! 20      H     UTF-8 JSON header
//! 20+H    ...   payload: every entry's values as f64 little-endian,
//!               concatenated in header order
//! ```
//!
//! The header holds the model configuration, the category labels, and one
//! entry per parameter tensor (`name`, `shape`, `dtype = "f64le"`, `offset`
//! and `len` counted in values from the start of the payload). An optional
//! `regressors` object records the ridge strength of a stored regressor set,
//! whose weights travel as the `regressor.weights` (4×D) and
//! `regressor.bias` (4) entries.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{build_model, CategoryLabel, ModelBundle, ModelConfig};
use crate::regression::RegressorSet;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"SEMTRACK";
pub const FORMAT_VERSION: u32 = 1;
const DTYPE: &str = "f64le";

#[derive(Debug, Serialize, Deserialize)]
struct Entry {
    name: String,
    shape: Vec<usize>,
    dtype: String,
    offset: usize,
    len: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct RegressorMeta {
    lambda: f64,
    feature_dim: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format_version: u32,
    config: ModelConfig,
    categories: Vec<CategoryLabel>,
    entries: Vec<Entry>,
    regressors: Option<RegressorMeta>,
}

/// Serializes a model, and optionally a regressor set, to bytes.
pub fn encode(model: &ModelBundle, regressors: Option<&RegressorSet>) -> Result<Vec<u8>> {
    let mut entries = Vec::new();
    let mut payload: Vec<f64> = Vec::new();
    let mut add = |name: String, t: &Tensor, payload: &mut Vec<f64>| {
        entries.push(Entry {
            name,
            shape: t.shape().to_vec(),
            dtype: DTYPE.into(),
            offset: payload.len(),
            len: t.len(),
        });
        payload.extend_from_slice(t.data());
    };
    for (name, p) in model.named_params() {
        add(format!("{name}.weights"), &p.weights, &mut payload);
        add(format!("{name}.bias"), &p.bias, &mut payload);
    }
    let meta = match regressors {
        Some(reg) => {
            let d = reg.feature_dim();
            if d != model.feature_dim() {
                return Err(Error::shape(
                    "save_model",
                    format!("regressor width {d} vs feature width {}", model.feature_dim()),
                ));
            }
            let w = Tensor::from_vec(&[4, d], reg.weights.concat())?;
            add("regressor.weights".into(), &w, &mut payload);
            add("regressor.bias".into(), &Tensor::from_vec(&[4], reg.bias.to_vec())?, &mut payload);
            Some(RegressorMeta {
                lambda: reg.lambda,
                feature_dim: d,
            })
        }
        None => None,
    };
    let header = Header {
        format_version: FORMAT_VERSION,
        config: model.config().clone(),
        categories: model.labels().to_vec(),
        entries,
        regressors: meta,
    };
    let header = serde_json::to_vec(&header).map_err(|e| Error::Format(e.to_string()))?;
    let mut out = Vec::with_capacity(20 + header.len() + payload.len() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    for v in payload {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

/// Parses a container produced by [`encode`].
pub fn decode(bytes: &[u8]) -> Result<(ModelBundle, Option<RegressorSet>)> {
    let fail = |msg: String| Error::Format(msg);
    if bytes.len() < 20 {
        return Err(fail(format!("file is {} bytes, shorter than the fixed prelude", bytes.len())));
    }
    if &bytes[..8] != MAGIC {
        return Err(fail("bad magic; not a model container".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(fail(format!("format version {version}, expected {FORMAT_VERSION}")));
    }
    let header_len = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
    let body = &bytes[20..];
    if body.len() < header_len {
        return Err(fail(format!("truncated header: {header_len} bytes declared, {} present", body.len())));
    }
    let header: Header =
        serde_json::from_slice(&body[..header_len]).map_err(|e| fail(format!("header: {e}")))?;
    if header.format_version != version {
        return Err(fail("header version disagrees with prelude".into()));
    }
    let payload = &body[header_len..];
    let total: usize = header.entries.iter().map(|e| e.len).sum();
    if payload.len() != total * 8 {
        return Err(fail(format!(
            "payload is {} bytes, entries need {}",
            payload.len(),
            total * 8
        )));
    }
    let values = |e: &Entry| -> Result<Tensor> {
        if e.dtype != DTYPE {
            return Err(fail(format!("entry {} has dtype {}", e.name, e.dtype)));
        }
        if e.shape.iter().product::<usize>() != e.len || (e.offset + e.len) * 8 > payload.len() {
            return Err(fail(format!("entry {} has inconsistent extent", e.name)));
        }
        let data = payload[e.offset * 8..(e.offset + e.len) * 8]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Tensor::from_vec(&e.shape, data)
    };

    let mut model = build_model(&header.config)?;
    if header.categories != model.labels() {
        return Err(fail(format!(
            "header lists {} categories but the configuration defines {}",
            header.categories.len(),
            model.num_classes()
        )));
    }
    let mut by_name: std::collections::BTreeMap<&str, &Entry> =
        header.entries.iter().map(|e| (e.name.as_str(), e)).collect();
    for (name, p) in model.named_params_mut() {
        for (suffix, slot) in [("weights", &mut p.weights), ("bias", &mut p.bias)] {
            let key = format!("{name}.{suffix}");
            let e = by_name
                .remove(key.as_str())
                .ok_or_else(|| fail(format!("missing entry {key}")))?;
            let t = values(e)?;
            if t.shape() != slot.shape() {
                return Err(fail(format!(
                    "entry {key} has shape {:?}, model expects {:?}",
                    t.shape(),
                    slot.shape()
                )));
            }
            *slot = t;
        }
        p.zero_grad();
    }
    let regressors = match header.regressors {
        Some(meta) => {
            let w = by_name
                .remove("regressor.weights")
                .ok_or_else(|| fail("missing regressor.weights".into()))
                .and_then(values)?;
            let b = by_name
                .remove("regressor.bias")
                .ok_or_else(|| fail("missing regressor.bias".into()))
                .and_then(values)?;
            let d = meta.feature_dim;
            if w.shape() != [4, d] || b.shape() != [4] || d != model.feature_dim() {
                return Err(fail("regressor entries do not match the feature width".into()));
            }
            let rows: Vec<Vec<f64>> = (0..4).map(|k| w.row(k).to_vec()).collect();
            Some(RegressorSet {
                weights: rows.try_into().expect("four rows"),
                bias: b.data().try_into().expect("four biases"),
                lambda: meta.lambda,
            })
        }
        None => None,
    };
    if let Some(extra) = by_name.keys().next() {
        return Err(fail(format!("unexpected entry {extra}")));
    }
    Ok((model, regressors))
}

pub fn save_model(model: &ModelBundle, path: &Path) -> Result<()> {
    save_bundle(model, None, path)
}

pub fn save_bundle(model: &ModelBundle, regressors: Option<&RegressorSet>, path: &Path) -> Result<()> {
    let bytes = encode(model, regressors)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<ModelBundle> {
    Ok(load_bundle(path)?.0)
}

pub fn load_bundle(path: &Path) -> Result<(ModelBundle, Option<RegressorSet>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes).map_err(|e| match e {
        Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::ModelConfig;

    fn model() -> ModelBundle {
        let cfg = ModelConfig::desk_scale(vec!["square".into(), "disk".into()]);
        build_model(&ModelConfig { seed: 5, ..cfg }).unwrap()
    }

    #[test]
    fn encode_decode_encode_is_stable() {
        let m = model();
        let bytes = encode(&m, None).unwrap();
        let (back, reg) = decode(&bytes).unwrap();
        assert_eq!(back, m);
        assert!(reg.is_none());
        assert_eq!(encode(&back, None).unwrap(), bytes);
    }

    #[test]
    fn regressors_ride_along() {
        let m = model();
        let d = m.feature_dim();
        let reg = RegressorSet {
            weights: std::array::from_fn(|k| (0..d).map(|i| (i * (k + 1)) as f64 * 1e-3).collect()),
            bias: [0.1, -0.2, 0.3, -0.4],
            lambda: 2.5,
        };
        let bytes = encode(&m, Some(&reg)).unwrap();
        let (_, back) = decode(&bytes).unwrap();
        assert_eq!(back.unwrap(), reg);
    }

    #[test]
    fn truncated_input_is_rejected() {
        let bytes = encode(&model(), None).unwrap();
        for cut in [0, 10, 25, bytes.len() - 1] {
            assert!(matches!(decode(&bytes[..cut]), Err(Error::Format(_))), "cut at {cut}");
        }
    }

    #[test]
    fn version_and_category_mismatch_are_rejected() {
        let bytes = encode(&model(), None).unwrap();
        let mut wrong_version = bytes.clone();
        wrong_version[8] = 7;
        assert!(decode(&wrong_version).is_err());

        // rewrite the header so the label list no longer matches the config
        let hlen = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
        let mut header: serde_json::Value = serde_json::from_slice(&bytes[20..20 + hlen]).unwrap();
        header["categories"].as_array_mut().unwrap().pop();
        let new_header = serde_json::to_vec(&header).unwrap();
        let mut tampered = bytes[..12].to_vec();
        tampered.extend_from_slice(&(new_header.len() as u64).to_le_bytes());
        tampered.extend_from_slice(&new_header);
        tampered.extend_from_slice(&bytes[20 + hlen..]);
        let err = decode(&tampered).unwrap_err();
        assert!(err.to_string().contains("categories"), "{err}");
    }
}
