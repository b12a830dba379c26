//! EVEC v1 container.
//!
//! All integers little-endian:
//!
//! | offset | size      | field                        |
//! |--------|-----------|------------------------------|
//! | 0      | 4         | magic `EVEC`                 |
//! | 4      | 2         | version (u16) = 1            |
//! | 6      | 2         | flags (u16) = 0              |
//! | 8      | 8         | n (u64)                      |
//! | 16     | 4         | d (u32)                      |
//! | 20     | 4         | C (u32)                      |
//! | 24     | 4·n·d     | embeddings, f32, row-major   |
//! |        | 4·n       | labels, i32                  |
//! |        | 8·n       | ids, u64                     |
//!
//! An optional `<file>.meta.json` sidecar carries class names and provenance.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::LabeledDataset;
use crate::error::{Error, Result};

pub const EVEC_MAGIC: &[u8; 4] = b"EVEC";
pub const EVEC_VERSION: u16 = 1;
const HEADER_LEN: usize = 24;

pub fn save_dataset(dataset: &LabeledDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode(dataset)?).map_err(|e| Error::from(e).context(path.display().to_string()))
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<LabeledDataset> {
    let path = path.as_ref();
    fs::read(path)
        .map_err(Error::from)
        .and_then(|bytes| decode(&bytes))
        .map_err(|e| e.context(path.display().to_string()))
}

pub(crate) fn encode(dataset: &LabeledDataset) -> Result<Vec<u8>> {
    let n = dataset.len();
    let d = u32::try_from(dataset.dim()).map_err(|_| Error::validation("dimension exceeds u32"))?;
    let c = u32::try_from(dataset.num_classes()).map_err(|_| Error::validation("class count exceeds u32"))?;
    let mut out = Vec::with_capacity(HEADER_LEN + n * (dataset.dim() * 4 + 12));
    out.extend_from_slice(EVEC_MAGIC);
    out.extend_from_slice(&EVEC_VERSION.to_le_bytes());
    out.extend_from_slice(&0u16.to_le_bytes());
    out.extend_from_slice(&(n as u64).to_le_bytes());
    out.extend_from_slice(&d.to_le_bytes());
    out.extend_from_slice(&c.to_le_bytes());
    for v in dataset.embeddings() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for &l in dataset.labels() {
        let l = i32::try_from(l).map_err(|_| Error::validation("label exceeds i32"))?;
        out.extend_from_slice(&l.to_le_bytes());
    }
    for id in dataset.ids() {
        out.extend_from_slice(&id.to_le_bytes());
    }
    Ok(out)
}

pub(crate) fn decode(bytes: &[u8]) -> Result<LabeledDataset> {
    if bytes.len() < 4 || &bytes[..4] != EVEC_MAGIC {
        return Err(Error::Format("missing EVEC magic".into()));
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::Corruption(format!("header truncated at {} bytes", bytes.len())));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    let flags = u16::from_le_bytes([bytes[6], bytes[7]]);
    if version != EVEC_VERSION {
        return Err(Error::Format(format!("unsupported EVEC version {}", version)));
    }
    if flags != 0 {
        return Err(Error::Format(format!("unsupported EVEC flags {:#06x}", flags)));
    }
    let n = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let d = u32::from_le_bytes(bytes[16..20].try_into().unwrap()) as usize;
    let c = u32::from_le_bytes(bytes[20..24].try_into().unwrap()) as usize;

    let n = usize::try_from(n).map_err(|_| Error::Corruption(format!("row count {} too large", n)))?;
    let payload = n
        .checked_mul(d)
        .and_then(|nd| nd.checked_mul(4))
        .and_then(|e| n.checked_mul(12).and_then(|t| e.checked_add(t)))
        .ok_or_else(|| Error::Corruption(format!("payload size overflows for n={} d={}", n, d)))?;
    let body = &bytes[HEADER_LEN..];
    if body.len() != payload {
        return Err(Error::Corruption(format!(
            "expected {} payload bytes for n={} d={}, found {}",
            payload,
            n,
            d,
            body.len()
        )));
    }

    let (emb_bytes, rest) = body.split_at(n * d * 4);
    let (label_bytes, id_bytes) = rest.split_at(n * 4);
    let embeddings = emb_bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    let labels = label_bytes
        .chunks_exact(4)
        .enumerate()
        .map(|(row, b)| {
            let l = i32::from_le_bytes(b.try_into().unwrap());
            u32::try_from(l).map_err(|_| Error::validation(format!("negative label {} at row {}", l, row)))
        })
        .collect::<Result<Vec<_>>>()?;
    let ids = id_bytes
        .chunks_exact(8)
        .map(|b| u64::from_le_bytes(b.try_into().unwrap()))
        .collect();
    LabeledDataset::new(d, c, embeddings, labels, ids)
}

/// Contents of the optional `<file>.meta.json` sidecar.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    #[serde(default)]
    pub class_names: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<String>,
}

impl DatasetMeta {
    pub fn sidecar_path(dataset_path: impl AsRef<Path>) -> PathBuf {
        let mut s = dataset_path.as_ref().as_os_str().to_owned();
        s.push(".meta.json");
        PathBuf::from(s)
    }

    pub fn save(&self, dataset_path: impl AsRef<Path>) -> Result<()> {
        let mut f = fs::File::create(Self::sidecar_path(dataset_path))?;
        serde_json::to_writer_pretty(&mut f, self)?;
        f.write_all(b"\n")?;
        Ok(())
    }

    /// `Ok(None)` when there is no sidecar.
    pub fn load(dataset_path: impl AsRef<Path>) -> Result<Option<Self>> {
        let path = Self::sidecar_path(dataset_path);
        if !path.exists() {
            return Ok(None);
        }
        Ok(Some(serde_json::from_slice(&fs::read(path)?)?))
    }
}

/// Reads a comma-separated table with rows `id,label,x0,...,x{d-1}`.
///
/// A first line whose leading field is not an integer is treated as a
/// header. When `num_classes` is `None` it is inferred as `max label + 1`.
pub fn read_csv_dataset(path: impl AsRef<Path>, num_classes: Option<usize>) -> Result<LabeledDataset> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut dim = None;
    let (mut embeddings, mut labels, mut ids) = (Vec::new(), Vec::new(), Vec::new());
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if lineno == 0 && fields[0].parse::<u64>().is_err() {
            continue;
        }
        let bad = |what: &str| Error::validation(format!("line {}: {}", lineno + 1, what));
        if fields.len() < 3 {
            return Err(bad("expected id,label and at least one feature"));
        }
        let width = fields.len() - 2;
        match dim {
            None => dim = Some(width),
            Some(d) if d != width => return Err(bad(&format!("{} features, expected {}", width, d))),
            _ => {}
        }
        ids.push(fields[0].parse::<u64>().map_err(|_| bad("bad id"))?);
        labels.push(fields[1].parse::<u32>().map_err(|_| bad("bad label"))?);
        for f in &fields[2..] {
            embeddings.push(f.parse::<f32>().map_err(|_| bad("bad feature value"))?);
        }
    }
    let dim = dim.ok_or_else(|| Error::validation("no data rows"))?;
    let num_classes = num_classes.unwrap_or_else(|| labels.iter().max().map_or(1, |&m| m as usize + 1));
    LabeledDataset::new(dim, num_classes, embeddings, labels, ids)
}
