//! Versioned binary checkpoint format.
//!
//! Layout: magic `AMUS`, format version (u32 LE), then repeated records of
//! `name_len: u32 LE | name bytes | rank: u32 LE | extents: rank x u64 LE |
//! payload: prod(extents) x f64 LE`. Records are written in name order so a
//! checkpoint is a deterministic function of its contents.
//!
//! Everything a run needs to resume lives in tensor records under name
//! prefixes: `param/`, `adam_m/`, `adam_v/` for values and moments,
//! `frozen/<name>` flags, `meta/*` counters, and `config/*` scalars
//! (including vocabulary fingerprints, since the format carries no strings).

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{AmuseError, Result};
use crate::optim::{AdamState, ParamSet};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"AMUS";
pub const FORMAT_VERSION: u32 = 1;

pub fn write_records(path: &Path, records: &BTreeMap<String, Tensor>) -> Result<()> {
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    for (name, t) in records {
        let nb = name.as_bytes();
        buf.extend_from_slice(&(nb.len() as u32).to_le_bytes());
        buf.extend_from_slice(nb);
        buf.extend_from_slice(&(t.rank() as u32).to_le_bytes());
        for &e in t.shape() {
            buf.extend_from_slice(&(e as u64).to_le_bytes());
        }
        for &v in t.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(&buf)?;
    Ok(())
}

pub fn read_records(path: &Path) -> Result<BTreeMap<String, Tensor>> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let mut off = 0usize;
    let take = |off: &mut usize, n: usize| -> Result<&[u8]> {
        if *off + n > bytes.len() {
            return Err(AmuseError::Checkpoint("truncated file".into()));
        }
        let s = &bytes[*off..*off + n];
        *off += n;
        Ok(s)
    };
    let magic = take(&mut off, 4)?;
    if magic != MAGIC {
        return Err(AmuseError::Checkpoint(format!("bad magic {:?}", magic)));
    }
    let version = u32::from_le_bytes(take(&mut off, 4)?.try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(AmuseError::Checkpoint(format!(
            "unknown format version {} (expected {})",
            version, FORMAT_VERSION
        )));
    }
    let mut records = BTreeMap::new();
    while off < bytes.len() {
        let name_len = u32::from_le_bytes(take(&mut off, 4)?.try_into().unwrap()) as usize;
        let name = String::from_utf8(take(&mut off, name_len)?.to_vec())
            .map_err(|_| AmuseError::Checkpoint("record name is not utf-8".into()))?;
        let rank = u32::from_le_bytes(take(&mut off, 4)?.try_into().unwrap()) as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(u64::from_le_bytes(take(&mut off, 8)?.try_into().unwrap()) as usize);
        }
        let len: usize = shape.iter().product();
        let mut data = Vec::with_capacity(len);
        for _ in 0..len {
            data.push(f64::from_le_bytes(take(&mut off, 8)?.try_into().unwrap()));
        }
        let t = Tensor::new(shape, data).map_err(|e| AmuseError::Checkpoint(e.to_string()))?;
        records.insert(name, t);
    }
    Ok(records)
}

/// Full training snapshot: parameters, optimizer moments, counters, frozen
/// flags, and numeric config scalars.
pub struct Snapshot {
    pub params: ParamSet,
    pub adam: AdamState,
    pub config_scalars: BTreeMap<String, f64>,
}

pub fn save_snapshot(path: &Path, snap: &Snapshot) -> Result<()> {
    let mut records = BTreeMap::new();
    for (name, t) in snap.params.iter() {
        records.insert(format!("param/{}", name), t.clone());
    }
    for name in snap.adam.moment_names().cloned().collect::<Vec<_>>() {
        let (m, v) = snap.adam.moments(&name).expect("moment pair");
        records.insert(format!("adam_m/{}", name), m.clone());
        records.insert(format!("adam_v/{}", name), v.clone());
    }
    for name in snap.params.frozen_names() {
        records.insert(format!("frozen/{}", name), Tensor::scalar(1.0));
    }
    records.insert("meta/step".into(), Tensor::scalar(snap.adam.step as f64));
    records.insert("meta/epoch".into(), Tensor::scalar(snap.adam.epoch as f64));
    records.insert("meta/base_lr".into(), Tensor::scalar(snap.adam.base_lr));
    for (k, v) in &snap.config_scalars {
        records.insert(format!("config/{}", k), Tensor::scalar(*v));
    }
    write_records(path, &records)
}

pub fn load_snapshot(path: &Path) -> Result<Snapshot> {
    let records = read_records(path)?;
    let mut params = ParamSet::new();
    let mut frozen = Vec::new();
    let mut config_scalars = BTreeMap::new();
    let base_lr = records
        .get("meta/base_lr")
        .map(|t| t.item())
        .ok_or_else(|| AmuseError::Checkpoint("missing meta/base_lr".into()))?;
    let mut adam = AdamState::new(base_lr);
    adam.step = records.get("meta/step").map(|t| t.item() as u64).unwrap_or(0);
    adam.epoch = records.get("meta/epoch").map(|t| t.item() as u64).unwrap_or(0);
    for (name, t) in &records {
        if let Some(p) = name.strip_prefix("param/") {
            params.insert(p, t.clone());
        } else if let Some(p) = name.strip_prefix("frozen/") {
            frozen.push(p.to_string());
        } else if let Some(p) = name.strip_prefix("config/") {
            config_scalars.insert(p.to_string(), t.item());
        }
    }
    for (name, t) in &records {
        if let Some(p) = name.strip_prefix("adam_m/") {
            let v = records
                .get(&format!("adam_v/{}", p))
                .ok_or_else(|| AmuseError::Checkpoint(format!("missing adam_v for '{}'", p)))?;
            adam.set_moments(p, t.clone(), v.clone());
        }
    }
    params.set_frozen(frozen);
    Ok(Snapshot {
        params,
        adam,
        config_scalars,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optim::init_uniform;

    #[test]
    fn roundtrip_preserves_everything() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let mut params = ParamSet::new();
        params.insert("enc.w", init_uniform("enc.w", &[3, 2], 3, 9));
        params.insert("head.b", Tensor::vector(vec![0.1, -0.2]));
        params.freeze_prefix("enc.");
        let mut adam = AdamState::new(0.001);
        adam.step = 42;
        adam.epoch = 7;
        adam.set_moments("head.b", Tensor::vector(vec![1.0, 2.0]), Tensor::vector(vec![3.0, 4.0]));
        let mut config_scalars = BTreeMap::new();
        config_scalars.insert("d_visual".to_string(), 24.0);

        save_snapshot(
            &path,
            &Snapshot {
                params: params.clone(),
                adam: adam.clone(),
                config_scalars: config_scalars.clone(),
            },
        )
        .unwrap();
        let loaded = load_snapshot(&path).unwrap();
        assert_eq!(loaded.params.expect("enc.w"), params.expect("enc.w"));
        assert_eq!(loaded.params.expect("head.b"), params.expect("head.b"));
        assert!(loaded.params.is_frozen("enc.w"));
        assert!(!loaded.params.is_frozen("head.b"));
        assert_eq!(loaded.adam.step, 42);
        assert_eq!(loaded.adam.epoch, 7);
        assert_eq!(loaded.adam.base_lr, 0.001);
        let (m, v) = loaded.adam.moments("head.b").unwrap();
        assert_eq!(m.data(), &[1.0, 2.0]);
        assert_eq!(v.data(), &[3.0, 4.0]);
        assert_eq!(loaded.config_scalars["d_visual"], 24.0);
    }

    #[test]
    fn rejects_bad_magic_and_unknown_version() {
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("bad_magic.ckpt");
        std::fs::write(&p1, b"NOPE\x01\x00\x00\x00").unwrap();
        assert!(matches!(read_records(&p1), Err(AmuseError::Checkpoint(_))));

        let p2 = dir.path().join("bad_version.ckpt");
        let mut bytes = Vec::new();
        bytes.extend_from_slice(MAGIC);
        bytes.extend_from_slice(&99u32.to_le_bytes());
        std::fs::write(&p2, &bytes).unwrap();
        let err = read_records(&p2).unwrap_err().to_string();
        assert!(err.contains("version 99"), "{}", err);
    }

    #[test]
    fn identical_snapshots_serialize_byte_identically() {
        let dir = tempfile::tempdir().unwrap();
        let mut params = ParamSet::new();
        params.insert("a", init_uniform("a", &[4], 4, 1));
        params.insert("b", init_uniform("b", &[2, 2], 2, 1));
        let snap = Snapshot {
            params,
            adam: AdamState::new(0.01),
            config_scalars: BTreeMap::new(),
        };
        let p1 = dir.path().join("one.ckpt");
        let p2 = dir.path().join("two.ckpt");
        save_snapshot(&p1, &snap).unwrap();
        save_snapshot(&p2, &snap).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    }
}
