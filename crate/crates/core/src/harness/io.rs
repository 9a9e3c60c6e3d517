//! On-disk artifacts: image directories, the lossless image cache, score
//! CSVs and the hashed file manifest.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{FmdError, Result};
use crate::filters::FilterTag;
use crate::image::{read_ppm, write_ppm, Image};
use crate::scoring::{format_sig9, AttackTag, ScoreRecord};

pub const MANIFEST_CSV: &str = "manifest.csv";
const CACHE_MAGIC: &[u8; 6] = b"FMDI1\n";

/// A named, labeled image as stored in an image directory.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedImage {
    /// File stem, e.g. `cls3_17`.
    pub name: String,
    pub image: Image,
    pub label: usize,
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| FmdError::io(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| FmdError::io(path, e))
}

pub fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| FmdError::io(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> FmdError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => FmdError::io(path, io),
        other => FmdError::parse(path.display().to_string(), format!("{other:?}")),
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestRow {
    filename: String,
    label: usize,
}

/// Writes `<name>.ppm` files plus `manifest.csv` (`filename,label`).
pub fn write_image_dir(dir: &Path, images: &[NamedImage]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| FmdError::io(dir, e))?;
    let manifest = dir.join(MANIFEST_CSV);
    let mut w = csv::Writer::from_path(&manifest).map_err(|e| csv_error(&manifest, e))?;
    for item in images {
        let filename = format!("{}.ppm", item.name);
        write_file(&dir.join(&filename), &write_ppm(&item.image))?;
        w.serialize(ManifestRow {
            filename,
            label: item.label,
        })
        .map_err(|e| csv_error(&manifest, e))?;
    }
    w.flush().map_err(|e| FmdError::io(&manifest, e))
}

/// Reads an image directory in manifest order.
pub fn read_image_dir(dir: &Path) -> Result<Vec<NamedImage>> {
    let manifest = dir.join(MANIFEST_CSV);
    let mut r = csv::Reader::from_path(&manifest).map_err(|e| csv_error(&manifest, e))?;
    let mut out = Vec::new();
    for row in r.deserialize::<ManifestRow>() {
        let row = row.map_err(|e| csv_error(&manifest, e))?;
        if row.label >= crate::model::NUM_CLASSES {
            return Err(FmdError::LabelOutOfRange {
                label: row.label,
                classes: crate::model::NUM_CLASSES,
            });
        }
        let path = dir.join(&row.filename);
        let image = read_ppm(&read_file(&path)?)
            .map_err(|e| FmdError::parse(path.display().to_string(), e.to_string()))?;
        let name = row
            .filename
            .strip_suffix(".ppm")
            .unwrap_or(&row.filename)
            .to_string();
        out.push(NamedImage {
            name,
            image,
            label: row.label,
        });
    }
    if out.is_empty() {
        return Err(FmdError::EmptyDataset);
    }
    Ok(out)
}

fn put_u32(buf: &mut Vec<u8>, v: usize) {
    buf.extend_from_slice(&(v as u32).to_le_bytes());
}

/// Lossless binary encoding of named images (f64 pixels), used to resume
/// without the 8-bit rounding of PPM files.
pub fn encode_image_cache(images: &[NamedImage]) -> Vec<u8> {
    let mut buf = CACHE_MAGIC.to_vec();
    put_u32(&mut buf, images.len());
    for item in images {
        put_u32(&mut buf, item.name.len());
        buf.extend_from_slice(item.name.as_bytes());
        put_u32(&mut buf, item.label);
        let (h, w, c) = item.image.shape();
        for v in [h, w, c] {
            put_u32(&mut buf, v);
        }
        for v in item.image.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    buf
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let s = self
            .bytes
            .get(self.pos..self.pos + n)
            .ok_or_else(|| FmdError::parse("image cache", "truncated"))?;
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }
}

pub fn decode_image_cache(bytes: &[u8]) -> Result<Vec<NamedImage>> {
    let bad = |msg: &str| FmdError::parse("image cache", msg.to_string());
    let rest = bytes.strip_prefix(CACHE_MAGIC).ok_or_else(|| bad("bad magic"))?;
    let mut cur = Cursor { bytes: rest, pos: 0 };
    let count = cur.u32()?;
    let mut out = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let len = cur.u32()?;
        let name = String::from_utf8(cur.take(len)?.to_vec()).map_err(|_| bad("name is not UTF-8"))?;
        let label = cur.u32()?;
        let (h, w, c) = (cur.u32()?, cur.u32()?, cur.u32()?);
        let data = cur
            .take(h * w * c * 8)?
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
            .collect();
        out.push(NamedImage {
            name,
            image: Image::new(h, w, c, data)?,
            label,
        });
    }
    if cur.pos != rest.len() {
        return Err(bad("trailing bytes"));
    }
    Ok(out)
}

#[derive(Debug, Serialize, Deserialize)]
struct ScoreRow {
    image_id: String,
    attack: String,
    filter: String,
    score: String,
    label: u8,
}

/// Scores CSV: `image_id,attack,filter,score,label`, 9 significant digits.
pub fn write_scores_csv(path: &Path, records: &[ScoreRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in records {
        w.serialize(ScoreRow {
            image_id: r.image_id.clone(),
            attack: r.attack.as_str().into(),
            filter: r.filter.as_str().into(),
            score: format_sig9(r.score),
            label: r.label,
        })
        .map_err(|e| csv_error(path, e))?;
    }
    let bytes = w.into_inner().map_err(|e| FmdError::parse(path.display().to_string(), e.to_string()))?;
    write_file(path, &bytes)
}

pub fn read_scores_csv(path: &Path) -> Result<Vec<ScoreRecord>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let ctx = path.display().to_string();
    let mut out = Vec::new();
    for row in r.deserialize::<ScoreRow>() {
        let row = row.map_err(|e| csv_error(path, e))?;
        let attack: AttackTag = row.attack.parse().map_err(|e: FmdError| FmdError::parse(&ctx, e.to_string()))?;
        let filter: FilterTag = row.filter.parse().map_err(|e: FmdError| FmdError::parse(&ctx, e.to_string()))?;
        let score: f64 = row
            .score
            .parse()
            .map_err(|_| FmdError::parse(&ctx, format!("bad score {:?}", row.score)))?;
        if !(score >= 0.0 && score.is_finite()) || row.label > 1 || row.label != attack.label() {
            return Err(FmdError::parse(&ctx, format!("invalid record for {}", row.image_id)));
        }
        out.push(ScoreRecord {
            image_id: row.image_id,
            score,
            label: row.label,
            attack,
            filter,
        });
    }
    if out.is_empty() {
        return Err(FmdError::EmptyDataset);
    }
    Ok(out)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

fn collect_files(root: &Path, dir: &Path, skip: &[&str], out: &mut Vec<PathBuf>) -> Result<()> {
    for entry in fs::read_dir(dir).map_err(|e| FmdError::io(dir, e))? {
        let path = entry.map_err(|e| FmdError::io(dir, e))?.path();
        let rel = path.strip_prefix(root).expect("under root");
        if skip.iter().any(|s| rel == Path::new(s)) {
            continue;
        }
        if path.is_dir() {
            collect_files(root, &path, skip, out)?;
        } else {
            out.push(path);
        }
    }
    Ok(())
}

/// Hashes every file under `root` except the `skip` entries (relative
/// paths), sorted by `/`-separated relative path.
pub fn hash_tree(root: &Path, skip: &[&str]) -> Result<Vec<ManifestEntry>> {
    let mut files = Vec::new();
    collect_files(root, root, skip, &mut files)?;
    let mut entries = files
        .into_iter()
        .map(|p| {
            let bytes = read_file(&p)?;
            let rel = p.strip_prefix(root).expect("under root");
            Ok(ManifestEntry {
                path: rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/"),
                bytes: bytes.len() as u64,
                sha256: sha256_hex(&bytes),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    entries.sort_by(|a, b| a.path.cmp(&b.path));
    Ok(entries)
}
