//! On-disk dataset: `dataset.json` manifest plus `features.bin`, a flat
//! little-endian `f64` blob holding every utterance's `F × D` features
//! back to back in manifest order.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::gen::{Dataset, GenSpec, Split, Utterance};
use crate::ctc::{LabelSeq, Vocab};
use crate::error::{Error, Result};
use crate::nn::Tensor2D;

pub const MANIFEST_FILE: &str = "dataset.json";
pub const FEATURES_FILE: &str = "features.bin";
pub const FORMAT_NAME: &str = "ctclab-dataset";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub split: Split,
    pub generator: GenSpec,
    pub vocab: Vocab,
    pub feature_dim: usize,
    pub utterances: Vec<ManifestEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub frames: usize,
    /// Offset into `features.bin`, in `f64` elements.
    pub offset: usize,
    pub transcript: LabelSeq,
    pub true_alignment: Vec<usize>,
}

pub fn save_dataset(ds: &Dataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let dim = ds.spec.feature_dim;
    let mut blob = Vec::with_capacity(ds.total_frames() * dim * 8);
    let mut entries = Vec::with_capacity(ds.len());
    for u in &ds.utterances {
        entries.push(ManifestEntry {
            id: u.id.clone(),
            frames: u.frames(),
            offset: blob.len() / 8,
            transcript: u.transcript.clone(),
            true_alignment: u.true_alignment.clone(),
        });
        for v in u.features.data() {
            blob.extend_from_slice(&v.to_le_bytes());
        }
    }
    let manifest = Manifest {
        format: FORMAT_NAME.into(),
        version: FORMAT_VERSION,
        split: ds.split,
        generator: ds.spec.clone(),
        vocab: ds.vocab.clone(),
        feature_dim: dim,
        utterances: entries,
    };
    fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)?)?;
    let mut f = fs::File::create(dir.join(FEATURES_FILE))?;
    f.write_all(&blob)?;
    Ok(())
}

pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let manifest: Manifest = serde_json::from_str(&fs::read_to_string(dir.join(MANIFEST_FILE))?)?;
    if manifest.format != FORMAT_NAME || manifest.version != FORMAT_VERSION {
        return Err(Error::Dataset(format!(
            "unsupported format {} v{}",
            manifest.format, manifest.version
        )));
    }
    let blob = fs::read(dir.join(FEATURES_FILE))?;
    if blob.len() % 8 != 0 {
        return Err(Error::Dataset("features.bin length not a multiple of 8".into()));
    }
    let floats: Vec<f64> = blob
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    let dim = manifest.feature_dim;
    let mut utterances = Vec::with_capacity(manifest.utterances.len());
    for e in manifest.utterances {
        let end = e.offset + e.frames * dim;
        if end > floats.len() {
            return Err(Error::Dataset(format!("utterance {} overruns features.bin", e.id)));
        }
        if e.true_alignment.len() != e.frames {
            return Err(Error::Dataset(format!("utterance {} alignment length mismatch", e.id)));
        }
        let transcript = LabelSeq::new(e.transcript.into_ids(), &manifest.vocab)?;
        utterances.push(Utterance {
            id: e.id,
            features: Tensor2D::from_vec(e.frames, dim, floats[e.offset..end].to_vec())?,
            transcript,
            true_alignment: e.true_alignment,
        });
    }
    Ok(Dataset {
        spec: manifest.generator,
        vocab: manifest.vocab,
        split: manifest.split,
        utterances,
    })
}
