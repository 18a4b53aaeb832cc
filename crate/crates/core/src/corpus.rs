//! In-memory samples and the on-disk corpus layout (DFF files plus a JSON
//! manifest).

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dff::DffRecord;
use crate::error::{Error, Result};
use crate::field::{DopplerFrame, LabelMap, PolarGrid};
use crate::io::write_atomic;
use crate::scalar::Scalar;
use crate::synth::{CorpusFrame, CorpusRanges, PhantomSpec};

/// A wrapped frame with its ground-truth Nyquist numbers.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample<T> {
    pub id: String,
    pub frame: DopplerFrame<T>,
    pub labels: LabelMap,
}

impl<T: Scalar> Sample<T> {
    pub fn new(id: impl Into<String>, frame: DopplerFrame<T>, labels: LabelMap) -> Result<Self> {
        if labels.dim() != frame.velocity.dim() {
            return Err(Error::InvalidArgument("labels do not match the frame shape".into()));
        }
        Ok(Sample { id: id.into(), frame, labels })
    }

    pub fn is_aliased(&self) -> bool {
        !self.labels.is_all_zero()
    }

    /// The alias-free field implied by the labels.
    pub fn reference(&self) -> Result<DopplerFrame<T>> {
        self.frame.unwrapped(&self.labels)
    }

    pub fn cast<U: Scalar>(&self) -> Sample<U> {
        Sample { id: self.id.clone(), frame: self.frame.cast(), labels: self.labels.clone() }
    }
}

pub fn frame_id(index: usize) -> String {
    format!("{index:05}")
}

/// Wrapped frames of a synthetic corpus, ids numbered from zero.
pub fn samples_from_synthetic<T: Scalar>(corpus: &[CorpusFrame<T>]) -> Vec<Sample<T>> {
    corpus
        .iter()
        .enumerate()
        .map(|(i, c)| Sample { id: frame_id(i), frame: c.frame.wrapped.clone(), labels: c.frame.labels.clone() })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub id: String,
    pub file: String,
    pub reference_file: String,
    pub aliased: bool,
    pub aliased_pixels: usize,
    pub spec: PhantomSpec,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub version: u32,
    pub seed: u64,
    pub grid: PolarGrid,
    pub v_nyquist: f64,
    pub aliased_fraction: f64,
    pub ranges: CorpusRanges,
    pub frames: Vec<ManifestEntry>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

impl Manifest {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// SHA-256 of the manifest JSON.
    pub fn digest(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(self.to_json()?.as_bytes())))
    }

    pub fn aliased_count(&self) -> usize {
        self.frames.iter().filter(|f| f.aliased).count()
    }
}

/// Parameters a corpus was generated with, recorded in the manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusMeta {
    pub seed: u64,
    pub grid: PolarGrid,
    pub v_nyquist: f64,
    pub aliased_fraction: f64,
    pub ranges: CorpusRanges,
}

/// Writes `NNNNN.dff` (wrapped velocity, power, labels) and `NNNNN.ref.dff`
/// (alias-free velocity, power) for every frame, then the manifest.
pub fn write_corpus<T: Scalar>(dir: &Path, corpus: &[CorpusFrame<T>], meta: &CorpusMeta) -> Result<Manifest> {
    fs::create_dir_all(dir)?;
    let mut frames = Vec::with_capacity(corpus.len());
    for (i, c) in corpus.iter().enumerate() {
        let id = frame_id(i);
        let file = format!("{id}.dff");
        let reference_file = format!("{id}.ref.dff");
        let bytes = DffRecord::from_frame(&c.frame.wrapped, Some(&c.frame.labels)).to_bytes()?;
        write_atomic(&dir.join(&file), &bytes)?;
        let reference = DffRecord::from_frame(&c.frame.alias_free, None).to_bytes()?;
        write_atomic(&dir.join(&reference_file), &reference)?;
        frames.push(ManifestEntry {
            id,
            file,
            reference_file,
            aliased: c.aliased,
            aliased_pixels: c.frame.labels.aliased_pixels(),
            spec: c.spec.clone(),
            sha256: hex::encode(Sha256::digest(&bytes)),
        });
    }
    let manifest = Manifest {
        version: 1,
        seed: meta.seed,
        grid: meta.grid,
        v_nyquist: meta.v_nyquist,
        aliased_fraction: meta.aliased_fraction,
        ranges: meta.ranges.clone(),
        frames,
    };
    write_atomic(&dir.join(MANIFEST_FILE), manifest.to_json()?.as_bytes())?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let text = fs::read_to_string(dir.join(MANIFEST_FILE))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn entry_path(dir: &Path, entry: &ManifestEntry) -> PathBuf {
    dir.join(&entry.file)
}

/// Loads every wrapped frame listed in the manifest with its labels.
pub fn load_corpus<T: Scalar>(dir: &Path) -> Result<(Manifest, Vec<Sample<T>>)> {
    let manifest = read_manifest(dir)?;
    let mut samples = Vec::with_capacity(manifest.frames.len());
    for entry in &manifest.frames {
        let bytes = fs::read(entry_path(dir, entry))?;
        if hex::encode(Sha256::digest(&bytes)) != entry.sha256 {
            return Err(Error::Format(format!("{} does not match its manifest digest", entry.file)));
        }
        let record = DffRecord::read_from(bytes.as_slice())?;
        let frame = record.to_frame::<T>()?;
        let labels = record
            .labels
            .clone()
            .ok_or_else(|| Error::Format(format!("{} carries no labels", entry.file)))?;
        samples.push(Sample::new(entry.id.clone(), frame, labels)?);
    }
    Ok((manifest, samples))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::generate_corpus;

    #[test]
    fn corpus_round_trip() {
        let grid = PolarGrid::with_shape(24, 12).unwrap();
        let ranges = CorpusRanges::default();
        let corpus = generate_corpus::<f32>(5, 0.4, &ranges, &grid, 0.6, 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let meta = CorpusMeta { seed: 3, grid, v_nyquist: 0.6, aliased_fraction: 0.4, ranges };
        let manifest = write_corpus(dir.path(), &corpus, &meta).unwrap();
        assert_eq!(manifest.aliased_count(), 2);
        let (read, samples) = load_corpus::<f32>(dir.path()).unwrap();
        assert_eq!(read, manifest);
        assert_eq!(samples, samples_from_synthetic(&corpus));
        let reference = DffRecord::load(&dir.path().join("00001.ref.dff")).unwrap();
        assert_eq!(reference.to_frame::<f32>().unwrap(), corpus[1].frame.alias_free);
    }
}
