//! Labeled image fixtures: MNIST-style IDX files plus a JSON manifest.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{io_err, Error, Result};
use crate::nn::{IMAGE_PIXELS, IMAGE_SIDE, NUM_CLASSES};

const IDX_U8: u8 = 0x08;

/// Fixture manifest written next to the IDX files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub count: usize,
    pub image_file: String,
    pub label_file: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_file: Option<String>,
    pub class_counts: Vec<usize>,
    /// Accuracy of the unquantized reference network on this fixture.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub float_accuracy: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quantized_accuracy: Option<f64>,
    /// Fault-free predictions of the committed fixed-point model.
    #[serde(default)]
    pub golden_predictions: Vec<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pixels: Vec<u8>,
    labels: Vec<u8>,
    manifest: Option<Manifest>,
    root: Option<PathBuf>,
}

impl Dataset {
    pub fn new(pixels: Vec<u8>, labels: Vec<u8>) -> Result<Self> {
        if pixels.len() != labels.len() * IMAGE_PIXELS {
            return Err(Error::DatasetFormat(format!(
                "{} pixels for {} labels",
                pixels.len(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| usize::from(l) >= NUM_CLASSES) {
            return Err(Error::DatasetFormat(format!("label {bad} out of range")));
        }
        Ok(Dataset {
            pixels,
            labels,
            manifest: None,
            root: None,
        })
    }

    pub fn from_idx(images: &Path, labels: &Path) -> Result<Self> {
        let img = fs::read(images).map_err(io_err(images))?;
        let lbl = fs::read(labels).map_err(io_err(labels))?;
        let (dims, pixels) = parse_idx(&img)?;
        if dims.len() != 3 || dims[1] != IMAGE_SIDE || dims[2] != IMAGE_SIDE {
            return Err(Error::DatasetFormat(format!(
                "{}: expected N x 28 x 28 images, got {dims:?}",
                images.display()
            )));
        }
        let (ldims, labels_raw) = parse_idx(&lbl)?;
        if ldims.len() != 1 || ldims[0] != dims[0] {
            return Err(Error::DatasetFormat(format!(
                "{}: expected {} labels, got {ldims:?}",
                labels.display(),
                dims[0]
            )));
        }
        Dataset::new(pixels.to_vec(), labels_raw.to_vec())
    }

    /// Loads a fixture through its manifest; IDX paths resolve relative to
    /// the manifest's directory.
    pub fn from_manifest(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let manifest: Manifest = serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })?;
        let root = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        let mut ds = Dataset::from_idx(&root.join(&manifest.image_file), &root.join(&manifest.label_file))?;
        if ds.len() != manifest.count {
            return Err(Error::DatasetFormat(format!(
                "manifest count {} but {} images on disk",
                manifest.count,
                ds.len()
            )));
        }
        if !manifest.golden_predictions.is_empty() && manifest.golden_predictions.len() != ds.len() {
            return Err(Error::DatasetFormat("golden prediction count mismatch".into()));
        }
        ds.manifest = Some(manifest);
        ds.root = Some(root);
        Ok(ds)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image(&self, i: usize) -> &[u8] {
        &self.pixels[i * IMAGE_PIXELS..(i + 1) * IMAGE_PIXELS]
    }

    pub fn images(&self) -> impl Iterator<Item = &[u8]> {
        self.pixels.chunks_exact(IMAGE_PIXELS)
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn manifest(&self) -> Option<&Manifest> {
        self.manifest.as_ref()
    }

    /// Model file named by the manifest, resolved against its directory.
    pub fn model_path(&self) -> Option<PathBuf> {
        let m = self.manifest.as_ref()?;
        Some(self.root.as_ref()?.join(m.model_file.as_ref()?))
    }

    pub fn class_counts(&self) -> [usize; NUM_CLASSES] {
        let mut counts = [0; NUM_CLASSES];
        for &l in &self.labels {
            counts[usize::from(l)] += 1;
        }
        counts
    }

    /// First `n` images (or all of them).
    pub fn truncated(&self, n: usize) -> Dataset {
        let n = n.min(self.len());
        let mut manifest = self.manifest.clone();
        if let Some(m) = manifest.as_mut() {
            m.count = n;
            m.golden_predictions.truncate(n);
        }
        Dataset {
            pixels: self.pixels[..n * IMAGE_PIXELS].to_vec(),
            labels: self.labels[..n].to_vec(),
            manifest,
            root: self.root.clone(),
        }
    }
}

/// Parses an unsigned-byte IDX file into its dimensions and payload.
pub fn parse_idx(bytes: &[u8]) -> Result<(Vec<usize>, &[u8])> {
    if bytes.len() < 4 || bytes[0] != 0 || bytes[1] != 0 {
        return Err(Error::DatasetFormat("bad IDX magic".into()));
    }
    if bytes[2] != IDX_U8 {
        return Err(Error::DatasetFormat(format!("unsupported IDX type {:#04x}", bytes[2])));
    }
    let ndim = usize::from(bytes[3]);
    let header = 4 + 4 * ndim;
    if bytes.len() < header {
        return Err(Error::DatasetFormat("truncated IDX header".into()));
    }
    let dims: Vec<usize> = bytes[4..header]
        .chunks_exact(4)
        .map(|c| u32::from_be_bytes([c[0], c[1], c[2], c[3]]) as usize)
        .collect();
    let n: usize = dims.iter().product();
    let payload = &bytes[header..];
    if payload.len() != n {
        return Err(Error::DatasetFormat(format!(
            "IDX payload has {} bytes, header promises {n}",
            payload.len()
        )));
    }
    Ok((dims, payload))
}

pub fn write_idx(dims: &[usize], payload: &[u8]) -> Vec<u8> {
    let mut out = vec![0, 0, IDX_U8, dims.len() as u8];
    for &d in dims {
        out.extend_from_slice(&(d as u32).to_be_bytes());
    }
    out.extend_from_slice(payload);
    out
}
