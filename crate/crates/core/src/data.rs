//! Datasets and client shards.
//!
//! Features are stored row-major in one flat buffer. Shards reference rows
//! of a shared [`DataSet`] by index, so partitioning never copies samples.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::ClientId;
use crate::rng::{self, Stream};

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Error, PartialEq)]
pub enum DataError {
    #[error("IDX format error at byte {offset}: {reason}")]
    Format { offset: usize, reason: String },
    #[error("cannot read {path}: {reason}")]
    Io { path: String, reason: String },
    #[error("partition error: {0}")]
    Partition(String),
    #[error("invalid dataset: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataSet {
    features: Vec<f64>,
    labels: Vec<usize>,
    dim: usize,
    class_count: usize,
}

impl DataSet {
    pub fn new(features: Vec<f64>, labels: Vec<usize>, dim: usize, class_count: usize) -> Result<Self, DataError> {
        if dim == 0 || class_count == 0 {
            return Err(DataError::Invalid("dim and class_count must be positive".into()));
        }
        if features.len() != labels.len() * dim {
            return Err(DataError::Invalid(format!(
                "{} feature values do not form {} rows of width {dim}",
                features.len(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_count) {
            return Err(DataError::Invalid(format!("label {bad} outside [0, {class_count})")));
        }
        Ok(DataSet {
            features,
            labels,
            dim,
            class_count,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn features(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Replaces the labels at `indices` with uniformly random classes.
    pub fn randomize_labels(&mut self, indices: &[usize], seed: u64) {
        let mut rng = rng::stream(seed, Stream::LabelNoise, &[]);
        for &i in indices {
            self.labels[i] = rng.random_range(0..self.class_count);
        }
    }
}

/// The rows of a [`DataSet`] held by one client.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataShard {
    pub owner: ClientId,
    pub indices: Vec<usize>,
}

impl DataShard {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    what: &'static str,
}

impl<'a> Cursor<'a> {
    fn u32(&mut self, field: &str) -> Result<u32, DataError> {
        let end = self.pos + 4;
        let chunk = self.bytes.get(self.pos..end).ok_or_else(|| DataError::Format {
            offset: self.pos,
            reason: format!("{}: truncated while reading {field}", self.what),
        })?;
        self.pos = end;
        Ok(u32::from_be_bytes(chunk.try_into().unwrap()))
    }

    fn body(&mut self, len: usize) -> Result<&'a [u8], DataError> {
        let end = self.pos + len;
        let chunk = self.bytes.get(self.pos..end).ok_or_else(|| DataError::Format {
            offset: self.bytes.len(),
            reason: format!(
                "{}: expected {len} payload bytes after header, found {}",
                self.what,
                self.bytes.len().saturating_sub(self.pos)
            ),
        })?;
        self.pos = end;
        Ok(chunk)
    }
}

fn expect_magic(cur: &mut Cursor<'_>, magic: u32) -> Result<(), DataError> {
    let found = cur.u32("magic number")?;
    if found != magic {
        return Err(DataError::Format {
            offset: 0,
            reason: format!("{}: bad magic {found:#010x}, expected {magic:#010x}", cur.what),
        });
    }
    Ok(())
}

/// Parses an IDX image/label pair from memory. Pixels are scaled to `[0, 1]`.
pub fn parse_idx(images: &[u8], labels: &[u8]) -> Result<DataSet, DataError> {
    let mut img = Cursor {
        bytes: images,
        pos: 0,
        what: "images",
    };
    expect_magic(&mut img, IDX_IMAGES_MAGIC)?;
    let count = img.u32("image count")? as usize;
    let rows = img.u32("row count")? as usize;
    let cols = img.u32("column count")? as usize;
    let pixels = img.body(count * rows * cols)?;

    let mut lab = Cursor {
        bytes: labels,
        pos: 0,
        what: "labels",
    };
    expect_magic(&mut lab, IDX_LABELS_MAGIC)?;
    let label_count = lab.u32("label count")? as usize;
    if label_count != count {
        return Err(DataError::Format {
            offset: 4,
            reason: format!("label count {label_count} does not match image count {count}"),
        });
    }
    let raw_labels = lab.body(label_count)?;

    let labels: Vec<usize> = raw_labels.iter().map(|&b| b as usize).collect();
    let class_count = labels.iter().max().map_or(1, |&m| m + 1);
    let features = pixels.iter().map(|&p| f64::from(p) / 255.0).collect();
    DataSet::new(features, labels, (rows * cols).max(1), class_count)
}

pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<DataSet, DataError> {
    let read = |p: &Path| {
        fs::read(p).map_err(|e| DataError::Io {
            path: p.display().to_string(),
            reason: e.to_string(),
        })
    };
    parse_idx(&read(images_path)?, &read(labels_path)?)
}

/// Gaussian class clusters with unit noise; class centroids are random unit
/// directions scaled by `separation`. Labels are balanced round-robin.
pub fn synth_classification(
    n_samples: usize,
    n_features: usize,
    class_count: usize,
    separation: f64,
    seed: u64,
) -> Result<DataSet, DataError> {
    if n_samples == 0 || n_features == 0 || class_count == 0 {
        return Err(DataError::Invalid(
            "sample, feature and class counts must be positive".into(),
        ));
    }
    let mut rng = rng::stream(seed, Stream::Data, &[]);
    let mut centroids = Vec::with_capacity(class_count * n_features);
    for _ in 0..class_count {
        let dir: Vec<f64> = (0..n_features)
            .map(|_| -> f64 { StandardNormal.sample(&mut rng) })
            .collect();
        let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
        centroids.extend(dir.iter().map(|v| v / norm * separation));
    }
    let mut features = Vec::with_capacity(n_samples * n_features);
    let mut labels = Vec::with_capacity(n_samples);
    for i in 0..n_samples {
        let class = i % class_count;
        let c = &centroids[class * n_features..(class + 1) * n_features];
        features.extend(c.iter().map(|m| {
            let z: f64 = StandardNormal.sample(&mut rng);
            m + z
        }));
        labels.push(class);
    }
    DataSet::new(features, labels, n_features, class_count)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PartitionMode {
    Iid,
    NonIid,
}

/// Splits the dataset into one shard per client.
///
/// `Iid` deals a random permutation in equal chunks of `len / n_clients`.
/// `NonIid` sorts rows by label, cuts them into `n_clients * shards_per_client`
/// contiguous slices and deals a random selection of `shards_per_client`
/// slices to each client. Leftover rows that do not fill a chunk are unused.
pub fn partition(
    ds: &DataSet,
    n_clients: usize,
    mode: PartitionMode,
    shards_per_client: usize,
    seed: u64,
) -> Result<Vec<DataShard>, DataError> {
    if n_clients == 0 {
        return Err(DataError::Partition("need at least one client".into()));
    }
    let mut rng = rng::stream(seed, Stream::Partition, &[]);
    let shards = match mode {
        PartitionMode::Iid => {
            let size = ds.len() / n_clients;
            if size == 0 {
                return Err(DataError::Partition(format!(
                    "{} samples cannot give {n_clients} clients one sample each",
                    ds.len()
                )));
            }
            let mut order: Vec<usize> = (0..ds.len()).collect();
            order.shuffle(&mut rng);
            (0..n_clients)
                .map(|c| {
                    let mut indices = order[c * size..(c + 1) * size].to_vec();
                    indices.sort_unstable();
                    DataShard {
                        owner: ClientId(c as u32),
                        indices,
                    }
                })
                .collect()
        }
        PartitionMode::NonIid => {
            if shards_per_client == 0 {
                return Err(DataError::Partition("shards_per_client must be positive".into()));
            }
            let slices = n_clients * shards_per_client;
            let size = ds.len() / slices;
            if size == 0 {
                return Err(DataError::Partition(format!(
                    "{} samples cannot fill {slices} label-sorted slices",
                    ds.len()
                )));
            }
            let mut by_label: Vec<usize> = (0..ds.len()).collect();
            by_label.sort_by_key(|&i| (ds.label(i), i));
            let mut slice_ids: Vec<usize> = (0..slices).collect();
            slice_ids.shuffle(&mut rng);
            (0..n_clients)
                .map(|c| {
                    let mut indices: Vec<usize> = slice_ids[c * shards_per_client..(c + 1) * shards_per_client]
                        .iter()
                        .flat_map(|&s| by_label[s * size..(s + 1) * size].iter().copied())
                        .collect();
                    indices.sort_unstable();
                    DataShard {
                        owner: ClientId(c as u32),
                        indices,
                    }
                })
                .collect()
        }
    };
    Ok(shards)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::{BTreeSet, HashSet};

    fn idx_images(count: u32, rows: u32, cols: u32, pixels: &[u8]) -> Vec<u8> {
        let mut v = Vec::new();
        for w in [IDX_IMAGES_MAGIC, count, rows, cols] {
            v.extend_from_slice(&w.to_be_bytes());
        }
        v.extend_from_slice(pixels);
        v
    }

    fn idx_labels(count: u32, labels: &[u8]) -> Vec<u8> {
        let mut v = Vec::new();
        v.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
        v.extend_from_slice(&count.to_be_bytes());
        v.extend_from_slice(labels);
        v
    }

    #[test]
    fn parses_four_sample_fixture() {
        // 4 images of 2x2 pixels
        let pixels: Vec<u8> = vec![0, 255, 51, 102, 1, 2, 3, 4, 255, 255, 255, 255, 0, 0, 0, 0];
        let ds = parse_idx(&idx_images(4, 2, 2, &pixels), &idx_labels(4, &[3, 0, 9, 1])).unwrap();
        assert_eq!(ds.len(), 4);
        assert_eq!(ds.dim(), 4);
        assert_eq!(ds.class_count(), 10);
        assert_eq!(ds.features(0), &[0.0, 1.0, 0.2, 0.4]);
        assert_eq!(ds.labels(), &[3, 0, 9, 1]);
        assert!(ds.features.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn idx_errors_carry_offsets() {
        let imgs = idx_images(2, 1, 1, &[1, 2]);
        match parse_idx(&imgs, &idx_labels(3, &[0, 1, 1])) {
            Err(DataError::Format { offset: 4, .. }) => {}
            other => panic!("expected count mismatch, got {other:?}"),
        }
        match parse_idx(&[], &idx_labels(2, &[0, 1])) {
            Err(DataError::Format { offset: 0, .. }) => {}
            other => panic!("expected empty-file error, got {other:?}"),
        }
        let mut bad = imgs.clone();
        bad[3] = 0x01;
        assert!(matches!(
            parse_idx(&bad, &idx_labels(2, &[0, 1])),
            Err(DataError::Format { .. })
        ));
        let truncated = &imgs[..imgs.len() - 1];
        match parse_idx(truncated, &idx_labels(2, &[0, 1])) {
            Err(DataError::Format { offset, .. }) => assert_eq!(offset, truncated.len()),
            other => panic!("expected truncation error, got {other:?}"),
        }
    }

    #[test]
    fn load_idx_reads_files() {
        let dir = tempfile::tempdir().unwrap();
        let ip = dir.path().join("img.idx3");
        let lp = dir.path().join("lab.idx1");
        fs::write(&ip, idx_images(1, 1, 2, &[0, 255])).unwrap();
        fs::write(&lp, idx_labels(1, &[1])).unwrap();
        let ds = load_idx(&ip, &lp).unwrap();
        assert_eq!(ds.features(0), &[0.0, 1.0]);
        assert!(matches!(
            load_idx(&dir.path().join("missing"), &lp),
            Err(DataError::Io { .. })
        ));
    }

    #[test]
    fn synth_is_deterministic() {
        let a = synth_classification(100, 5, 3, 2.0, 9).unwrap();
        let b = synth_classification(100, 5, 3, 2.0, 9).unwrap();
        let c = synth_classification(100, 5, 3, 2.0, 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(synth_classification(0, 5, 3, 1.0, 1).is_err());
    }

    #[test]
    fn single_client_gets_everything() {
        let ds = synth_classification(37, 2, 3, 1.0, 1).unwrap();
        for mode in [PartitionMode::Iid, PartitionMode::NonIid] {
            let shards = partition(&ds, 1, mode, 1, 5).unwrap();
            assert_eq!(shards.len(), 1);
            assert_eq!(shards[0].indices, (0..37).collect::<Vec<_>>());
        }
    }

    #[test]
    fn iid_shards_track_global_class_mix() {
        let ds = synth_classification(1000, 2, 10, 1.0, 3).unwrap();
        let shards = partition(&ds, 10, PartitionMode::Iid, 1, 4).unwrap();
        let mut seen = HashSet::new();
        for s in &shards {
            assert_eq!(s.len(), 100);
            let mut counts = [0usize; 10];
            for &i in &s.indices {
                assert!(seen.insert(i));
                counts[ds.label(i)] += 1;
            }
            // global proportion is exactly 10% per class
            for c in counts {
                assert!((c as f64 / 100.0 - 0.1).abs() <= 0.10, "{counts:?}");
            }
        }
        assert_eq!(seen.len(), 1000);
    }

    #[test]
    fn noniid_limits_label_spread() {
        let ds = synth_classification(1000, 2, 10, 1.0, 3).unwrap();
        let shards = partition(&ds, 10, PartitionMode::NonIid, 2, 4).unwrap();
        let mut seen = HashSet::new();
        for s in &shards {
            let labels: BTreeSet<usize> = s.indices.iter().map(|&i| ds.label(i)).collect();
            assert!(labels.len() <= 4, "{labels:?}");
            for &i in &s.indices {
                assert!(seen.insert(i));
            }
        }
        assert_eq!(seen.len(), 1000);
    }

    #[test]
    fn partition_rejects_tiny_sets() {
        let ds = synth_classification(5, 2, 2, 1.0, 3).unwrap();
        assert!(matches!(
            partition(&ds, 6, PartitionMode::Iid, 1, 0),
            Err(DataError::Partition(_))
        ));
        assert!(matches!(
            partition(&ds, 3, PartitionMode::NonIid, 2, 0),
            Err(DataError::Partition(_))
        ));
        assert!(partition(&ds, 0, PartitionMode::Iid, 1, 0).is_err());
    }

    #[test]
    fn label_noise_is_deterministic_and_local() {
        let mut a = synth_classification(200, 2, 10, 1.0, 3).unwrap();
        let orig = a.clone();
        let mut b = a.clone();
        a.randomize_labels(&[0, 5, 7], 11);
        b.randomize_labels(&[0, 5, 7], 11);
        assert_eq!(a, b);
        for i in 0..200 {
            if ![0, 5, 7].contains(&i) {
                assert_eq!(a.label(i), orig.label(i));
            }
        }
    }
}
