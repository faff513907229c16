//! Labelled digit data: IDX ingestion, a synthetic fallback corpus,
//! stratified 2:1 splitting and client partitioning.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::{domain, rng_for};

pub const IDX_IMAGE_MAGIC: u32 = 2051;
pub const IDX_LABEL_MAGIC: u32 = 2049;

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub class_count: usize,
}

impl LabeledDataset {
    pub fn new(features: Vec<Vec<f64>>, labels: Vec<usize>, class_count: usize) -> Result<Self> {
        if features.len() != labels.len() {
            return Err(Error::CountMismatch {
                images: features.len(),
                labels: labels.len(),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= class_count) {
            return Err(Error::InvalidConfig(format!(
                "label {bad} exceeds class count {class_count}"
            )));
        }
        if let Some(first) = features.first() {
            let d = first.len();
            if let Some(x) = features.iter().find(|x| x.len() != d) {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: x.len(),
                });
            }
        }
        Ok(Self {
            features,
            labels,
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
        self.features.first().map_or(0, Vec::len)
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            features: indices.iter().map(|&i| self.features[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            class_count: self.class_count,
        }
    }

    /// Concatenation of several datasets over the same label alphabet.
    pub fn union<'a>(parts: impl IntoIterator<Item = &'a LabeledDataset>, class_count: usize) -> Self {
        let mut out = Self {
            features: Vec::new(),
            labels: Vec::new(),
            class_count,
        };
        for p in parts {
            out.features.extend(p.features.iter().cloned());
            out.labels.extend(&p.labels);
        }
        out
    }

    pub fn class_indices(&self) -> Vec<Vec<usize>> {
        let mut by_class = vec![Vec::new(); self.class_count];
        for (i, &y) in self.labels.iter().enumerate() {
            by_class[y].push(i);
        }
        by_class
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn be_u32(bytes: &[u8], at: usize, path: &Path) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Truncated {
            path: path.to_path_buf(),
            needed: at + 4,
            found: bytes.len(),
        })
}

fn expect_magic(bytes: &[u8], expected: u32, path: &Path) -> Result<()> {
    let found = be_u32(bytes, 0, path)?;
    if found != expected {
        return Err(Error::WrongMagic {
            path: path.to_path_buf(),
            expected,
            found,
        });
    }
    Ok(())
}

fn payload<'a>(bytes: &'a [u8], header: usize, len: usize, path: &Path) -> Result<&'a [u8]> {
    bytes.get(header..header + len).ok_or_else(|| Error::Truncated {
        path: path.to_path_buf(),
        needed: header + len,
        found: bytes.len(),
    })
}

/// Parses an IDX image file (magic 2051, u8 pixels) into rows scaled to `[0,1]`.
pub fn parse_idx_images(bytes: &[u8], path: &Path) -> Result<Vec<Vec<f64>>> {
    expect_magic(bytes, IDX_IMAGE_MAGIC, path)?;
    let count = be_u32(bytes, 4, path)? as usize;
    let rows = be_u32(bytes, 8, path)? as usize;
    let cols = be_u32(bytes, 12, path)? as usize;
    let dim = rows * cols;
    let data = payload(bytes, 16, count * dim, path)?;
    Ok(data
        .chunks_exact(dim.max(1))
        .take(count)
        .map(|px| px.iter().map(|&b| f64::from(b) / 255.0).collect())
        .collect())
}

/// Parses an IDX label file (magic 2049, u8 labels).
pub fn parse_idx_labels(bytes: &[u8], path: &Path) -> Result<Vec<usize>> {
    expect_magic(bytes, IDX_LABEL_MAGIC, path)?;
    let count = be_u32(bytes, 4, path)? as usize;
    Ok(payload(bytes, 8, count, path)?
        .iter()
        .map(|&b| usize::from(b))
        .collect())
}

pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<LabeledDataset> {
    let features = parse_idx_images(&read_file(images_path)?, images_path)?;
    let labels = parse_idx_labels(&read_file(labels_path)?, labels_path)?;
    if features.len() != labels.len() {
        return Err(Error::CountMismatch {
            images: features.len(),
            labels: labels.len(),
        });
    }
    let class_count = labels.iter().max().map_or(10, |&m| (m + 1).max(10));
    LabeledDataset::new(features, labels, class_count)
}

/// Standard MNIST training files inside `dir`.
pub fn load_mnist_dir(dir: &Path) -> Result<LabeledDataset> {
    load_idx(
        &dir.join("train-images-idx3-ubyte"),
        &dir.join("train-labels-idx1-ubyte"),
    )
}

pub const GLYPH_SIDE: usize = 28;

// Segments a..g of a seven-segment display per digit.
const SEGMENTS: [[bool; 7]; 10] = [
    [true, true, true, true, true, true, false],
    [false, true, true, false, false, false, false],
    [true, true, false, true, true, false, true],
    [true, true, true, true, false, false, true],
    [false, true, true, false, false, true, true],
    [true, false, true, true, false, true, true],
    [true, false, true, true, true, true, true],
    [true, true, true, false, false, false, false],
    [true, true, true, true, true, true, true],
    [true, true, true, true, false, true, true],
];

/// 28×28 seven-segment rendering of `digit` with 3-pixel strokes.
pub fn digit_prototype(digit: usize) -> Vec<f64> {
    let side = GLYPH_SIDE;
    let mut img = vec![0.0; side * side];
    let (left, right, top, mid, bottom, w) = (7, 20, 4, 13, 22, 3);
    let mut fill = |r0: usize, r1: usize, c0: usize, c1: usize| {
        for r in r0..r1 {
            for c in c0..c1 {
                img[r * side + c] = 1.0;
            }
        }
    };
    let seg = SEGMENTS[digit % 10];
    if seg[0] {
        fill(top, top + w, left, right + w);
    }
    if seg[1] {
        fill(top, mid + w, right, right + w);
    }
    if seg[2] {
        fill(mid, bottom + w, right, right + w);
    }
    if seg[3] {
        fill(bottom, bottom + w, left, right + w);
    }
    if seg[4] {
        fill(mid, bottom + w, left, left + w);
    }
    if seg[5] {
        fill(top, mid + w, left, left + w);
    }
    if seg[6] {
        fill(mid, mid + w, left, right + w);
    }
    img
}

/// Generator settings for the synthetic digit corpus.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    /// Standard deviation of the pixelwise Gaussian noise.
    pub noise: f64,
    /// Each glyph is translated by up to this many pixels along both axes.
    pub max_shift: usize,
}

/// Largest translation that keeps every prototype stroke inside the image.
pub const MAX_GLYPH_SHIFT: usize = 3;

fn shifted(proto: &[f64], dx: isize, dy: isize) -> Vec<f64> {
    let side = GLYPH_SIDE as isize;
    let mut out = vec![0.0; proto.len()];
    for r in 0..side {
        for c in 0..side {
            let (sr, sc) = (r - dy, c - dx);
            if (0..side).contains(&sr) && (0..side).contains(&sc) {
                out[(r * side + c) as usize] = proto[(sr * side + sc) as usize];
            }
        }
    }
    out
}

/// Ten digit prototypes, randomly translated, plus pixelwise Gaussian noise
/// clipped to `[0,1]`; `per_class` samples per digit, ordered by class.
pub fn synthesize_digits(per_class: usize, spec: SyntheticSpec, seed: u64) -> Result<LabeledDataset> {
    if per_class == 0 {
        return Err(Error::InsufficientSamples("per_class must be >= 1".into()));
    }
    let noise = spec.noise;
    let normal = Normal::new(0.0, noise.max(0.0)).map_err(|_| Error::InvalidParameter {
        name: "noise",
        value: noise,
        reason: "must be a finite standard deviation",
    })?;
    if spec.max_shift > MAX_GLYPH_SHIFT {
        return Err(Error::InvalidParameter {
            name: "max_shift",
            value: spec.max_shift as f64,
            reason: "glyphs would leave the image",
        });
    }
    let m = spec.max_shift as i32;
    let mut rng = rng_for(seed, domain::DATA, &[]);
    let mut features = Vec::with_capacity(10 * per_class);
    let mut labels = Vec::with_capacity(10 * per_class);
    for digit in 0..10 {
        let proto = digit_prototype(digit);
        for _ in 0..per_class {
            let mut x = if m > 0 {
                shifted(
                    &proto,
                    rng.random_range(-m..=m) as isize,
                    rng.random_range(-m..=m) as isize,
                )
            } else {
                proto.clone()
            };
            if noise > 0.0 {
                for p in &mut x {
                    *p = (*p + normal.sample(&mut rng)).clamp(0.0, 1.0);
                }
            }
            features.push(x);
            labels.push(digit);
        }
    }
    LabeledDataset::new(features, labels, 10)
}

/// Draws `per_class` samples of every class without replacement, ordered by class.
pub fn stratified_subset(ds: &LabeledDataset, per_class: usize, seed: u64) -> Result<LabeledDataset> {
    let mut rng = rng_for(seed, domain::DATA, &[1]);
    let mut picked = Vec::with_capacity(per_class * ds.class_count);
    for (class, mut idx) in ds.class_indices().into_iter().enumerate() {
        if idx.len() < per_class {
            return Err(Error::InsufficientSamples(format!(
                "class {class} has {} samples, {per_class} requested",
                idx.len()
            )));
        }
        idx.shuffle(&mut rng);
        picked.extend_from_slice(&idx[..per_class]);
    }
    Ok(ds.subset(&picked))
}

/// Stratified split: in every class a third (rounded down) goes to test.
pub fn split_train_test(ds: &LabeledDataset, seed: u64) -> Result<(LabeledDataset, LabeledDataset)> {
    let mut rng = rng_for(seed, domain::SPLIT, &[]);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (class, mut idx) in ds.class_indices().into_iter().enumerate() {
        if idx.is_empty() {
            continue;
        }
        if idx.len() < 3 {
            return Err(Error::InsufficientSamples(format!(
                "class {class} has {} samples; a 2:1 split needs at least 3",
                idx.len()
            )));
        }
        idx.shuffle(&mut rng);
        let n_test = idx.len() / 3;
        test.extend_from_slice(&idx[..n_test]);
        train.extend_from_slice(&idx[n_test..]);
    }
    Ok((ds.subset(&train), ds.subset(&test)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PartitionMode {
    #[serde(rename = "iid")]
    Iid,
    #[serde(rename = "noniid")]
    NonIid,
}

impl PartitionMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            PartitionMode::Iid => "iid",
            PartitionMode::NonIid => "noniid",
        }
    }
}

impl std::fmt::Display for PartitionMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for PartitionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "iid" => Ok(PartitionMode::Iid),
            "noniid" | "non-iid" => Ok(PartitionMode::NonIid),
            other => Err(Error::InvalidConfig(format!("unknown partition mode `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Partition {
    pub client_datasets: Vec<LabeledDataset>,
    pub mode: PartitionMode,
    /// Source-dataset indices held by each client.
    pub source_indices: Vec<Vec<usize>>,
}

/// Deals `samples_per_client` distinct samples to each of `k` clients.
///
/// Non-i.i.d. clients hold one class each, assigned round-robin
/// (client `i` gets class `i mod C`), so every class is held by `k/C` clients.
pub fn partition(
    train: &LabeledDataset,
    k: usize,
    samples_per_client: usize,
    mode: PartitionMode,
    seed: u64,
) -> Result<Partition> {
    if k == 0 {
        return Err(Error::InvalidConfig("need at least one client".into()));
    }
    let mut rng = rng_for(seed, domain::PARTITION, &[]);
    let mut source_indices = vec![Vec::new(); k];
    match mode {
        PartitionMode::Iid => {
            let need = k * samples_per_client;
            if train.len() < need {
                return Err(Error::InsufficientSamples(format!(
                    "{k} clients x {samples_per_client} samples needs {need}, have {}",
                    train.len()
                )));
            }
            let mut all: Vec<usize> = (0..train.len()).collect();
            all.shuffle(&mut rng);
            for (client, chunk) in all.chunks_exact(samples_per_client).take(k).enumerate() {
                source_indices[client] = chunk.to_vec();
            }
        }
        PartitionMode::NonIid => {
            let c = train.class_count;
            if !k.is_multiple_of(c) {
                return Err(Error::InvalidConfig(format!(
                    "non-i.i.d. partition needs the client count ({k}) to be a multiple of the class count ({c})"
                )));
            }
            let per_class = k / c;
            for (class, mut idx) in train.class_indices().into_iter().enumerate() {
                let need = per_class * samples_per_client;
                if idx.len() < need {
                    return Err(Error::InsufficientSamples(format!(
                        "class {class} has {} samples, {per_class} clients need {need}",
                        idx.len()
                    )));
                }
                idx.shuffle(&mut rng);
                for (slot, chunk) in idx.chunks_exact(samples_per_client).take(per_class).enumerate() {
                    source_indices[class + slot * c] = chunk.to_vec();
                }
            }
        }
    }
    let client_datasets = source_indices.iter().map(|idx| train.subset(idx)).collect();
    Ok(Partition {
        client_datasets,
        mode,
        source_indices,
    })
}

/// Per-client training and test shares drawn from one pool.
#[derive(Clone, Debug)]
pub struct FederatedData {
    pub train: Partition,
    pub test: Partition,
    /// Union of all client test shares.
    pub test_union: LabeledDataset,
    /// Union of all client training sets.
    pub train_union: LabeledDataset,
}

/// Splits `pool` 2:1 (stratified), then deals each client
/// `train_per_client` training and `test_per_client` test samples with the
/// same class assignment, so client `i` owns both a local training set and a
/// local test share.
pub fn federate(
    pool: &LabeledDataset,
    k: usize,
    train_per_client: usize,
    test_per_client: usize,
    mode: PartitionMode,
    seed: u64,
) -> Result<FederatedData> {
    let (train_pool, test_pool) = split_train_test(pool, seed)?;
    let train = partition(&train_pool, k, train_per_client, mode, seed)?;
    let test = partition(&test_pool, k, test_per_client, mode, seed ^ 0x7e57)?;
    let c = pool.class_count;
    let test_union = LabeledDataset::union(&test.client_datasets, c);
    let train_union = LabeledDataset::union(&train.client_datasets, c);
    Ok(FederatedData {
        train,
        test,
        test_union,
        train_union,
    })
}
