//! MNIST ingestion from the standard IDX binary files, deterministic
//! shuffling and batching, one-hot encoding, and a desk-scale synthetic
//! dataset for tests that must run without the MNIST files.
//!
//! IDX is big-endian: a 4-byte magic (0x00000803 for 3-dim image files,
//! 0x00000801 for 1-dim label files) followed by one u32 per dimension,
//! then the raw bytes. Files may be gzip-compressed; compression is
//! detected from the leading magic bytes, not the file name.

use std::io::Read;
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;
use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::network::one_hot;
use crate::numerics::{sample_normal, Matrix, Rng};

pub const TRAIN_IMAGES: &str = "train-images-idx3-ubyte";
pub const TRAIN_LABELS: &str = "train-labels-idx1-ubyte";
pub const TEST_IMAGES: &str = "t10k-images-idx3-ubyte";
pub const TEST_LABELS: &str = "t10k-labels-idx1-ubyte";

/// Environment variable consulted when no data directory is configured.
pub const DATA_DIR_ENV: &str = "FALIGN_DATA_DIR";

const IMAGE_MAGIC: u32 = 0x0000_0803;
const LABEL_MAGIC: u32 = 0x0000_0801;

/// A labeled split: pixels normalized to `[0, 1]`, stored one example per
/// row (`N x dim` row-major) for cache-friendly batch assembly. Batches
/// expose the column-per-example layout the forward pass consumes.
#[derive(Debug, Clone)]
pub struct Dataset {
    images: Matrix,
    labels: Vec<u8>,
    num_classes: usize,
}

impl Dataset {
    pub fn new(images: Matrix, labels: Vec<u8>, num_classes: usize) -> Result<Dataset> {
        if labels.is_empty() || images.rows() == 0 {
            return Err(Error::EmptyDataset);
        }
        if images.rows() != labels.len() {
            return Err(Error::Dimension {
                op: "Dataset::new",
                msg: format!("{} images vs {} labels", images.rows(), labels.len()),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l as usize >= num_classes) {
            return Err(Error::Domain {
                op: "Dataset::new",
                msg: format!("label {bad} out of range for {num_classes} classes"),
            });
        }
        Ok(Dataset {
            images,
            labels,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.images.cols()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    /// Pixels of example `i`.
    pub fn example(&self, i: usize) -> &[f64] {
        let d = self.images.cols();
        &self.images.as_slice()[i * d..(i + 1) * d]
    }

    /// Column-per-example matrix for the given example indices, paired
    /// with one-hot targets and raw labels.
    pub fn gather(&self, indices: &[u32]) -> Batch {
        let dim = self.input_dim();
        let b = indices.len();
        let mut images = Matrix::zeros(dim, b);
        let dst = images.as_mut_slice();
        for r in 0..dim {
            for (c, &i) in indices.iter().enumerate() {
                dst[r * b + c] = self.images.as_slice()[i as usize * dim + r];
            }
        }
        let labels: Vec<u8> = indices.iter().map(|&i| self.labels[i as usize]).collect();
        let onehot = one_hot(&labels, self.num_classes);
        Batch {
            images,
            onehot,
            labels,
        }
    }
}

/// One training batch, column per example.
#[derive(Debug, Clone)]
pub struct Batch {
    pub images: Matrix,
    pub onehot: Matrix,
    pub labels: Vec<u8>,
}

impl Batch {
    pub fn size(&self) -> usize {
        self.labels.len()
    }
}

struct IdxReader {
    path: PathBuf,
    bytes: Vec<u8>,
    pos: usize,
}

impl IdxReader {
    fn open(path: &Path) -> Result<IdxReader> {
        let raw = std::fs::read(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        // Gzip magic: 0x1f 0x8b.
        let bytes = if raw.len() >= 2 && raw[0] == 0x1f && raw[1] == 0x8b {
            let mut out = Vec::new();
            GzDecoder::new(raw.as_slice())
                .read_to_end(&mut out)
                .map_err(|source| Error::Io {
                    path: path.to_path_buf(),
                    source,
                })?;
            out
        } else {
            raw
        };
        Ok(IdxReader {
            path: path.to_path_buf(),
            bytes,
            pos: 0,
        })
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        Error::IdxParse {
            path: self.path.clone(),
            offset: self.pos as u64,
            msg: msg.into(),
        }
    }

    fn read_u32(&mut self) -> Result<u32> {
        if self.pos + 4 > self.bytes.len() {
            return Err(self.err("truncated while reading a u32"));
        }
        let v = u32::from_be_bytes(self.bytes[self.pos..self.pos + 4].try_into().unwrap());
        self.pos += 4;
        Ok(v)
    }

    fn read_exact(&mut self, n: usize) -> Result<&[u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(self.err(format!(
                "truncated: wanted {n} bytes, {} remain",
                self.bytes.len() - self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(self.err(format!(
                "{} trailing bytes after the declared payload",
                self.bytes.len() - self.pos
            )));
        }
        Ok(())
    }
}

/// Parses an IDX image file into an `N x (rows*cols)` matrix with pixels
/// divided by 255.
pub fn load_idx_images(path: &Path) -> Result<Matrix> {
    let mut r = IdxReader::open(path)?;
    let magic = r.read_u32()?;
    if magic != IMAGE_MAGIC {
        return Err(r.err(format!("bad magic {magic:#010x}, want {IMAGE_MAGIC:#010x}")));
    }
    let count = r.read_u32()? as usize;
    let rows = r.read_u32()? as usize;
    let cols = r.read_u32()? as usize;
    if count == 0 || rows == 0 || cols == 0 {
        return Err(r.err(format!("degenerate dimensions {count}x{rows}x{cols}")));
    }
    let dim = rows * cols;
    let pixels = r.read_exact(count * dim)?;
    let data: Vec<f64> = pixels.iter().map(|&b| f64::from(b) / 255.0).collect();
    r.finish()?;
    Matrix::from_vec(count, dim, data)
}

/// Parses an IDX label file.
pub fn load_idx_labels(path: &Path) -> Result<Vec<u8>> {
    let mut r = IdxReader::open(path)?;
    let magic = r.read_u32()?;
    if magic != LABEL_MAGIC {
        return Err(r.err(format!("bad magic {magic:#010x}, want {LABEL_MAGIC:#010x}")));
    }
    let count = r.read_u32()? as usize;
    let labels = r.read_exact(count)?.to_vec();
    r.finish()?;
    Ok(labels)
}

/// Writes an image matrix (`N x dim`, values in `[0, 1]`) as an IDX file
/// with the given image shape. Round-trips bitwise with
/// [`load_idx_images`] because every stored value is a byte over 255.
pub fn write_idx_images(path: &Path, images: &Matrix, rows: usize, cols: usize) -> Result<()> {
    assert_eq!(rows * cols, images.cols(), "image shape must match width");
    let mut bytes = Vec::with_capacity(16 + images.as_slice().len());
    bytes.extend_from_slice(&IMAGE_MAGIC.to_be_bytes());
    bytes.extend_from_slice(&(images.rows() as u32).to_be_bytes());
    bytes.extend_from_slice(&(rows as u32).to_be_bytes());
    bytes.extend_from_slice(&(cols as u32).to_be_bytes());
    for v in images.as_slice() {
        bytes.push((v * 255.0).round() as u8);
    }
    std::fs::write(path, bytes).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_idx_labels(path: &Path, labels: &[u8]) -> Result<()> {
    let mut bytes = Vec::with_capacity(8 + labels.len());
    bytes.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    bytes.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    bytes.extend_from_slice(labels);
    std::fs::write(path, bytes).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn resolve_file(dir: &Path, name: &str) -> Result<PathBuf> {
    let plain = dir.join(name);
    if plain.exists() {
        return Ok(plain);
    }
    let gz = dir.join(format!("{name}.gz"));
    if gz.exists() {
        return Ok(gz);
    }
    Err(Error::Io {
        path: plain,
        source: std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("missing {name} (or {name}.gz) in {}", dir.display()),
        ),
    })
}

fn load_split(dir: &Path, images: &str, labels: &str, expected: usize) -> Result<Dataset> {
    let imgs = load_idx_images(&resolve_file(dir, images)?)?;
    let labs = load_idx_labels(&resolve_file(dir, labels)?)?;
    if imgs.rows() != expected || labs.len() != expected {
        return Err(Error::Config(format!(
            "{images}: expected {expected} examples, found {} images / {} labels",
            imgs.rows(),
            labs.len()
        )));
    }
    Dataset::new(imgs, labs, 10)
}

/// Loads the canonical train (60000) and test (10000) splits from a
/// directory holding the four standard files, plain or gzipped.
pub fn load_mnist(dir: &Path) -> Result<(Dataset, Dataset)> {
    let train = load_split(dir, TRAIN_IMAGES, TRAIN_LABELS, 60_000)?;
    let test = load_split(dir, TEST_IMAGES, TEST_LABELS, 10_000)?;
    Ok((train, test))
}

/// Deterministic epoch shuffling: each epoch reshuffles all indices with
/// a generator seeded by `seed ^ epoch`, so the order is reproducible yet
/// non-repeating across epochs, and two runs sharing a seed see the same
/// sequence of examples.
#[derive(Debug, Clone, Copy)]
pub struct BatchPlan {
    pub seed: u64,
    pub batch_size: usize,
}

impl BatchPlan {
    pub fn new(seed: u64, batch_size: usize) -> Result<BatchPlan> {
        if batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        Ok(BatchPlan { seed, batch_size })
    }

    /// The epoch's example order: a permutation of `0..n`.
    pub fn epoch_permutation(&self, n: usize, epoch: u32) -> Vec<u32> {
        let mut indices: Vec<u32> = (0..n as u32).collect();
        let mut rng = Rng::from_seed(self.seed ^ u64::from(epoch));
        indices.shuffle(&mut rng);
        indices
    }

    /// Number of update steps one epoch contributes; a short final batch
    /// is kept, preserving "epoch = full pass".
    pub fn steps_per_epoch(&self, n: usize) -> u64 {
        (n as u64).div_ceil(self.batch_size as u64)
    }

    /// Batches of one epoch, in order.
    pub fn batches<'a>(
        &self,
        data: &'a Dataset,
        epoch: u32,
    ) -> impl Iterator<Item = Batch> + 'a {
        let perm = self.epoch_permutation(data.len(), epoch);
        let bs = self.batch_size;
        BatchIter {
            data,
            perm,
            bs,
            at: 0,
        }
    }
}

struct BatchIter<'a> {
    data: &'a Dataset,
    perm: Vec<u32>,
    bs: usize,
    at: usize,
}

impl Iterator for BatchIter<'_> {
    type Item = Batch;

    fn next(&mut self) -> Option<Batch> {
        if self.at >= self.perm.len() {
            return None;
        }
        let end = (self.at + self.bs).min(self.perm.len());
        let batch = self.data.gather(&self.perm[self.at..end]);
        self.at = end;
        Some(batch)
    }
}

/// Two Gaussian clusters per class arranged in the XOR pattern on the
/// first two input dimensions, embedded in `dim` dimensions (the rest
/// zero). Linearly inseparable by construction; a tanh hidden layer
/// separates it easily.
pub fn synthetic_xor(n_per_class: usize, dim: usize, rng: &mut Rng) -> Result<Dataset> {
    if n_per_class == 0 || dim < 2 {
        return Err(Error::Config(
            "synthetic_xor needs n_per_class >= 1 and dim >= 2".into(),
        ));
    }
    let centers: [([f64; 2], u8); 4] = [
        ([0.2, 0.2], 0),
        ([0.8, 0.8], 0),
        ([0.2, 0.8], 1),
        ([0.8, 0.2], 1),
    ];
    let total = 2 * n_per_class;
    let mut images = Matrix::zeros(total, dim);
    let mut labels = Vec::with_capacity(total);
    let noise = 0.08;
    for i in 0..total {
        // Cycle corner 0,1,2,3: classes alternate 0,0,1,1 and counts stay
        // exactly balanced for even i ranges.
        let (center, class) = centers[i % 4];
        let jitter = sample_normal(rng, 2, 1);
        let row = &mut images.as_mut_slice()[i * dim..i * dim + 2];
        row[0] = (center[0] + noise * jitter.get(0, 0)).clamp(0.0, 1.0);
        row[1] = (center[1] + noise * jitter.get(1, 0)).clamp(0.0, 1.0);
        labels.push(class);
    }
    Dataset::new(images, labels, 2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn crafted_fixture_parses_to_known_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("imgs");
        // Two 2x2 images with known bytes.
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&0x0000_0803u32.to_be_bytes());
        bytes.extend_from_slice(&2u32.to_be_bytes());
        bytes.extend_from_slice(&2u32.to_be_bytes());
        bytes.extend_from_slice(&2u32.to_be_bytes());
        bytes.extend_from_slice(&[0, 255, 51, 102, 255, 0, 204, 153]);
        std::fs::write(&path, &bytes).unwrap();

        let m = load_idx_images(&path).unwrap();
        assert_eq!(m.shape(), (2, 4));
        assert_eq!(m.get(0, 0), 0.0);
        assert_eq!(m.get(0, 1), 1.0);
        assert_eq!(m.get(0, 2), 51.0 / 255.0);
        assert_eq!(m.get(1, 3), 153.0 / 255.0);
    }

    #[test]
    fn wrong_magic_and_truncation_report_offsets() {
        let dir = tempfile::tempdir().unwrap();
        let bad_magic = dir.path().join("bad");
        std::fs::write(&bad_magic, 0x0000_0999u32.to_be_bytes()).unwrap();
        let err = load_idx_images(&bad_magic).unwrap_err().to_string();
        assert!(err.contains("bad magic") && err.contains("byte 4"), "{err}");

        let truncated = dir.path().join("trunc");
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&0x0000_0803u32.to_be_bytes());
        bytes.extend_from_slice(&5u32.to_be_bytes());
        bytes.extend_from_slice(&2u32.to_be_bytes());
        bytes.extend_from_slice(&2u32.to_be_bytes());
        bytes.extend_from_slice(&[7; 3]); // needs 20
        std::fs::write(&truncated, &bytes).unwrap();
        let err = load_idx_images(&truncated).unwrap_err().to_string();
        assert!(err.contains("truncated"), "{err}");
    }

    #[test]
    fn gzip_detected_by_magic_bytes() {
        use flate2::write::GzEncoder;
        use std::io::Write;

        let dir = tempfile::tempdir().unwrap();
        let mut payload = Vec::new();
        payload.extend_from_slice(&0x0000_0801u32.to_be_bytes());
        payload.extend_from_slice(&3u32.to_be_bytes());
        payload.extend_from_slice(&[1, 2, 3]);

        // Note: no .gz extension; detection is content-based.
        let path = dir.path().join("labels-compressed");
        let mut enc = GzEncoder::new(Vec::new(), flate2::Compression::default());
        enc.write_all(&payload).unwrap();
        std::fs::write(&path, enc.finish().unwrap()).unwrap();

        assert_eq!(load_idx_labels(&path).unwrap(), vec![1, 2, 3]);
    }

    #[test]
    fn idx_round_trip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = Rng::from_seed(42);
        let raw = sample_normal(&mut rng, 7, 16).map(|v| {
            // Quantize to byte levels so the fixture is representable.
            ((v.abs() * 97.0).round().min(255.0)) / 255.0
        });
        let labels: Vec<u8> = (0..7).map(|i| (i % 3) as u8).collect();

        let ipath = dir.path().join("imgs");
        let lpath = dir.path().join("labs");
        write_idx_images(&ipath, &raw, 4, 4).unwrap();
        write_idx_labels(&lpath, &labels).unwrap();

        let back = load_idx_images(&ipath).unwrap();
        assert_eq!(back, raw);
        assert_eq!(load_idx_labels(&lpath).unwrap(), labels);
    }

    #[test]
    fn batches_partition_each_epoch() {
        let mut rng = Rng::from_seed(1);
        let data = synthetic_xor(125, 4, &mut rng).unwrap(); // n = 250
        let plan = BatchPlan::new(9, 100).unwrap();
        assert_eq!(plan.steps_per_epoch(data.len()), 3);

        let batches: Vec<Batch> = plan.batches(&data, 0).collect();
        assert_eq!(batches.len(), 3);
        assert_eq!(batches[0].size(), 100);
        assert_eq!(batches[2].size(), 50, "short final batch is kept");

        let seen: HashSet<u32> = plan.epoch_permutation(data.len(), 0).into_iter().collect();
        assert_eq!(seen.len(), 250);

        // One-hot columns sum to one.
        for b in &batches {
            for c in 0..b.size() {
                let sum: f64 = (0..2).map(|r| b.onehot.get(r, c)).sum();
                assert_eq!(sum, 1.0);
            }
        }
    }

    #[test]
    fn same_seed_same_batches() {
        let mut rng = Rng::from_seed(2);
        let data = synthetic_xor(60, 4, &mut rng).unwrap();
        let plan = BatchPlan::new(7, 32).unwrap();
        for epoch in 0..3 {
            let a: Vec<Batch> = plan.batches(&data, epoch).collect();
            let b: Vec<Batch> = plan.batches(&data, epoch).collect();
            for (x, y) in a.iter().zip(&b) {
                assert_eq!(x.labels, y.labels);
                assert_eq!(x.images, y.images);
            }
        }
        // Different epochs shuffle differently.
        assert_ne!(
            plan.epoch_permutation(data.len(), 0),
            plan.epoch_permutation(data.len(), 1)
        );
    }

    #[test]
    fn xor_is_balanced_and_in_range() {
        let mut rng = Rng::from_seed(3);
        let data = synthetic_xor(100, 784, &mut rng).unwrap();
        assert_eq!(data.len(), 200);
        assert_eq!(data.labels().iter().filter(|&&l| l == 0).count(), 100);
        assert_eq!(data.labels().iter().filter(|&&l| l == 1).count(), 100);
        for i in 0..data.len() {
            let px = data.example(i);
            assert!(px.iter().all(|v| (0.0..=1.0).contains(v)));
            assert!(px[2..].iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn gather_produces_column_per_example() {
        let mut rng = Rng::from_seed(4);
        let data = synthetic_xor(10, 5, &mut rng).unwrap();
        let batch = data.gather(&[3, 0, 7]);
        assert_eq!(batch.images.shape(), (5, 3));
        for (c, &i) in [3u32, 0, 7].iter().enumerate() {
            for r in 0..5 {
                assert_eq!(batch.images.get(r, c), data.example(i as usize)[r]);
            }
            assert_eq!(batch.labels[c], data.labels()[i as usize]);
        }
    }
}
