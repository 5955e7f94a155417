//! Dataset ingestion: MNIST in IDX format (optionally gzipped), plain-text
//! character corpora and a synthetic separable toy set.

use std::collections::BTreeSet;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;
use rand::Rng;

use crate::error::{Result, SimError};
use crate::rng::{gaussian, substream};

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// Fixed-length feature vectors with class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSet {
    features: usize,
    classes: usize,
    values: Vec<f32>,
    labels: Vec<u8>,
}

impl LabeledSet {
    pub fn new(features: usize, classes: usize, values: Vec<f32>, labels: Vec<u8>) -> Result<Self> {
        if features == 0 || values.len() != features * labels.len() {
            return Err(SimError::DimensionMismatch {
                context: "labeled set values".into(),
                expected: features * labels.len(),
                got: values.len(),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&l| usize::from(l) >= classes) {
            return Err(SimError::InvalidConfig(format!("label {bad} outside {classes} classes")));
        }
        Ok(Self {
            features,
            classes,
            values,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn features(&self) -> usize {
        self.features
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn sample(&self, i: usize) -> &[f32] {
        &self.values[i * self.features..(i + 1) * self.features]
    }

    pub fn label(&self, i: usize) -> usize {
        usize::from(self.labels[i])
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    /// First `n` samples and the rest.
    pub fn split_at(mut self, n: usize) -> Result<(Self, Self)> {
        if n > self.len() {
            return Err(SimError::InvalidConfig(format!("split at {n} of {} samples", self.len())));
        }
        let tail = Self {
            features: self.features,
            classes: self.classes,
            values: self.values.split_off(n * self.features),
            labels: self.labels.split_off(n),
        };
        Ok((self, tail))
    }

    /// Keep the first `n` samples.
    pub fn truncated(mut self, n: usize) -> Result<Self> {
        if n > self.len() {
            return Err(SimError::InvalidConfig(format!(
                "subset of {n} requested from {} samples",
                self.len()
            )));
        }
        self.labels.truncate(n);
        self.values.truncate(n * self.features);
        Ok(self)
    }
}

fn read_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let raw = fs::read(path).map_err(|e| SimError::io(path, e))?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| SimError::format(path, format!("gzip: {e}")))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn be_u32(bytes: &[u8], at: usize, path: &Path) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| SimError::format(path, "truncated header"))
}

/// Decoded IDX image file: `(count, rows, cols, pixels)`.
pub fn parse_idx_images(bytes: &[u8], path: &Path) -> Result<(usize, usize, usize, Vec<u8>)> {
    let magic = be_u32(bytes, 0, path)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(SimError::format(
            path,
            format!("bad magic {magic:#010x}, expected {IDX_IMAGES_MAGIC:#010x} (images)"),
        ));
    }
    let n = be_u32(bytes, 4, path)? as usize;
    let rows = be_u32(bytes, 8, path)? as usize;
    let cols = be_u32(bytes, 12, path)? as usize;
    let need = n * rows * cols;
    let body = &bytes[16..];
    if body.len() < need {
        return Err(SimError::format(
            path,
            format!("truncated: {} pixel bytes, header promises {need}", body.len()),
        ));
    }
    Ok((n, rows, cols, body[..need].to_vec()))
}

pub fn parse_idx_labels(bytes: &[u8], path: &Path) -> Result<Vec<u8>> {
    let magic = be_u32(bytes, 0, path)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(SimError::format(
            path,
            format!("bad magic {magic:#010x}, expected {IDX_LABELS_MAGIC:#010x} (labels)"),
        ));
    }
    let n = be_u32(bytes, 4, path)? as usize;
    let body = &bytes[8..];
    if body.len() < n {
        return Err(SimError::format(
            path,
            format!("truncated: {} label bytes, header promises {n}", body.len()),
        ));
    }
    Ok(body[..n].to_vec())
}

/// Images scaled to `[0, 1]`, labels `0..=9`.
pub fn load_mnist_idx(images: &Path, labels: &Path) -> Result<LabeledSet> {
    let (n, rows, cols, pixels) = parse_idx_images(&read_maybe_gz(images)?, images)?;
    let lab = parse_idx_labels(&read_maybe_gz(labels)?, labels)?;
    if lab.len() != n {
        return Err(SimError::format(
            labels,
            format!("{} labels for {n} images in {}", lab.len(), images.display()),
        ));
    }
    if let Some(&bad) = lab.iter().find(|&&l| l > 9) {
        return Err(SimError::format(labels, format!("label {bad} out of range")));
    }
    let values = pixels.iter().map(|&p| f32::from(p) / 255.0).collect();
    LabeledSet::new(rows * cols, 10, values, lab)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MnistSplit {
    Train,
    Test,
}

/// Locate `{train,t10k}-{images-idx3,labels-idx1}-ubyte[.gz]` in `dir`.
pub fn mnist_paths(dir: &Path, split: MnistSplit) -> Result<(PathBuf, PathBuf)> {
    let prefix = match split {
        MnistSplit::Train => "train",
        MnistSplit::Test => "t10k",
    };
    let find = |stem: String| -> Result<PathBuf> {
        [stem.clone(), format!("{stem}.gz")]
            .iter()
            .map(|n| dir.join(n))
            .find(|p| p.is_file())
            .ok_or_else(|| SimError::io(dir.join(&stem), std::io::Error::from(std::io::ErrorKind::NotFound)))
    };
    Ok((
        find(format!("{prefix}-images-idx3-ubyte"))?,
        find(format!("{prefix}-labels-idx1-ubyte"))?,
    ))
}

pub fn load_mnist_dir(dir: &Path, split: MnistSplit) -> Result<LabeledSet> {
    let (i, l) = mnist_paths(dir, split)?;
    load_mnist_idx(&i, &l)
}

/// Where a corpus is cut into training and test text.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CorpusSplit {
    /// Leading fraction used for training, the rest for test.
    Fraction(f64),
    /// Leading `train` characters, then the next `test`.
    Counts { train: usize, test: usize },
}

/// Character-level corpus as indices into a sorted vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct CharCorpus {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub vocab: Vec<char>,
}

pub fn load_char_corpus(path: &Path, split: CorpusSplit) -> Result<CharCorpus> {
    let text = fs::read_to_string(path).map_err(|e| SimError::io(path, e))?;
    corpus_from_text(&text, split).map_err(|e| match e {
        SimError::EmptyDataset(m) => SimError::EmptyDataset(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn corpus_from_text(text: &str, split: CorpusSplit) -> Result<CharCorpus> {
    let chars: Vec<char> = text.chars().collect();
    if chars.is_empty() {
        return Err(SimError::EmptyDataset("corpus is empty".into()));
    }
    let n = chars.len();
    let (train_n, test_n) = match split {
        CorpusSplit::Fraction(f) if (0.0..=1.0).contains(&f) => {
            let t = ((n as f64) * f).round() as usize;
            (t, n - t)
        }
        CorpusSplit::Fraction(f) => {
            return Err(SimError::InvalidConfig(format!("split fraction {f} outside [0, 1]")))
        }
        CorpusSplit::Counts { train, test } if train + test <= n => (train, test),
        CorpusSplit::Counts { train, test } => {
            return Err(SimError::InvalidConfig(format!(
                "split {train}+{test} exceeds corpus of {n} characters"
            )))
        }
    };
    let vocab: Vec<char> = chars.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    let index = |c: &char| vocab.binary_search(c).expect("char in vocab");
    Ok(CharCorpus {
        train: chars[..train_n].iter().map(index).collect(),
        test: chars[train_n..train_n + test_n].iter().map(index).collect(),
        vocab,
    })
}

/// Gaussian blobs around random class centres, clipped to `[-1, 1]`.
pub fn toy_blobs(n: usize, features: usize, classes: usize, seed: u64) -> Result<LabeledSet> {
    if classes == 0 || classes > 256 {
        return Err(SimError::InvalidConfig("toy set needs 1..=256 classes".into()));
    }
    let mut centre_rng = substream(seed, &[0]);
    let centres: Vec<Vec<f64>> = (0..classes)
        .map(|_| (0..features).map(|_| centre_rng.random_range(-0.7..0.7)).collect())
        .collect();
    let mut rng = substream(seed, &[1]);
    let mut values = Vec::with_capacity(n * features);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let k = i % classes;
        for &c in &centres[k] {
            let v = c + 0.2 * gaussian::<f64, _>(&mut rng);
            values.push(v.clamp(-1.0, 1.0) as f32);
        }
        labels.push(k as u8);
    }
    LabeledSet::new(features, classes, values, labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn idx_images(n: u32, rows: u32, cols: u32, body: &[u8]) -> Vec<u8> {
        let mut v = Vec::new();
        for x in [IDX_IMAGES_MAGIC, n, rows, cols] {
            v.extend_from_slice(&x.to_be_bytes());
        }
        v.extend_from_slice(body);
        v
    }

    fn idx_labels(labels: &[u8]) -> Vec<u8> {
        let mut v = Vec::new();
        v.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
        v.extend_from_slice(&(labels.len() as u32).to_be_bytes());
        v.extend_from_slice(labels);
        v
    }

    #[test]
    fn idx_round_trip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let img = dir.path().join("img");
        let lab = dir.path().join("lab");
        fs::write(&img, idx_images(2, 2, 2, &[0, 255, 51, 102, 1, 2, 3, 4])).unwrap();
        fs::write(&lab, idx_labels(&[7, 3])).unwrap();
        let set = load_mnist_idx(&img, &lab).unwrap();
        assert_eq!(set.len(), 2);
        assert_eq!(set.sample(0), &[0.0, 1.0, 0.2, 0.4]);
        assert_eq!(set.label(1), 3);

        // label magic on an image file
        let err = load_mnist_idx(&lab, &lab).unwrap_err();
        assert!(err.to_string().contains("bad magic"), "{err}");

        fs::write(&img, idx_images(3, 2, 2, &[0; 8])).unwrap();
        assert!(load_mnist_idx(&img, &lab).unwrap_err().to_string().contains("truncated"));

        fs::write(&img, idx_images(1, 2, 2, &[0; 4])).unwrap();
        assert!(load_mnist_idx(&img, &lab).is_err());
    }

    #[test]
    fn gzip_is_transparent() {
        let dir = tempfile::tempdir().unwrap();
        let img = dir.path().join("img.gz");
        let lab = dir.path().join("lab");
        let mut enc = flate2::write::GzEncoder::new(Vec::new(), flate2::Compression::default());
        enc.write_all(&idx_images(1, 1, 2, &[255, 0])).unwrap();
        fs::write(&img, enc.finish().unwrap()).unwrap();
        fs::write(&lab, idx_labels(&[9])).unwrap();
        let set = load_mnist_idx(&img, &lab).unwrap();
        assert_eq!(set.sample(0), &[1.0, 0.0]);
    }

    #[test]
    fn corpus_split_and_vocab() {
        let c = corpus_from_text("abcabcabca", CorpusSplit::Fraction(0.8)).unwrap();
        assert_eq!((c.train.len(), c.test.len()), (8, 2));
        assert_eq!(c.vocab, vec!['a', 'b', 'c']);
        let c = corpus_from_text("hello world", CorpusSplit::Counts { train: 5, test: 3 }).unwrap();
        assert_eq!(c.train.len(), 5);
        assert_eq!(c.test.iter().map(|&i| c.vocab[i]).collect::<String>(), " wo");
        assert!(c.vocab.windows(2).all(|w| w[0] < w[1]));
        assert!(corpus_from_text("", CorpusSplit::Fraction(0.5)).is_err());
        assert!(corpus_from_text("abc", CorpusSplit::Counts { train: 3, test: 1 }).is_err());
    }

    #[test]
    fn toy_blobs_are_deterministic_and_bounded() {
        let a = toy_blobs(60, 4, 3, 5).unwrap();
        assert_eq!(a, toy_blobs(60, 4, 3, 5).unwrap());
        assert_ne!(a, toy_blobs(60, 4, 3, 6).unwrap());
        assert!((0..60).all(|i| a.sample(i).iter().all(|v| v.abs() <= 1.0)));
        assert!(a.clone().truncated(61).is_err());
        assert_eq!(a.truncated(10).unwrap().len(), 10);
    }
}
