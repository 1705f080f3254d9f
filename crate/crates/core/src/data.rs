//! Finite datasets: in-memory container, synthetic generators, IDX decoding
//! and hold-out splitting.

use alloc::format;
use alloc::vec::Vec;
use core::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::vecops;

/// Per-sample supervision.
#[derive(Debug, Clone, PartialEq)]
pub enum Targets {
    /// Class labels in `0..num_classes`.
    Classes {
        labels: Vec<u32>,
        num_classes: usize,
    },
    /// Real-valued regression targets.
    Values(Vec<f64>),
    /// Unsupervised points (the quadratic objective uses the features as anchors).
    None,
}

/// `n` samples of `p` features stored row-major, plus targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    n: usize,
    p: usize,
    targets: Targets,
}

impl Dataset {
    pub fn new(features: Vec<f64>, p: usize, targets: Targets) -> Result<Self> {
        if p == 0 {
            return Err(Error::config("feature dimension must be positive"));
        }
        if features.len() % p != 0 {
            return Err(Error::DimensionMismatch {
                expected: p * (features.len() / p + 1),
                got: features.len(),
            });
        }
        let n = features.len() / p;
        if n < 2 {
            return Err(Error::config(format!(
                "dataset needs n >= 2 samples, got {n}"
            )));
        }
        if !vecops::all_finite(&features) {
            return Err(Error::NonFinite("dataset features"));
        }
        match &targets {
            Targets::Classes {
                labels,
                num_classes,
            } => {
                if labels.len() != n {
                    return Err(Error::DimensionMismatch {
                        expected: n,
                        got: labels.len(),
                    });
                }
                if *num_classes < 2 {
                    return Err(Error::config("classification needs at least 2 classes"));
                }
                if let Some(bad) = labels.iter().find(|&&l| l as usize >= *num_classes) {
                    return Err(Error::config(format!(
                        "label {bad} outside [0, {num_classes})"
                    )));
                }
            }
            Targets::Values(v) => {
                if v.len() != n {
                    return Err(Error::DimensionMismatch {
                        expected: n,
                        got: v.len(),
                    });
                }
                if !vecops::all_finite(v) {
                    return Err(Error::NonFinite("regression targets"));
                }
            }
            Targets::None => {}
        }
        Ok(Self {
            features,
            n,
            p,
            targets,
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    /// Always false: a dataset holds at least two samples.
    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn feature_dim(&self) -> usize {
        self.p
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn feature(&self, i: usize) -> &[f64] {
        &self.features[i * self.p..(i + 1) * self.p]
    }

    pub fn targets(&self) -> &Targets {
        &self.targets
    }

    pub fn num_classes(&self) -> Option<usize> {
        match self.targets {
            Targets::Classes { num_classes, .. } => Some(num_classes),
            _ => None,
        }
    }

    pub fn class(&self, i: usize) -> Option<usize> {
        match &self.targets {
            Targets::Classes { labels, .. } => Some(labels[i] as usize),
            _ => None,
        }
    }

    pub fn value(&self, i: usize) -> Option<f64> {
        match &self.targets {
            Targets::Values(v) => Some(v[i]),
            _ => None,
        }
    }

    pub fn check_index(&self, index: usize) -> Result<()> {
        if index < self.n {
            Ok(())
        } else {
            Err(Error::IndexOutOfRange { index, n: self.n })
        }
    }

    /// New dataset made of the given rows, in order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let mut features = Vec::with_capacity(indices.len() * self.p);
        for &i in indices {
            self.check_index(i)?;
            features.extend_from_slice(self.feature(i));
        }
        let targets = match &self.targets {
            Targets::Classes {
                labels,
                num_classes,
            } => Targets::Classes {
                labels: indices.iter().map(|&i| labels[i]).collect(),
                num_classes: *num_classes,
            },
            Targets::Values(v) => Targets::Values(indices.iter().map(|&i| v[i]).collect()),
            Targets::None => Targets::None,
        };
        Self::new(features, self.p, targets)
    }
}

/// Shuffles with `seed` and holds out `round(n * val_fraction)` samples.
/// Returns `(train, None)` when the fraction is zero.
pub fn split_holdout(
    data: &Dataset,
    val_fraction: f64,
    seed: u64,
) -> Result<(Dataset, Option<Dataset>)> {
    if !(0.0..1.0).contains(&val_fraction) {
        return Err(Error::config(format!(
            "validation fraction {val_fraction} outside [0, 1)"
        )));
    }
    let n_val = libm::round(data.len() as f64 * val_fraction) as usize;
    if n_val == 0 {
        return Ok((data.clone(), None));
    }
    if n_val < 2 || data.len() - n_val < 2 {
        return Err(Error::config(format!(
            "hold-out split of {} samples at fraction {val_fraction} leaves fewer than 2 on a side",
            data.len()
        )));
    }
    let mut idx: Vec<usize> = (0..data.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(SPLIT_STREAM);
    idx.shuffle(&mut rng);
    let (val_idx, train_idx) = idx.split_at(n_val);
    Ok((data.subset(train_idx)?, Some(data.subset(val_idx)?)))
}

const SPLIT_STREAM: u64 = 0x5_0117;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SyntheticKind {
    /// Isotropic Gaussian clusters, one per class.
    GaussianBlobs,
    /// `y = A w* + noise * eps` with Gaussian design.
    LinearRegression,
    /// Anchor points `xi_i = mu + noise * eps_i` for the quadratic objective.
    QuadraticAnchors,
}

impl SyntheticKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            SyntheticKind::GaussianBlobs => "gaussian-blobs",
            SyntheticKind::LinearRegression => "linear-regression",
            SyntheticKind::QuadraticAnchors => "quadratic-anchors",
        }
    }
}

impl FromStr for SyntheticKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian-blobs" => Ok(Self::GaussianBlobs),
            "linear-regression" => Ok(Self::LinearRegression),
            "quadratic-anchors" => Ok(Self::QuadraticAnchors),
            other => Err(Error::config(format!(
                "unknown synthetic dataset kind `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub kind: SyntheticKind,
    pub n: usize,
    pub p: usize,
    /// Only used by `GaussianBlobs`.
    pub classes: usize,
    pub noise: f64,
    pub seed: u64,
}

/// Spread of the blob centers; with unit noise neighbouring blobs overlap.
const BLOB_CENTER_SCALE: f64 = 2.0;

/// Deterministic synthetic dataset: the same spec always yields bitwise the
/// same samples.
pub fn make_synthetic(spec: &SyntheticSpec) -> Result<Dataset> {
    if spec.n < 2 || spec.p < 1 {
        return Err(Error::config(format!(
            "synthetic data needs n >= 2 and p >= 1 (got n={}, p={})",
            spec.n, spec.p
        )));
    }
    if !(spec.noise >= 0.0 && spec.noise.is_finite()) {
        return Err(Error::config("noise must be finite and non-negative"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut gauss = move || -> f64 { StandardNormal.sample(&mut rng) };
    let (n, p) = (spec.n, spec.p);
    match spec.kind {
        SyntheticKind::GaussianBlobs => {
            if spec.classes < 2 {
                return Err(Error::config("gaussian-blobs needs at least 2 classes"));
            }
            let centers: Vec<f64> = (0..spec.classes * p)
                .map(|_| BLOB_CENTER_SCALE * gauss())
                .collect();
            let mut features = Vec::with_capacity(n * p);
            let mut labels = Vec::with_capacity(n);
            for i in 0..n {
                let c = i % spec.classes;
                for j in 0..p {
                    features.push(centers[c * p + j] + spec.noise * gauss());
                }
                labels.push(c as u32);
            }
            Dataset::new(
                features,
                p,
                Targets::Classes {
                    labels,
                    num_classes: spec.classes,
                },
            )
        }
        SyntheticKind::LinearRegression => {
            let w_star: Vec<f64> = (0..p).map(|_| gauss()).collect();
            let features: Vec<f64> = (0..n * p).map(|_| gauss()).collect();
            let values = features
                .chunks_exact(p)
                .map(|row| vecops::dot(row, &w_star) + spec.noise * gauss())
                .collect();
            Dataset::new(features, p, Targets::Values(values))
        }
        SyntheticKind::QuadraticAnchors => {
            let mu: Vec<f64> = (0..p).map(|_| gauss()).collect();
            let features = (0..n)
                .flat_map(|_| {
                    mu.iter()
                        .map(|m| m + spec.noise * gauss())
                        .collect::<Vec<_>>()
                })
                .collect();
            Dataset::new(features, p, Targets::None)
        }
    }
}

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

fn read_be_u32(bytes: &[u8], offset: usize, what: &str) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::format(format!("{what}: truncated header")))
}

/// Decodes an IDX image/label pair (MNIST layout). Pixels are scaled to
/// `[0, 1]`; labels must lie in `0..=9`.
pub fn parse_idx(images: &[u8], labels: &[u8]) -> Result<Dataset> {
    let magic = read_be_u32(images, 0, "images")?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::format(format!(
            "images: magic {magic:#010x}, expected {IDX_IMAGES_MAGIC:#010x}"
        )));
    }
    let n = read_be_u32(images, 4, "images")? as usize;
    let rows = read_be_u32(images, 8, "images")? as usize;
    let cols = read_be_u32(images, 12, "images")? as usize;
    let magic = read_be_u32(labels, 0, "labels")?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::format(format!(
            "labels: magic {magic:#010x}, expected {IDX_LABELS_MAGIC:#010x}"
        )));
    }
    let n_labels = read_be_u32(labels, 4, "labels")? as usize;
    if n != n_labels {
        return Err(Error::format(format!(
            "image count {n} does not match label count {n_labels}"
        )));
    }
    let p = rows * cols;
    let pixels = images.get(16..16 + n * p).ok_or_else(|| {
        Error::format(format!("images: truncated, expected {} pixel bytes", n * p))
    })?;
    let raw_labels = labels
        .get(8..8 + n)
        .ok_or_else(|| Error::format(format!("labels: truncated, expected {n} label bytes")))?;
    if let Some(bad) = raw_labels.iter().find(|&&l| l > 9) {
        return Err(Error::format(format!("label {bad} outside 0..=9")));
    }
    let features = pixels.iter().map(|&px| f64::from(px) / 255.0).collect();
    Dataset::new(
        features,
        p,
        Targets::Classes {
            labels: raw_labels.iter().map(|&l| u32::from(l)).collect(),
            num_classes: 10,
        },
    )
    .map_err(|e| match e {
        Error::Config(msg) => Error::Format(msg),
        other => other,
    })
}

/// Encodes a dataset with class labels in IDX layout (pixels quantized from `[0, 1]`).
pub fn encode_idx(data: &Dataset, rows: usize, cols: usize) -> Result<(Vec<u8>, Vec<u8>)> {
    if rows * cols != data.feature_dim() {
        return Err(Error::DimensionMismatch {
            expected: data.feature_dim(),
            got: rows * cols,
        });
    }
    let Targets::Classes { labels, .. } = data.targets() else {
        return Err(Error::config("IDX encoding needs class labels"));
    };
    let mut images = Vec::with_capacity(16 + data.features().len());
    for v in [
        IDX_IMAGES_MAGIC,
        data.len() as u32,
        rows as u32,
        cols as u32,
    ] {
        images.extend_from_slice(&v.to_be_bytes());
    }
    images.extend(
        data.features()
            .iter()
            .map(|&x| libm::round(x.clamp(0.0, 1.0) * 255.0) as u8),
    );
    let mut lab = Vec::with_capacity(8 + labels.len());
    for v in [IDX_LABELS_MAGIC, data.len() as u32] {
        lab.extend_from_slice(&v.to_be_bytes());
    }
    lab.extend(labels.iter().map(|&l| l as u8));
    Ok((images, lab))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn blobs(n: usize, p: usize, noise: f64, seed: u64) -> SyntheticSpec {
        SyntheticSpec {
            kind: SyntheticKind::GaussianBlobs,
            n,
            p,
            classes: 3,
            noise,
            seed,
        }
    }

    #[test]
    fn same_seed_is_bitwise_identical() {
        for kind in [
            SyntheticKind::GaussianBlobs,
            SyntheticKind::LinearRegression,
            SyntheticKind::QuadraticAnchors,
        ] {
            let spec = SyntheticSpec {
                kind,
                ..blobs(50, 4, 0.7, 11)
            };
            let a = make_synthetic(&spec).unwrap();
            let b = make_synthetic(&spec).unwrap();
            assert_eq!(a, b);
            let bits = |d: &Dataset| d.features().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&a), bits(&b));
        }
    }

    #[test]
    fn minimal_sizes_construct() {
        for kind in ["gaussian-blobs", "linear-regression", "quadratic-anchors"] {
            let spec = SyntheticSpec {
                kind: kind.parse().unwrap(),
                classes: 2,
                ..blobs(2, 1, 0.1, 0)
            };
            let d = make_synthetic(&spec).unwrap();
            assert_eq!((d.len(), d.feature_dim()), (2, 1));
        }
    }

    #[test]
    fn unknown_kind_is_config_error() {
        assert!(matches!(
            "spirals".parse::<SyntheticKind>(),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn zero_noise_anchors_coincide() {
        let spec = SyntheticSpec {
            kind: SyntheticKind::QuadraticAnchors,
            ..blobs(10, 3, 0.0, 5)
        };
        let d = make_synthetic(&spec).unwrap();
        for i in 1..d.len() {
            assert_eq!(d.feature(i), d.feature(0));
        }
    }

    #[test]
    fn rejects_out_of_range_labels() {
        let t = Targets::Classes {
            labels: vec![0, 2],
            num_classes: 2,
        };
        assert!(Dataset::new(vec![0.0, 1.0], 1, t).is_err());
        assert!(Dataset::new(vec![0.0], 1, Targets::None).is_err());
    }

    #[test]
    fn holdout_split_partitions_samples() {
        let d = make_synthetic(&blobs(100, 2, 1.0, 3)).unwrap();
        let (train, val) = split_holdout(&d, 0.1, 9).unwrap();
        let val = val.unwrap();
        assert_eq!((train.len(), val.len()), (90, 10));
        let (again, _) = split_holdout(&d, 0.1, 9).unwrap();
        assert_eq!(train, again);
        let (all, none) = split_holdout(&d, 0.0, 9).unwrap();
        assert_eq!(all, d);
        assert!(none.is_none());
    }

    fn tiny_idx() -> (Vec<u8>, Vec<u8>) {
        let mut images = Vec::new();
        for v in [0x803u32, 2, 2, 3] {
            images.extend_from_slice(&v.to_be_bytes());
        }
        images.extend_from_slice(&[0, 255, 51, 0, 0, 0, 255, 255, 255, 0, 0, 102]);
        let mut labels = Vec::new();
        for v in [0x801u32, 2] {
            labels.extend_from_slice(&v.to_be_bytes());
        }
        labels.extend_from_slice(&[7, 3]);
        (images, labels)
    }

    #[test]
    fn idx_pair_decodes() {
        let (images, labels) = tiny_idx();
        let d = parse_idx(&images, &labels).unwrap();
        assert_eq!((d.len(), d.feature_dim()), (2, 6));
        assert_eq!(d.feature(0), &[0.0, 1.0, 0.2, 0.0, 0.0, 0.0]);
        assert_eq!(d.class(0), Some(7));
        assert_eq!(d.class(1), Some(3));
        assert_eq!(d.num_classes(), Some(10));
    }

    #[test]
    fn idx_errors() {
        let (images, labels) = tiny_idx();
        let err = |r: Result<Dataset>| matches!(r, Err(Error::Format(_)));
        assert!(err(parse_idx(&images[..images.len() - 1], &labels)));
        assert!(err(parse_idx(&images[..10], &labels)));
        assert!(err(parse_idx(&images, &labels[..9])));
        let mut bad_magic = images.clone();
        bad_magic[3] = 0x01;
        assert!(err(parse_idx(&bad_magic, &labels)));
        let mut bad_count = labels.clone();
        bad_count[7] = 3;
        assert!(err(parse_idx(&images, &bad_count)));
        assert!(err(parse_idx(&labels, &images)));
    }

    #[test]
    fn idx_encode_round_trip() {
        let (images, labels) = tiny_idx();
        let d = parse_idx(&images, &labels).unwrap();
        let (i2, l2) = encode_idx(&d, 2, 3).unwrap();
        assert_eq!((i2, l2), (images, labels));
    }
}
