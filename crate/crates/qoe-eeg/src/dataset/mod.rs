//! Labeled datasets: feature tensors paired with a 3-class label for one
//! QoE factor, plus train-only normalization and stratified partitioning.

mod split;

pub use split::{stratified_kfold, stratified_split, FoldAssignment};

use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

use crate::dsp::{load_features, FeatureTensor};
use crate::ingest::{load_ratings, IngestError, RatingRecord};

/// Number of label classes (low, middle, high).
pub const NUM_CLASSES: usize = 3;

/// Floor applied to per-column standard deviations so constant columns do
/// not divide by zero.
pub const STD_FLOOR: f64 = 1e-8;

/// The five rated Quality-of-Experience factors.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub enum QoEFactor {
    /// Interest in the video content.
    VC,
    /// Perceived video quality.
    VQ,
    /// Interest in the audio content.
    AC,
    /// Immersive level.
    IL,
    /// Surrounding awareness.
    SA,
}

impl QoEFactor {
    pub const ALL: [QoEFactor; 5] =
        [QoEFactor::VC, QoEFactor::VQ, QoEFactor::AC, QoEFactor::IL, QoEFactor::SA];

    pub fn name(self) -> &'static str {
        match self {
            QoEFactor::VC => "VC",
            QoEFactor::VQ => "VQ",
            QoEFactor::AC => "AC",
            QoEFactor::IL => "IL",
            QoEFactor::SA => "SA",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            QoEFactor::VC => "interest in video content",
            QoEFactor::VQ => "perceived video quality",
            QoEFactor::AC => "interest in audio content",
            QoEFactor::IL => "immersive level",
            QoEFactor::SA => "surrounding awareness",
        }
    }
}

impl std::fmt::Display for QoEFactor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for QoEFactor {
    type Err = DatasetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        QoEFactor::ALL
            .into_iter()
            .find(|f| f.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| DatasetError::UnknownFactor { name: s.to_string() })
    }
}

/// Maps a 9-point rating onto the three classes: 1-3 low, 4-6 middle,
/// 7-9 high.
pub fn bin_rating(score: u8) -> Result<usize, DatasetError> {
    match score {
        1..=3 => Ok(0),
        4..=6 => Ok(1),
        7..=9 => Ok(2),
        _ => Err(DatasetError::OutOfRange { score }),
    }
}

/// One feature tensor with its class label.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledExample {
    pub tensor: FeatureTensor,
    pub label: usize,
    pub subject_id: String,
    pub video_id: String,
}

/// An ordered collection of labeled examples for one factor.
///
/// All tensors share the same window count and column layout. The
/// `normalization` table, when present, holds per-column `(mean, std)` pairs
/// fitted on a training subset.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub factor: QoEFactor,
    pub examples: Vec<LabeledExample>,
    pub normalization: Option<Vec<(f64, f64)>>,
}

impl LabeledDataset {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.examples.iter().map(|e| e.label).collect()
    }

    /// Window count and column count shared by every tensor, or `None` for
    /// an empty dataset.
    pub fn shape(&self) -> Option<(usize, usize)> {
        self.examples.first().map(|e| (e.tensor.rows, e.tensor.cols))
    }

    /// Fits per-column `(mean, population std)` over every window cell of
    /// the training examples; std is floored at [`STD_FLOOR`].
    pub fn fit_normalizer(
        &self,
        train_indices: &[usize],
    ) -> Result<Vec<(f64, f64)>, DatasetError> {
        if train_indices.is_empty() {
            return Err(DatasetError::EmptyTrainSet);
        }
        let (_, cols) = self.shape().ok_or(DatasetError::EmptyTrainSet)?;
        let mut sums = vec![0.0; cols];
        let mut count = 0usize;
        for &i in train_indices {
            let t = &self.examples[i].tensor;
            for r in 0..t.rows {
                for (c, v) in t.row(r).iter().enumerate() {
                    sums[c] += v;
                }
            }
            count += t.rows;
        }
        let means: Vec<f64> = sums.iter().map(|s| s / count as f64).collect();

        let mut sq = vec![0.0; cols];
        for &i in train_indices {
            let t = &self.examples[i].tensor;
            for r in 0..t.rows {
                for (c, v) in t.row(r).iter().enumerate() {
                    let d = v - means[c];
                    sq[c] += d * d;
                }
            }
        }
        Ok(means
            .iter()
            .zip(&sq)
            .map(|(&m, &s)| (m, (s / count as f64).sqrt().max(STD_FLOOR)))
            .collect())
    }

    /// Returns a copy with every cell z-scored by the given table and the
    /// table recorded in `normalization`.
    pub fn normalized(&self, table: &[(f64, f64)]) -> Result<LabeledDataset, DatasetError> {
        if let Some((_, cols)) = self.shape() {
            if table.len() != cols {
                return Err(DatasetError::ShapeMismatch {
                    detail: format!(
                        "normalization table has {} entries for {cols} columns",
                        table.len()
                    ),
                });
            }
        }
        let mut out = self.clone();
        for example in &mut out.examples {
            let cols = example.tensor.cols;
            for (idx, v) in example.tensor.data.iter_mut().enumerate() {
                let (mean, std) = table[idx % cols];
                *v = (*v - mean) / std;
            }
        }
        out.normalization = Some(table.to_vec());
        Ok(out)
    }

    /// Returns a copy containing the examples at `indices`, in the given
    /// order. The factor and normalization table carry over.
    pub fn subset(&self, indices: &[usize]) -> LabeledDataset {
        LabeledDataset {
            factor: self.factor,
            examples: indices.iter().map(|&i| self.examples[i].clone()).collect(),
            normalization: self.normalization.clone(),
        }
    }
}

/// Builds a dataset from tensor/rating pairs, labeling each by the chosen
/// factor's binned score. Order is preserved and no normalization is set.
pub fn assemble(
    pairs: Vec<(FeatureTensor, RatingRecord)>,
    factor: QoEFactor,
) -> Result<LabeledDataset, DatasetError> {
    let mut examples = Vec::with_capacity(pairs.len());
    let mut shape: Option<(usize, usize)> = None;
    for (i, (tensor, rating)) in pairs.into_iter().enumerate() {
        match shape {
            None => shape = Some((tensor.rows, tensor.cols)),
            Some((rows, cols)) if (tensor.rows, tensor.cols) != (rows, cols) => {
                return Err(DatasetError::ShapeMismatch {
                    detail: format!(
                        "tensor {i} is {}x{}, expected {rows}x{cols}",
                        tensor.rows, tensor.cols
                    ),
                });
            }
            Some(_) => {}
        }
        let score = *rating
            .scores
            .get(&factor)
            .ok_or(DatasetError::MissingFactor { factor })?;
        let label = bin_rating(score)?;
        examples.push(LabeledExample {
            subject_id: tensor.subject_id.clone(),
            video_id: tensor.video_id.clone(),
            tensor,
            label,
        });
    }
    Ok(LabeledDataset { factor, examples, normalization: None })
}

/// Points at the feature CSV / ratings JSON pairs that make up a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub factor: QoEFactor,
    pub entries: Vec<DatasetManifestEntry>,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifestEntry {
    pub features: PathBuf,
    pub ratings: PathBuf,
}

/// Parses a dataset manifest JSON document.
pub fn parse_dataset_manifest_json(text: &str) -> Result<DatasetManifest, DatasetError> {
    serde_json::from_str(text).map_err(|e| DatasetError::BadManifest { detail: e.to_string() })
}

/// Loads a dataset manifest and every pair it references. Relative paths
/// resolve against the manifest's directory.
pub fn load_labeled_dataset(path: &Path) -> Result<LabeledDataset, DatasetError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| DatasetError::Io { path: path.to_path_buf(), source: e })?;
    let manifest = parse_dataset_manifest_json(&text)?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let resolve = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base.join(p) };

    let mut pairs = Vec::with_capacity(manifest.entries.len());
    for (index, entry) in manifest.entries.iter().enumerate() {
        let annotate = |e: DatasetError| DatasetError::Entry { index, source: Box::new(e) };
        let (tensor, _) = load_features(&resolve(&entry.features))
            .map_err(|e| annotate(DatasetError::Feature(e)))?;
        let rating = load_ratings(&resolve(&entry.ratings))
            .map_err(|e| annotate(DatasetError::Ingest(e)))?;
        if tensor.subject_id != rating.subject_id || tensor.video_id != rating.video_id {
            return Err(annotate(DatasetError::PairMismatch {
                detail: format!(
                    "features are for {}/{}, ratings for {}/{}",
                    tensor.subject_id, tensor.video_id, rating.subject_id, rating.video_id
                ),
            }));
        }
        pairs.push((tensor, rating));
    }
    assemble(pairs, manifest.factor)
}

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("rating {score} outside the 1..9 scale")]
    OutOfRange { score: u8 },

    #[error("unknown QoE factor '{name}'")]
    UnknownFactor { name: String },

    #[error("rating record lacks factor {factor}")]
    MissingFactor { factor: QoEFactor },

    #[error("shape mismatch: {detail}")]
    ShapeMismatch { detail: String },

    #[error("cannot fit a normalizer on an empty training set")]
    EmptyTrainSet,

    #[error("class {class} has no examples")]
    EmptyClass { class: usize },

    #[error("too few examples: {have} for {need} folds")]
    TooFewExamples { have: usize, need: usize },

    #[error("fold count {k} is too small; need at least 2")]
    BadFoldCount { k: usize },

    #[error("train fraction {value} outside (0, 1)")]
    InvalidFraction { value: f64 },

    #[error("bad dataset manifest: {detail}")]
    BadManifest { detail: String },

    #[error("bad fold assignment: {detail}")]
    BadFoldAssignment { detail: String },

    #[error("mismatched pair: {detail}")]
    PairMismatch { detail: String },

    #[error("manifest entry {index}: {source}")]
    Entry {
        index: usize,
        #[source]
        source: Box<DatasetError>,
    },

    #[error(transparent)]
    Feature(#[from] crate::dsp::DspError),

    #[error(transparent)]
    Ingest(#[from] IngestError),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}
