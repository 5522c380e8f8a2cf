//! Dataset ingestion, interpretable feature maps, corruption procedures and
//! deterministic sampling.

pub mod corrupt;
pub mod csv;
mod dataset;
pub mod features;
pub mod idx;
pub mod sampling;
pub mod synthetic;

use std::path::Path;
use std::sync::Arc;

pub use corrupt::{inject_noise, inject_noise_calibrated, random_kept_dims, subsample_features, CorruptionSpec};
pub use dataset::{Dataset, FeatureKind, Split};
pub use features::{extract_features, FeatureMap, FeatureParams, HogParams, Standardized, Standardizer, Subsampled};
pub use idx::load_idx;
pub use sampling::{split_holdout, take_count, take_fraction};

use crate::error::{Error, Result};

/// Loads the four standard MNIST IDX files from `dir` as `(train, test)`.
pub fn load_mnist_dir(dir: impl AsRef<Path>) -> Result<(Dataset, Dataset)> {
    let dir = dir.as_ref();
    let train = load_idx(dir.join("train-images-idx3-ubyte"), dir.join("train-labels-idx1-ubyte"))?;
    let test = load_idx(dir.join("t10k-images-idx3-ubyte"), dir.join("t10k-labels-idx1-ubyte"))?;
    Ok((train, test.with_split(Split::Test)))
}

/// One interpretable representation over train/val/test, with the
/// standardized feature map that produced it (statistics from clean train).
#[derive(Debug, Clone)]
pub struct FeatureView {
    pub kind: FeatureKind,
    pub map: Arc<dyn FeatureMap>,
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
}

impl FeatureView {
    /// Builds a view by mapping each split's raw inputs through `raw_map`
    /// followed by standardization fit on the train split.
    pub fn build(
        kind: FeatureKind,
        raw_map: Arc<dyn FeatureMap>,
        train: &Dataset,
        val: &Dataset,
        test: &Dataset,
    ) -> Result<Self> {
        let stats = Standardizer::fit(&raw_map.map_rows(train.x())?)?;
        let map: Arc<dyn FeatureMap> = Arc::new(Standardized::new(raw_map, stats)?);
        let view = |d: &Dataset| -> Result<Dataset> { d.with_features(map.map_rows(d.x())?, kind) };
        Ok(FeatureView {
            kind,
            train: view(train)?.with_split(Split::Train),
            val: view(val)?.with_split(Split::Val),
            test: view(test)?.with_split(Split::Test),
            map,
        })
    }

    pub fn z_dim(&self) -> usize {
        self.map.output_dim()
    }
}

/// Train/val/test splits under one or more feature views sharing raw
/// inputs and labels. `views[0]` is the primary representation.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub views: Vec<FeatureView>,
}

impl Corpus {
    /// Holds out `val_count` stratified rows of `train` for validation and
    /// builds one view per requested image feature kind.
    pub fn from_images(
        train: &Dataset,
        test: &Dataset,
        kinds: &[FeatureKind],
        params: &FeatureParams,
        val_count: usize,
        seed: u64,
    ) -> Result<Self> {
        if kinds.is_empty() {
            return Err(Error::Parameter("at least one feature kind is required".into()));
        }
        let (train, val) = split_holdout(train, val_count, seed)?;
        let views = kinds
            .iter()
            .map(|&k| {
                let raw = features::feature_map(k, train.x_dim(), params)?;
                FeatureView::build(k, raw, &train, &val, test)
            })
            .collect::<Result<_>>()?;
        Ok(Corpus { views })
    }

    /// Synthetic corpus: generates `spec.samples` rows and splits off
    /// stratified validation and test sets.
    pub fn synthetic(spec: &synthetic::SyntheticSpec, val_count: usize, test_count: usize) -> Result<Self> {
        let data = synthetic::generate(spec)?;
        let (rest, test) = split_holdout(&data.dataset, test_count, spec.seed ^ 0x7e57)?;
        let (train, val) = split_holdout(&rest, val_count, spec.seed ^ 0x7a1)?;
        let raw: Arc<dyn FeatureMap> = Arc::new(data.feature_map);
        Ok(Corpus {
            views: vec![FeatureView::build(FeatureKind::Synthetic, raw, &train, &val, &test)?],
        })
    }

    pub fn primary(&self) -> &FeatureView {
        &self.views[0]
    }

    pub fn view(&self, kind: FeatureKind) -> Option<&FeatureView> {
        self.views.iter().find(|v| v.kind == kind)
    }

    /// Restricts every view's training split to the same stratified subset.
    pub fn with_train_subset(&self, count: usize, seed: u64) -> Result<Self> {
        let base = &self.primary().train;
        if count > base.len() {
            return Err(Error::Parameter(format!("requested {count} of {} training rows", base.len())));
        }
        let idx = sampling::stratified_indices(base.y(), base.classes(), count, seed)?;
        let mut views = self.views.clone();
        for v in &mut views {
            v.train = v.train.select_rows(&idx);
        }
        Ok(Corpus { views })
    }
}
