use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{dim_check, Error, Result};
use crate::numkit::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FeatureKind {
    /// Average-pooled pixels of a downscaled image.
    Pxl,
    /// Histogram of oriented gradients.
    Hog,
    /// Features supplied directly (synthetic or CSV `z` columns).
    Synthetic,
}

impl FeatureKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FeatureKind::Pxl => "pxl",
            FeatureKind::Hog => "hog",
            FeatureKind::Synthetic => "synthetic",
        }
    }
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FeatureKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pxl" => Ok(FeatureKind::Pxl),
            "hog" => Ok(FeatureKind::Hog),
            "synthetic" => Ok(FeatureKind::Synthetic),
            other => Err(Error::Parameter(format!("unknown feature kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

/// Raw inputs `x`, interpretable features `z` and labels `y`, row-aligned.
///
/// Matrices are reference counted so alternate feature views and row
/// subsets share storage where possible.
#[derive(Debug, Clone)]
pub struct Dataset {
    x: Arc<Matrix>,
    z: Arc<Matrix>,
    y: Arc<Vec<usize>>,
    classes: usize,
    feature_kind: FeatureKind,
    split: Split,
}

impl Dataset {
    pub fn new(
        x: Matrix,
        z: Matrix,
        y: Vec<usize>,
        classes: usize,
        feature_kind: FeatureKind,
        split: Split,
    ) -> Result<Self> {
        Self::from_shared(Arc::new(x), Arc::new(z), Arc::new(y), classes, feature_kind, split)
    }

    pub fn from_shared(
        x: Arc<Matrix>,
        z: Arc<Matrix>,
        y: Arc<Vec<usize>>,
        classes: usize,
        feature_kind: FeatureKind,
        split: Split,
    ) -> Result<Self> {
        dim_check!(
            x.rows() == y.len() && z.rows() == y.len(),
            "row counts differ: x {}, z {}, y {}",
            x.rows(),
            z.rows(),
            y.len()
        );
        if classes == 0 {
            return Err(Error::Parameter("dataset needs at least one class".into()));
        }
        if let Some((i, &bad)) = y.iter().enumerate().find(|(_, &l)| l >= classes) {
            return Err(Error::Parameter(format!(
                "label {bad} at row {i} outside [0, {classes})"
            )));
        }
        Ok(Dataset {
            x,
            z,
            y,
            classes,
            feature_kind,
            split,
        })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn x(&self) -> &Matrix {
        &self.x
    }

    pub fn z(&self) -> &Matrix {
        &self.z
    }

    pub fn y(&self) -> &[usize] {
        &self.y
    }

    pub fn shared_x(&self) -> Arc<Matrix> {
        Arc::clone(&self.x)
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn x_dim(&self) -> usize {
        self.x.cols()
    }

    pub fn z_dim(&self) -> usize {
        self.z.cols()
    }

    pub fn feature_kind(&self) -> FeatureKind {
        self.feature_kind
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn with_split(mut self, split: Split) -> Self {
        self.split = split;
        self
    }

    /// Same rows and labels with a different interpretable representation.
    pub fn with_features(&self, z: Matrix, kind: FeatureKind) -> Result<Self> {
        dim_check!(
            z.rows() == self.len(),
            "replacement features have {} rows, dataset has {}",
            z.rows(),
            self.len()
        );
        Ok(Dataset {
            z: Arc::new(z),
            feature_kind: kind,
            ..self.clone()
        })
    }

    /// Rows in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> Dataset {
        Dataset {
            x: Arc::new(self.x.gather_rows(indices)),
            z: Arc::new(self.z.gather_rows(indices)),
            y: Arc::new(indices.iter().map(|&i| self.y[i]).collect()),
            ..self.clone()
        }
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes];
        for &l in self.y.iter() {
            counts[l] += 1;
        }
        counts
    }
}
