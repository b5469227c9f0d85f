use std::collections::HashSet;

use crate::error::{Error, Result};

/// Class labels attached to a [`Dataset`].
#[derive(Debug, Clone, PartialEq)]
pub enum Labels {
    /// Labels in `{-1, +1}`.
    Binary(Vec<i8>),
    /// Labels in `0..classes`.
    Multiclass { labels: Vec<usize>, classes: usize },
}

/// Training points `x_i` with their labels.
///
/// Binary datasets also carry the signed points `z_i = y_i x_i`, which is
/// the only view the linear losses ever need.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    dim: usize,
    points: Vec<Vec<f64>>,
    labels: Labels,
    signed: Vec<Vec<f64>>,
}

impl Dataset {
    pub fn binary(points: Vec<Vec<f64>>, labels: Vec<i8>) -> Result<Self> {
        if let Some(&bad) = labels.iter().find(|&&y| y != 1 && y != -1) {
            return Err(Error::InvalidDataset(format!(
                "binary label {bad} not in {{-1, +1}}"
            )));
        }
        let dim = validate_points(&points, labels.len())?;
        let signed = points
            .iter()
            .zip(&labels)
            .map(|(x, &y)| x.iter().map(|v| v * f64::from(y)).collect())
            .collect();
        Ok(Self {
            dim,
            points,
            labels: Labels::Binary(labels),
            signed,
        })
    }

    /// Builds a binary dataset whose points are already signed (every label `+1`).
    pub fn from_signed(signed: Vec<Vec<f64>>) -> Result<Self> {
        let labels = vec![1; signed.len()];
        Self::binary(signed, labels)
    }

    pub fn multiclass(points: Vec<Vec<f64>>, labels: Vec<usize>, classes: usize) -> Result<Self> {
        if classes < 2 {
            return Err(Error::InvalidDataset(format!(
                "need at least 2 classes, got {classes}"
            )));
        }
        if let Some(&label) = labels.iter().find(|&&y| y >= classes) {
            return Err(Error::LabelOutOfRange { label, classes });
        }
        let dim = validate_points(&points, labels.len())?;
        Ok(Self {
            dim,
            points,
            labels: Labels::Multiclass { labels, classes },
            signed: Vec::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn labels(&self) -> &Labels {
        &self.labels
    }

    pub fn is_binary(&self) -> bool {
        matches!(self.labels, Labels::Binary(_))
    }

    /// Signed points `z_i = y_i x_i`; fails for multiclass data.
    pub fn signed(&self) -> Result<&[Vec<f64>]> {
        match self.labels {
            Labels::Binary(_) => Ok(&self.signed),
            Labels::Multiclass { .. } => Err(Error::NotBinary),
        }
    }

    pub fn class_labels(&self) -> Result<(&[usize], usize)> {
        match &self.labels {
            Labels::Multiclass { labels, classes } => Ok((labels, *classes)),
            Labels::Binary(_) => Err(Error::NotMulticlass),
        }
    }

    /// Keeps the examples at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let points = indices.iter().map(|&i| self.points[i].clone()).collect();
        match &self.labels {
            Labels::Binary(labels) => {
                Self::binary(points, indices.iter().map(|&i| labels[i]).collect())
            }
            Labels::Multiclass { labels, classes } => Self::multiclass(
                points,
                indices.iter().map(|&i| labels[i]).collect(),
                *classes,
            ),
        }
    }
}

fn validate_points(points: &[Vec<f64>], n_labels: usize) -> Result<usize> {
    if points.is_empty() {
        return Err(Error::InvalidDataset("dataset is empty".into()));
    }
    if points.len() != n_labels {
        return Err(Error::InvalidDataset(format!(
            "{} points but {} labels",
            points.len(),
            n_labels
        )));
    }
    let dim = points[0].len();
    if dim == 0 {
        return Err(Error::InvalidDataset("points have zero dimensions".into()));
    }
    let mut seen = HashSet::with_capacity(points.len());
    for (i, p) in points.iter().enumerate() {
        if p.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: p.len(),
            });
        }
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidDataset(format!(
                "point {i} has a non-finite coordinate"
            )));
        }
        // -0.0 and 0.0 are the same point
        let key: Vec<u64> = p.iter().map(|v| (v + 0.0).to_bits()).collect();
        if !seen.insert(key) {
            return Err(Error::InvalidDataset(format!(
                "point {i} duplicates an earlier point"
            )));
        }
    }
    Ok(dim)
}
