use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grad::Tensor;

/// Borrowed view of one sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupedSample<'a> {
    pub features: &'a [f64],
    pub y: usize,
    /// `None` when spurious attributes are unobserved for the dataset.
    pub z: Option<usize>,
}

/// Feature vectors with class labels and (optionally) spurious attributes.
///
/// Attribute observability is dataset-global: either every sample carries a
/// `z` or none does.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupedDataset {
    dim: usize,
    features: Vec<f64>,
    y: Vec<usize>,
    z: Option<Vec<usize>>,
    k_y: usize,
    k_z: usize,
    provenance: String,
}

impl GroupedDataset {
    pub fn new(
        dim: usize,
        features: Vec<f64>,
        y: Vec<usize>,
        z: Option<Vec<usize>>,
        k_y: usize,
        k_z: usize,
        provenance: impl Into<String>,
    ) -> Result<Self> {
        if features.len() != dim * y.len() {
            return Err(Error::Dimension {
                context: "dataset features",
                left: vec![y.len(), dim],
                right: vec![features.len()],
            });
        }
        if k_y == 0 || k_z == 0 {
            return Err(Error::Validation("category counts must be positive".into()));
        }
        if let Some(&bad) = y.iter().find(|&&v| v >= k_y) {
            return Err(Error::Validation(format!("label {bad} outside [0, {k_y})")));
        }
        if let Some(z) = &z {
            if z.len() != y.len() {
                return Err(Error::Dimension {
                    context: "attribute vector",
                    left: vec![y.len()],
                    right: vec![z.len()],
                });
            }
            if let Some(&bad) = z.iter().find(|&&v| v >= k_z) {
                return Err(Error::Validation(format!("attribute {bad} outside [0, {k_z})")));
            }
        }
        Ok(Self {
            dim,
            features,
            y,
            z,
            k_y,
            k_z,
            provenance: provenance.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn k_y(&self) -> usize {
        self.k_y
    }

    pub fn k_z(&self) -> usize {
        self.k_z
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn attributes_observed(&self) -> bool {
        self.z.is_some()
    }

    pub fn labels(&self) -> &[usize] {
        &self.y
    }

    pub fn attributes(&self) -> Option<&[usize]> {
        self.z.as_deref()
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn sample(&self, i: usize) -> GroupedSample<'_> {
        GroupedSample {
            features: &self.features[i * self.dim..(i + 1) * self.dim],
            y: self.y[i],
            z: self.z.as_ref().map(|z| z[i]),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = GroupedSample<'_>> {
        (0..self.len()).map(|i| self.sample(i))
    }

    /// Same samples with attributes dropped.
    pub fn hide_attributes(&self) -> Self {
        Self {
            z: None,
            ..self.clone()
        }
    }

    /// Stacks the features of `ids` (in order, repeats allowed) into a matrix.
    pub fn batch_features(&self, ids: &[usize]) -> Tensor {
        let mut data = Vec::with_capacity(ids.len() * self.dim);
        for &i in ids {
            data.extend_from_slice(&self.features[i * self.dim..(i + 1) * self.dim]);
        }
        Tensor::matrix(ids.len(), self.dim, data).expect("rows × dim")
    }

    pub fn batch_labels(&self, ids: &[usize]) -> Vec<usize> {
        ids.iter().map(|&i| self.y[i]).collect()
    }

    pub fn all_features(&self) -> Tensor {
        Tensor::matrix(self.len(), self.dim, self.features.clone()).expect("rows × dim")
    }

    /// Concatenates two datasets with identical schema.
    pub fn concat(&self, other: &GroupedDataset, provenance: impl Into<String>) -> Result<Self> {
        if self.dim != other.dim
            || self.k_y != other.k_y
            || self.k_z != other.k_z
            || self.z.is_some() != other.z.is_some()
        {
            return Err(Error::Validation("cannot concatenate datasets with different schemas".into()));
        }
        let mut features = self.features.clone();
        features.extend_from_slice(&other.features);
        let mut y = self.y.clone();
        y.extend_from_slice(&other.y);
        let z = match (&self.z, &other.z) {
            (Some(a), Some(b)) => Some(a.iter().chain(b).copied().collect()),
            _ => None,
        };
        Self::new(self.dim, features, y, z, self.k_y, self.k_z, provenance)
    }
}

/// Mean of `y·z` under the ±1 coding (index 0 ↦ −1, index 1 ↦ +1).
pub fn empirical_correlation(dataset: &GroupedDataset) -> Result<f64> {
    if dataset.k_y() != 2 || dataset.k_z() != 2 {
        return Err(Error::Unsupported(format!(
            "correlation needs a binary task, got K_y={} K_z={}",
            dataset.k_y(),
            dataset.k_z()
        )));
    }
    let z = dataset
        .attributes()
        .ok_or_else(|| Error::Unsupported("correlation needs observed attributes".into()))?;
    if dataset.is_empty() {
        return Err(Error::Validation("correlation of an empty dataset".into()));
    }
    let sign = |v: usize| if v == 1 { 1.0 } else { -1.0 };
    let total: f64 = dataset
        .labels()
        .iter()
        .zip(z)
        .map(|(&y, &z)| sign(y) * sign(z))
        .sum();
    Ok(total / dataset.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(y: Vec<usize>, z: Vec<usize>) -> GroupedDataset {
        let n = y.len();
        GroupedDataset::new(1, vec![0.0; n], y, Some(z), 2, 2, "test").unwrap()
    }

    #[test]
    fn correlation_all_equal_is_one() {
        assert_eq!(empirical_correlation(&tiny(vec![0, 1, 1, 0], vec![0, 1, 1, 0])).unwrap(), 1.0);
    }

    #[test]
    fn correlation_alternating_is_zero() {
        assert_eq!(empirical_correlation(&tiny(vec![0, 0, 1, 1], vec![0, 1, 1, 0])).unwrap(), 0.0);
    }

    #[test]
    fn correlation_needs_binary_task() {
        let d = GroupedDataset::new(1, vec![0.0; 2], vec![0, 2], Some(vec![0, 1]), 3, 2, "t").unwrap();
        assert!(matches!(empirical_correlation(&d), Err(Error::Unsupported(_))));
    }

    #[test]
    fn out_of_range_indices_rejected() {
        assert!(GroupedDataset::new(1, vec![0.0], vec![2], None, 2, 1, "t").is_err());
        assert!(GroupedDataset::new(1, vec![0.0], vec![0], Some(vec![5]), 2, 2, "t").is_err());
        assert!(GroupedDataset::new(2, vec![0.0], vec![0], None, 2, 1, "t").is_err());
    }
}
