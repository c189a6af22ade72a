use serde::{Deserialize, Serialize};

use crate::datasets::GroupedDataset;

/// Sample ids partitioned by class and, when observed, by attribute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupIndex {
    k_y: usize,
    k_z: usize,
    /// `groups[k][z]`; a single attribute slot per class when attributes are hidden.
    groups: Vec<Vec<Vec<usize>>>,
    classes: Vec<Vec<usize>>,
    n: usize,
    attributes_observed: bool,
}

impl GroupIndex {
    pub fn k_y(&self) -> usize {
        self.k_y
    }

    pub fn k_z(&self) -> usize {
        self.k_z
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn attributes_observed(&self) -> bool {
        self.attributes_observed
    }

    /// Ids in group `(k, z)`. Empty when attributes are hidden.
    pub fn group(&self, k: usize, z: usize) -> &[usize] {
        if self.attributes_observed {
            &self.groups[k][z]
        } else {
            &[]
        }
    }

    pub fn class(&self, k: usize) -> &[usize] {
        &self.classes[k]
    }

    pub fn n_kz(&self, k: usize, z: usize) -> usize {
        self.group(k, z).len()
    }

    pub fn n_k(&self, k: usize) -> usize {
        self.classes[k].len()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        self.classes.iter().map(Vec::len).collect()
    }

    /// `n_k / n` for every class.
    pub fn p_hat(&self) -> Vec<f64> {
        self.classes
            .iter()
            .map(|c| c.len() as f64 / self.n.max(1) as f64)
            .collect()
    }

    /// True when attributes are observed and every `(k, z)` group is populated.
    pub fn census_complete(&self) -> bool {
        self.attributes_observed && self.groups.iter().flatten().all(|g| !g.is_empty())
    }

    /// First empty `(k, z)` group, if any.
    pub fn first_empty_group(&self) -> Option<(usize, usize)> {
        for (k, row) in self.groups.iter().enumerate() {
            for (z, g) in row.iter().enumerate() {
                if g.is_empty() {
                    return Some((k, z));
                }
            }
        }
        None
    }

    /// Classes with fewer than `threshold` samples.
    pub fn small_classes(&self, threshold: usize) -> Vec<usize> {
        (0..self.k_y).filter(|&k| self.n_k(k) < threshold).collect()
    }
}

pub fn build_group_index(dataset: &GroupedDataset) -> GroupIndex {
    let (k_y, k_z) = (dataset.k_y(), dataset.k_z());
    let observed = dataset.attributes_observed();
    let mut groups = vec![vec![Vec::new(); if observed { k_z } else { 1 }]; k_y];
    let mut classes = vec![Vec::new(); k_y];
    for (i, s) in dataset.iter().enumerate() {
        classes[s.y].push(i);
        groups[s.y][s.z.unwrap_or(0)].push(i);
    }
    GroupIndex {
        k_y,
        k_z,
        groups,
        classes,
        n: dataset.len(),
        attributes_observed: observed,
    }
}
