use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::datasets::GroupIndex;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerStrategy {
    /// i.i.d. uniform over all ids.
    Uniform,
    /// `⌊S/K_y⌋` ids per class, uniform with replacement inside the class.
    ClassBalanced,
    /// `⌊S/(K_y·K_z)⌋` ids per `(y, z)` group, uniform with replacement inside the group.
    GroupBalanced,
}

/// Draws a batch of sample ids. Stratified strategies return ids ordered by
/// class (then attribute), so a batch of 8 from 4 groups is `[g00, g00, g01, g01, …]`.
pub fn sample_batch<R: Rng + ?Sized>(
    index: &GroupIndex,
    strategy: SamplerStrategy,
    size: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    match strategy {
        SamplerStrategy::Uniform => {
            if index.n() == 0 {
                return Err(Error::Validation("cannot sample from an empty dataset".into()));
            }
            Ok((0..size).map(|_| rng.random_range(0..index.n())).collect())
        }
        SamplerStrategy::ClassBalanced => {
            let k_y = index.k_y();
            if size < k_y {
                return Err(Error::Validation(format!("batch size {size} below class count {k_y}")));
            }
            if let Some(k) = (0..k_y).find(|&k| index.n_k(k) == 0) {
                return Err(Error::EmptyClass(k));
            }
            let quota = size / k_y;
            let mut out = Vec::with_capacity(quota * k_y);
            for k in 0..k_y {
                let ids = index.class(k);
                out.extend((0..quota).map(|_| ids[rng.random_range(0..ids.len())]));
            }
            Ok(out)
        }
        SamplerStrategy::GroupBalanced => {
            if !index.attributes_observed() {
                return Err(Error::Unsupported("group-balanced sampling needs observed attributes".into()));
            }
            let groups = index.k_y() * index.k_z();
            if size < groups {
                return Err(Error::Validation(format!("batch size {size} below group count {groups}")));
            }
            if let Some((class, attr)) = index.first_empty_group() {
                return Err(Error::EmptyGroup { class, attr });
            }
            let quota = size / groups;
            let mut out = Vec::with_capacity(quota * groups);
            for k in 0..index.k_y() {
                for z in 0..index.k_z() {
                    let ids = index.group(k, z);
                    out.extend((0..quota).map(|_| ids[rng.random_range(0..ids.len())]));
                }
            }
            Ok(out)
        }
    }
}
