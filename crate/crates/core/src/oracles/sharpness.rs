use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::metrics::quantile_range_weighted;
use crate::oracles::OracleReport;

/// Mixture of `K` attribute-conditional distributions on a shared finite support.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureCase {
    pub values: Vec<f64>,
    /// `components[z][i]` is the mass of `values[i]` under component `z`.
    pub components: Vec<Vec<f64>>,
    pub mixing: Vec<f64>,
}

impl MixtureCase {
    pub fn mixture(&self) -> Vec<f64> {
        (0..self.values.len())
            .map(|i| self.components.iter().zip(&self.mixing).map(|(c, p)| p * c[i]).sum())
            .collect()
    }

    pub fn component_means(&self) -> Vec<f64> {
        self.components
            .iter()
            .map(|c| c.iter().zip(&self.values).map(|(w, v)| w * v).sum())
            .collect()
    }

    /// `max_z E[L | z] − min_z E[L | z]`.
    pub fn mean_range(&self) -> f64 {
        let m = self.component_means();
        m.iter().copied().fold(f64::NEG_INFINITY, f64::max) - m.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Slice of `base` (sorted by value) holding mass `c` starting from the
/// bottom, as a distribution of total mass one.
fn bottom_slice(base: &[f64], c: f64) -> Vec<f64> {
    let mut left = c;
    let mut out = vec![0.0; base.len()];
    for (o, &w) in out.iter_mut().zip(base) {
        let take = w.min(left.max(0.0));
        *o = take / c;
        left -= take;
    }
    out
}

/// Splits `base` into a bottom-`c` slice, a top-`c` slice and `k − 2` copies
/// of the middle remainder, mixed with weights `c`, `c` and `(1 − 2c)/(k − 2)`.
/// The mixture reproduces `base` and attains the quantile range exactly.
/// `values` must be sorted ascending.
pub fn extremal_mixture(values: &[f64], base: &[f64], k: usize, c: f64) -> Result<MixtureCase> {
    let middle_mass = 1.0 - 2.0 * c;
    let equality_possible = k >= 3 || (k == 2 && middle_mass.abs() < 1e-12);
    if !equality_possible || c <= 0.0 || c * k as f64 > 1.0 + 1e-12 {
        return Err(Error::Validation(format!("no extremal split for K = {k}, c = {c}")));
    }
    if values.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::Validation("support values must be sorted".into()));
    }
    let lower = bottom_slice(base, c);
    let rev: Vec<f64> = base.iter().rev().copied().collect();
    let mut upper = bottom_slice(&rev, c);
    upper.reverse();
    let mut components = vec![lower.clone(), upper.clone()];
    let mut mixing = vec![c, c];
    if k > 2 {
        let middle: Vec<f64> = (0..base.len())
            .map(|i| ((base[i] - c * lower[i] - c * upper[i]) / middle_mass).max(0.0))
            .collect();
        for _ in 2..k {
            components.push(middle.clone());
            mixing.push(middle_mass / (k - 2) as f64);
        }
    }
    Ok(MixtureCase {
        values: values.to_vec(),
        components,
        mixing,
    })
}

/// Random mixture with every mixing weight at least `c`.
pub fn random_mixture(rng: &mut ChaCha8Rng, k: usize, c: f64, support_size: usize) -> MixtureCase {
    let mut values: Vec<f64> = (0..support_size).map(|_| rng.random_range(0.0..5.0)).collect();
    values.sort_by(f64::total_cmp);
    let simplex = |rng: &mut ChaCha8Rng, n: usize| {
        let e: Vec<f64> = (0..n).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
        let s: f64 = e.iter().sum();
        e.into_iter().map(|v| v / s).collect::<Vec<f64>>()
    };
    let components = (0..k).map(|_| simplex(rng, support_size)).collect();
    let slack = (1.0 - c * k as f64).max(0.0);
    let mixing = simplex(rng, k).into_iter().map(|p| c + slack * p).collect();
    MixtureCase {
        values,
        components,
        mixing,
    }
}

/// Quantile-range sharpness: the constructed extremal mixture of the uniform
/// distribution on `0..support_size` attains the range of component means
/// exactly, and `trials` random mixtures never exceed it. For `K = 2` with
/// `c < 1/2` no extremal split exists and only the inequality is checked.
pub fn check_quantile_sharpness(k: usize, c: f64, support_size: usize, trials: usize, seed: u64) -> Result<OracleReport> {
    if k < 2 || support_size == 0 {
        return Err(Error::Validation(format!("need K >= 2 and a nonempty support, got K = {k}")));
    }
    if !(c > 0.0 && c * k as f64 <= 1.0 + 1e-12) {
        return Err(Error::Validation(format!("c must lie in (0, 1/K], got {c} with K = {k}")));
    }
    let values: Vec<f64> = (0..support_size).map(|i| i as f64).collect();
    let base = vec![1.0 / support_size as f64; support_size];
    let mut worst = f64::NEG_INFINITY;
    let mut note = String::from("inequality only");
    if let Ok(case) = extremal_mixture(&values, &base, k, c) {
        let mixed = case.mixture();
        let reproduce = mixed.iter().zip(&base).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let qr = quantile_range_weighted(&values, &base, c)?;
        worst = worst.max((qr - case.mean_range()).abs()).max(reproduce);
        note = format!("equality residual {:.3e}", (qr - case.mean_range()).abs());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..trials {
        let case = random_mixture(&mut rng, k, c, support_size);
        let qr = quantile_range_weighted(&case.values, &case.mixture(), c)?;
        worst = worst.max(case.mean_range() - qr);
    }
    Ok(OracleReport::new("quantile_sharpness", worst, 1e-9, trials + 1, seed).with_note(note))
}
