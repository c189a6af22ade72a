use crate::error::{Error, Result};

fn check_fraction(c: f64) -> Result<()> {
    if !(c > 0.0 && c <= 0.5) {
        return Err(Error::Validation(format!("tail fraction must lie in (0, 0.5], got {c}")));
    }
    Ok(())
}

/// Conditional means of the lowest and highest `c` probability mass of a
/// weighted discrete distribution. Atoms straddling the tail boundary
/// contribute fractionally.
pub fn tail_means(values: &[f64], weights: &[f64], c: f64) -> Result<(f64, f64)> {
    check_fraction(c)?;
    if values.is_empty() || values.len() != weights.len() {
        return Err(Error::Dimension {
            context: "tail_means values/weights",
            left: vec![values.len()],
            right: vec![weights.len()],
        });
    }
    if weights.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
        return Err(Error::Validation("weights must be finite and nonnegative".into()));
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Validation("weights sum to zero".into()));
    }
    let mut order: Vec<usize> = (0..values.len()).filter(|&i| weights[i] > 0.0).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let tail = |ids: &mut dyn Iterator<Item = &usize>| {
        let mut need = c;
        let (mut acc, mut mass) = (0.0, 0.0);
        for &i in ids {
            // remaining mass below this threshold is rounding residue
            if need <= 1e-12 * c {
                break;
            }
            let w = (weights[i] / total).min(need);
            acc += w * values[i];
            mass += w;
            need -= w;
        }
        acc / mass
    };
    let lower = tail(&mut order.iter());
    let upper = tail(&mut order.iter().rev());
    Ok((lower, upper))
}

/// Upper-tail mean minus lower-tail mean of the empirical loss distribution
/// at tail fraction `c`. When `c·n` is an integer (to 1e−9) the tails are
/// plain averages of the extreme order statistics, so `c = 1/n` gives
/// `max − min` exactly.
pub fn quantile_range(losses: &[f64], c: f64) -> Result<f64> {
    check_fraction(c)?;
    if losses.is_empty() {
        return Err(Error::Validation("quantile range of an empty vector".into()));
    }
    let n = losses.len();
    let count = c * n as f64;
    let rounded = count.round();
    if (count - rounded).abs() <= 1e-9 && rounded >= 1.0 {
        let m = rounded as usize;
        let mut sorted = losses.to_vec();
        sorted.sort_by(f64::total_cmp);
        let lower: f64 = sorted[..m].iter().sum::<f64>() / m as f64;
        let upper: f64 = sorted[n - m..].iter().sum::<f64>() / m as f64;
        return Ok((upper - lower).max(0.0));
    }
    let (lower, upper) = tail_means(losses, &vec![1.0; n], c)?;
    Ok((upper - lower).max(0.0))
}

/// Weighted counterpart of [`quantile_range`].
pub fn quantile_range_weighted(values: &[f64], weights: &[f64], c: f64) -> Result<f64> {
    let (lower, upper) = tail_means(values, weights, c)?;
    Ok((upper - lower).max(0.0))
}
