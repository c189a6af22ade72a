use crate::error::{Error, Result};

fn check_rho(rho: f64) -> Result<()> {
    if !(rho > 0.0) || !rho.is_finite() {
        return Err(Error::Validation(format!("smoothing constant must be positive, got {rho}")));
    }
    Ok(())
}

/// `softmax(F/ρ)`: the maximiser of `uᵀF − ρ Σ u_j log(m u_j)` over the simplex.
pub fn smoothed_max_weights(f: &[f64], rho: f64) -> Result<Vec<f64>> {
    check_rho(rho)?;
    if f.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("smoothed max input".into()));
    }
    let max = f.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut w: Vec<f64> = f.iter().map(|&v| ((v - max) / rho).exp()).collect();
    let total: f64 = w.iter().sum();
    for v in &mut w {
        *v /= total;
    }
    Ok(w)
}

/// Closed-form value of `max_u uᵀF − ρ Σ u_j log(m u_j)`, i.e. `ρ log mean exp(F/ρ)`.
pub fn smoothed_max_value(f: &[f64], rho: f64) -> Result<f64> {
    check_rho(rho)?;
    if f.is_empty() {
        return Err(Error::Validation("smoothed max of an empty vector".into()));
    }
    let max = f.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mean: f64 = f.iter().map(|&v| ((v - max) / rho).exp()).sum::<f64>() / f.len() as f64;
    Ok(max + rho * mean.ln())
}

/// Entropic surrogate objective `uᵀF − ρ Σ u_j log(m u_j)` at an arbitrary `u`.
pub fn smoothed_objective(u: &[f64], f: &[f64], rho: f64) -> f64 {
    let m = f.len() as f64;
    u.iter()
        .zip(f)
        .map(|(&uj, &fj)| uj * fj - if uj > 0.0 { rho * uj * (m * uj).ln() } else { 0.0 })
        .sum()
}

/// Worst-case distance between the smoothed and hard maxima over `m` entries.
pub fn gap_bound(m: usize, lambda: f64, rho: f64) -> f64 {
    let m = m as f64;
    lambda * rho * (1.0 / (m * std::f64::consts::E) + 2.0 * m.ln())
}

/// Factorised entropic range of per-sample losses.
///
/// Returns `(Σ a_i L_i − Σ b_j L_j, a − b)` with `a = softmax(L/ρ)` and
/// `b = softmax(−L/ρ)`, which equals the smoothed max over all ordered
/// differences `L_i − L_j`.
pub fn smooth_range_penalty(losses: &[f64], rho: f64) -> Result<(f64, Vec<f64>)> {
    if losses.is_empty() {
        return Err(Error::Validation("range penalty needs at least one loss".into()));
    }
    let a = smoothed_max_weights(losses, rho)?;
    let neg: Vec<f64> = losses.iter().map(|v| -v).collect();
    let b = smoothed_max_weights(&neg, rho)?;
    let penalty = losses
        .iter()
        .zip(a.iter().zip(&b))
        .map(|(&l, (&ai, &bi))| (ai - bi) * l)
        .sum();
    let weights = a.iter().zip(&b).map(|(ai, bi)| ai - bi).collect();
    Ok((penalty, weights))
}

/// Per-class weights `1/(K_y p̂_k)` removing a class-prior shift.
pub fn label_shift_weights(priors: &[f64]) -> Result<Vec<f64>> {
    if let Some(k) = priors.iter().position(|&p| !(p > 0.0)) {
        return Err(Error::Validation(format!("class {k} has a non-positive prior")));
    }
    let k_y = priors.len() as f64;
    Ok(priors.iter().map(|&p| 1.0 / (k_y * p)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn weight_examples() {
        assert_eq!(smoothed_max_weights(&[0.0; 3], 0.5).unwrap(), vec![1.0 / 3.0; 3]);
        let w = smoothed_max_weights(&[1.0, 0.0], 1.0).unwrap();
        let e = std::f64::consts::E;
        assert!((w[0] - e / (1.0 + e)).abs() < 1e-15);
        assert!((w[0] - 0.7311).abs() < 1e-4 && (w[1] - 0.2689).abs() < 1e-4);
        let hard = smoothed_max_weights(&[0.3, 0.9, 0.1], 1e-6).unwrap();
        assert!(hard[1] >= 1.0 - 1e-9);
        assert!(smoothed_max_weights(&[1.0], 0.0).is_err());
    }

    #[test]
    fn penalty_examples() {
        let (p, w) = smooth_range_penalty(&[0.4; 5], 0.1).unwrap();
        assert_eq!(p, 0.0);
        assert!(w.iter().sum::<f64>().abs() < 1e-15);
        let (p, _) = smooth_range_penalty(&[0.0, 1.0], 1e-4).unwrap();
        assert!((p - 1.0).abs() < 1e-9);
        let (p, _) = smooth_range_penalty(&[0.0, 1.0], 1.0).unwrap();
        assert!((p - 0.5f64.tanh()).abs() < 1e-15);
        assert!((p - 0.4621).abs() < 1e-4);
    }

    #[test]
    fn label_shift_examples() {
        let w = label_shift_weights(&[0.8, 0.2]).unwrap();
        assert!((w[0] - 0.625).abs() < 1e-15 && (w[1] - 2.5).abs() < 1e-15);
        assert!((0.8 * w[0] + 0.2 * w[1] - 1.0).abs() < 1e-15);
        assert_eq!(label_shift_weights(&[0.5, 0.5]).unwrap(), vec![1.0, 1.0]);
        let w = label_shift_weights(&[0.5, 0.25, 0.25]).unwrap();
        for (a, b) in w.iter().zip([2.0 / 3.0, 4.0 / 3.0, 4.0 / 3.0]) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(label_shift_weights(&[1.0, 0.0]).is_err());
    }

    #[test]
    fn gap_bound_formula() {
        let b = gap_bound(4, 1.0, 0.1);
        assert!((b - 0.1 * (1.0 / (4.0 * std::f64::consts::E) + 2.0 * 4f64.ln())).abs() < 1e-15);
        assert!((b - 0.28646).abs() < 1e-5);
    }

    fn random_simplex(rng: &mut ChaCha8Rng, m: usize) -> Vec<f64> {
        let e: Vec<f64> = (0..m).map(|_| -rng.random::<f64>().max(1e-300).ln()).collect();
        let s: f64 = e.iter().sum();
        e.into_iter().map(|v| v / s).collect()
    }

    /// Euclidean projection onto the simplex by sorting.
    fn project(v: &[f64]) -> Vec<f64> {
        let mut s = v.to_vec();
        s.sort_by(|a, b| b.total_cmp(a));
        let mut cum = 0.0;
        let mut theta = 0.0;
        for (i, &x) in s.iter().enumerate() {
            cum += x;
            let t = (cum - 1.0) / (i + 1) as f64;
            if x - t > 0.0 {
                theta = t;
            }
        }
        v.iter().map(|&x| (x - theta).max(0.0)).collect()
    }

    #[test]
    fn maximiser_beats_random_and_ascent_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for trial in 0..20 {
            let m = 2 + trial % 15;
            let rho = 0.05 + rng.random::<f64>();
            let f: Vec<f64> = (0..m).map(|_| rng.random_range(-2.0..2.0)).collect();
            let u = smoothed_max_weights(&f, rho).unwrap();
            let best = smoothed_objective(&u, &f, rho);
            assert!((best - smoothed_max_value(&f, rho).unwrap()).abs() < 1e-12);
            for _ in 0..500 {
                let v = random_simplex(&mut rng, m);
                assert!(best - smoothed_objective(&v, &f, rho) >= -1e-9);
            }
            let mut v = vec![1.0 / m as f64; m];
            for _ in 0..200 {
                let grad: Vec<f64> = v
                    .iter()
                    .zip(&f)
                    .map(|(&vj, &fj)| fj - rho * ((m as f64 * vj.max(1e-300)).ln() + 1.0))
                    .collect();
                let step: Vec<f64> = v.iter().zip(&grad).map(|(a, g)| a + 0.05 * g).collect();
                v = project(&step);
                assert!(best - smoothed_objective(&v, &f, rho) >= -1e-9);
            }
        }
    }

    proptest! {
        #[test]
        fn shift_invariance(f in prop::collection::vec(-5.0f64..5.0, 1..16), c in -50.0f64..50.0, rho in 0.01f64..3.0) {
            let a = smoothed_max_weights(&f, rho).unwrap();
            let shifted: Vec<f64> = f.iter().map(|v| v + c).collect();
            let b = smoothed_max_weights(&shifted, rho).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() <= 1e-12);
            }
            prop_assert!((a.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }

        #[test]
        fn gap_within_bound(f in prop::collection::vec(-3.0f64..3.0, 2..17), rho in 1e-3f64..2.0, lambda in 0.1f64..5.0) {
            let hard = f.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let soft = smoothed_max_value(&f, rho).unwrap();
            prop_assert!((lambda * (soft - hard)).abs() <= gap_bound(f.len(), lambda, rho) + 1e-9);
        }
    }
}
