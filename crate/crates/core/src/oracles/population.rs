use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::datasets::build_group_index;
use crate::error::{Error, Result};
use crate::metrics::{group_mean_losses, population_csv_oracle, DiscreteDistributionSpec};
use crate::oracles::OracleReport;
use crate::rng::derive_seed;

/// Bounded per-sample loss `L(x, k)`.
pub type BoxedLoss = Box<dyn Fn(&[f64], usize) -> f64>;

/// Points of the probability simplex in `dims` coordinates with
/// denominator `grid`.
pub fn barycentric_lattice(dims: usize, grid: usize) -> Vec<Vec<f64>> {
    fn rec(dims: usize, left: usize, grid: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<f64>>) {
        if prefix.len() + 1 == dims {
            prefix.push(left);
            out.push(prefix.iter().map(|&c| c as f64 / grid as f64).collect());
            prefix.pop();
            return;
        }
        for c in 0..=left {
            prefix.push(c);
            rec(dims, left - c, grid, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if dims > 0 {
        rec(dims, grid, grid.max(1), &mut Vec::new(), &mut out);
    }
    out
}

/// Every `Q_{Z|Y}` whose rows lie on the lattice, as a product over classes.
/// Capped at `limit` tables (enumeration order is deterministic).
pub fn conditional_grid(k_y: usize, k_z: usize, grid: usize, limit: usize) -> Vec<Vec<Vec<f64>>> {
    let rows = barycentric_lattice(k_z, grid);
    let mut tables: Vec<Vec<Vec<f64>>> = vec![Vec::new()];
    for _ in 0..k_y {
        let mut next = Vec::new();
        'outer: for t in &tables {
            for r in &rows {
                let mut t2 = t.clone();
                t2.push(r.clone());
                next.push(t2);
                if next.len() >= limit {
                    break 'outer;
                }
            }
        }
        tables = next;
    }
    tables
}

/// Two classes, two attributes, six support points. Coordinate 0 carries
/// the label signal and depends on `y` only; coordinate 1 carries the
/// attribute signal and depends on `z` only. `P(Z = Y) = 0.9`.
pub fn reference_spec() -> DiscreteDistributionSpec {
    let support: Vec<Vec<f64>> = [-1.0, 0.0, 1.0]
        .iter()
        .flat_map(|&a| [-1.0, 1.0].into_iter().map(move |b| vec![a, b]))
        .collect();
    let label_part = |y: usize| if y == 1 { [0.1, 0.3, 0.6] } else { [0.6, 0.3, 0.1] };
    let attr_part = |z: usize| if z == 1 { [0.2, 0.8] } else { [0.8, 0.2] };
    let p_x = (0..2)
        .map(|y| {
            (0..2)
                .map(|z| {
                    let (l, a) = (label_part(y), attr_part(z));
                    (0..3).flat_map(|i| (0..2).map(move |j| l[i] * a[j])).collect()
                })
                .collect()
        })
        .collect();
    DiscreteDistributionSpec {
        support,
        p_y: vec![0.5, 0.5],
        p_z_given_y: vec![vec![0.9, 0.1], vec![0.1, 0.9]],
        p_x_given_yz: p_x,
        loss_bound: 1.0,
    }
}

/// Logistic loss of a linear score `w·x + b` for binary labels, clipped at `bound`.
pub fn linear_logistic_loss(w: Vec<f64>, b: f64, bound: f64) -> BoxedLoss {
    Box::new(move |x: &[f64], k: usize| {
        let score: f64 = w.iter().zip(x).map(|(a, v)| a * v).sum::<f64>() + b;
        let sign = if k == 1 { 1.0 } else { -1.0 };
        (-sign * score).exp().ln_1p().min(bound)
    })
}

/// Zero-one loss of a classifier.
pub fn zero_one_loss(model: &dyn Fn(&[f64]) -> usize, x: &[f64], k: usize) -> f64 {
    f64::from(u8::from(model(x) != k))
}

/// Correlation-shift invariance: for a model whose output is conditionally
/// independent of `Z` given `Y`, the 0–1 risk and the table `Q(Y | f(X))`
/// are the same under every `Q_{Z|Y}` on the grid.
pub fn check_invariance(
    spec: &DiscreteDistributionSpec,
    model: &dyn Fn(&[f64]) -> usize,
    grid_size: usize,
) -> Result<OracleReport> {
    spec.validate()?;
    let loss = |x: &[f64], k: usize| zero_one_loss(model, x, k);
    let base_risk = spec.population_risk(&loss)?;
    let base_table = label_given_prediction(spec, model);
    let grid = conditional_grid(spec.k_y(), spec.k_z(), grid_size, 100_000);
    let mut worst: f64 = 0.0;
    for q in &grid {
        let shifted = spec.with_attribute_conditional(q.clone())?;
        worst = worst.max((shifted.population_risk(&loss)? - base_risk).abs());
        let table = label_given_prediction(&shifted, model);
        for (a, b) in table.iter().flatten().zip(base_table.iter().flatten()) {
            if let (Some(a), Some(b)) = (a, b) {
                worst = worst.max((a - b).abs());
            }
        }
    }
    Ok(OracleReport::new("invariance", worst, 1e-12, grid.len(), 0)
        .with_note(format!("{} conditionals Q_Z|Y", grid.len())))
}

/// `Q(Y = k | f(X) = c)` indexed `[c][k]`; `None` where `f(X) = c` has zero mass.
pub fn label_given_prediction(spec: &DiscreteDistributionSpec, model: &dyn Fn(&[f64]) -> usize) -> Vec<Vec<Option<f64>>> {
    let preds: Vec<usize> = spec.support.iter().map(|x| model(x)).collect();
    let n_pred = preds.iter().copied().max().map_or(0, |m| m + 1).max(spec.k_y());
    let mut joint = vec![vec![0.0; spec.k_y()]; n_pred];
    for k in 0..spec.k_y() {
        for z in 0..spec.k_z() {
            let w = spec.p_y[k] * spec.p_z_given_y[k][z];
            for (i, &c) in preds.iter().enumerate() {
                joint[c][k] += w * spec.p_x_given_yz[k][z][i];
            }
        }
    }
    joint
        .into_iter()
        .map(|row| {
            let total: f64 = row.iter().sum();
            row.into_iter()
                .map(|v| (total > 1e-15).then(|| v / total))
                .collect()
        })
        .collect()
}

/// Correlation-shift risk bound: for each trial, the gap between the
/// empirical risk on `n` samples from `P` and the population risk under any
/// `Q_{Z|Y}` on the grid is at most the in-distribution gap plus the
/// population CSV.
pub fn check_shift_bound(
    spec: &DiscreteDistributionSpec,
    loss_for_trial: &dyn Fn(usize) -> BoxedLoss,
    n: usize,
    trials: usize,
    seed: u64,
    grid_size: usize,
) -> Result<OracleReport> {
    spec.validate()?;
    let grid = conditional_grid(spec.k_y(), spec.k_z(), grid_size, 10_000);
    let shifted: Vec<DiscreteDistributionSpec> = grid
        .iter()
        .map(|q| spec.with_attribute_conditional(q.clone()))
        .collect::<Result<_>>()?;
    let mut worst = f64::NEG_INFINITY;
    for t in 0..trials {
        let loss = loss_for_trial(t);
        let data = spec.sample(n, derive_seed(seed, t as u64))?;
        let emp = data.iter().map(|s| loss(s.features, s.y)).sum::<f64>() / n as f64;
        let pop_p = spec.population_risk(&*loss)?;
        let csv = population_csv_oracle(spec, &*loss)?;
        let rhs = (emp - pop_p).abs() + csv;
        for q in &shifted {
            let lhs = (emp - q.population_risk(&*loss)?).abs();
            worst = worst.max(lhs - rhs);
        }
    }
    Ok(OracleReport::new("shift_bound", worst, 1e-9, trials, seed)
        .with_note(format!("{} conditionals per trial, n = {n}", shifted.len())))
}

/// Random logistic losses on the reference spec's two coordinates.
pub fn random_linear_losses(seed: u64) -> impl Fn(usize) -> BoxedLoss {
    move |t| {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 1000 + t as u64));
        let w = vec![rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
        linear_logistic_loss(w, rng.random_range(-1.0..1.0), 5.0)
    }
}

/// Mean absolute error of the empirical CSV against the population value
/// for every `n` in `n_grid`. Samples violating the group census are
/// redrawn.
pub fn csv_errors(
    spec: &DiscreteDistributionSpec,
    loss: &dyn Fn(&[f64], usize) -> f64,
    n_grid: &[usize],
    trials: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let truth = population_csv_oracle(spec, loss)?;
    let mut errors = Vec::with_capacity(n_grid.len());
    for (gi, &n) in n_grid.iter().enumerate() {
        let mut total = 0.0;
        let mut draw = 0u64;
        for t in 0..trials {
            let est = loop {
                let s = derive_seed(seed, ((gi as u64) << 40) | ((t as u64) << 20) | draw);
                draw += 1;
                if draw > 1000 {
                    return Err(Error::Validation(format!("n = {n} never fills every group")));
                }
                let d = spec.sample(n, s)?;
                let idx = build_group_index(&d);
                if !idx.census_complete() {
                    continue;
                }
                let losses: Vec<f64> = d.iter().map(|x| loss(x.features, x.y)).collect();
                break crate::metrics::empirical_csv(&group_mean_losses(&losses, &idx)?)?;
            };
            total += (est - truth).abs();
        }
        errors.push(total / trials as f64);
    }
    Ok(errors)
}
