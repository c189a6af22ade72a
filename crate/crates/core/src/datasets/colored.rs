use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datasets::GroupedDataset;
use crate::error::{Error, Result};
use crate::grad::Tensor;

pub const NUM_DIGITS: usize = 10;

/// Twenty well-separated colours: entries 0–9 paint the digit stroke,
/// entries 10–19 paint the background.
pub const PALETTE: [[f64; 3]; 20] = [
    [0.90, 0.10, 0.10],
    [0.10, 0.70, 0.10],
    [0.10, 0.20, 0.90],
    [0.95, 0.85, 0.10],
    [0.80, 0.10, 0.80],
    [0.10, 0.80, 0.85],
    [0.95, 0.50, 0.05],
    [0.50, 0.25, 0.05],
    [0.55, 0.55, 0.55],
    [1.00, 1.00, 1.00],
    [0.40, 0.00, 0.00],
    [0.00, 0.35, 0.00],
    [0.00, 0.00, 0.40],
    [0.45, 0.45, 0.00],
    [0.40, 0.00, 0.40],
    [0.00, 0.40, 0.40],
    [1.00, 0.75, 0.80],
    [0.70, 1.00, 0.70],
    [0.70, 0.80, 1.00],
    [0.00, 0.00, 0.00],
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColorAssignment {
    /// Digit `d` gets stroke `d`, background `10 + d`.
    Fixed1,
    /// A second bijection: stroke `(d + 5) mod 10`, background `10 + (d + 3) mod 10`.
    Fixed2,
    /// Stroke and background drawn uniformly per sample.
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColorScheme {
    pub assignment: ColorAssignment,
    /// Fraction of `Fixed1` samples when used as a mixture with `Random`.
    pub alpha: f64,
    /// Average-pool factor applied before flattening (2 turns 28×28 into 14×14).
    pub downscale: usize,
}

impl ColorScheme {
    pub fn new(assignment: ColorAssignment) -> Self {
        Self {
            assignment,
            alpha: 1.0,
            downscale: 2,
        }
    }
}

fn fixed_pair(assignment: ColorAssignment, digit: usize) -> (usize, usize) {
    match assignment {
        ColorAssignment::Fixed1 => (digit, digit),
        ColorAssignment::Fixed2 => ((digit + 5) % NUM_DIGITS, (digit + 3) % NUM_DIGITS),
        ColorAssignment::Random => unreachable!("random has no fixed pair"),
    }
}

fn pool(image: &[f64], rows: usize, cols: usize, factor: usize) -> Vec<f64> {
    let (r2, c2) = (rows / factor, cols / factor);
    let norm = (factor * factor) as f64;
    let mut out = Vec::with_capacity(r2 * c2);
    for i in 0..r2 {
        for j in 0..c2 {
            let mut acc = 0.0;
            for di in 0..factor {
                for dj in 0..factor {
                    acc += image[(i * factor + di) * cols + j * factor + dj];
                }
            }
            out.push(acc / norm);
        }
    }
    out
}

/// Paints each grey-scale digit with a (stroke, background) colour pair.
/// Features are the flattened RGB image; the attribute is the stroke index.
fn paint(
    images: &Tensor,
    labels: &[usize],
    ids: &[usize],
    colors: &[(usize, usize)],
    downscale: usize,
) -> (Vec<f64>, usize) {
    let (rows, cols) = (images.shape()[1], images.shape()[2]);
    let pixels = rows * cols;
    let mut features = Vec::new();
    let mut dim = 0;
    for (&i, &(fg, bg)) in ids.iter().zip(colors) {
        debug_assert!(labels[i] < NUM_DIGITS);
        let grey = &images.data()[i * pixels..(i + 1) * pixels];
        let small = if downscale > 1 {
            pool(grey, rows, cols, downscale)
        } else {
            grey.to_vec()
        };
        dim = small.len() * 3;
        let (f, b) = (PALETTE[fg], PALETTE[NUM_DIGITS + bg]);
        for &v in &small {
            for c in 0..3 {
                features.push(v * f[c] + (1.0 - v) * b[c]);
            }
        }
    }
    (features, dim)
}

fn check_inputs(images: &Tensor, labels: &[usize], scheme: &ColorScheme) -> Result<()> {
    if images.shape().len() != 3 || images.shape()[0] != labels.len() {
        return Err(Error::Dimension {
            context: "colorize images/labels",
            left: images.shape().to_vec(),
            right: vec![labels.len()],
        });
    }
    let classes = labels.iter().copied().max().map_or(0, |m| m + 1);
    if classes > NUM_DIGITS {
        return Err(Error::Validation(format!(
            "colorize needs {NUM_DIGITS} digit classes, saw label {}",
            classes - 1
        )));
    }
    if !(0.0..=1.0).contains(&scheme.alpha) {
        return Err(Error::Validation(format!("alpha must lie in [0, 1], got {}", scheme.alpha)));
    }
    if scheme.downscale == 0 {
        return Err(Error::Validation("downscale factor must be positive".into()));
    }
    Ok(())
}

fn assemble(
    images: &Tensor,
    labels: &[usize],
    ids: &[usize],
    colors: &[(usize, usize)],
    scheme: &ColorScheme,
    provenance: String,
) -> Result<GroupedDataset> {
    let (features, dim) = paint(images, labels, ids, colors, scheme.downscale);
    let y = ids.iter().map(|&i| labels[i]).collect();
    let z = colors.iter().map(|&(fg, _)| fg).collect();
    GroupedDataset::new(dim, features, y, Some(z), NUM_DIGITS, NUM_DIGITS, provenance)
}

/// Colours every image with a single assignment rule.
pub fn colorize(images: &Tensor, labels: &[usize], scheme: &ColorScheme, seed: u64) -> Result<GroupedDataset> {
    check_inputs(images, labels, scheme)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ids: Vec<usize> = (0..labels.len()).collect();
    let colors: Vec<(usize, usize)> = ids
        .iter()
        .map(|&i| match scheme.assignment {
            ColorAssignment::Random => (rng.random_range(0..NUM_DIGITS), rng.random_range(0..NUM_DIGITS)),
            fixed => fixed_pair(fixed, labels[i]),
        })
        .collect();
    assemble(
        images,
        labels,
        &ids,
        &colors,
        scheme,
        format!("colored({:?}, seed={seed})", scheme.assignment),
    )
}

/// Splits a shuffled copy of the images into `⌊n·α⌋` fixed-1 samples and
/// `⌊n·(1−α)⌋` randomly coloured ones.
pub fn colorize_mixture(images: &Tensor, labels: &[usize], scheme: &ColorScheme, seed: u64) -> Result<GroupedDataset> {
    check_inputs(images, labels, scheme)?;
    let n = labels.len();
    let n_fixed = (n as f64 * scheme.alpha + 1e-9).floor() as usize;
    let n_random = (n as f64 * (1.0 - scheme.alpha) + 1e-9).floor() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let ids: Vec<usize> = order[..(n_fixed + n_random).min(n)].to_vec();
    let colors: Vec<(usize, usize)> = ids
        .iter()
        .enumerate()
        .map(|(pos, &i)| {
            if pos < n_fixed {
                fixed_pair(ColorAssignment::Fixed1, labels[i])
            } else {
                (rng.random_range(0..NUM_DIGITS), rng.random_range(0..NUM_DIGITS))
            }
        })
        .collect();
    assemble(
        images,
        labels,
        &ids,
        &colors,
        scheme,
        format!("colored_mixture(alpha={}, seed={seed})", scheme.alpha),
    )
}

/// Counts of fixed-1 and random samples a mixture of `n` produces.
pub fn mixture_counts(n: usize, alpha: f64) -> (usize, usize) {
    (
        (n as f64 * alpha + 1e-9).floor() as usize,
        (n as f64 * (1.0 - alpha) + 1e-9).floor() as usize,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fake_digits(n: usize) -> (Tensor, Vec<usize>) {
        let mut data = Vec::with_capacity(n * 16);
        for i in 0..n {
            for p in 0..16 {
                data.push(((i + p) % 3) as f64 / 2.0);
            }
        }
        (Tensor::new(vec![n, 4, 4], data).unwrap(), (0..n).map(|i| i % 10).collect())
    }

    #[test]
    fn palette_entries_are_distinct() {
        for i in 0..PALETTE.len() {
            for j in i + 1..PALETTE.len() {
                assert_ne!(PALETTE[i], PALETTE[j], "{i} vs {j}");
            }
        }
    }

    #[test]
    fn fixed_scheme_is_deterministic_per_digit() {
        let (img, labels) = fake_digits(100);
        let d = colorize(&img, &labels, &ColorScheme::new(ColorAssignment::Fixed1), 0).unwrap();
        let threes: Vec<_> = d.iter().filter(|s| s.y == 3).collect();
        assert!(threes.iter().all(|s| s.z == Some(3)));
        assert_eq!(d.dim(), 2 * 2 * 3);
    }

    #[test]
    fn fixed_bijections_differ() {
        for d in 0..NUM_DIGITS {
            let a = fixed_pair(ColorAssignment::Fixed1, d);
            let b = fixed_pair(ColorAssignment::Fixed2, d);
            assert!(a.0 != b.0 && a.1 != b.1);
        }
    }

    #[test]
    fn random_scheme_frequencies() {
        let n = 10_000;
        let (img, labels) = fake_digits(n);
        let d = colorize(&img, &labels, &ColorScheme::new(ColorAssignment::Random), 3).unwrap();
        let mut counts = [0usize; NUM_DIGITS];
        for z in d.attributes().unwrap() {
            counts[*z] += 1;
        }
        let p = 0.1;
        let sd = (n as f64 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((c as f64 - n as f64 * p).abs() <= 3.0 * sd, "{counts:?}");
        }
    }

    #[test]
    fn mixture_split_counts() {
        assert_eq!(mixture_counts(60_000, 0.8), (48_000, 12_000));
        assert_eq!(mixture_counts(60_000, 0.99), (59_400, 600));
        let (img, labels) = fake_digits(200);
        let mut scheme = ColorScheme::new(ColorAssignment::Fixed1);
        scheme.alpha = 0.8;
        let d = colorize_mixture(&img, &labels, &scheme, 1).unwrap();
        assert_eq!(d.len(), 200);
    }

    #[test]
    fn rejects_too_many_classes() {
        let (img, mut labels) = fake_digits(20);
        labels[0] = 11;
        assert!(colorize(&img, &labels, &ColorScheme::new(ColorAssignment::Random), 0).is_err());
    }
}
