//! Seeded synthetic datasets for tests and benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{DataMatrix, Entry};
use crate::objective::sigmoid;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Dense-ish binary task with `m >= 6` features uniform on `[-1, 1]`.
///
/// The logit mixes an oscillating term, a thresholded interaction, a
/// quadratic and a steep sigmoid on features 0..5; the rest are noise.
/// Feature 5 is missing for a tenth of the rows and shifts the logit when
/// absent. Labels are Bernoulli draws from the logit.
pub fn binary_task(n: usize, m: usize, seed: u64) -> DataMatrix {
    assert!(m >= 6, "binary_task needs at least 6 features");
    let mut r = rng(seed);
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let x: Vec<f64> = (0..m).map(|_| r.gen_range(-1.0..1.0)).collect();
        let missing5 = r.gen_bool(0.1);
        let step = |v: f64, t: f64| if v > t { 1.0 } else { -1.0 };
        let mut logit = 1.6 * (3.0 * std::f64::consts::PI * x[0]).sin()
            + 1.2 * step(x[1], 0.37) * step(x[2], -0.21)
            + 2.0 * (x[3] * x[3] - 0.33)
            + 1.5 * (6.0 * (x[4] - 0.15)).tanh();
        logit += if missing5 { 0.8 } else { 0.6 * x[5] };
        labels.push(f64::from(r.gen_bool(sigmoid(logit))));
        let row: Vec<Entry> = x
            .iter()
            .enumerate()
            .filter(|&(j, _)| !(j == 5 && missing5))
            .map(|(j, &v)| Entry::new(j as u32, v))
            .collect();
        rows.push(row);
    }
    DataMatrix::from_rows(rows, labels, None, m).expect("generated rows are valid")
}

/// One-hot encoding of `n_vars` categorical variables with `n_cats` levels
/// each: every row has exactly `n_vars` entries equal to 1.0, so density is
/// `1 / n_cats`. Each (variable, level) carries a random effect on the logit.
pub fn one_hot(n: usize, n_vars: usize, n_cats: usize, seed: u64) -> DataMatrix {
    let mut r = rng(seed);
    let effects: Vec<f64> = (0..n_vars * n_cats).map(|_| r.gen_range(-1.0..1.0)).collect();
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let mut logit = 0.0;
        let row: Vec<Entry> = (0..n_vars)
            .map(|v| {
                let f = v * n_cats + r.gen_range(0..n_cats);
                logit += effects[f];
                Entry::new(f as u32, 1.0)
            })
            .collect();
        labels.push(f64::from(r.gen_bool(sigmoid(logit))));
        rows.push(row);
    }
    DataMatrix::from_rows(rows, labels, None, n_vars * n_cats).expect("generated rows are valid")
}

/// Two features uniform on `[-1, 1]`, label `x0 + x1 > 0`, with points
/// closer than `margin` to the boundary (in `|x0 + x1|`) redrawn.
pub fn linearly_separable(n: usize, margin: f64, seed: u64) -> DataMatrix {
    let mut r = rng(seed);
    let mut values = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    while values.len() < n {
        let (a, b): (f64, f64) = (r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0));
        if (a + b).abs() < margin {
            continue;
        }
        values.push(vec![a, b]);
        labels.push(f64::from(a + b > 0.0));
    }
    DataMatrix::from_dense(&values, labels).expect("generated rows are valid")
}

/// Two classes drawn uniformly from unit disks centred at `(1, 1)` (label 1)
/// and `(-1, -1)` (label 0), in random order.
pub fn separated_blobs(n: usize, seed: u64) -> DataMatrix {
    let mut r = rng(seed);
    let mut values = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    while values.len() < n {
        let (a, b): (f64, f64) = (r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0));
        if a * a + b * b > 1.0 {
            continue;
        }
        let positive = r.gen_bool(0.5);
        let c = if positive { 1.0 } else { -1.0 };
        values.push(vec![c + a, c + b]);
        labels.push(f64::from(positive));
    }
    DataMatrix::from_dense(&values, labels).expect("generated rows are valid")
}

/// Regression target `sin(x0) + x1·x2 + noise` over `m >= 3` features.
pub fn regression(n: usize, m: usize, seed: u64) -> DataMatrix {
    assert!(m >= 3, "regression needs at least 3 features");
    let mut r = rng(seed);
    let mut values = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let x: Vec<f64> = (0..m).map(|_| r.gen_range(-2.0..2.0)).collect();
        labels.push(x[0].sin() + x[1] * x[2] + r.gen_range(-0.1..0.1));
        values.push(x);
    }
    DataMatrix::from_dense(&values, labels).expect("generated rows are valid")
}

/// Features drawn from `levels` distinct small integers, each present with
/// probability `density`; labels are random bits. Compresses well.
pub fn low_cardinality(n: usize, m: usize, levels: u32, density: f64, seed: u64) -> DataMatrix {
    let mut r = rng(seed);
    let mut rows = Vec::with_capacity(n);
    for _ in 0..n {
        let mut row = Vec::new();
        for f in 0..m as u32 {
            if r.gen_bool(density) {
                row.push(Entry::new(f, f64::from(r.gen_range(0..levels))));
            }
        }
        rows.push(row);
    }
    let labels = (0..n).map(|_| f64::from(r.gen_range(0..2u8))).collect();
    DataMatrix::from_rows(rows, labels, None, m).expect("generated rows are valid")
}

/// Continuous features present with probability `density`; labels are
/// random bits.
pub fn sparse_random(n: usize, m: usize, density: f64, seed: u64) -> DataMatrix {
    let mut r = rng(seed);
    let mut rows = Vec::with_capacity(n);
    for _ in 0..n {
        let mut row = Vec::new();
        for f in 0..m as u32 {
            if r.gen_bool(density) {
                row.push(Entry::new(f, r.gen_range(-10.0..10.0)));
            }
        }
        rows.push(row);
    }
    let labels = (0..n).map(|_| f64::from(r.gen_range(0..2u8))).collect();
    DataMatrix::from_rows(rows, labels, None, m).expect("generated rows are valid")
}
