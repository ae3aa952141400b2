//! Statistical helpers shared by the unit tests.

use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Upper-tail p-value of Pearson's statistic with `k - 1` degrees of freedom.
pub fn chi_square_p(observed: &[u64], expected: &[f64]) -> f64 {
    assert_eq!(observed.len(), expected.len());
    let stat: f64 = observed
        .iter()
        .zip(expected)
        .filter(|(_, &e)| e > 0.0)
        .map(|(&o, &e)| (o as f64 - e).powi(2) / e)
        .sum();
    let dof = (observed.len() - 1) as f64;
    1.0 - ChiSquared::new(dof).unwrap().cdf(stat)
}

pub fn ks_two_sample_statistic(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    d
}

pub fn ks_two_sample_critical(n: usize, m: usize, alpha: f64) -> f64 {
    let c = (-(alpha / 2.0).ln() / 2.0).sqrt();
    c * ((n + m) as f64 / (n as f64 * m as f64)).sqrt()
}

/// Fixed composite Simpson rule, independent of the crate's adaptive one.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let n = panels * 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}

/// Chi-square p-value of samples against a density on `[lo, hi]`, with bin
/// probabilities integrated from `pdf` and renormalized.
pub fn chi_square_against_pdf(samples: &[f64], pdf: impl Fn(f64) -> f64, lo: f64, hi: f64, bins: usize) -> f64 {
    let w = (hi - lo) / bins as f64;
    let probs: Vec<f64> = (0..bins)
        .map(|k| simpson(&pdf, lo + k as f64 * w, lo + (k + 1) as f64 * w, 64))
        .collect();
    let total: f64 = probs.iter().sum();
    let mut counts = vec![0u64; bins];
    for &x in samples {
        counts[(((x - lo) / w) as usize).min(bins - 1)] += 1;
    }
    let n = samples.len() as f64;
    let expected: Vec<f64> = probs.iter().map(|p| p / total * n).collect();
    chi_square_p(&counts, &expected)
}
