//! Helpers shared by the integration test targets.
#![allow(dead_code)]

use statrs::distribution::{ChiSquared, ContinuousCDF};
use std::f64::consts::PI;
use std::io::Write;

/// Prints one verdict line past the test harness's output capture.
pub fn report(criterion: u32, title: &str, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let mut err = std::io::stderr().lock();
    let _ = writeln!(err, "criterion {criterion} [{verdict}] {title}: {detail}");
}

pub fn gauss(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    (-0.5 * z * z).exp() / (sd * (2.0 * PI).sqrt())
}

/// Composite Simpson rule with `panels` double panels.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let n = panels * 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(a + i as f64 * h);
    }
    s * h / 3.0
}

/// Pearson chi-square p-value (dof = bins − 1) after pooling adjacent bins
/// until every expected count is at least 5.
pub fn chi_square_p(observed: &[u64], expected: &[f64]) -> f64 {
    let mut pooled: Vec<(f64, f64)> = Vec::new();
    let mut acc = (0.0, 0.0);
    for (&o, &e) in observed.iter().zip(expected) {
        acc.0 += o as f64;
        acc.1 += e;
        if acc.1 >= 5.0 {
            pooled.push(acc);
            acc = (0.0, 0.0);
        }
    }
    if acc.1 > 0.0 || acc.0 > 0.0 {
        match pooled.last_mut() {
            Some(last) => {
                last.0 += acc.0;
                last.1 += acc.1;
            }
            None => pooled.push(acc),
        }
    }
    let stat: f64 = pooled.iter().map(|(o, e)| (o - e).powi(2) / e).sum();
    let dof = (pooled.len() - 1) as f64;
    1.0 - ChiSquared::new(dof).unwrap().cdf(stat)
}

/// Chi-square p-value of `samples` against an (unnormalized) density on
/// `[lo, hi]`, with equal-width bins integrated by Simpson's rule.
pub fn chi_square_vs_density(samples: &[f64], density: impl Fn(f64) -> f64, lo: f64, hi: f64, bins: usize) -> f64 {
    let w = (hi - lo) / bins as f64;
    let mass: Vec<f64> = (0..bins)
        .map(|k| simpson(&density, lo + k as f64 * w, lo + (k + 1) as f64 * w, 200))
        .collect();
    let total: f64 = mass.iter().sum();
    let mut counts = vec![0u64; bins];
    for &x in samples {
        assert!((lo..=hi).contains(&x), "sample {x} outside [{lo}, {hi}]");
        counts[(((x - lo) / w) as usize).min(bins - 1)] += 1;
    }
    let n = samples.len() as f64;
    let expected: Vec<f64> = mass.iter().map(|m| m / total * n).collect();
    chi_square_p(&counts, &expected)
}

pub fn sphere_value(z: &[f64]) -> f64 {
    z.iter().map(|v| v * v).sum()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn d1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}
