//! Step-length and mutation laws: twinPeaks, its notched variant, fatTail3,
//! and the temperature-to-scale map.
//!
//! twinPeaks and fatTail3 are zero-mean mixtures of three Gaussians. On a
//! bounded domain each is sampled exactly by picking a component with
//! probability proportional to its weight times its mass inside the domain,
//! then drawing that component conditioned on the domain.

use crate::error::{invalid, Error, Result};
use crate::quad::adaptive_simpson;
use crate::rng::{normal_mass, Jkiss};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Rejection attempts before the notch sampler reports a logic error.
const NOTCH_REJECTION_CAP: usize = 1_000_000;

/// Relative accuracy of the cached notch normalization.
const AREA_REL_TOL: f64 = 1e-9;

/// Base standard deviation of the step laws at temperature `t`.
pub fn scale_for_temperature(t: f64) -> Result<f64> {
    check_temperature(t)?;
    Ok(0.05 + 0.35 * t)
}

pub(crate) fn check_temperature(t: f64) -> Result<()> {
    if (0.0..=1.0).contains(&t) {
        Ok(())
    } else {
        Err(invalid("temperature", format!("must lie in [0, 1], got {t}")))
    }
}

/// Gaussian density with mean `m` and standard deviation `s`.
#[inline]
pub fn gauss(x: f64, m: f64, s: f64) -> f64 {
    let z = (x - m) / s;
    (-0.5 * z * z).exp() / (s * (2.0 * PI).sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Component {
    weight: f64,
    mean: f64,
    sd: f64,
}

fn mixture_pdf(components: &[Component], x: f64) -> f64 {
    components
        .iter()
        .map(|c| c.weight * gauss(x, c.mean, c.sd))
        .sum()
}

fn sample_truncated_mixture(rng: &mut Jkiss, components: &[Component], lo: f64, hi: f64) -> Result<f64> {
    if !(lo < hi) {
        return Err(invalid("bounds", format!("need lo < hi, got [{lo}, {hi}]")));
    }
    let mut masses = [0.0f64; 3];
    for (m, c) in masses.iter_mut().zip(components) {
        *m = c.weight * normal_mass((lo - c.mean) / c.sd, (hi - c.mean) / c.sd);
    }
    let total: f64 = masses.iter().sum();
    let chosen = if total > 0.0 {
        let mut u = rng.uniform01() * total;
        let mut pick = components.len() - 1;
        for (k, &m) in masses.iter().enumerate().take(components.len()) {
            if u < m {
                pick = k;
                break;
            }
            u -= m;
        }
        // Never pick a component with no mass in the domain.
        while masses[pick] == 0.0 {
            pick -= 1;
        }
        pick
    } else {
        // Domain beyond the resolution of every component: the widest one
        // dominates the far tail.
        components
            .iter()
            .enumerate()
            .filter(|(_, c)| c.weight > 0.0)
            .max_by(|a, b| a.1.sd.total_cmp(&b.1.sd))
            .map(|(k, _)| k)
            .ok_or_else(|| Error::Internal("mixture without positive weights".into()))?
    };
    let c = components[chosen];
    rng.bounded_gaussian(c.mean, c.sd, lo, hi)
}

/// Parameters of the twinPeaks law: two Gaussians at `±kt·s` with share
/// `1 - q`, plus a central Gaussian of width `ks·s` with share `q`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwinPeaksParams {
    pub s: f64,
    pub kt: f64,
    pub q: f64,
    pub ks: f64,
}

impl Default for TwinPeaksParams {
    /// Unit scale with the reference shape.
    fn default() -> Self {
        Self {
            s: 1.0,
            kt: 1.1,
            q: 0.3,
            ks: 2.5,
        }
    }
}

impl TwinPeaksParams {
    pub fn new(s: f64, kt: f64, q: f64, ks: f64) -> Result<Self> {
        let p = Self { s, kt, q, ks };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.s > 0.0 && self.s.is_finite()) {
            return Err(invalid("s", format!("must be positive, got {}", self.s)));
        }
        if !(self.kt >= 0.0 && self.kt.is_finite()) {
            return Err(invalid("kt", format!("must be nonnegative, got {}", self.kt)));
        }
        if !(0.0..=1.0).contains(&self.q) {
            return Err(invalid("q", format!("must lie in [0, 1], got {}", self.q)));
        }
        if !(self.ks > 0.0 && self.ks.is_finite()) {
            return Err(invalid("ks", format!("must be positive, got {}", self.ks)));
        }
        Ok(())
    }

    /// Same shape with base deviation `s`.
    pub fn scaled(&self, s: f64) -> Self {
        Self { s, ..*self }
    }

    fn components(&self) -> [Component; 3] {
        let side = 0.5 * (1.0 - self.q);
        [
            Component {
                weight: side,
                mean: -self.kt * self.s,
                sd: self.s,
            },
            Component {
                weight: side,
                mean: self.kt * self.s,
                sd: self.s,
            },
            Component {
                weight: self.q,
                mean: 0.0,
                sd: self.ks * self.s,
            },
        ]
    }

    pub fn pdf(&self, x: f64) -> f64 {
        let s = self.s;
        (1.0 - self.q) * (gauss(x, -self.kt * s, s) + gauss(x, self.kt * s, s)) / 2.0
            + self.q * gauss(x, 0.0, self.ks * s)
    }

    /// Draw from the law conditioned on `[lo, hi]`.
    pub fn sample(&self, rng: &mut Jkiss, lo: f64, hi: f64) -> Result<f64> {
        sample_truncated_mixture(rng, &self.components(), lo, hi)
    }
}

/// twinPeaks multiplied by `|x|^notch_exponent`, which carves a notch of
/// zero density at the origin.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NotchParams {
    pub base: TwinPeaksParams,
    pub notch_exponent: f64,
}

impl NotchParams {
    pub const DEFAULT_EXPONENT: f64 = 1.0 / 6.0;

    pub fn new(base: TwinPeaksParams, notch_exponent: f64) -> Result<Self> {
        base.validate()?;
        if !(notch_exponent > 0.0 && notch_exponent.is_finite()) {
            return Err(invalid(
                "notch_exponent",
                format!("must be positive, got {notch_exponent}"),
            ));
        }
        Ok(Self {
            base,
            notch_exponent,
        })
    }

    pub fn with_scale(s: f64) -> Result<Self> {
        Self::new(TwinPeaksParams::default().scaled(s), Self::DEFAULT_EXPONENT)
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            base: self.base.scaled(s),
            ..*self
        }
    }

    /// `|x|^p · twinPeaks(x)`, without normalization.
    pub fn unnormalized(&self, x: f64) -> f64 {
        x.abs().powf(self.notch_exponent) * self.base.pdf(x)
    }

    /// Integral of [`Self::unnormalized`] over `[lo, hi]`.
    pub fn area(&self, lo: f64, hi: f64) -> f64 {
        let f = |x: f64| self.unnormalized(x);
        if lo < 0.0 && hi > 0.0 {
            adaptive_simpson(&f, lo, 0.0, AREA_REL_TOL) + adaptive_simpson(&f, 0.0, hi, AREA_REL_TOL)
        } else {
            adaptive_simpson(&f, lo, hi, AREA_REL_TOL)
        }
    }

    /// Exact draw from the notched law on `[lo, hi]`: truncated twinPeaks
    /// proposals accepted with probability `|x|^p / max(|lo|, |hi|)^p`.
    pub fn sample(&self, rng: &mut Jkiss, lo: f64, hi: f64) -> Result<f64> {
        let envelope = lo.abs().max(hi.abs()).powf(self.notch_exponent);
        for _ in 0..NOTCH_REJECTION_CAP {
            let x = self.base.sample(rng, lo, hi)?;
            if rng.uniform01() * envelope < x.abs().powf(self.notch_exponent) {
                return Ok(x);
            }
        }
        Err(Error::Internal(format!(
            "notch sampler exceeded {NOTCH_REJECTION_CAP} rejections on [{lo}, {hi}]"
        )))
    }
}

/// A notched law normalized on a fixed domain.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NotchDensity {
    pub params: NotchParams,
    pub lo: f64,
    pub hi: f64,
    area: f64,
}

impl NotchDensity {
    pub fn new(params: NotchParams, lo: f64, hi: f64) -> Result<Self> {
        if !(lo < hi) {
            return Err(invalid("bounds", format!("need lo < hi, got [{lo}, {hi}]")));
        }
        let area = params.area(lo, hi);
        if !(area > 0.0) {
            return Err(invalid("bounds", format!("no probability mass on [{lo}, {hi}]")));
        }
        Ok(Self {
            params,
            lo,
            hi,
            area,
        })
    }

    pub fn area(&self) -> f64 {
        self.area
    }

    pub fn pdf(&self, x: f64) -> f64 {
        if x < self.lo || x > self.hi {
            return 0.0;
        }
        self.params.unnormalized(x) / self.area
    }
}

/// Mixture weights and widening factors of fatTail3, independent of scale.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FatTail3Shape {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub k1: f64,
    pub k2: f64,
}

impl Default for FatTail3Shape {
    fn default() -> Self {
        Self {
            c1: 15.0,
            c2: 4.0,
            c3: 1.0,
            k1: 10.0,
            k2: 50.0,
        }
    }
}

impl FatTail3Shape {
    pub fn with_scale(self, s: f64) -> Result<FatTail3Params> {
        let p = FatTail3Params { shape: self, s };
        p.validate()?;
        Ok(p)
    }
}

/// fatTail3: zero-centred Gaussians of deviation `s`, `s·k1` and `s·k2`
/// weighted `c1 : c2 : c3`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FatTail3Params {
    pub shape: FatTail3Shape,
    pub s: f64,
}

impl FatTail3Params {
    /// Core deviation of the mutation law relative to the step scale.
    pub const DEFAULT_SCALE_DIVISOR: f64 = 20.0;

    pub fn new(c1: f64, c2: f64, c3: f64, k1: f64, k2: f64, s: f64) -> Result<Self> {
        FatTail3Shape { c1, c2, c3, k1, k2 }.with_scale(s)
    }

    /// Default shape with `s = scale_for_temperature(t) / 20`.
    pub fn for_temperature(t: f64) -> Result<Self> {
        FatTail3Shape::default().with_scale(scale_for_temperature(t)? / Self::DEFAULT_SCALE_DIVISOR)
    }

    pub fn validate(&self) -> Result<()> {
        let FatTail3Shape { c1, c2, c3, k1, k2 } = self.shape;
        if [c1, c2, c3].iter().any(|c| !(*c >= 0.0 && c.is_finite())) {
            return Err(invalid("c", "mixture weights must be nonnegative and finite"));
        }
        if !(c1 + c2 + c3 > 0.0) {
            return Err(invalid("c", "mixture weights must not all be zero"));
        }
        if !(k1 > 1.0 && k2 > k1 && k2.is_finite()) {
            return Err(invalid("k", format!("need 1 < k1 < k2, got k1 = {k1}, k2 = {k2}")));
        }
        if !(self.s > 0.0 && self.s.is_finite()) {
            return Err(invalid("s", format!("must be positive, got {}", self.s)));
        }
        Ok(())
    }

    fn components(&self, center: f64) -> [Component; 3] {
        let FatTail3Shape { c1, c2, c3, k1, k2 } = self.shape;
        let total = c1 + c2 + c3;
        [
            Component {
                weight: c1 / total,
                mean: center,
                sd: self.s,
            },
            Component {
                weight: c2 / total,
                mean: center,
                sd: self.s * k1,
            },
            Component {
                weight: c3 / total,
                mean: center,
                sd: self.s * k2,
            },
        ]
    }

    pub fn pdf(&self, x: f64) -> f64 {
        mixture_pdf(&self.components(0.0), x)
    }

    /// Draw from the law shifted to `center`, conditioned on `[lo, hi]`.
    pub fn sample(&self, rng: &mut Jkiss, center: f64, lo: f64, hi: f64) -> Result<f64> {
        sample_truncated_mixture(rng, &self.components(center), lo, hi)
    }
}

pub fn twin_peaks_pdf(x: f64, p: &TwinPeaksParams) -> f64 {
    p.pdf(x)
}

pub fn sample_twin_peaks(rng: &mut Jkiss, p: &TwinPeaksParams, lo: f64, hi: f64) -> Result<f64> {
    p.sample(rng, lo, hi)
}

pub fn notch_twin_peaks_pdf(x: f64, np: &NotchParams, lo: f64, hi: f64) -> Result<f64> {
    Ok(NotchDensity::new(*np, lo, hi)?.pdf(x))
}

pub fn sample_notch_twin_peaks(rng: &mut Jkiss, np: &NotchParams, lo: f64, hi: f64) -> Result<f64> {
    np.sample(rng, lo, hi)
}

pub fn fat_tail3_pdf(x: f64, p: &FatTail3Params) -> f64 {
    p.pdf(x)
}

pub fn sample_fat_tail3(rng: &mut Jkiss, p: &FatTail3Params, center: f64, lo: f64, hi: f64) -> Result<f64> {
    p.sample(rng, center, lo, hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::test_support::{chi_square_against_pdf, ks_two_sample_critical, ks_two_sample_statistic, simpson};

    #[test]
    fn temperature_scale() {
        assert!((scale_for_temperature(1.0).unwrap() - 0.4).abs() < 1e-15);
        assert!((scale_for_temperature(0.0).unwrap() - 0.05).abs() < 1e-15);
        assert!((scale_for_temperature(0.5).unwrap() - 0.225).abs() < 1e-15);
        assert!(scale_for_temperature(1.5).is_err());
        assert!(scale_for_temperature(-0.1).is_err());
    }

    #[test]
    fn twin_peaks_reference_value_and_symmetry() {
        let p = TwinPeaksParams::default();
        // Scalar oracle written out term by term.
        let phi = |z: f64| (-0.5 * z * z).exp() / (2.0 * PI).sqrt();
        let oracle = 0.7 * phi(1.1) + 0.3 * phi(0.0) / 2.5;
        assert!((p.pdf(0.0) - oracle).abs() < 1e-14);
        assert!((p.pdf(0.0) - 0.2004).abs() < 5e-5);
        for i in 0..100 {
            let x = i as f64 * 0.07;
            assert_eq!(p.pdf(x), p.pdf(-x));
        }
        let total = simpson(|x| p.pdf(x), -30.0, 30.0, 3000);
        assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn twin_peaks_flat_top_at_kt_one() {
        let p = TwinPeaksParams::new(1.0, 1.0, 0.0, 2.5).unwrap();
        let h = 1e-3;
        let d1 = (p.pdf(h) - p.pdf(-h)) / (2.0 * h);
        let d2 = (p.pdf(h) - 2.0 * p.pdf(0.0) + p.pdf(-h)) / (h * h);
        assert!(d1.abs() < 1e-12);
        assert!(d2.abs() < 1e-5, "curvature {d2}");
        // With kt = 1.1 the origin is a shallow local minimum instead.
        let p = TwinPeaksParams::new(1.0, 1.1, 0.0, 2.5).unwrap();
        assert!(p.pdf(0.0) < p.pdf(0.5));
    }

    #[test]
    fn twin_peaks_wide_bounds_match_untruncated() {
        let p = TwinPeaksParams::default();
        let n = 100_000;
        let mut rng = Jkiss::seed(30, 0);
        let ours: Vec<f64> = (0..n).map(|_| p.sample(&mut rng, -20.0, 20.0).unwrap()).collect();
        // Untruncated mixture drawn component by component.
        let mut rng = Jkiss::seed(30, 1);
        let reference: Vec<f64> = (0..n)
            .map(|_| {
                let u = rng.uniform01();
                if u < 0.35 {
                    rng.gaussian(-1.1, 1.0).unwrap()
                } else if u < 0.7 {
                    rng.gaussian(1.1, 1.0).unwrap()
                } else {
                    rng.gaussian(0.0, 2.5).unwrap()
                }
            })
            .collect();
        let d = ks_two_sample_statistic(&ours, &reference);
        assert!(d < ks_two_sample_critical(n, n, 0.001), "KS D = {d}");
    }

    #[test]
    fn twin_peaks_scaling_identity() {
        let n = 100_000;
        let mut rng = Jkiss::seed(31, 0);
        let small = TwinPeaksParams::default().scaled(0.2);
        let direct: Vec<f64> = (0..n).map(|_| small.sample(&mut rng, -0.3, 0.5).unwrap()).collect();
        let mut rng = Jkiss::seed(31, 1);
        let unit = TwinPeaksParams::default();
        let rescaled: Vec<f64> = (0..n)
            .map(|_| 0.2 * unit.sample(&mut rng, -1.5, 2.5).unwrap())
            .collect();
        let d = ks_two_sample_statistic(&direct, &rescaled);
        assert!(d < ks_two_sample_critical(n, n, 0.001), "KS D = {d}");
    }

    #[test]
    fn twin_peaks_truncated_histogram() {
        let p = TwinPeaksParams::default().scaled(0.4);
        let (lo, hi) = (-0.3, 0.9);
        let mut rng = Jkiss::seed(32, 0);
        let xs: Vec<f64> = (0..100_000).map(|_| p.sample(&mut rng, lo, hi).unwrap()).collect();
        assert!(xs.iter().all(|x| (lo..=hi).contains(x)));
        let pv = chi_square_against_pdf(&xs, |x| p.pdf(x), lo, hi, 100);
        assert!(pv > 0.001, "p = {pv}");
    }

    #[test]
    fn notch_density_properties() {
        let np = NotchParams::with_scale(0.4).unwrap();
        let (lo, hi) = (-0.6, 0.8);
        let dens = NotchDensity::new(np, lo, hi).unwrap();
        assert_eq!(dens.pdf(0.0), 0.0);
        let total = simpson(|x| dens.pdf(x), lo, 0.0, 20_000) + simpson(|x| dens.pdf(x), 0.0, hi, 20_000);
        assert!((total - 1.0).abs() < 1e-4, "{total}");
        // Cached area agrees with an independent fine quadrature.
        let reference = simpson(|x| np.unnormalized(x), lo, 0.0, 200_000)
            + simpson(|x| np.unnormalized(x), 0.0, hi, 200_000);
        assert!((dens.area() / reference - 1.0).abs() < 1e-6);
        assert!(notch_twin_peaks_pdf(0.3, &np, lo, hi).unwrap() > 0.0);
    }

    #[test]
    fn notch_tracks_twin_peaks_away_from_origin() {
        let np = NotchParams::with_scale(0.4).unwrap();
        let dens = NotchDensity::new(np, -3.0, 3.0).unwrap();
        // Ratio to plain twinPeaks is |x|^(1/6) / area: within a factor of
        // two over the bulk of the mass.
        let base = np.base;
        for &x in &[0.2, 0.4, 0.6, 0.8, 1.0] {
            let r = dens.pdf(x) / base.pdf(x);
            assert!(r > 0.5 && r < 1.5, "x = {x}, ratio {r}");
        }
    }

    #[test]
    fn notch_sampler_matches_pdf() {
        let np = NotchParams::with_scale(0.4).unwrap();
        let (lo, hi) = (-0.45, 0.7);
        let dens = NotchDensity::new(np, lo, hi).unwrap();
        let mut rng = Jkiss::seed(33, 0);
        let xs: Vec<f64> = (0..100_000).map(|_| np.sample(&mut rng, lo, hi).unwrap()).collect();
        assert!(xs.iter().all(|x| (lo..=hi).contains(x)));
        let p = chi_square_against_pdf(&xs, |x| dens.pdf(x), lo, hi, 100);
        assert!(p > 0.001, "p = {p}");
    }

    #[test]
    fn notch_sampler_never_returns_zero() {
        let np = NotchParams::with_scale(0.05).unwrap();
        let mut rng = Jkiss::seed(34, 0);
        for _ in 0..1_000_000 {
            let x = np.sample(&mut rng, -0.5, 0.5).unwrap();
            assert_ne!(x, 0.0);
        }
    }

    #[test]
    fn fat_tail_pdf_properties() {
        let p = FatTail3Params::for_temperature(1.0).unwrap();
        for i in 0..50 {
            let x = i as f64 * 0.013;
            assert_eq!(p.pdf(x), p.pdf(-x));
        }
        let single = FatTail3Params::new(1.0, 0.0, 0.0, 2.0, 3.0, 0.3).unwrap();
        for &x in &[-1.0, 0.0, 0.2, 0.9] {
            assert!((single.pdf(x) - gauss(x, 0.0, 0.3)).abs() < 1e-15);
        }
        // Beyond six widths of the middle component the core is negligible.
        let core_weight = 15.0 / 20.0;
        for &x in &[6.0 * p.s * 10.0, 7.0 * p.s * 10.0, 10.0 * p.s * 10.0] {
            let core = core_weight * gauss(x, 0.0, p.s);
            assert!(p.pdf(x) > 10.0 * core, "x = {x}");
        }
        let total = simpson(|x| p.pdf(x), -30.0, 30.0, 30_000);
        assert!((total - 1.0).abs() < 1e-6, "{total}");
        assert!(FatTail3Params::new(0.0, 0.0, 0.0, 2.0, 3.0, 1.0).is_err());
        assert!(FatTail3Params::new(1.0, 1.0, 1.0, 3.0, 2.0, 1.0).is_err());
    }

    #[test]
    fn fat_tail_mass_around_center() {
        let p = FatTail3Params::for_temperature(1.0).unwrap();
        let n = 100_000;
        let mut rng = Jkiss::seed(35, 0);
        let xs: Vec<f64> = (0..n)
            .map(|_| p.sample(&mut rng, 0.3, 0.0, 1.0).unwrap())
            .collect();
        assert!(xs.iter().all(|x| (0.0..=1.0).contains(x)));
        let near = xs.iter().filter(|x| (*x - 0.3).abs() <= 3.0 * p.s).count() as f64 / n as f64;
        assert!((near - 0.75).abs() < 0.1, "fraction near centre {near}");
        let pv = chi_square_against_pdf(&xs, |x| p.pdf(x - 0.3), 0.0, 1.0, 100);
        assert!(pv > 0.001, "p = {pv}");
    }

    #[test]
    fn mixture_sampler_rejects_empty_interval() {
        let mut rng = Jkiss::default();
        assert!(TwinPeaksParams::default().sample(&mut rng, 1.0, 1.0).is_err());
        let p = FatTail3Params::for_temperature(0.0).unwrap();
        assert!(p.sample(&mut rng, 0.5, 0.7, 0.2).is_err());
    }

    #[test]
    fn mixture_sampler_far_tail_domain() {
        let p = TwinPeaksParams::default().scaled(0.01);
        let mut rng = Jkiss::seed(36, 0);
        for _ in 0..1000 {
            let x = p.sample(&mut rng, 5.0, 6.0).unwrap();
            assert!((5.0..=6.0).contains(&x));
        }
    }
}
