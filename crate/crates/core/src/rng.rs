//! The JKISS generator (xorshift + LCG + multiply-with-carry) and the
//! primitive samplers every stochastic part of the optimizer is built on.
//!
//! All samplers draw exclusively from the generator state they are called
//! on, so a trial that owns its [`Jkiss`] is fully reproducible.

use crate::error::{invalid, Result};
use statrs::function::erf::erfc;
use statrs::function::gamma::{gamma_lr, gamma_ur};
use std::f64::consts::FRAC_1_SQRT_2;

const REFERENCE_X: u32 = 123_456_789;
const REFERENCE_Y: u32 = 987_654_321;
const REFERENCE_Z: u32 = 43_219_876;
const REFERENCE_C: u32 = 6_543_217;

const LCG_MULTIPLIER: u32 = 314_527_869;
const LCG_INCREMENT: u32 = 1_234_567;
const MWC_MULTIPLIER: u64 = 4_294_584_393;

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

/// Acceptance mass below which `bounded_gaussian` stops drawing from the
/// untruncated law and switches to a proposal fitted to the interval.
const DIRECT_MASS_THRESHOLD: f64 = 0.25;

/// Unconditional draws attempted by `truncated_gamma` before it falls back
/// to inverting the truncated CDF.
const GAMMA_RETRY_CAP: usize = 64;

/// JKISS generator state: four 32-bit words.
///
/// `y` is never zero and `(z, c)` never sits on a fixed point of the
/// multiply-with-carry recurrence.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Jkiss {
    x: u32,
    y: u32,
    z: u32,
    c: u32,
}

impl Default for Jkiss {
    /// The seed words published with the reference generator.
    fn default() -> Self {
        Self {
            x: REFERENCE_X,
            y: REFERENCE_Y,
            z: REFERENCE_Z,
            c: REFERENCE_C,
        }
    }
}

/// splitmix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl Jkiss {
    /// Builds a state from raw words, remapping the degenerate ones.
    pub fn from_words(x: u32, y: u32, z: u32, c: u32) -> Self {
        let y = if y == 0 { REFERENCE_Y } else { y };
        // Keeps c < a - 1, which excludes the (2^32 - 1, a - 1) fixed point.
        let c = (u64::from(c) % (MWC_MULTIPLIER - 1)) as u32;
        let (z, c) = if z == 0 && c == 0 {
            (REFERENCE_Z, REFERENCE_C)
        } else {
            (z, c)
        };
        Self { x, y, z, c }
    }

    /// Independent stream `stream_index` of the run keyed by `master_seed`.
    pub fn seed(master_seed: u64, stream_index: u64) -> Self {
        let key = mix64(master_seed) ^ mix64(stream_index.wrapping_add(0x632b_e59b_d9b4_e019));
        let w1 = mix64(key.wrapping_add(GOLDEN_GAMMA));
        let w2 = mix64(key.wrapping_add(GOLDEN_GAMMA.wrapping_mul(2)));
        Self::from_words(w1 as u32, (w1 >> 32) as u32, w2 as u32, (w2 >> 32) as u32)
    }

    pub fn words(&self) -> [u32; 4] {
        [self.x, self.y, self.z, self.c]
    }

    #[inline]
    pub fn next_u32(&mut self) -> u32 {
        self.x = self
            .x
            .wrapping_mul(LCG_MULTIPLIER)
            .wrapping_add(LCG_INCREMENT);
        self.y ^= self.y << 5;
        self.y ^= self.y >> 7;
        self.y ^= self.y << 22;
        let t = MWC_MULTIPLIER * u64::from(self.z) + u64::from(self.c);
        self.c = (t >> 32) as u32;
        self.z = t as u32;
        self.x.wrapping_add(self.y).wrapping_add(self.z)
    }

    /// Uniform in `[0, 1)` with 32-bit resolution.
    #[inline]
    pub fn uniform01(&mut self) -> f64 {
        f64::from(self.next_u32()) / 4_294_967_296.0
    }

    /// Uniform integer in `0..n` (`n > 0`), by widening multiplication.
    #[inline]
    pub fn below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        ((u64::from(self.next_u32()) * n as u64) >> 32) as usize
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }

    /// Standard normal draw by the Marsaglia polar method. The second
    /// variate of each accepted pair is discarded so that the generator
    /// words remain the only state.
    pub fn standard_normal(&mut self) -> f64 {
        loop {
            let u = 2.0 * self.uniform01() - 1.0;
            let v = 2.0 * self.uniform01() - 1.0;
            let s = u * u + v * v;
            if s > 0.0 && s < 1.0 {
                return u * (-2.0 * s.ln() / s).sqrt();
            }
        }
    }

    pub fn gaussian(&mut self, mean: f64, sd: f64) -> Result<f64> {
        check_sd(sd)?;
        Ok(mean + sd * self.standard_normal())
    }

    /// Normal(mean, sd) conditioned on `[lo, hi]`.
    ///
    /// Draw-and-discard is used while the interval holds at least a quarter
    /// of the mass; otherwise an accept/reject proposal fitted to the
    /// interval (uniform or translated exponential) samples the same law.
    pub fn bounded_gaussian(&mut self, mean: f64, sd: f64, lo: f64, hi: f64) -> Result<f64> {
        check_sd(sd)?;
        check_interval(lo, hi)?;
        let a = (lo - mean) / sd;
        let b = (hi - mean) / sd;
        let z = if normal_mass(a, b) >= DIRECT_MASS_THRESHOLD {
            loop {
                let z = self.standard_normal();
                if (a..=b).contains(&z) {
                    break z;
                }
            }
        } else {
            self.truncated_standard_normal(a, b)
        };
        Ok((mean + sd * z).clamp(lo, hi))
    }

    fn truncated_standard_normal(&mut self, a: f64, b: f64) -> f64 {
        if a <= 0.0 && b >= 0.0 {
            // Narrow interval around the mode.
            loop {
                let z = a + (b - a) * self.uniform01();
                if self.uniform01() <= (-0.5 * z * z).exp() {
                    return z;
                }
            }
        } else if a > 0.0 {
            self.normal_tail(a, b)
        } else {
            -self.normal_tail(-b, -a)
        }
    }

    /// Standard normal on `[a, b]` with `0 < a < b` (Robert's proposals).
    fn normal_tail(&mut self, a: f64, b: f64) -> f64 {
        let root = (a * a + 4.0).sqrt();
        let alpha = 0.5 * (a + root);
        let exp_worthwhile = b - a
            > 2.0 / (a + root) * (0.5 + 0.25 * (a * a - a * root)).exp();
        if exp_worthwhile {
            loop {
                let z = a - (1.0 - self.uniform01()).ln() / alpha;
                if z > b {
                    continue;
                }
                let d = z - alpha;
                if self.uniform01() <= (-0.5 * d * d).exp() {
                    return z;
                }
            }
        } else {
            loop {
                let z = a + (b - a) * self.uniform01();
                if self.uniform01() <= (0.5 * (a * a - z * z)).exp() {
                    return z;
                }
            }
        }
    }

    /// Density proportional to `exp(-rate (x - lo) / (hi - lo))` on
    /// `[lo, hi]`, by inverse CDF. The endpoint density ratio is `e^rate`.
    pub fn bounded_exponential(&mut self, rate: f64, lo: f64, hi: f64) -> Result<f64> {
        if !(rate > 0.0 && rate.is_finite()) {
            return Err(invalid("rate", format!("must be positive and finite, got {rate}")));
        }
        check_interval(lo, hi)?;
        let u = self.uniform01();
        let x = (-(u * (-rate).exp_m1()).ln_1p() / rate).clamp(0.0, 1.0);
        Ok((lo + x * (hi - lo)).clamp(lo, hi))
    }

    /// Unconditional Gamma(shape, scale) by Marsaglia-Tsang.
    pub fn gamma(&mut self, shape: f64, scale: f64) -> Result<f64> {
        check_positive("shape", shape)?;
        check_positive("scale", scale)?;
        Ok(scale * self.standard_gamma(shape))
    }

    fn standard_gamma(&mut self, shape: f64) -> f64 {
        if shape < 1.0 {
            let boost = self.uniform01().powf(1.0 / shape);
            return self.standard_gamma(shape + 1.0) * boost;
        }
        let d = shape - 1.0 / 3.0;
        let c = 1.0 / (9.0 * d).sqrt();
        loop {
            let x = self.standard_normal();
            let v = 1.0 + c * x;
            if v <= 0.0 {
                continue;
            }
            let v = v * v * v;
            let u = self.uniform01();
            let x2 = x * x;
            if u < 1.0 - 0.0331 * x2 * x2 || u.ln() < 0.5 * x2 + d * (1.0 - v + v.ln()) {
                return d * v;
            }
        }
    }

    /// Gamma(shape, scale) conditioned on `[lo, hi]`; `hi` may be infinite.
    ///
    /// Rejection against the unconditional sampler, capped at 64 draws,
    /// then inversion of the truncated CDF by bisection.
    pub fn truncated_gamma(&mut self, shape: f64, scale: f64, lo: f64, hi: f64) -> Result<f64> {
        check_positive("shape", shape)?;
        check_positive("scale", scale)?;
        if !(lo >= 0.0 && lo.is_finite()) {
            return Err(invalid("lo", format!("must be finite and nonnegative, got {lo}")));
        }
        if !(hi > lo) {
            return Err(invalid("hi", format!("must exceed lo = {lo}, got {hi}")));
        }
        for _ in 0..GAMMA_RETRY_CAP {
            let g = scale * self.standard_gamma(shape);
            if (lo..=hi).contains(&g) {
                return Ok(g);
            }
        }
        let u = self.uniform01();
        Ok(invert_truncated_gamma(shape, scale, lo, hi, u))
    }
}

fn check_sd(sd: f64) -> Result<()> {
    check_positive("sd", sd)
}

fn check_positive(name: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(name, format!("must be positive and finite, got {v}")))
    }
}

fn check_interval(lo: f64, hi: f64) -> Result<()> {
    if lo < hi && !lo.is_nan() && !hi.is_nan() {
        Ok(())
    } else {
        Err(invalid("bounds", format!("need lo < hi, got [{lo}, {hi}]")))
    }
}

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z * FRAC_1_SQRT_2)
}

/// Standard normal probability of `[a, b]`, accurate in either tail.
pub fn normal_mass(a: f64, b: f64) -> f64 {
    if a >= b {
        return 0.0;
    }
    if a > 0.0 {
        0.5 * (erfc(a * FRAC_1_SQRT_2) - erfc(b * FRAC_1_SQRT_2))
    } else if b < 0.0 {
        0.5 * (erfc(-b * FRAC_1_SQRT_2) - erfc(-a * FRAC_1_SQRT_2))
    } else {
        1.0 - normal_cdf(a) - (1.0 - normal_cdf(b))
    }
}

/// Solves `F(x) = F(lo) + u (F(hi) - F(lo))` for the Gamma CDF on
/// `[lo, hi]`, working in whichever tail keeps precision.
fn invert_truncated_gamma(shape: f64, scale: f64, lo: f64, hi: f64, u: f64) -> f64 {
    let upper_tail = lo > shape * scale;
    // Monotone decreasing in x either way: survival in the upper tail,
    // negated CDF in the lower one.
    let g = |x: f64| -> f64 {
        if x.is_infinite() {
            return if upper_tail { 0.0 } else { -1.0 };
        }
        if upper_tail {
            gamma_ur(shape, x / scale)
        } else {
            -gamma_lr(shape, x / scale)
        }
    };
    let g_lo = g(lo);
    let g_hi = g(hi);
    let span = g_lo - g_hi;
    if !(span > 0.0) {
        // The interval lies beyond floating-point resolution of the CDF:
        // the density there is locally exponential with this rate.
        let width = if hi.is_finite() { hi - lo } else { 50.0 * scale };
        let local_rate = (1.0 / scale - (shape - 1.0) / lo.max(f64::MIN_POSITIVE)).max(1e-12);
        let x = -(u * (-local_rate * width).exp_m1()).ln_1p() / local_rate;
        return (lo + x).clamp(lo, hi);
    }
    let target = g_lo - u * span;
    let mut left = lo;
    let mut right = if hi.is_finite() {
        hi
    } else {
        let mut r = (lo.max(shape * scale) * 2.0).max(scale);
        while g(r) > target {
            r *= 2.0;
        }
        r
    };
    for _ in 0..200 {
        let mid = 0.5 * (left + right);
        if mid <= left || mid >= right {
            break;
        }
        if g(mid) > target {
            left = mid;
        } else {
            right = mid;
        }
    }
    (0.5 * (left + right)).clamp(lo, hi)
}
