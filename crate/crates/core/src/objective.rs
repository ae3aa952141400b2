//! The evaluation contract, standard benchmark functions and the external
//! line-protocol worker.
//!
//! Objectives always receive normalized coordinates; each carries the
//! user-unit [`Bounds`] used to map them back.

use crate::domain::Bounds;
use crate::error::{invalid, Error, Result};
use serde::{Deserialize, Serialize};
use std::f64::consts::{E, PI};
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::{Arc, Mutex};
use std::time::Duration;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Concurrency {
    ConcurrentSafe,
    SerialOnly,
}

pub trait Objective: Send + Sync {
    fn dim(&self) -> usize;

    /// User-unit domain that `[0, 1]^dim` maps onto.
    fn bounds(&self) -> &Bounds;

    /// Value at a normalized position. Failures are reported as NaN.
    fn evaluate(&self, x: &[f64]) -> f64;

    fn concurrency(&self) -> Concurrency {
        Concurrency::ConcurrentSafe
    }

    fn name(&self) -> &str {
        "objective"
    }
}

#[derive(Debug, Default)]
struct Counters {
    evals: AtomicU64,
    non_finite: AtomicU64,
}

/// Shared, counting handle to an objective. Clones share the counters.
#[derive(Clone)]
pub struct ObjectiveHandle {
    objective: Arc<dyn Objective>,
    counters: Arc<Counters>,
}

impl fmt::Debug for ObjectiveHandle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ObjectiveHandle")
            .field("name", &self.objective.name())
            .field("dim", &self.objective.dim())
            .field("evals", &self.eval_count())
            .finish()
    }
}

impl ObjectiveHandle {
    pub fn new(objective: impl Objective + 'static) -> Self {
        Self {
            objective: Arc::new(objective),
            counters: Arc::default(),
        }
    }

    /// Wraps a closure over the unit cube.
    /// Shares an objective the caller keeps a typed handle to.
    pub fn from_arc<O: Objective + 'static>(objective: Arc<O>) -> Self {
        Self {
            objective,
            counters: Arc::default(),
        }
    }

    pub fn from_fn(dim: usize, f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Result<Self> {
        Ok(Self::new(FnObjective {
            bounds: Bounds::unit(dim)?,
            f: Box::new(f),
        }))
    }

    pub fn dim(&self) -> usize {
        self.objective.dim()
    }

    pub fn bounds(&self) -> &Bounds {
        self.objective.bounds()
    }

    pub fn concurrency(&self) -> Concurrency {
        self.objective.concurrency()
    }

    pub fn name(&self) -> &str {
        self.objective.name()
    }

    pub fn evaluate(&self, x: &[f64]) -> f64 {
        self.counters.evals.fetch_add(1, Ordering::Relaxed);
        let v = self.objective.evaluate(x);
        if !v.is_finite() {
            self.counters.non_finite.fetch_add(1, Ordering::Relaxed);
        }
        v
    }

    pub fn eval_count(&self) -> u64 {
        self.counters.evals.load(Ordering::Relaxed)
    }

    pub fn non_finite_count(&self) -> u64 {
        self.counters.non_finite.load(Ordering::Relaxed)
    }
}

type BoxedFn = Box<dyn Fn(&[f64]) -> f64 + Send + Sync>;

struct FnObjective {
    bounds: Bounds,
    f: BoxedFn,
}

impl Objective for FnObjective {
    fn dim(&self) -> usize {
        self.bounds.dim()
    }

    fn bounds(&self) -> &Bounds {
        &self.bounds
    }

    fn evaluate(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }

    fn name(&self) -> &str {
        "closure"
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BenchmarkKind {
    Sphere,
    Rosenbrock,
    Rastrigin,
    Ackley,
    Griewank,
    Schwefel,
    NoisyRastrigin,
    TwinValleys,
}

impl BenchmarkKind {
    pub const ALL: [BenchmarkKind; 8] = [
        Self::Sphere,
        Self::Rosenbrock,
        Self::Rastrigin,
        Self::Ackley,
        Self::Griewank,
        Self::Schwefel,
        Self::NoisyRastrigin,
        Self::TwinValleys,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Sphere => "sphere",
            Self::Rosenbrock => "rosenbrock",
            Self::Rastrigin => "rastrigin",
            Self::Ackley => "ackley",
            Self::Griewank => "griewank",
            Self::Schwefel => "schwefel",
            Self::NoisyRastrigin => "noisy_rastrigin",
            Self::TwinValleys => "twin_valleys",
        }
    }

    /// Conventional per-coordinate search range.
    pub fn range(self) -> (f64, f64) {
        match self {
            Self::Sphere => (-5.0, 5.0),
            Self::Rosenbrock => (-5.0, 10.0),
            Self::Rastrigin | Self::NoisyRastrigin => (-5.12, 5.12),
            Self::Ackley => (-32.768, 32.768),
            Self::Griewank => (-600.0, 600.0),
            Self::Schwefel => (-500.0, 500.0),
            Self::TwinValleys => (-1.0, 1.0),
        }
    }

    fn min_dim(self) -> usize {
        if self == Self::Rosenbrock {
            2
        } else {
            1
        }
    }

    /// Global minimizers in user units for the given dimension. The
    /// noise of `noisy_rastrigin` is ignored.
    pub fn minimizers(self, dim: usize) -> Vec<Vec<f64>> {
        match self {
            Self::Rosenbrock => vec![vec![1.0; dim]],
            Self::Schwefel => vec![vec![SCHWEFEL_ARGMIN; dim]],
            Self::TwinValleys => {
                let c = twin_valley_center(dim);
                let neg = c.iter().map(|v| -v).collect();
                vec![c, neg]
            }
            _ => vec![vec![0.0; dim]],
        }
    }

    /// Value in user units; `noise` in `[-1, 1]` is used by the noisy
    /// variant only.
    pub fn value(self, z: &[f64], noise: f64) -> f64 {
        match self {
            Self::Sphere => z.iter().map(|v| v * v).sum(),
            Self::Rosenbrock => z
                .windows(2)
                .map(|w| 100.0 * (w[1] - w[0] * w[0]).powi(2) + (1.0 - w[0]).powi(2))
                .sum(),
            Self::Rastrigin => rastrigin(z),
            Self::NoisyRastrigin => rastrigin(z) + NOISE_AMPLITUDE * noise,
            Self::Ackley => {
                let n = z.len() as f64;
                let sq = z.iter().map(|v| v * v).sum::<f64>() / n;
                let cs = z.iter().map(|v| (2.0 * PI * v).cos()).sum::<f64>() / n;
                -20.0 * (-0.2 * sq.sqrt()).exp() - cs.exp() + 20.0 + E
            }
            Self::Griewank => {
                let sum = z.iter().map(|v| v * v).sum::<f64>() / 4000.0;
                let prod: f64 = z
                    .iter()
                    .enumerate()
                    .map(|(i, v)| (v / ((i + 1) as f64).sqrt()).cos())
                    .product();
                1.0 + sum - prod
            }
            Self::Schwefel => {
                418.982_887_272_433_8 * z.len() as f64
                    - z.iter().map(|v| v * v.abs().sqrt().sin()).sum::<f64>()
            }
            Self::TwinValleys => {
                let c = twin_valley_center(z.len());
                let near: Vec<f64> = z.iter().zip(&c).map(|(v, c)| v - c).collect();
                let far: Vec<f64> = z.iter().zip(&c).map(|(v, c)| v + c).collect();
                valley(&near).min(valley(&far))
            }
        }
    }
}

impl fmt::Display for BenchmarkKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BenchmarkKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::UnknownBenchmark(s.to_string()))
    }
}

const SCHWEFEL_ARGMIN: f64 = 420.968_746_359_982;
const NOISE_AMPLITUDE: f64 = 0.1;

fn rastrigin(z: &[f64]) -> f64 {
    10.0 * z.len() as f64
        + z.iter()
            .map(|v| v * v - 10.0 * (2.0 * PI * v).cos())
            .sum::<f64>()
}

/// Centers ±(0.4, −0.4, 0.4, …): off the diagonal, symmetric about 0.
fn twin_valley_center(dim: usize) -> Vec<f64> {
    (0..dim)
        .map(|i| if i % 2 == 0 { 0.4 } else { -0.4 })
        .collect()
}

/// Rippled bowl, exactly 0 at the origin.
fn valley(w: &[f64]) -> f64 {
    w.iter()
        .map(|v| 4.0 * v * v + 0.1 * (1.0 - (6.0 * PI * v).cos()))
        .sum()
}

/// How benchmark bounds are laid out around the known optimum.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum BoundsStyle {
    /// The textbook range, typically centered on the optimum.
    #[default]
    Conventional,
    /// The textbook range translated per coordinate by up to ±15 % of its
    /// width, so that the optimum sits off the center and off the diagonal.
    Shifted,
}

impl FromStr for BoundsStyle {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "conventional" => Ok(Self::Conventional),
            "shifted" => Ok(Self::Shifted),
            other => Err(invalid(
                "bounds_style",
                format!("expected `conventional` or `shifted`, got `{other}`"),
            )),
        }
    }
}

/// Translation of coordinate `i` as a fraction of the range width.
pub fn shift_fraction(i: usize) -> f64 {
    let golden = 0.618_033_988_749_894_9;
    0.3 * (((i + 1) as f64 * golden).fract() - 0.5)
}

#[derive(Clone, Debug)]
pub struct Benchmark {
    kind: BenchmarkKind,
    bounds: Bounds,
    noise_seed: u64,
}

impl Benchmark {
    pub fn new(kind: BenchmarkKind, dim: usize, style: BoundsStyle) -> Result<Self> {
        if dim < kind.min_dim() {
            return Err(invalid(
                "dim",
                format!("{kind} needs dimension ≥ {}, got {dim}", kind.min_dim()),
            ));
        }
        let (lo, hi) = kind.range();
        let limits = (0..dim)
            .map(|i| {
                let delta = match style {
                    BoundsStyle::Conventional => 0.0,
                    BoundsStyle::Shifted => shift_fraction(i) * (hi - lo),
                };
                (lo + delta, hi + delta)
            })
            .collect();
        Ok(Self {
            kind,
            bounds: Bounds::new(limits)?,
            noise_seed: 0,
        })
    }

    /// Freezes a different noise realization for `noisy_rastrigin`.
    pub fn with_noise_seed(mut self, seed: u64) -> Self {
        self.noise_seed = seed;
        self
    }

    pub fn kind(&self) -> BenchmarkKind {
        self.kind
    }

    /// The global minimizers that lie inside the domain, normalized.
    pub fn optima(&self) -> Vec<Vec<f64>> {
        self.kind
            .minimizers(self.bounds.dim())
            .into_iter()
            .filter_map(|m| self.bounds.normalize(&m).ok())
            .collect()
    }

    /// Uniform noise in `[-1, 1]`, a fixed function of the position and
    /// the noise seed: independent of evaluation order and thread.
    fn noise(&self, x: &[f64]) -> f64 {
        let mut h = self.noise_seed ^ 0x6a09_e667_f3bc_c909;
        for v in x {
            h = mix64(h ^ v.to_bits());
        }
        let unit = (h >> 11) as f64 / (1u64 << 53) as f64;
        2.0 * unit - 1.0
    }
}

fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl Objective for Benchmark {
    fn dim(&self) -> usize {
        self.bounds.dim()
    }

    fn bounds(&self) -> &Bounds {
        &self.bounds
    }

    fn evaluate(&self, x: &[f64]) -> f64 {
        let z: Vec<f64> = x
            .iter()
            .enumerate()
            .map(|(i, &v)| self.bounds.denormalize_coord(i, v))
            .collect();
        let noise = if self.kind == BenchmarkKind::NoisyRastrigin {
            self.noise(x)
        } else {
            0.0
        };
        self.kind.value(&z, noise)
    }

    fn name(&self) -> &str {
        self.kind.name()
    }
}

pub fn make_benchmark(name: &str, dim: usize, style: BoundsStyle) -> Result<ObjectiveHandle> {
    let kind: BenchmarkKind = name.parse()?;
    Ok(ObjectiveHandle::new(Benchmark::new(kind, dim, style)?))
}

pub const DEFAULT_WORKER_TIMEOUT: Duration = Duration::from_secs(30);

struct Worker {
    child: Child,
    stdin: ChildStdin,
    replies: Receiver<std::io::Result<String>>,
}

impl Worker {
    fn spawn(command: &str) -> Result<Self> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::Worker(format!("cannot start `{command}`: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, replies) = mpsc::channel();
        std::thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        Ok(Self {
            child,
            stdin,
            replies,
        })
    }

    fn query(&mut self, request: &str, timeout: Duration) -> std::result::Result<f64, String> {
        writeln!(self.stdin, "{request}")
            .and_then(|()| self.stdin.flush())
            .map_err(|e| format!("write failed: {e}"))?;
        let line = match self.replies.recv_timeout(timeout) {
            Ok(Ok(line)) => line,
            Ok(Err(e)) => return Err(format!("read failed: {e}")),
            Err(RecvTimeoutError::Timeout) => return Err(format!("no reply within {timeout:?}")),
            Err(RecvTimeoutError::Disconnected) => return Err("worker exited".into()),
        };
        line.trim()
            .parse::<f64>()
            .map_err(|_| format!("unparsable reply `{}`", line.trim()))
    }
}

impl Drop for Worker {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Objective served by a long-lived child process: one request line of
/// user-unit coordinates, one reply line holding the value.
pub struct ExternalObjective {
    command: String,
    bounds: Bounds,
    timeout: Duration,
    worker: Mutex<Option<Worker>>,
    failures: AtomicU64,
    last_error: Mutex<Option<String>>,
}

impl ExternalObjective {
    /// Starts the worker now so that a bad command fails early.
    pub fn spawn(command: &str, bounds: Bounds, timeout: Duration) -> Result<Self> {
        if command.trim().is_empty() {
            return Err(invalid("external_cmd", "empty command"));
        }
        let worker = Worker::spawn(command)?;
        Ok(Self {
            command: command.to_string(),
            bounds,
            timeout,
            worker: Mutex::new(Some(worker)),
            failures: AtomicU64::new(0),
            last_error: Mutex::new(None),
        })
    }

    /// Evaluations that failed (reported as NaN).
    pub fn failures(&self) -> u64 {
        self.failures.load(Ordering::Relaxed)
    }

    pub fn last_error(&self) -> Option<String> {
        self.last_error.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }

    fn fail(&self, message: String) -> f64 {
        self.failures.fetch_add(1, Ordering::Relaxed);
        *self.last_error.lock().unwrap_or_else(|e| e.into_inner()) = Some(message);
        f64::NAN
    }
}

impl Objective for ExternalObjective {
    fn dim(&self) -> usize {
        self.bounds.dim()
    }

    fn bounds(&self) -> &Bounds {
        &self.bounds
    }

    fn evaluate(&self, x: &[f64]) -> f64 {
        let request = x
            .iter()
            .enumerate()
            .map(|(i, &v)| self.bounds.denormalize_coord(i, v).to_string())
            .collect::<Vec<_>>()
            .join(" ");
        let mut slot = self.worker.lock().unwrap_or_else(|e| e.into_inner());
        if slot.is_none() {
            match Worker::spawn(&self.command) {
                Ok(w) => *slot = Some(w),
                Err(e) => return self.fail(e.to_string()),
            }
        }
        let worker = slot.as_mut().expect("worker present");
        match worker.query(&request, self.timeout) {
            Ok(v) => v,
            Err(message) => {
                // The protocol is out of step after any failure: restart.
                *slot = None;
                self.fail(message)
            }
        }
    }

    fn concurrency(&self) -> Concurrency {
        Concurrency::SerialOnly
    }

    fn name(&self) -> &str {
        "external"
    }
}

pub fn external_objective(command: &str, bounds: Bounds, timeout: Duration) -> Result<ObjectiveHandle> {
    Ok(ObjectiveHandle::new(ExternalObjective::spawn(command, bounds, timeout)?))
}
