//! The stack (alias swarm): a bounded, value-sorted set of the best
//! mutually distinct points, and the dispersion/fitness metrics computed
//! over it.
//!
//! Distinctness is judged with the D1 norm against the equivalence radius:
//! a candidate closer than `r_eq` to existing entries competes with that
//! whole group and either replaces all of it or is dropped.

use crate::domain::{manhattan, Bounds, CUBE_TOLERANCE};
use crate::error::{invalid, Error, Result};
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::io::{Read, Write};

/// A normalized position with its objective value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatedPoint {
    pub position: Vec<f64>,
    pub value: f64,
    /// Evaluation counter at creation; breaks value ties.
    pub eval_index: u64,
}

impl RatedPoint {
    pub fn new(position: Vec<f64>, value: f64, eval_index: u64) -> Self {
        Self {
            position,
            value,
            eval_index,
        }
    }
}

/// Stack order: ascending value, then earlier evaluation first.
pub fn rank_order(a: &RatedPoint, b: &RatedPoint) -> Ordering {
    a.value
        .total_cmp(&b.value)
        .then(a.eval_index.cmp(&b.eval_index))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum InsertOutcome {
    Inserted,
    /// Displaced every entry of its equivalence group.
    ReplacedEquivalent { removed: usize },
    /// An equivalent entry is at least as good.
    RejectedEquivalent,
    /// The stack is full and the candidate would be its worst entry.
    RejectedFull,
}

impl InsertOutcome {
    pub fn accepted(self) -> bool {
        matches!(self, Self::Inserted | Self::ReplacedEquivalent { .. })
    }
}

/// Equivalence radius as a function of temperature: `dim·(base + slope·T)`
/// in D1 units.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadiusSchedule {
    pub base: f64,
    pub slope: f64,
}

impl Default for RadiusSchedule {
    fn default() -> Self {
        Self {
            base: 0.01,
            slope: 0.09,
        }
    }
}

impl RadiusSchedule {
    pub fn radius(&self, temperature: f64, dim: usize) -> f64 {
        dim as f64 * (self.base + self.slope * temperature)
    }
}

pub fn equivalence_radius(temperature: f64, dim: usize) -> f64 {
    RadiusSchedule::default().radius(temperature, dim)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stack {
    entries: Vec<RatedPoint>,
    capacity: usize,
    r_eq: f64,
}

impl Stack {
    pub fn new(capacity: usize, r_eq: f64) -> Result<Self> {
        if capacity == 0 {
            return Err(invalid("capacity", "must be at least 1"));
        }
        if !(r_eq >= 0.0 && r_eq.is_finite()) {
            return Err(invalid("r_eq", format!("must be finite and nonnegative, got {r_eq}")));
        }
        Ok(Self {
            entries: Vec::with_capacity(capacity + 1),
            capacity,
            r_eq,
        })
    }

    pub fn entries(&self) -> &[RatedPoint] {
        &self.entries
    }

    pub fn into_entries(self) -> Vec<RatedPoint> {
        self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn r_eq(&self) -> f64 {
        self.r_eq
    }

    pub fn best(&self) -> Option<&RatedPoint> {
        self.entries.first()
    }

    pub fn worst(&self) -> Option<&RatedPoint> {
        self.entries.last()
    }

    pub fn best_value(&self) -> Option<f64> {
        self.best().map(|p| p.value)
    }

    pub fn dim(&self) -> Option<usize> {
        self.best().map(|p| p.position.len())
    }

    /// Offers a candidate under the "better in, worst out" policy.
    pub fn try_insert(&mut self, candidate: RatedPoint) -> Result<InsertOutcome> {
        if !candidate.value.is_finite() {
            return Err(Error::NonFinite(candidate.value));
        }
        if let Some(dim) = self.dim() {
            if candidate.position.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: candidate.position.len(),
                });
            }
        }
        if let Some((index, &value)) = candidate
            .position
            .iter()
            .enumerate()
            .find(|(_, v)| !(-CUBE_TOLERANCE..=1.0 + CUBE_TOLERANCE).contains(*v))
        {
            return Err(Error::OutOfDomain {
                index,
                value,
                lower: 0.0,
                upper: 1.0,
            });
        }

        let group: Vec<usize> = self
            .entries
            .iter()
            .enumerate()
            .filter(|(_, e)| within(&e.position, &candidate.position, self.r_eq))
            .map(|(i, _)| i)
            .collect();

        if let Some(&first) = group.first() {
            // Sorted entries: the group's first member is its best.
            if candidate.value < self.entries[first].value {
                for &i in group.iter().rev() {
                    self.entries.remove(i);
                }
                self.insert_sorted(candidate);
                return Ok(InsertOutcome::ReplacedEquivalent {
                    removed: group.len(),
                });
            }
            return Ok(InsertOutcome::RejectedEquivalent);
        }

        let pos = self
            .entries
            .partition_point(|e| rank_order(e, &candidate) == Ordering::Less);
        if self.entries.len() >= self.capacity {
            if pos >= self.entries.len() {
                return Ok(InsertOutcome::RejectedFull);
            }
            self.entries.insert(pos, candidate);
            self.entries.truncate(self.capacity);
        } else {
            self.entries.insert(pos, candidate);
        }
        Ok(InsertOutcome::Inserted)
    }

    fn insert_sorted(&mut self, candidate: RatedPoint) {
        let pos = self
            .entries
            .partition_point(|e| rank_order(e, &candidate) == Ordering::Less);
        self.entries.insert(pos, candidate);
    }

    pub fn stat_dist(&self) -> f64 {
        stat_dist(&self.entries)
    }

    pub fn stat_params(&self) -> f64 {
        stat_params(&self.entries)
    }

    pub fn disp_score(&self) -> f64 {
        disp_score(self.stat_dist(), self.stat_params())
    }

    pub fn fmt_score(&self, alpha: f64) -> Result<f64> {
        fmt_score(&self.entries, alpha)
    }

    pub fn metrics(&self, alpha: f64) -> Result<StackMetrics> {
        stack_score(&self.entries, alpha)
    }

    /// EMA weight matching the stack length: `2 / (capacity + 1)`.
    pub fn default_alpha(&self) -> f64 {
        2.0 / (self.capacity as f64 + 1.0)
    }
}

/// `d1(a, b) < radius`, stopping as soon as the partial sum reaches it.
#[inline]
fn within(a: &[f64], b: &[f64], radius: f64) -> bool {
    let mut sum = 0.0;
    for (x, y) in a.iter().zip(b) {
        sum += (x - y).abs();
        if sum >= radius {
            return false;
        }
    }
    sum < radius
}

/// Square of the mean square root over the given pairwise distances.
pub fn stat_dist_from_distances(distances: impl IntoIterator<Item = f64>) -> f64 {
    let (sum, count) = distances
        .into_iter()
        .fold((0.0, 0usize), |(s, n), d| (s + d.sqrt(), n + 1));
    if count == 0 {
        return 0.0;
    }
    let mean = sum / count as f64;
    mean * mean
}

/// Root mean square of the given distances.
pub fn rms_from_distances(distances: impl IntoIterator<Item = f64>) -> f64 {
    let (sum, count) = distances
        .into_iter()
        .fold((0.0, 0usize), |(s, n), d| (s + d * d, n + 1));
    if count == 0 {
        0.0
    } else {
        (sum / count as f64).sqrt()
    }
}

fn pair_distances(points: &[RatedPoint]) -> impl Iterator<Item = f64> + '_ {
    points.iter().enumerate().flat_map(move |(i, a)| {
        points[i + 1..]
            .iter()
            .map(move |b| manhattan(&a.position, &b.position))
    })
}

/// Dispersion over unordered pairs, D1 metric. Counting ordered pairs
/// doubles both the sum and the count, so the value is the same.
pub fn stat_dist(points: &[RatedPoint]) -> f64 {
    if points.len() < 2 {
        return 0.0;
    }
    stat_dist_from_distances(pair_distances(points))
}

/// Harmonic mean of the per-coordinate population standard deviations;
/// zero as soon as any coordinate is constant.
pub fn stat_params(points: &[RatedPoint]) -> f64 {
    if points.len() < 2 {
        return 0.0;
    }
    let n = points.len() as f64;
    let dim = points[0].position.len();
    let mut reciprocal_sum = 0.0;
    for k in 0..dim {
        let mean = points.iter().map(|p| p.position[k]).sum::<f64>() / n;
        let var = points
            .iter()
            .map(|p| (p.position[k] - mean).powi(2))
            .sum::<f64>()
            / n;
        let sd = var.sqrt();
        if sd == 0.0 {
            return 0.0;
        }
        reciprocal_sum += 1.0 / sd;
    }
    dim as f64 / reciprocal_sum
}

pub fn disp_score(stat_dist: f64, stat_params: f64) -> f64 {
    (stat_dist.sqrt() + stat_params.sqrt()) / 2.0
}

/// EMA of the merits `-value` taken from the worst entry to the best.
pub fn fmt_score(points: &[RatedPoint], alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(invalid("alpha", format!("must lie in (0, 1], got {alpha}")));
    }
    let mut iter = points.iter().rev();
    let worst = iter.next().ok_or(Error::EmptyStack)?;
    Ok(iter.fold(-worst.value, |ema, p| alpha * -p.value + (1.0 - alpha) * ema))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StackMetrics {
    pub stat_dist: f64,
    pub stat_params: f64,
    pub disp_score: f64,
    pub fmt_score: f64,
    pub stack_score: f64,
}

pub fn stack_score(points: &[RatedPoint], alpha: f64) -> Result<StackMetrics> {
    let fmt = fmt_score(points, alpha)?;
    let sd = stat_dist(points);
    let sp = stat_params(points);
    let disp = disp_score(sd, sp);
    Ok(StackMetrics {
        stat_dist: sd,
        stat_params: sp,
        disp_score: disp,
        fmt_score: fmt,
        stack_score: fmt * (1.0 + disp),
    })
}

/// Offers every entry of every stack, best first, to a fresh stack.
pub fn merge_stacks<'a>(
    stacks: impl IntoIterator<Item = &'a Stack>,
    capacity: usize,
    r_eq: f64,
) -> Result<Stack> {
    let mut all: Vec<RatedPoint> = stacks
        .into_iter()
        .flat_map(|s| s.entries.iter().cloned())
        .collect();
    all.sort_by(rank_order);
    let mut merged = Stack::new(capacity, r_eq)?;
    for p in all {
        merged.try_insert(p)?;
    }
    Ok(merged)
}

/// Writes `rank,value,eval,x0..,u0..` rows; the user-unit columns are
/// present only when `bounds` is given.
pub fn write_table<W: Write>(points: &[RatedPoint], bounds: Option<&Bounds>, writer: W) -> Result<()> {
    let dim = points.first().map_or_else(|| bounds.map_or(0, Bounds::dim), |p| p.position.len());
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["rank".to_string(), "value".to_string(), "eval".to_string()];
    header.extend((0..dim).map(|k| format!("x{k}")));
    if bounds.is_some() {
        header.extend((0..dim).map(|k| format!("u{k}")));
    }
    w.write_record(&header).map_err(table_err)?;
    for (rank, p) in points.iter().enumerate() {
        let mut row = vec![(rank + 1).to_string(), p.value.to_string(), p.eval_index.to_string()];
        row.extend(p.position.iter().map(f64::to_string));
        if let Some(b) = bounds {
            row.extend(b.denormalize(&p.position)?.iter().map(f64::to_string));
        }
        w.write_record(&row).map_err(table_err)?;
    }
    w.flush().map_err(|e| Error::Table(e.to_string()))?;
    Ok(())
}

/// Parses a table written by [`write_table`] back into rated points.
pub fn read_table<R: Read>(reader: R) -> Result<Vec<RatedPoint>> {
    let mut r = csv::Reader::from_reader(reader);
    let header = r.headers().map_err(table_err)?.clone();
    let column = |name: &str| header.iter().position(|h| h == name);
    let value_col = column("value").ok_or_else(|| Error::Table("missing `value` column".into()))?;
    let eval_col = column("eval");
    let coord_cols: Vec<usize> = (0..)
        .map_while(|k| column(&format!("x{k}")))
        .collect();
    let parse = |s: &str, what: &str| -> Result<f64> {
        s.parse::<f64>()
            .map_err(|e| Error::Table(format!("bad {what} `{s}`: {e}")))
    };
    let mut out = Vec::new();
    for record in r.records() {
        let record = record.map_err(table_err)?;
        let field = |i: usize| record.get(i).unwrap_or("");
        let value = parse(field(value_col), "value")?;
        let eval_index = match eval_col {
            Some(i) => field(i)
                .parse::<u64>()
                .map_err(|e| Error::Table(format!("bad eval index: {e}")))?,
            None => 0,
        };
        let position = coord_cols
            .iter()
            .map(|&i| parse(field(i), "coordinate"))
            .collect::<Result<Vec<_>>>()?;
        out.push(RatedPoint::new(position, value, eval_index));
    }
    Ok(out)
}

fn table_err(e: csv::Error) -> Error {
    Error::Table(e.to_string())
}
