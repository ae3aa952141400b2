//! The four search stages of a trial: swarm search along a shared random
//! direction, genetic recombination, proximal search toward attractors,
//! and swarm search along the coordinate axes.
//!
//! Each stage takes an evaluation budget and stops cleanly when it is
//! spent; line minimizations are capped to the budget that remains, so a
//! stage never overshoots.

use crate::distributions::{scale_for_temperature, FatTail3Params, FatTail3Shape, NotchParams, TwinPeaksParams};
use crate::domain::{euclidean_norm, line_domain, random_unit_direction, unit_vector, LineSegment};
use crate::error::{invalid, Error, Result};
use crate::linmin::{minimize_1d, LinminOptions};
use crate::objective::ObjectiveHandle;
use crate::rng::Jkiss;
use crate::swarm::{InsertOutcome, RatedPoint, Stack};
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use std::f64::consts::LN_2;

const LN_5: f64 = 1.609_437_912_434_100_4;

/// Parameters of the characteristic-distance law, per unit of dimension.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceLaw {
    pub shape: f64,
    pub scale: f64,
    pub lo: f64,
    pub hi: f64,
}

impl Default for DistanceLaw {
    fn default() -> Self {
        Self {
            shape: 2.0,
            scale: 0.3,
            lo: 0.05,
            hi: 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageOptions {
    pub linmin: LinminOptions,
    /// Stage one: refine improving candidates by line minimization.
    pub linmin_on_improvement: bool,
    pub step_law: TwinPeaksParams,
    pub notch_exponent: f64,
    pub mutation_prob: f64,
    pub mutation_shape: FatTail3Shape,
    /// Mutation core deviation is the temperature scale over this.
    pub mutation_scale_divisor: f64,
    /// Parent-selection rate at `T = 0` and `T = 1`; endpoint density
    /// ratios are `e^rate`.
    pub recombine_rate_cold: f64,
    pub recombine_rate_hot: f64,
    pub distance_law: DistanceLaw,
    pub history_capacity: usize,
    pub cos_tol: f64,
    pub attractor_retries: usize,
}

impl Default for StageOptions {
    fn default() -> Self {
        Self {
            linmin: LinminOptions::default(),
            linmin_on_improvement: true,
            step_law: TwinPeaksParams::default(),
            notch_exponent: NotchParams::DEFAULT_EXPONENT,
            mutation_prob: 0.25,
            mutation_shape: FatTail3Shape::default(),
            mutation_scale_divisor: FatTail3Params::DEFAULT_SCALE_DIVISOR,
            recombine_rate_cold: LN_5,
            recombine_rate_hot: LN_2,
            distance_law: DistanceLaw::default(),
            history_capacity: 64,
            cos_tol: 0.999,
            attractor_retries: 5,
        }
    }
}

impl StageOptions {
    pub fn validate(&self) -> Result<()> {
        self.linmin.validate()?;
        self.step_law.validate()?;
        NotchParams::new(self.step_law, self.notch_exponent)?;
        self.mutation_shape.with_scale(1.0)?;
        if !(0.0..=1.0).contains(&self.mutation_prob) {
            return Err(invalid("mutation_prob", format!("must lie in [0, 1], got {}", self.mutation_prob)));
        }
        if !(self.mutation_scale_divisor > 0.0 && self.mutation_scale_divisor.is_finite()) {
            return Err(invalid("mutation_scale_divisor", "must be positive"));
        }
        for (name, r) in [
            ("recombine_rate_cold", self.recombine_rate_cold),
            ("recombine_rate_hot", self.recombine_rate_hot),
        ] {
            if !(r > 0.0 && r.is_finite()) {
                return Err(invalid(name, format!("must be positive, got {r}")));
            }
        }
        let d = self.distance_law;
        if !(d.shape > 0.0 && d.scale > 0.0 && d.lo >= 0.0 && d.hi > d.lo && d.hi.is_finite()) {
            return Err(invalid("distance_law", "need shape, scale > 0 and 0 <= lo < hi < inf"));
        }
        if !(self.cos_tol > 0.0 && self.cos_tol <= 1.0) {
            return Err(invalid("cos_tol", format!("must lie in (0, 1], got {}", self.cos_tol)));
        }
        if self.attractor_retries == 0 {
            return Err(invalid("attractor_retries", "must be at least 1"));
        }
        Ok(())
    }
}

/// Recently searched lines, compared sign-insensitively.
#[derive(Clone, Debug, PartialEq)]
pub struct DirectionHistory {
    capacity: usize,
    entries: VecDeque<Vec<f64>>,
}

impl DirectionHistory {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            entries: VecDeque::with_capacity(capacity),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// True when `u` is not within `cos_tol` of a remembered line; a new
    /// direction is remembered, evicting the oldest.
    pub fn direction_is_new(&mut self, u: &[f64], cos_tol: f64) -> bool {
        let stale = self.entries.iter().any(|h| {
            let dot: f64 = h.iter().zip(u).map(|(a, b)| a * b).sum();
            dot.abs() >= cos_tol
        });
        if stale || self.capacity == 0 {
            return !stale;
        }
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back(u.to_vec());
        true
    }
}

/// Per-trial mutable state shared by the stages.
pub struct TrialContext<'a> {
    pub stack: Stack,
    pub rng: Jkiss,
    pub temperature: f64,
    pub history: DirectionHistory,
    objective: &'a ObjectiveHandle,
    options: StageOptions,
    stream: u64,
    evals: u64,
    trace: Option<Vec<RatedPoint>>,
}

impl<'a> TrialContext<'a> {
    pub fn new(
        objective: &'a ObjectiveHandle,
        stack: Stack,
        rng: Jkiss,
        temperature: f64,
        stream: u64,
        options: StageOptions,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&temperature) {
            return Err(invalid("temperature", format!("must lie in [0, 1], got {temperature}")));
        }
        if stream >= 1 << 32 {
            return Err(invalid("stream", "must be below 2^32"));
        }
        options.validate()?;
        Ok(Self {
            stack,
            rng,
            temperature,
            history: DirectionHistory::new(options.history_capacity),
            objective,
            options,
            stream,
            evals: 0,
            trace: None,
        })
    }

    /// Keeps every finite evaluation for later export.
    pub fn record_trace(&mut self) {
        self.trace.get_or_insert_with(Vec::new);
    }

    pub fn take_trace(&mut self) -> Vec<RatedPoint> {
        self.trace.take().unwrap_or_default()
    }

    pub fn dim(&self) -> usize {
        self.objective.dim()
    }

    pub fn options(&self) -> &StageOptions {
        &self.options
    }

    /// Evaluations made through this context.
    pub fn evals(&self) -> u64 {
        self.evals
    }

    /// Evaluates a normalized position; the index is unique across trials
    /// (stream in the high word, local count in the low word).
    pub fn evaluate(&mut self, x: &[f64]) -> (f64, u64) {
        let index = (self.stream << 32) | self.evals;
        self.evals += 1;
        let v = self.objective.evaluate(x);
        if let Some(trace) = &mut self.trace {
            if v.is_finite() {
                trace.push(RatedPoint::new(x.to_vec(), v, index));
            }
        }
        (v, index)
    }

    /// Offers a point; non-finite values are dropped.
    pub fn offer(&mut self, point: RatedPoint) -> Result<Option<InsertOutcome>> {
        if !point.value.is_finite() {
            return Ok(None);
        }
        self.stack.try_insert(point).map(Some)
    }

    /// Evaluates and offers.
    pub fn evaluate_and_offer(&mut self, x: Vec<f64>) -> Result<RatedPoint> {
        let (v, index) = self.evaluate(&x);
        let p = RatedPoint::new(x, v, index);
        self.offer(p.clone())?;
        Ok(p)
    }

    fn step_law(&self) -> Result<NotchParams> {
        let s = scale_for_temperature(self.temperature)?;
        NotchParams::new(self.options.step_law.scaled(s), self.options.notch_exponent)
    }

    /// Line minimization from `origin` (value `f0`) along `seg`, capped by
    /// `remaining`; offers and returns the best point found.
    fn line_search(
        &mut self,
        seg: &LineSegment,
        known: &[(f64, f64, u64)],
        remaining: u64,
    ) -> Result<Option<RatedPoint>> {
        let cap = (self.options.linmin.eval_cap as u64).min(remaining) as usize;
        if cap < 3 {
            return Ok(None);
        }
        let opts = self.options.linmin.with_cap(cap);
        let mut probes: Vec<(f64, u64)> = known.iter().map(|&(t, _, i)| (t, i)).collect();
        let pairs: Vec<(f64, f64)> = known.iter().map(|&(t, v, _)| (t, v)).collect();
        let mut buf = vec![0.0; seg.origin.len()];
        let result = {
            let ctx = &mut *self;
            let mut f = |t: f64| {
                seg.write_point(t, &mut buf);
                let (v, i) = ctx.evaluate(&buf);
                probes.push((t, i));
                v
            };
            minimize_1d(&mut f, seg.t_min, seg.t_max, &pairs, &opts)?
        };
        if !result.f_best.is_finite() {
            return Ok(None);
        }
        let index = probes
            .iter()
            .find(|(t, _)| *t == result.t_best)
            .map(|&(_, i)| i)
            .ok_or_else(|| Error::Internal("line minimum without a matching probe".into()))?;
        let best = RatedPoint::new(seg.point_unchecked(result.t_best), result.f_best, index);
        self.offer(best.clone())?;
        Ok(Some(best))
    }
}

/// Evaluations spent by one stage call.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageReport {
    pub evals: u64,
    /// Completed passes over the stack (sweeps, cycles).
    pub passes: u64,
}

struct Budget {
    start: u64,
    limit: u64,
}

impl Budget {
    fn new(ctx: &TrialContext<'_>, limit: u64) -> Self {
        Self {
            start: ctx.evals(),
            limit,
        }
    }

    fn spent(&self, ctx: &TrialContext<'_>) -> u64 {
        ctx.evals() - self.start
    }

    fn remaining(&self, ctx: &TrialContext<'_>) -> u64 {
        self.limit.saturating_sub(self.spent(ctx))
    }
}

/// Consecutive passes without a single evaluation after which a stage
/// gives up its remaining budget.
const IDLE_PASS_LIMIT: u32 = 8;

/// Stage one: every point steps along one random direction per sweep.
pub fn run_swarm_search(ctx: &mut TrialContext<'_>, budget: u64) -> Result<StageReport> {
    let budget = Budget::new(ctx, budget);
    let dim = ctx.dim();
    let law = ctx.step_law()?;
    let mut passes = 0;
    let mut idle = 0;
    while budget.remaining(ctx) > 0 && idle < IDLE_PASS_LIMIT {
        if ctx.stack.is_empty() {
            let x: Vec<f64> = (0..dim).map(|_| ctx.rng.uniform01()).collect();
            ctx.evaluate_and_offer(x)?;
            continue;
        }
        let before = budget.spent(ctx);
        let u = random_unit_direction(&mut ctx.rng, dim);
        let snapshot = ctx.stack.entries().to_vec();
        for p in snapshot {
            if budget.remaining(ctx) == 0 {
                break;
            }
            let (a, b) = line_domain(&p.position, &u)?;
            if !(b > a) {
                continue;
            }
            let seg = LineSegment {
                origin: p.position.clone(),
                direction: u.clone(),
                t_min: a,
                t_max: b,
            };
            let t = law.sample(&mut ctx.rng, a, b)?;
            let c = seg.point_unchecked(t);
            let (fc, ic) = ctx.evaluate(&c);
            let improved = fc < p.value;
            if improved && ctx.options.linmin_on_improvement {
                let known = [(0.0, p.value, p.eval_index), (t, fc, ic)];
                if ctx.line_search(&seg, &known, budget.remaining(ctx))?.is_some() {
                    continue;
                }
            }
            ctx.offer(RatedPoint::new(c, fc, ic))?;
        }
        passes += 1;
        idle = if budget.spent(ctx) == before { idle + 1 } else { 0 };
    }
    Ok(StageReport {
        evals: budget.spent(ctx),
        passes,
    })
}

/// Geometric interpolation of the selection rate between its cold and hot
/// values, i.e. endpoint ratios `e^cold` at `T = 0` and `e^hot` at `T = 1`.
pub fn recombine_rate(temperature: f64) -> f64 {
    let o = StageOptions::default();
    rate_between(o.recombine_rate_cold, o.recombine_rate_hot, temperature)
}

fn rate_between(cold: f64, hot: f64, t: f64) -> f64 {
    (1.0 - t) * cold + t * hot
}

/// Number of parents in `[2, n_stack]`, small counts favored.
pub fn choose_n_recombine(rng: &mut Jkiss, rate: f64, n_stack: usize) -> Result<usize> {
    if n_stack < 2 {
        return Err(invalid("n_stack", format!("need at least 2 points, got {n_stack}")));
    }
    if n_stack == 2 {
        return Ok(2);
    }
    let x = rng.bounded_exponential(rate, 0.0, 1.0)?;
    Ok((2.0 + x * (n_stack - 2) as f64).round() as usize)
}

/// A child position and how many of its coordinates were mutated.
#[derive(Clone, Debug, PartialEq)]
pub struct Child {
    pub position: Vec<f64>,
    pub mutated: usize,
}

/// Builds a child from `parents` (best first): each coordinate copied from
/// a donor favoring the better parents, then possibly mutated.
pub fn recombine_parents(
    rng: &mut Jkiss,
    parents: &[&[f64]],
    rate: f64,
    mutation_prob: f64,
    mutation: &FatTail3Params,
) -> Result<Child> {
    let n = parents.len();
    if n == 0 {
        return Err(Error::EmptyStack);
    }
    let dim = parents[0].len();
    let mut position = Vec::with_capacity(dim);
    let mut mutated = 0;
    // Each coordinate comes from its own donor, so `k` indexes a row chosen per step.
    #[allow(clippy::needless_range_loop)]
    for k in 0..dim {
        let donor = if n == 1 {
            0
        } else {
            let x = rng.bounded_exponential(rate, 0.0, 1.0)?;
            (x * (n - 1) as f64).round() as usize
        };
        let mut v = parents[donor][k];
        if mutation_prob > 0.0 && rng.uniform01() < mutation_prob {
            v = mutation.sample(rng, v, 0.0, 1.0)?;
            mutated += 1;
        }
        position.push(v);
    }
    Ok(Child { position, mutated })
}

/// One child from the best entries of the context stack.
pub fn recombine(ctx: &mut TrialContext<'_>) -> Result<Child> {
    let o = ctx.options;
    let rate = rate_between(o.recombine_rate_cold, o.recombine_rate_hot, ctx.temperature);
    let n = choose_n_recombine(&mut ctx.rng, rate, ctx.stack.len())?;
    let mutation = o
        .mutation_shape
        .with_scale(scale_for_temperature(ctx.temperature)? / o.mutation_scale_divisor)?;
    let parents: Vec<&[f64]> = ctx.stack.entries()[..n]
        .iter()
        .map(|p| p.position.as_slice())
        .collect();
    recombine_parents(&mut ctx.rng, &parents, rate, o.mutation_prob, &mutation)
}

/// Stage two: children of the best points compete for a place.
pub fn run_genetic(ctx: &mut TrialContext<'_>, budget: u64) -> Result<StageReport> {
    let budget = Budget::new(ctx, budget);
    if ctx.stack.len() < 2 {
        return Ok(StageReport::default());
    }
    let mut children = 0;
    while budget.remaining(ctx) > 0 {
        let child = recombine(ctx)?;
        ctx.evaluate_and_offer(child.position)?;
        children += 1;
    }
    Ok(StageReport {
        evals: budget.spent(ctx),
        passes: children,
    })
}

/// Attraction of a point of brightness `a0` seen from distance `d` when
/// visibility is `D`: a Gaussian kernel when cold, Lorentzian when hot.
pub fn attractiveness(a0: f64, d: f64, characteristic_distance: f64, temperature: f64) -> Result<f64> {
    if !(characteristic_distance > 0.0) {
        return Err(invalid(
            "characteristic_distance",
            format!("must be positive, got {characteristic_distance}"),
        ));
    }
    let r2 = (d / characteristic_distance).powi(2);
    Ok(a0 * ((1.0 - temperature) * (-r2).exp() + temperature / (1.0 + r2)))
}

pub fn sample_characteristic_distance(rng: &mut Jkiss, dim: usize) -> Result<f64> {
    sample_distance(rng, dim, &DistanceLaw::default())
}

fn sample_distance(rng: &mut Jkiss, dim: usize, law: &DistanceLaw) -> Result<f64> {
    if dim == 0 {
        return Err(invalid("dim", "must be at least 1"));
    }
    let n = dim as f64;
    rng.truncated_gamma(law.shape, law.scale * n, law.lo * n, law.hi * n)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttractorChoice {
    pub index: usize,
    pub attractiveness: f64,
    pub characteristic_distance: f64,
}

/// Every other stack entry ranked by attractiveness as seen from entry
/// `q`, brightest first (ties to the better-ranked entry).
pub fn rank_attractors(stack: &Stack, q: usize, characteristic_distance: f64, temperature: f64) -> Result<Vec<AttractorChoice>> {
    let entries = stack.entries();
    let origin = entries.get(q).ok_or(Error::EmptyStack)?;
    let worst = stack.worst().ok_or(Error::EmptyStack)?.value;
    let mut out = Vec::with_capacity(entries.len().saturating_sub(1));
    for (i, p) in entries.iter().enumerate() {
        if i == q {
            continue;
        }
        let d = crate::domain::manhattan(&origin.position, &p.position);
        let a = attractiveness(worst - p.value, d, characteristic_distance, temperature)?;
        out.push(AttractorChoice {
            index: i,
            attractiveness: a,
            characteristic_distance,
        });
    }
    out.sort_by(|a, b| b.attractiveness.total_cmp(&a.attractiveness).then(a.index.cmp(&b.index)));
    Ok(out)
}

/// Stage three: from worst toward best, search the line to an attractor.
pub fn run_proximal(ctx: &mut TrialContext<'_>, budget: u64) -> Result<StageReport> {
    let budget = Budget::new(ctx, budget);
    if ctx.stack.len() < 2 {
        return Ok(StageReport::default());
    }
    let dim = ctx.dim();
    let mut passes = 0;
    let mut idle = 0;
    'outer: while budget.remaining(ctx) > 0 && idle < IDLE_PASS_LIMIT {
        let before = budget.spent(ctx);
        let mut rank = ctx.stack.len();
        while rank > 0 {
            rank = rank.min(ctx.stack.len()) - 1;
            let q = ctx.stack.entries()[rank].clone();
            let d_char = sample_distance(&mut ctx.rng, dim, &ctx.options.distance_law)?;
            let choices = rank_attractors(&ctx.stack, rank, d_char, ctx.temperature)?;
            let attractors: Vec<RatedPoint> = choices
                .iter()
                .map(|c| ctx.stack.entries()[c.index].clone())
                .collect();
            let mut tries = 0;
            for p in attractors {
                if tries >= ctx.options.attractor_retries {
                    break;
                }
                let diff: Vec<f64> = p.position.iter().zip(&q.position).map(|(a, b)| a - b).collect();
                let Some(u) = unit_vector(&diff) else { continue };
                let cos_tol = ctx.options.cos_tol;
                if !ctx.history.direction_is_new(&u, cos_tol) {
                    continue;
                }
                let remaining = budget.remaining(ctx);
                if remaining < 3 {
                    break 'outer;
                }
                let (a, b) = line_domain(&q.position, &u)?;
                let seg = LineSegment {
                    origin: q.position.clone(),
                    direction: u,
                    t_min: a,
                    t_max: b,
                };
                let mut known = vec![(0.0, q.value, q.eval_index)];
                let t_p = euclidean_norm(&diff);
                if t_p <= b {
                    known.push((t_p, p.value, p.eval_index));
                }
                tries += 1;
                match ctx.line_search(&seg, &known, remaining)? {
                    Some(best) if best.value < q.value => break,
                    _ => {}
                }
            }
        }
        passes += 1;
        idle = if budget.spent(ctx) == before { idle + 1 } else { 0 };
    }
    Ok(StageReport {
        evals: budget.spent(ctx),
        passes,
    })
}

/// A fresh random order of the coordinate axes.
pub fn axis_order(rng: &mut Jkiss, dim: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dim).collect();
    rng.shuffle(&mut order);
    order
}

/// Stage four: the whole swarm moves along one coordinate axis at a time.
pub fn run_axes(ctx: &mut TrialContext<'_>, budget: u64) -> Result<StageReport> {
    let budget = Budget::new(ctx, budget);
    if ctx.stack.is_empty() {
        return Ok(StageReport::default());
    }
    let dim = ctx.dim();
    let law = ctx.step_law()?;
    let mut passes = 0;
    'sweeps: while budget.remaining(ctx) > 0 {
        for k in axis_order(&mut ctx.rng, dim) {
            let snapshot = ctx.stack.entries().to_vec();
            for p in snapshot {
                if budget.remaining(ctx) == 0 {
                    break 'sweeps;
                }
                let seg = LineSegment::along_axis(&p.position, k)?;
                let t = law.sample(&mut ctx.rng, seg.t_min, seg.t_max)?;
                let probe = seg.point_unchecked(t);
                let (fv, iv) = ctx.evaluate(&probe);
                if !(fv < p.value) {
                    continue;
                }
                let known = [(0.0, p.value, p.eval_index), (t, fv, iv)];
                if ctx.line_search(&seg, &known, budget.remaining(ctx))?.is_none() {
                    ctx.offer(RatedPoint::new(probe, fv, iv))?;
                }
            }
        }
        passes += 1;
    }
    Ok(StageReport {
        evals: budget.spent(ctx),
        passes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::manhattan;
    use crate::swarm::rank_order;
    use std::cmp::Ordering;

    fn sphere_at(c: f64, dim: usize) -> ObjectiveHandle {
        ObjectiveHandle::from_fn(dim, move |x| x.iter().map(|v| (v - c).powi(2)).sum()).unwrap()
    }

    fn seeded<'a>(obj: &'a ObjectiveHandle, points: &[Vec<f64>], capacity: usize, r_eq: f64, t: f64, seed: u64) -> TrialContext<'a> {
        let mut ctx = TrialContext::new(obj, Stack::new(capacity, r_eq).unwrap(), Jkiss::seed(seed, 0), t, 0, StageOptions::default()).unwrap();
        for p in points {
            ctx.evaluate_and_offer(p.clone()).unwrap();
        }
        ctx
    }

    fn check_invariants(stack: &Stack) {
        let e = stack.entries();
        assert!(e.len() <= stack.capacity());
        assert!(e.windows(2).all(|w| rank_order(&w[0], &w[1]) == Ordering::Less));
        for (i, a) in e.iter().enumerate() {
            assert!(a.position.iter().all(|v| (0.0..=1.0).contains(v)));
            for b in &e[i + 1..] {
                assert!(manhattan(&a.position, &b.position) >= stack.r_eq());
            }
        }
    }

    fn diagonal(dim: usize) -> Vec<Vec<f64>> {
        [0.25, 0.5, 0.75].iter().map(|&c| vec![c; dim]).collect()
    }

    #[test]
    fn swarm_search_improves_on_the_seeds() {
        let obj = sphere_at(0.0, 2);
        let mut ctx = seeded(&obj, &diagonal(2), 20, 0.02, 1.0, 1);
        let seed_best = ctx.stack.best_value().unwrap();
        let r = run_swarm_search(&mut ctx, 500).unwrap();
        assert_eq!(r.evals, 500);
        assert!(ctx.stack.best_value().unwrap() < seed_best);
        check_invariants(&ctx.stack);
    }

    #[test]
    fn zero_budget_is_a_no_op() {
        let obj = sphere_at(0.0, 2);
        let mut ctx = seeded(&obj, &diagonal(2), 20, 0.02, 1.0, 1);
        let before = ctx.stack.clone();
        for stage in [run_swarm_search, run_genetic, run_proximal, run_axes] {
            assert_eq!(stage(&mut ctx, 0).unwrap().evals, 0);
        }
        assert_eq!(ctx.stack, before);
    }

    #[test]
    fn rejected_candidates_leave_the_stack() {
        // A single seed at the optimum: every candidate is worse, and the
        // full stack has no room.
        let obj = sphere_at(0.5, 2);
        let mut ctx = seeded(&obj, &[vec![0.5, 0.5]], 1, 0.01, 0.5, 2);
        let before = ctx.stack.clone();
        let r = run_swarm_search(&mut ctx, 50).unwrap();
        assert_eq!(r.evals, 50);
        assert_eq!(ctx.stack, before);
    }

    #[test]
    fn raw_candidates_without_linmin() {
        let obj = sphere_at(0.0, 3);
        let mut ctx = seeded(&obj, &diagonal(3), 30, 0.01, 1.0, 3);
        ctx.options.linmin_on_improvement = false;
        run_swarm_search(&mut ctx, 200).unwrap();
        // Without line minimization every evaluation is a single step.
        assert_eq!(ctx.evals(), 203);
        check_invariants(&ctx.stack);
    }

    #[test]
    fn recombine_rate_endpoints() {
        assert!((recombine_rate(1.0) - LN_2).abs() < 1e-15);
        assert!((recombine_rate(0.0) - 5f64.ln()).abs() < 1e-15);
        assert!((recombine_rate(0.5).exp() - 10f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn choose_n_range_and_skew() {
        let mut rng = Jkiss::seed(5, 5);
        assert_eq!(choose_n_recombine(&mut rng, 1.0, 2).unwrap(), 2);
        assert!(choose_n_recombine(&mut rng, 1.0, 1).is_err());
        let n_stack = 120;
        let (mut low, mut high) = (0u64, 0u64);
        for _ in 0..100_000 {
            let n = choose_n_recombine(&mut rng, recombine_rate(0.0), n_stack).unwrap();
            assert!((2..=n_stack).contains(&n));
            // Bins of 12 counts at each end of [2, 120].
            if n <= 13 {
                low += 1;
            } else if n >= 109 {
                high += 1;
            }
        }
        // Ratio of the exponential masses of the two end bins.
        let w = 11.5 / 118.0;
        let expected = 5f64.powf(1.0 - w);
        let ratio = low as f64 / high as f64;
        assert!((ratio - expected).abs() < 0.1 * expected, "{ratio} vs {expected}");
    }

    #[test]
    fn identical_parents_and_no_mutation() {
        let mut rng = Jkiss::seed(6, 0);
        let p = [0.1, 0.7, 0.3];
        let parents = [&p[..], &p[..], &p[..]];
        let m = FatTail3Params::for_temperature(0.5).unwrap();
        for _ in 0..1000 {
            let c = recombine_parents(&mut rng, &parents, 1.0, 0.25, &m).unwrap();
            let same = c.position.iter().zip(&p).filter(|(a, b)| a == b).count();
            assert!(same >= 3 - c.mutated);
        }
        let a = [0.1, 0.2];
        let b = [0.8, 0.9];
        let parents = [&a[..], &b[..]];
        for _ in 0..1000 {
            let c = recombine_parents(&mut rng, &parents, 1.0, 0.0, &m).unwrap();
            assert_eq!(c.mutated, 0);
            assert!(c.position[0] == 0.1 || c.position[0] == 0.8);
            assert!(c.position[1] == 0.2 || c.position[1] == 0.9);
        }
    }

    #[test]
    fn mutation_fraction() {
        let mut rng = Jkiss::seed(7, 0);
        let a = [0.3; 4];
        let parents = [&a[..]];
        let m = FatTail3Params::for_temperature(1.0).unwrap();
        let mut mutated = 0;
        let children = 100_000;
        for _ in 0..children {
            let c = recombine_parents(&mut rng, &parents, 1.0, 0.25, &m).unwrap();
            assert!(c.position.iter().all(|v| (0.0..=1.0).contains(v)));
            mutated += c.mutated;
        }
        let frac = mutated as f64 / (4 * children) as f64;
        assert!((frac - 0.25).abs() < 0.01, "{frac}");
    }

    #[test]
    fn genetic_improves_two_point_stack() {
        let obj = sphere_at(0.0, 2);
        let mut ctx = seeded(&obj, &[vec![0.2, 0.2], vec![0.8, 0.8]], 30, 0.01, 0.5, 9);
        let best = ctx.stack.best_value().unwrap();
        let r = run_genetic(&mut ctx, 200).unwrap();
        assert_eq!(r.evals, 200);
        assert_eq!(r.passes, 200);
        assert!(ctx.stack.best_value().unwrap() < best);
        check_invariants(&ctx.stack);
    }

    #[test]
    fn attractiveness_identities() {
        assert_eq!(attractiveness(2.0, 0.0, 1.0, 0.3).unwrap(), 2.0);
        assert!((attractiveness(2.0, 1.5, 1.5, 1.0).unwrap() - 1.0).abs() < 1e-15);
        assert!((attractiveness(2.0, 1.5, 1.5, 0.0).unwrap() - 2.0 / E).abs() < 1e-15);
        assert!(attractiveness(1.0, 1.0, 0.0, 0.5).is_err());
    }

    use std::f64::consts::E;

    #[test]
    fn kernels_rank_far_bright_against_near_dim() {
        // Far and bright versus near and dim.
        let (far, near) = ((10.0, 3.0), (1.0, 1.5));
        let d = 1.0;
        let hot = |(a0, dist): (f64, f64)| attractiveness(a0, dist, d, 1.0).unwrap();
        let cold = |(a0, dist): (f64, f64)| attractiveness(a0, dist, d, 0.0).unwrap();
        assert!(hot(far) > hot(near));
        assert!(cold(far) < cold(near));
    }

    #[test]
    fn characteristic_distance_bounds_and_mode() {
        let mut rng = Jkiss::seed(12, 0);
        let dim = 11;
        let draws: Vec<f64> = (0..100_000)
            .map(|_| sample_characteristic_distance(&mut rng, dim).unwrap())
            .collect();
        assert!(draws.iter().all(|d| (0.55..=11.0).contains(d)));
        // Unit-wide bins: the gamma density is flat near its mode, so
        // finer bins would be dominated by sampling noise.
        let mut hist = [0u32; 11];
        for d in &draws {
            hist[(*d as usize).min(10)] += 1;
        }
        let peak = hist.iter().enumerate().max_by_key(|(_, c)| **c).unwrap().0;
        assert_eq!(peak, 3, "{hist:?}");
        assert!(draws[..100].windows(2).any(|w| w[0] != w[1]));
    }

    #[test]
    fn direction_history_semantics() {
        let mut h = DirectionHistory::new(2);
        let u = [0.6, 0.8];
        assert!(h.direction_is_new(&u, 0.999));
        assert!(!h.direction_is_new(&u, 0.999));
        assert!(!h.direction_is_new(&[-0.6, -0.8], 0.999));
        assert!(h.direction_is_new(&[1.0, 0.0], 0.999));
        assert!(h.direction_is_new(&[0.0, 1.0], 0.999));
        // Capacity 2: the first direction has been evicted.
        assert!(h.direction_is_new(&u, 0.999));
        assert_eq!(h.len(), 2);
    }

    #[test]
    fn proximal_two_point_stack() {
        let obj = sphere_at(0.5, 2);
        let mut ctx = seeded(&obj, &[vec![0.9, 0.9], vec![0.1, 0.05]], 10, 0.01, 0.5, 4);
        let worst = ctx.stack.worst().unwrap().value;
        run_proximal(&mut ctx, 60).unwrap();
        let improved = ctx.stack.entries().iter().any(|p| p.value < worst && p.position != vec![0.1, 0.05]);
        assert!(improved);
        assert!(ctx.stack.best_value().unwrap() < 0.01);
        check_invariants(&ctx.stack);
    }

    #[test]
    fn proximal_skips_stale_directions() {
        let obj = sphere_at(0.5, 2);
        let mut ctx = seeded(&obj, &[vec![0.9, 0.9], vec![0.1, 0.1]], 2, 0.01, 0.5, 4);
        ctx.history.direction_is_new(&[std::f64::consts::FRAC_1_SQRT_2; 2], 0.999);
        let r = run_proximal(&mut ctx, 1000).unwrap();
        assert_eq!(r.evals, 0);
    }

    #[test]
    fn axes_separable_sphere() {
        let obj = sphere_at(0.3, 4);
        let mut ctx = seeded(&obj, &[vec![0.9, 0.1, 0.8, 0.6]], 5, 0.01, 0.0, 13);
        run_axes(&mut ctx, 400).unwrap();
        let best = ctx.stack.best().unwrap();
        assert!(best.position.iter().all(|v| (v - 0.3).abs() <= 1e-4), "{best:?}");
    }

    #[test]
    fn axis_orders_vary() {
        let mut rng = Jkiss::seed(14, 0);
        let orders: Vec<Vec<usize>> = (0..100).map(|_| axis_order(&mut rng, 11)).collect();
        let mut distinct = orders.clone();
        distinct.sort();
        distinct.dedup();
        assert!(distinct.len() > 95);
    }

    #[test]
    fn stages_are_deterministic_and_monotone() {
        let obj = ObjectiveHandle::from_fn(3, |x| x.iter().map(|v| (v - 0.37).powi(2) + 0.1 * (1.0 - (20.0 * v).cos())).sum()).unwrap();
        let run = || {
            let mut ctx = seeded(&obj, &diagonal(3), 40, 0.05, 0.6, 21);
            let mut bests = vec![ctx.stack.best_value().unwrap()];
            run_swarm_search(&mut ctx, 300).unwrap();
            bests.push(ctx.stack.best_value().unwrap());
            run_genetic(&mut ctx, 300).unwrap();
            bests.push(ctx.stack.best_value().unwrap());
            run_proximal(&mut ctx, 300).unwrap();
            bests.push(ctx.stack.best_value().unwrap());
            run_axes(&mut ctx, 300).unwrap();
            bests.push(ctx.stack.best_value().unwrap());
            check_invariants(&ctx.stack);
            assert!(ctx.evals() <= 3 + 1200);
            (ctx.stack, bests)
        };
        let (a, bests) = run();
        let (b, _) = run();
        assert_eq!(a, b);
        assert!(bests.windows(2).all(|w| w[1] <= w[0]));
    }
}
