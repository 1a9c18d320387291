//! Exact simulation by Ogata's modified thinning against a piecewise
//! constant dominating intensity.
//!
//! Random draws are consumed in a fixed order: per proposal one uniform for
//! the waiting time and one for acceptance; per accepted point one uniform
//! for the source, then the type, then the location (uniform pairs, plus one
//! uniform per pair for the kernel test on epidemic births), then the marks.

mod marks;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use marks::{
    EmpiricalMarks, IndependentMarks, MarkDistribution, MarkSampler, MarkScheme, Marks, NoMarks,
};

use crate::error::{Error, Result};
use crate::geometry::{point_in_polygon, BBox, Point};
use crate::likelihood::SourceRegion;
use crate::model::{Event, Model, ParameterVector};

/// Generator used for all simulation draws.
pub type SimRng = ChaCha8Rng;

/// Cap on rejection-sampling draws for a single location.
pub const MAX_REJECTION_DRAWS: usize = 1_000_000;

/// Cap on the number of simulated events, guarding against explosive
/// parameter values.
pub const DEFAULT_MAX_EVENTS: usize = 1_000_000;

/// Origin of a simulated event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventSource {
    Endemic,
    /// Index of the triggering event.
    Parent(usize),
}

impl EventSource {
    pub fn parent(self) -> Option<usize> {
        match self {
            EventSource::Endemic => None,
            EventSource::Parent(j) => Some(j),
        }
    }
}

/// Upper bound of the ground intensity, valid on `(t, next_changepoint]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DominatingIntensity {
    pub value: f64,
    pub next_changepoint: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationResult {
    pub events: Vec<Event>,
    pub sources: Vec<EventSource>,
    pub proposals: u64,
    pub accepted: u64,
    pub rejected: u64,
    pub seed: u64,
    pub stream: u64,
    pub end_time: f64,
    /// False when the event cap stopped the simulation before `end_time`.
    pub complete: bool,
}

#[derive(Debug, Clone)]
struct SourceInfo {
    /// `q_{κ_j,•} exp(η_j)`.
    weight: f64,
    log_alpha: f64,
    log_sigma: f64,
    /// `F_j`.
    spatial: f64,
}

/// Ground process `λ_g(t) = Σ_κ ∫_W λ*(t, s, κ) ds` of a model with fixed
/// parameters, together with its history.
pub struct GroundProcess<'m> {
    model: &'m Model,
    theta: ParameterVector,
    /// Endemic ground rate per interval.
    endemic_rate: Vec<f64>,
    /// Cumulative tile weights `|A_ξ| ρ exp(β'z)` per interval.
    tile_cdf: Vec<Vec<f64>>,
    type_cdf: Vec<f64>,
    events: Vec<Event>,
    info: Vec<SourceInfo>,
}

fn cumulative(weights: impl IntoIterator<Item = f64>) -> Vec<f64> {
    let mut acc = crate::summation::NeumaierSum::new();
    weights
        .into_iter()
        .map(|w| {
            acc.add(w);
            acc.value()
        })
        .collect()
}

/// Index `i` with `cdf[i-1] <= u < cdf[i]`, skipping zero-weight entries.
fn pick(cdf: &[f64], u: f64) -> usize {
    let target = u * cdf.last().copied().unwrap_or(0.0);
    cdf.partition_point(|&c| c <= target)
        .min(cdf.len().saturating_sub(1))
}

impl<'m> GroundProcess<'m> {
    pub fn new(model: &'m Model, theta: &ParameterVector) -> Result<Self> {
        theta.check(model.layout())?;
        let grid = model.grid();
        let mass = model.intercept_mass(theta);
        let mut endemic_rate = Vec::with_capacity(grid.n_intervals());
        let mut tile_cdf = Vec::with_capacity(grid.n_intervals());
        for tau in 0..grid.n_intervals() {
            let cdf = cumulative((0..grid.n_tiles()).map(|xi| {
                let cell = grid.cell(tau, xi);
                let rho = grid.offsets()[cell];
                if rho == 0.0 {
                    0.0
                } else {
                    grid.tiles()[xi].area * rho * model.endemic_linear_predictor(theta, cell).exp()
                }
            }));
            endemic_rate.push(mass * cdf.last().copied().unwrap_or(0.0));
            tile_cdf.push(cdf);
        }
        let type_cdf = cumulative((0..model.n_types()).map(|k| model.intercept(theta, k).exp()));
        Ok(GroundProcess {
            model,
            theta: theta.clone(),
            endemic_rate,
            tile_cdf,
            type_cdf,
            events: Vec::new(),
            info: Vec::new(),
        })
    }

    /// Ground process with existing (time-ordered) events as history.
    pub fn with_history(
        model: &'m Model,
        theta: &ParameterVector,
        events: &[Event],
    ) -> Result<Self> {
        let mut g = GroundProcess::new(model, theta)?;
        for e in events {
            g.push(e.clone())?;
        }
        Ok(g)
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    /// `F_j` of each event in the history.
    pub fn spatial_integrals(&self) -> Vec<f64> {
        self.info.iter().map(|i| i.spatial).collect()
    }

    /// Appends an event, computing its `F_j` once.
    pub fn push(&mut self, event: Event) -> Result<()> {
        if let Some(last) = self.events.last() {
            if !(event.time > last.time) {
                return Err(Error::TiesPresent {
                    index: self.events.len(),
                    time: event.time,
                });
            }
        }
        let model = self.model;
        let info = if model.has_epidemic() {
            let m = model.epidemic_covariates(&event)?;
            let log_sigma = model.log_sigma(&self.theta, event.kind);
            let kernel = model.spatial_kernel();
            let region = SourceRegion::build(
                model.grid(),
                event.location,
                model.delta(),
                kernel,
                &model.spec().cubature,
                (model.delta() / 10.0).ln(),
            );
            SourceInfo {
                weight: model.out_degree(event.kind) * model.eta(&self.theta, &m).exp(),
                log_alpha: model.log_alpha(&self.theta, event.kind),
                log_sigma,
                spatial: region.integral(kernel, log_sigma).0,
            }
        } else {
            SourceInfo {
                weight: 0.0,
                log_alpha: 0.0,
                log_sigma: 0.0,
                spatial: 0.0,
            }
        };
        self.events.push(event);
        self.info.push(info);
        Ok(())
    }

    /// Index of the interval containing times just after `t`.
    fn interval_after(&self, t: f64) -> usize {
        let ivs = self.model.grid().intervals();
        ivs.partition_point(|iv| iv.end <= t).min(ivs.len() - 1)
    }

    /// Events with `t_j + ε > t`, among those up to and including `t`.
    fn active_range(&self, t: f64) -> std::ops::Range<usize> {
        let eps = self.model.eps();
        let start = self.events.partition_point(|e| e.time + eps <= t);
        let end = self.events.partition_point(|e| e.time <= t);
        start..end.max(start)
    }

    /// Epidemic masses `q e^η g(t − t_j) F_j` of the sources infective at `t`.
    fn epidemic_masses(&self, t: f64) -> Vec<(usize, f64)> {
        if !self.model.has_epidemic() {
            return Vec::new();
        }
        let eps = self.model.eps();
        let g = self.model.temporal_kernel();
        let start = self.events.partition_point(|e| e.time + eps < t);
        (start..self.events.len())
            .take_while(|&j| self.events[j].time < t)
            .filter_map(|j| {
                let dt = t - self.events[j].time;
                let i = &self.info[j];
                (dt > 0.0 && dt <= eps)
                    .then(|| (j, i.weight * g.value(dt, i.log_alpha) * i.spatial))
            })
            .collect()
    }

    fn endemic_at(&self, t: f64) -> Result<f64> {
        Ok(self.endemic_rate[self.model.grid().interval_of(t)?])
    }

    /// `λ_g(t)` given the history strictly before `t`.
    pub fn ground_intensity(&self, t: f64) -> Result<f64> {
        let epi: f64 = self.epidemic_masses(t).iter().map(|(_, m)| m).sum();
        Ok(self.endemic_at(t)? + epi)
    }

    /// Dominating intensity on `(t, changepoint]` with `g` replaced by its
    /// supremum; the changepoint is the next interval end, source expiry
    /// or `t_end`, whichever comes first.
    pub fn dominating_intensity(&self, t: f64, t_end: f64) -> DominatingIntensity {
        let tau = self.interval_after(t);
        let mut next = self.model.grid().intervals()[tau].end.min(t_end);
        let mut value = self.endemic_rate[tau];
        if self.model.has_epidemic() {
            let sup = self.model.temporal_kernel().sup();
            let eps = self.model.eps();
            let mut acc = crate::summation::NeumaierSum::new();
            for j in self.active_range(t) {
                let i = &self.info[j];
                acc.add(i.weight * sup * i.spatial);
                next = next.min(self.events[j].time + eps);
            }
            value += acc.value();
        }
        DominatingIntensity {
            value,
            next_changepoint: next,
        }
    }

    /// Draws the source of a point accepted at `t` with probabilities
    /// proportional to the ground intensity components.
    pub fn sample_source(&self, t: f64, rng: &mut SimRng) -> Result<EventSource> {
        let endemic = self.endemic_at(t)?;
        let masses = self.epidemic_masses(t);
        let cdf = cumulative(std::iter::once(endemic).chain(masses.iter().map(|(_, m)| *m)));
        if !(cdf.last().copied().unwrap_or(0.0) > 0.0) {
            return Err(Error::Invariant(format!(
                "accepted point at t = {t} has zero ground intensity"
            )));
        }
        let k = pick(&cdf, rng.random::<f64>());
        Ok(if k == 0 {
            EventSource::Endemic
        } else {
            EventSource::Parent(masses[k - 1].0)
        })
    }

    /// Draws type and location of a new event at `t` from `source`.
    pub fn sample_location_and_type(
        &self,
        t: f64,
        source: EventSource,
        rng: &mut SimRng,
    ) -> Result<(Point, usize)> {
        let grid = self.model.grid();
        match source {
            EventSource::Endemic => {
                let kind = pick(&self.type_cdf, rng.random::<f64>());
                let tau = grid.interval_of(t)?;
                let xi = pick(&self.tile_cdf[tau], rng.random::<f64>());
                let tile = &grid.tiles()[xi];
                let b = tile.bbox();
                for _ in 0..MAX_REJECTION_DRAWS {
                    let p = uniform_in(&b, rng);
                    if point_in_polygon(p, &tile.polygon) {
                        return Ok((p, kind));
                    }
                }
                Err(Error::RejectionExhausted {
                    draws: MAX_REJECTION_DRAWS,
                    context: format!("tile '{}' is degenerate", tile.id),
                })
            }
            EventSource::Parent(j) => {
                let parent = self
                    .events
                    .get(j)
                    .ok_or_else(|| Error::Invariant(format!("parent {j} is not in the history")))?;
                let targets = self.model.transmission().targets(parent.kind);
                if targets.is_empty() {
                    return Err(Error::Invariant(format!(
                        "parent {j} cannot trigger any type"
                    )));
                }
                let kind = targets[rng.random_range(0..targets.len())];
                let delta = self.model.delta();
                let f = self.model.spatial_kernel();
                let log_sigma = self.info[j].log_sigma;
                let w = grid.bbox();
                let c = parent.location;
                let b = BBox {
                    min: Point::new((c.x - delta).max(w.min.x), (c.y - delta).max(w.min.y)),
                    max: Point::new((c.x + delta).min(w.max.x), (c.y + delta).min(w.max.y)),
                };
                for _ in 0..MAX_REJECTION_DRAWS {
                    let p = uniform_in(&b, rng);
                    let d2 = p.dist2(c);
                    let u = rng.random::<f64>();
                    if d2 <= delta * delta
                        && u * f.sup() <= f.value(d2, log_sigma)
                        && grid.contains(p)
                    {
                        return Ok((p, kind));
                    }
                }
                Err(Error::RejectionExhausted {
                    draws: MAX_REJECTION_DRAWS,
                    context: format!("interaction region of event {j} is degenerate"),
                })
            }
        }
    }
}

fn uniform_in(b: &BBox, rng: &mut SimRng) -> Point {
    let x = b.min.x + b.width() * rng.random::<f64>();
    let y = b.min.y + b.height() * rng.random::<f64>();
    Point::new(x, y)
}

/// Simulates on `(0, t_end]` from the seed's default stream.
pub fn simulate(
    model: &Model,
    theta: &ParameterVector,
    marks: &dyn MarkSampler,
    t_end: f64,
    seed: u64,
) -> Result<SimulationResult> {
    simulate_stream(model, theta, marks, t_end, seed, 0, DEFAULT_MAX_EVENTS)
}

/// Simulates on `(0, t_end]` using stream `stream` of the generator seeded
/// with `seed`, stopping after `max_events` events.
pub fn simulate_stream(
    model: &Model,
    theta: &ParameterVector,
    marks: &dyn MarkSampler,
    t_end: f64,
    seed: u64,
    stream: u64,
    max_events: usize,
) -> Result<SimulationResult> {
    let period = model.grid().end_time();
    if !(t_end > 0.0 && t_end <= period) {
        return Err(Error::InvalidArgument(format!(
            "simulation end {t_end} must lie in (0, {period}]"
        )));
    }
    let mut rng = SimRng::seed_from_u64(seed);
    rng.set_stream(stream);
    let mut process = GroundProcess::new(model, theta)?;
    let mut sources = Vec::new();
    let (mut proposals, mut rejected) = (0u64, 0u64);
    let mut t = 0.0;
    let mut complete = true;
    while t < t_end {
        let dom = process.dominating_intensity(t, t_end);
        if !(dom.value > 0.0) {
            t = dom.next_changepoint;
            continue;
        }
        let wait = -(1.0 - rng.random::<f64>()).ln() / dom.value;
        let candidate = t + wait;
        if candidate > dom.next_changepoint {
            t = dom.next_changepoint;
            continue;
        }
        proposals += 1;
        let u = rng.random::<f64>();
        let lambda = process.ground_intensity(candidate)?;
        if lambda > dom.value * (1.0 + 1e-12) {
            return Err(Error::Invariant(format!(
                "ground intensity {lambda} exceeds its bound {} at t = {candidate}",
                dom.value
            )));
        }
        t = candidate;
        if u * dom.value > lambda {
            rejected += 1;
            continue;
        }
        if process.events().len() >= max_events {
            complete = false;
            break;
        }
        let source = process.sample_source(t, &mut rng)?;
        let (location, kind) = process.sample_location_and_type(t, source, &mut rng)?;
        let parent = source.parent().map(|j| &process.events()[j]);
        let mut event = Event::new(t, location, kind);
        event.marks = marks.sample(kind, parent, &mut rng)?;
        process.push(event)?;
        sources.push(source);
    }
    let events = process.events.clone();
    Ok(SimulationResult {
        accepted: events.len() as u64,
        events,
        sources,
        proposals,
        rejected,
        seed,
        stream,
        end_time: t_end,
        complete,
    })
}

/// Independent replicates on streams `0..n`, run in parallel.
pub fn simulate_replicates(
    model: &Model,
    theta: &ParameterVector,
    marks: &dyn MarkSampler,
    t_end: f64,
    seed: u64,
    n: usize,
) -> Result<Vec<SimulationResult>> {
    (0..n as u64)
        .into_par_iter()
        .map(|r| simulate_stream(model, theta, marks, t_end, seed, r, DEFAULT_MAX_EVENTS))
        .collect()
}
