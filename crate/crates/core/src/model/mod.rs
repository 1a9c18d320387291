//! Events, grids, parameters and pointwise evaluation of the conditional
//! intensity λ*(t, s, κ) = h(t, s, κ) + e*(t, s, κ).

mod grid;
mod history;
mod kernels;
mod params;
mod spec;

use std::collections::BTreeMap;
use std::sync::Arc;

pub use grid::{Interval, SpaceTimeGrid, Tile};
pub use history::History;
pub use kernels::{SpatialKernel, TemporalKernel};
pub use params::{ParamLayout, ParameterVector};
pub use spec::{
    CubatureSettings, EndemicSpec, EpidemicSpec, InterceptMode, ModelSpec, OptimizerSettings,
    SpatialFamily, TemporalFamily, TieScheme, TransmissionMatrix,
};

use crate::error::{Error, Result};
use crate::geometry::Point;

/// One observed or simulated case. `kind` is the 0-based index into the
/// model's type table.
#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub time: f64,
    pub location: Point,
    pub kind: usize,
    pub marks: BTreeMap<String, f64>,
}

impl Event {
    pub fn new(time: f64, location: Point, kind: usize) -> Self {
        Event {
            time,
            location,
            kind,
            marks: BTreeMap::new(),
        }
    }

    pub fn with_mark(mut self, name: &str, value: f64) -> Self {
        self.marks.insert(name.to_string(), value);
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Factor {
    Mark(String),
    Type(usize),
}

/// A model specification bound to a grid, with the endemic design matrix
/// and epidemic terms resolved.
#[derive(Debug, Clone)]
pub struct Model {
    spec: ModelSpec,
    grid: Arc<SpaceTimeGrid>,
    layout: ParamLayout,
    /// `n_cells × p` endemic covariates, row-major by grid cell.
    design: Vec<f64>,
    epi_terms: Vec<Vec<Factor>>,
    q: TransmissionMatrix,
    q_out: Vec<f64>,
    temporal: TemporalKernel,
    spatial: SpatialKernel,
}

impl Model {
    pub fn new(spec: ModelSpec, grid: Arc<SpaceTimeGrid>) -> Result<Self> {
        spec.validate()?;
        let p = spec.endemic.terms.len();
        let cells = grid.n_cells();
        let mut design = vec![0.0; cells * p];
        for (c, name) in spec.endemic.terms.iter().enumerate() {
            let table = grid.covariate(name).ok_or_else(|| {
                Error::Validation(format!(
                    "endemic term '{name}' is neither a grid covariate nor a built-in time term"
                ))
            })?;
            for (cell, v) in table.into_iter().enumerate() {
                design[cell * p + c] = v;
            }
        }
        let mut epi_terms = Vec::new();
        if let Some(epi) = &spec.epidemic {
            for term in &epi.terms {
                let factors = term
                    .split('*')
                    .map(|f| parse_factor(f.trim(), &spec))
                    .collect::<Result<Vec<_>>>()?;
                epi_terms.push(factors);
            }
        }
        let q = spec.transmission();
        let q_out = (0..spec.n_types())
            .map(|k| q.out_degree(k) as f64)
            .collect();
        let temporal = match spec.temporal {
            TemporalFamily::Constant => TemporalKernel::Constant,
            TemporalFamily::Exponential { .. } => TemporalKernel::Exponential,
        };
        let spatial = match spec.spatial {
            SpatialFamily::Constant => SpatialKernel::Constant,
            SpatialFamily::Gaussian { .. } => SpatialKernel::Gaussian,
        };
        let layout = ParamLayout::new(&spec);
        Ok(Model {
            spec,
            grid,
            layout,
            design,
            epi_terms,
            q,
            q_out,
            temporal,
            spatial,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn grid(&self) -> &SpaceTimeGrid {
        &self.grid
    }

    pub fn grid_arc(&self) -> Arc<SpaceTimeGrid> {
        Arc::clone(&self.grid)
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn n_types(&self) -> usize {
        self.spec.n_types()
    }

    pub fn n_params(&self) -> usize {
        self.layout.len()
    }

    pub fn has_epidemic(&self) -> bool {
        self.spec.has_epidemic()
    }

    pub fn eps(&self) -> f64 {
        self.spec.eps
    }

    pub fn delta(&self) -> f64 {
        self.spec.delta
    }

    pub fn transmission(&self) -> &TransmissionMatrix {
        &self.q
    }

    /// `q_{κ,•}`: number of types a type-`kind` event can trigger.
    pub fn out_degree(&self, kind: usize) -> f64 {
        self.q_out[kind]
    }

    pub fn temporal_kernel(&self) -> TemporalKernel {
        self.temporal
    }

    pub fn spatial_kernel(&self) -> SpatialKernel {
        self.spatial
    }

    pub fn n_endemic_terms(&self) -> usize {
        self.spec.endemic.terms.len()
    }

    pub fn n_epidemic_terms(&self) -> usize {
        self.epi_terms.len()
    }

    /// Endemic covariates `z` of grid cell `cell`.
    #[inline]
    pub fn covariates(&self, cell: usize) -> &[f64] {
        let p = self.n_endemic_terms();
        &self.design[cell * p..(cell + 1) * p]
    }

    /// `β'z` for grid cell `cell`.
    #[inline]
    pub fn endemic_linear_predictor(&self, theta: &ParameterVector, cell: usize) -> f64 {
        let beta = &theta.as_slice()[self.layout.endemic.clone()];
        self.covariates(cell)
            .iter()
            .zip(beta)
            .map(|(z, b)| z * b)
            .sum()
    }

    #[inline]
    pub fn intercept(&self, theta: &ParameterVector, kind: usize) -> f64 {
        theta[self.layout.intercept_index(kind)]
    }

    /// `Σ_κ exp(β₀(κ))`.
    pub fn intercept_mass(&self, theta: &ParameterVector) -> f64 {
        (0..self.n_types())
            .map(|k| self.intercept(theta, k).exp())
            .sum()
    }

    #[inline]
    pub fn log_sigma(&self, theta: &ParameterVector, kind: usize) -> f64 {
        self.layout.sigma_index(kind).map_or(0.0, |i| theta[i])
    }

    #[inline]
    pub fn log_alpha(&self, theta: &ParameterVector, kind: usize) -> f64 {
        self.layout.alpha_index(kind).map_or(0.0, |i| theta[i])
    }

    /// Values of the epidemic terms for `event`, with its type replaced by
    /// `kind`.
    pub fn epidemic_covariates_as(&self, event: &Event, kind: usize) -> Result<Vec<f64>> {
        self.epi_terms
            .iter()
            .map(|factors| {
                factors.iter().try_fold(1.0, |acc, f| {
                    Ok(acc
                        * match f {
                            Factor::Type(k) => f64::from(u8::from(*k == kind)),
                            Factor::Mark(name) => *event.marks.get(name).ok_or_else(|| {
                                Error::Validation(format!("event is missing mark '{name}'"))
                            })?,
                        })
                })
            })
            .collect()
    }

    /// Values of the epidemic terms `m_j` for `event`.
    pub fn epidemic_covariates(&self, event: &Event) -> Result<Vec<f64>> {
        self.epidemic_covariates_as(event, event.kind)
    }

    /// `η = γ₀ + γ'm`.
    #[inline]
    pub fn eta(&self, theta: &ParameterVector, m: &[f64]) -> f64 {
        let g = &theta.as_slice()[self.layout.epidemic.clone()];
        match g.split_first() {
            Some((g0, rest)) => g0 + rest.iter().zip(m).map(|(a, b)| a * b).sum::<f64>(),
            None => f64::NEG_INFINITY,
        }
    }

    /// Checks domain, type and mark requirements of events, without the
    /// strict time ordering required for likelihood evaluation.
    pub fn check_event_domain(&self, events: &[Event]) -> Result<()> {
        let end = self.grid.end_time();
        for (i, e) in events.iter().enumerate() {
            if !(e.time > 0.0 && e.time <= end) {
                return Err(Error::Validation(format!(
                    "event {i}: time {} outside the observation period (0, {end}]",
                    e.time
                )));
            }
            if !self.grid.contains(e.location) {
                return Err(Error::Validation(format!(
                    "event {i}: location ({}, {}) lies outside every tile",
                    e.location.x, e.location.y
                )));
            }
            if e.kind >= self.n_types() {
                return Err(Error::Validation(format!(
                    "event {i}: type index {} out of range (K = {})",
                    e.kind,
                    self.n_types()
                )));
            }
            if let Some((name, _)) = e.marks.iter().find(|(_, v)| !v.is_finite()) {
                return Err(Error::Validation(format!(
                    "event {i}: mark '{name}' is not finite"
                )));
            }
            self.epidemic_covariates(e)
                .map_err(|err| Error::Validation(format!("event {i}: {err}")))?;
        }
        Ok(())
    }

    /// As [`Model::check_event_domain`], additionally requiring strictly
    /// increasing times.
    pub fn check_events(&self, events: &[Event]) -> Result<()> {
        self.check_event_domain(events)?;
        for (i, w) in events.windows(2).enumerate() {
            if w[1].time <= w[0].time {
                return Err(Error::TiesPresent {
                    index: i + 1,
                    time: w[1].time,
                });
            }
        }
        Ok(())
    }

    /// Empty history indexed for this model's δ and region.
    pub fn empty_history(&self) -> History {
        let b = self.grid.bbox();
        History::new(self.spec.delta, b.min, b.width().max(b.height()))
    }

    pub fn history(&self, events: &[Event]) -> Result<History> {
        let mut h = self.empty_history();
        for e in events {
            h.push(e.clone())?;
        }
        Ok(h)
    }

    /// `(τ(t), ξ(s))`.
    pub fn locate(&self, t: f64, s: Point) -> Result<(usize, usize)> {
        self.grid.locate(t, s)
    }

    /// `h(t, s, κ) = ρ exp(β₀(κ) + β'z)`.
    pub fn endemic_intensity(
        &self,
        t: f64,
        s: Point,
        kind: usize,
        theta: &ParameterVector,
    ) -> Result<f64> {
        let (tau, xi) = self.locate(t, s)?;
        let cell = self.grid.cell(tau, xi);
        let rho = self.grid.offsets()[cell];
        if rho == 0.0 {
            return Ok(0.0);
        }
        Ok(rho * (self.intercept(theta, kind) + self.endemic_linear_predictor(theta, cell)).exp())
    }

    pub fn infective_set(&self, t: f64, s: Point, kind: usize, history: &History) -> Vec<usize> {
        if !self.has_epidemic() {
            return Vec::new();
        }
        history.infective_set(t, s, kind, self.spec.eps, self.spec.delta, &self.q)
    }

    /// `e*(t, s, κ) = Σ_{j ∈ I*} exp(η_j) g(t − t_j) f(s − s_j)`.
    pub fn epidemic_intensity(
        &self,
        t: f64,
        s: Point,
        kind: usize,
        theta: &ParameterVector,
        history: &History,
    ) -> Result<f64> {
        let mut total = 0.0;
        for j in self.infective_set(t, s, kind, history) {
            let src = &history.events()[j];
            let eta = self.eta(theta, &self.epidemic_covariates(src)?);
            let g = self
                .temporal
                .value(t - src.time, self.log_alpha(theta, src.kind));
            let f = self
                .spatial
                .value(src.location.dist2(s), self.log_sigma(theta, src.kind));
            total += eta.exp() * g * f;
        }
        Ok(total)
    }

    /// λ*(t, s, κ).
    pub fn cif(
        &self,
        t: f64,
        s: Point,
        kind: usize,
        theta: &ParameterVector,
        history: &History,
    ) -> Result<f64> {
        Ok(self.endemic_intensity(t, s, kind, theta)?
            + self.epidemic_intensity(t, s, kind, theta, history)?)
    }

    /// `Σ_τ Σ_ξ |C_τ| |A_ξ| ρ_τξ`.
    pub fn offset_volume(&self) -> f64 {
        let g = &self.grid;
        let mut acc = crate::summation::NeumaierSum::new();
        for (tau, iv) in g.intervals().iter().enumerate() {
            for (xi, tile) in g.tiles().iter().enumerate() {
                acc.add(iv.length() * tile.area * g.offset(tau, xi));
            }
        }
        acc.value()
    }

    /// Starting point for fitting: endemic intercepts from the homogeneous
    /// closed form, zero coefficients, γ₀ = −10, σ = δ/10, α = 1/ε.
    pub fn default_theta(&self, events: &[Event]) -> ParameterVector {
        let mut theta = ParameterVector::zeros(&self.layout);
        let volume = self.offset_volume().max(f64::MIN_POSITIVE);
        let k = self.n_types();
        if self.layout.intercepts.len() == 1 {
            let n = (events.len() as f64).max(0.5);
            theta[self.layout.intercepts.start] = (n / (k as f64 * volume)).ln();
        } else {
            for kind in 0..k {
                let n = events.iter().filter(|e| e.kind == kind).count() as f64;
                theta[self.layout.intercept_index(kind)] = (n.max(0.5) / volume).ln();
            }
        }
        if !self.layout.epidemic.is_empty() {
            theta[self.layout.epidemic.start] = -10.0;
        }
        for i in self.layout.sigma.clone() {
            theta[i] = (self.spec.delta / 10.0).ln();
        }
        for i in self.layout.alpha.clone() {
            theta[i] = -self.spec.eps.ln();
        }
        theta
    }
}

fn parse_factor(f: &str, spec: &ModelSpec) -> Result<Factor> {
    if f.is_empty() {
        return Err(Error::Validation("empty factor in epidemic term".into()));
    }
    match f.strip_prefix("type:") {
        Some(label) => spec.type_index(label).map(Factor::Type).ok_or_else(|| {
            Error::Validation(format!(
                "epidemic term refers to unknown type '{label}' (declared: {})",
                spec.types.join(", ")
            ))
        }),
        None => Ok(Factor::Mark(f.to_string())),
    }
}
