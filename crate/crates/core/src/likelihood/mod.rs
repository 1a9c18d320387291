//! Log-likelihood, analytic score, information matrix, fitting and model
//! search.

mod fit;
mod optim;
mod region;
mod search;

use std::sync::{Arc, Mutex};

use nalgebra::DMatrix;
use rayon::prelude::*;

pub use fit::{fit, fit_with_evaluator, wald_table, FitResult, WaldRow};
pub use optim::{bfgs, OptimOutcome};
pub use region::SourceRegion;
pub use search::{model_search, CandidateOutcome, SearchLattice, SearchResult};

use crate::error::{Error, Result};
use crate::model::{Event, Model, ParameterVector};
use crate::summation::{blocked_reduce, NeumaierSum, NeumaierVec, DEFAULT_BLOCK};

/// Decomposition of the log-likelihood.
#[derive(Debug, Clone, PartialEq)]
pub struct LikelihoodParts {
    /// `Σ_i log λ*(t_i, s_i, κ_i)`.
    pub event_term: f64,
    pub endemic_integral: f64,
    pub epidemic_integral: f64,
    /// `event_term − endemic_integral − epidemic_integral`.
    pub loglik: f64,
    /// `|I*(t_i, s_i, κ_i)|` per event.
    pub source_counts: Vec<usize>,
    /// First event with zero intensity, when the log-likelihood is −∞.
    pub zero_intensity: Option<usize>,
}

#[derive(Debug, Clone, Copy)]
struct SourceLink {
    j: u32,
    dt: f64,
    d2: f64,
}

type SpatialCache = Option<(Vec<u64>, Arc<Vec<(f64, f64)>>)>;

/// Likelihood evaluator for a fixed model and event set. Everything that
/// does not depend on θ (cell lookups, infective sets, integration regions)
/// is precomputed; spatial integrals are cached per value of the spatial
/// scale parameters.
#[derive(Debug)]
pub struct Evaluator<'a> {
    model: &'a Model,
    events: &'a [Event],
    cells: Vec<usize>,
    rho: Vec<f64>,
    /// Epidemic term values, `n × r`.
    marks: Vec<f64>,
    link_offsets: Vec<usize>,
    links: Vec<SourceLink>,
    /// `min(T − t_j, ε)`.
    spans: Vec<f64>,
    regions: Vec<SourceRegion>,
    /// `|C_τ| |A_ξ| ρ_τξ` per grid cell.
    cell_volume: Vec<f64>,
    cache: Mutex<SpatialCache>,
    warnings: Vec<String>,
}

impl<'a> Evaluator<'a> {
    /// Validates events (strictly increasing times, inside the grid) and
    /// precomputes all θ-independent quantities.
    pub fn new(model: &'a Model, events: &'a [Event]) -> Result<Self> {
        model.check_events(events)?;
        let grid = model.grid();
        let n = events.len();
        let mut cells = Vec::with_capacity(n);
        let mut rho = Vec::with_capacity(n);
        for e in events {
            let (tau, xi) = grid.locate(e.time, e.location)?;
            let cell = grid.cell(tau, xi);
            cells.push(cell);
            rho.push(grid.offsets()[cell]);
        }
        let r = model.n_epidemic_terms();
        let mut marks = Vec::with_capacity(n * r);
        for e in events {
            marks.extend(model.epidemic_covariates(e)?);
        }
        let mut link_offsets = vec![0];
        let mut links = Vec::new();
        let mut spans = Vec::new();
        let mut regions = Vec::new();
        let mut warnings = Vec::new();
        if model.has_epidemic() {
            let history = model.history(events)?;
            for e in events {
                for j in model.infective_set(e.time, e.location, e.kind, &history) {
                    let src = &events[j];
                    links.push(SourceLink {
                        j: j as u32,
                        dt: e.time - src.time,
                        d2: src.location.dist2(e.location),
                    });
                }
                link_offsets.push(links.len());
            }
            let end = grid.end_time();
            spans = events
                .iter()
                .map(|e| (end - e.time).min(model.eps()))
                .collect();
            let ref_log_sigma = (model.delta() / 10.0).ln();
            let settings = &model.spec().cubature;
            regions = events
                .par_iter()
                .map(|e| {
                    SourceRegion::build(
                        grid,
                        e.location,
                        model.delta(),
                        model.spatial_kernel(),
                        settings,
                        ref_log_sigma,
                    )
                })
                .collect();
            let degenerate = regions.iter().filter(|r| r.is_degenerate()).count();
            if degenerate > 0 {
                warnings.push(format!(
                    "{degenerate} interaction region(s) are narrower than the finest cubature cell; single-cell estimates used"
                ));
            }
        } else {
            link_offsets.resize(n + 1, 0);
        }
        let mut cell_volume = Vec::with_capacity(grid.n_cells());
        for (tau, iv) in grid.intervals().iter().enumerate() {
            for (xi, tile) in grid.tiles().iter().enumerate() {
                cell_volume.push(iv.length() * tile.area * grid.offset(tau, xi));
            }
        }
        Ok(Evaluator {
            model,
            events,
            cells,
            rho,
            marks,
            link_offsets,
            links,
            spans,
            regions,
            cell_volume,
            cache: Mutex::new(None),
            warnings,
        })
    }

    pub fn model(&self) -> &Model {
        self.model
    }

    pub fn events(&self) -> &[Event] {
        self.events
    }

    pub fn n_events(&self) -> usize {
        self.events.len()
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn regions(&self) -> &[SourceRegion] {
        &self.regions
    }

    /// Indices of the sources of event `i`.
    pub fn sources(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.links[self.link_offsets[i]..self.link_offsets[i + 1]]
            .iter()
            .map(|l| l.j as usize)
    }

    fn event_marks(&self, j: usize) -> &[f64] {
        let r = self.model.n_epidemic_terms();
        &self.marks[j * r..(j + 1) * r]
    }

    /// `exp(η_j)` for every event.
    fn exp_eta(&self, theta: &ParameterVector) -> Vec<f64> {
        if !self.model.has_epidemic() {
            return Vec::new();
        }
        (0..self.n_events())
            .map(|j| self.model.eta(theta, self.event_marks(j)).exp())
            .collect()
    }

    /// `F_j = ∫_{R_j} f(s | κ_j) ds` and `dF_j / d log σ` for every event.
    pub fn spatial_integrals(&self, theta: &ParameterVector) -> Arc<Vec<(f64, f64)>> {
        let layout = self.model.layout();
        let key: Vec<u64> = theta.as_slice()[layout.sigma.clone()]
            .iter()
            .map(|v| v.to_bits())
            .collect();
        if let Some((k, values)) = self
            .cache
            .lock()
            .unwrap_or_else(|p| p.into_inner())
            .as_ref()
        {
            if *k == key {
                return Arc::clone(values);
            }
        }
        let kernel = self.model.spatial_kernel();
        let values: Vec<(f64, f64)> = self
            .regions
            .par_iter()
            .zip(self.events.par_iter())
            .map(|(r, e)| r.integral(kernel, self.model.log_sigma(theta, e.kind)))
            .collect();
        let values = Arc::new(values);
        *self.cache.lock().unwrap_or_else(|p| p.into_inner()) = Some((key, Arc::clone(&values)));
        values
    }

    /// Temporal integrals `G_j = ∫₀^{min(T − t_j, ε)} g` and `dG_j / d log α`.
    fn temporal_integral(&self, theta: &ParameterVector, j: usize) -> (f64, f64) {
        let kind = self.events[j].kind;
        self.model
            .temporal_kernel()
            .integral(self.spans[j], self.model.log_alpha(theta, kind))
    }

    /// `Σ_τ Σ_ξ |C_τ||A_ξ| ρ exp(β'z)` and its gradient with respect to β.
    fn endemic_grid_sum(&self, theta: &ParameterVector, with_grad: bool) -> (f64, Vec<f64>) {
        let p = self.model.n_endemic_terms();
        let width = if with_grad { p } else { 0 };
        let (sum, grad) = blocked_reduce(
            self.cell_volume.len(),
            DEFAULT_BLOCK,
            |range| {
                let mut s = NeumaierSum::new();
                let mut g = NeumaierVec::zeros(width);
                for cell in range {
                    let v = self.cell_volume[cell];
                    if v == 0.0 {
                        continue;
                    }
                    let w = v * self.model.endemic_linear_predictor(theta, cell).exp();
                    s.add(w);
                    if with_grad {
                        g.add_scaled(self.model.covariates(cell), w);
                    }
                }
                (s, g)
            },
            |(mut s, mut g), (s2, g2)| {
                s.merge(&s2);
                g.merge(&g2);
                (s, g)
            },
            (NeumaierSum::new(), NeumaierVec::zeros(width)),
        );
        (sum.value(), grad.values())
    }

    /// `(Σ_κ e^{β₀(κ)}) Σ_τ Σ_ξ |C_τ||A_ξ| ρ_τξ exp(β'z_τξ)`.
    pub fn endemic_integral(&self, theta: &ParameterVector) -> f64 {
        self.model.intercept_mass(theta) * self.endemic_grid_sum(theta, false).0
    }

    /// `Σ_j q_{κ_j,•} e^{η_j} G_j F_j`.
    pub fn epidemic_integral(&self, theta: &ParameterVector) -> f64 {
        if !self.model.has_epidemic() {
            return 0.0;
        }
        let f = self.spatial_integrals(theta);
        let exp_eta = self.exp_eta(theta);
        crate::summation::deterministic_sum(self.n_events(), DEFAULT_BLOCK, |j| {
            let q = self.model.out_degree(self.events[j].kind);
            q * exp_eta[j] * self.temporal_integral(theta, j).0 * f[j].0
        })
    }

    /// Per-event intensity components and, optionally, `∂λ_i / ∂θ`.
    fn event_intensity(
        &self,
        theta: &ParameterVector,
        i: usize,
        exp_eta: &[f64],
        grad: Option<&mut [f64]>,
    ) -> f64 {
        let model = self.model;
        let layout = model.layout();
        let e = &self.events[i];
        let cell = self.cells[i];
        let h = if self.rho[i] == 0.0 {
            0.0
        } else {
            self.rho[i]
                * (model.intercept(theta, e.kind) + model.endemic_linear_predictor(theta, cell))
                    .exp()
        };
        let links = &self.links[self.link_offsets[i]..self.link_offsets[i + 1]];
        let tk = model.temporal_kernel();
        let sk = model.spatial_kernel();
        match grad {
            None => {
                let mut total = h;
                for l in links {
                    let j = l.j as usize;
                    let kj = self.events[j].kind;
                    total += exp_eta[j]
                        * tk.value(l.dt, model.log_alpha(theta, kj))
                        * sk.value(l.d2, model.log_sigma(theta, kj));
                }
                total
            }
            Some(u) => {
                u.fill(0.0);
                u[layout.intercept_index(e.kind)] += h;
                for (k, z) in layout.endemic.clone().zip(model.covariates(cell)) {
                    u[k] += h * z;
                }
                let mut total = h;
                for l in links {
                    let j = l.j as usize;
                    let kj = self.events[j].kind;
                    let (la, ls) = (model.log_alpha(theta, kj), model.log_sigma(theta, kj));
                    let c = exp_eta[j] * tk.value(l.dt, la) * sk.value(l.d2, ls);
                    total += c;
                    let g0 = layout.epidemic.start;
                    u[g0] += c;
                    for (k, m) in (g0 + 1..layout.epidemic.end).zip(self.event_marks(j)) {
                        u[k] += c * m;
                    }
                    if let Some(k) = layout.sigma_index(kj) {
                        u[k] += c * sk.dlog_value(l.d2, ls);
                    }
                    if let Some(k) = layout.alpha_index(kj) {
                        u[k] += c * tk.dlog_value(l.dt, la);
                    }
                }
                total
            }
        }
    }

    /// Log-likelihood and, when requested, its gradient.
    pub fn evaluate(
        &self,
        theta: &ParameterVector,
        with_grad: bool,
    ) -> Result<(LikelihoodParts, Option<Vec<f64>>)> {
        theta.check(self.model.layout())?;
        let p = self.model.n_params();
        let width = if with_grad { p } else { 0 };
        let exp_eta = self.exp_eta(theta);
        struct Acc {
            ll: NeumaierSum,
            grad: NeumaierVec,
            zero: Option<usize>,
        }
        let acc = blocked_reduce(
            self.n_events(),
            DEFAULT_BLOCK,
            |range| {
                let mut acc = Acc {
                    ll: NeumaierSum::new(),
                    grad: NeumaierVec::zeros(width),
                    zero: None,
                };
                let mut u = vec![0.0; p];
                for i in range {
                    let lambda = if with_grad {
                        self.event_intensity(theta, i, &exp_eta, Some(&mut u))
                    } else {
                        self.event_intensity(theta, i, &exp_eta, None)
                    };
                    if !(lambda > 0.0) && acc.zero.is_none() {
                        acc.zero = Some(i);
                    }
                    acc.ll.add(lambda.ln());
                    if with_grad {
                        acc.grad.add_scaled(&u, 1.0 / lambda);
                    }
                }
                acc
            },
            |mut a, b| {
                a.ll.merge(&b.ll);
                a.grad.merge(&b.grad);
                a.zero = a.zero.or(b.zero);
                a
            },
            Acc {
                ll: NeumaierSum::new(),
                grad: NeumaierVec::zeros(width),
                zero: None,
            },
        );
        let event_term = if acc.zero.is_some() {
            f64::NEG_INFINITY
        } else {
            acc.ll.value()
        };

        let model = self.model;
        let layout = model.layout();
        let (grid_sum, grid_grad) = self.endemic_grid_sum(theta, with_grad);
        let mass = model.intercept_mass(theta);
        let endemic_integral = mass * grid_sum;

        let mut epi = NeumaierSum::new();
        let mut epi_grad = NeumaierVec::zeros(width);
        if model.has_epidemic() {
            let f = self.spatial_integrals(theta);
            let part = blocked_reduce(
                self.n_events(),
                DEFAULT_BLOCK,
                |range| {
                    let mut s = NeumaierSum::new();
                    let mut g = NeumaierVec::zeros(width);
                    for j in range {
                        let kind = self.events[j].kind;
                        let base = model.out_degree(kind) * exp_eta[j];
                        let (gj, dgj) = self.temporal_integral(theta, j);
                        let (fj, dfj) = f[j];
                        let term = base * gj * fj;
                        s.add(term);
                        if with_grad {
                            g.add_at(layout.epidemic.start, term);
                            for (k, m) in (layout.epidemic.start + 1..layout.epidemic.end)
                                .zip(self.event_marks(j))
                            {
                                g.add_at(k, term * m);
                            }
                            if let Some(k) = layout.sigma_index(kind) {
                                g.add_at(k, base * gj * dfj);
                            }
                            if let Some(k) = layout.alpha_index(kind) {
                                g.add_at(k, base * dgj * fj);
                            }
                        }
                    }
                    (s, g)
                },
                |(mut s, mut g), (s2, g2)| {
                    s.merge(&s2);
                    g.merge(&g2);
                    (s, g)
                },
                (NeumaierSum::new(), NeumaierVec::zeros(width)),
            );
            epi = part.0;
            epi_grad = part.1;
        }
        let epidemic_integral = epi.value();
        let parts = LikelihoodParts {
            event_term,
            endemic_integral,
            epidemic_integral,
            loglik: event_term - endemic_integral - epidemic_integral,
            source_counts: (0..self.n_events())
                .map(|i| self.link_offsets[i + 1] - self.link_offsets[i])
                .collect(),
            zero_intensity: acc.zero,
        };
        let grad = with_grad.then(|| {
            if acc.zero.is_some() {
                return vec![f64::NAN; p];
            }
            let mut g = acc.grad.values();
            let epi_g = epi_grad.values();
            for (k, v) in g.iter_mut().enumerate() {
                *v -= epi_g[k];
            }
            for kind_or_shared in layout.intercepts.clone() {
                let share = if layout.intercepts.len() == 1 {
                    mass
                } else {
                    model
                        .intercept(theta, kind_or_shared - layout.intercepts.start)
                        .exp()
                };
                g[kind_or_shared] -= share * grid_sum;
            }
            for (k, gz) in layout.endemic.clone().zip(&grid_grad) {
                g[k] -= mass * gz;
            }
            g
        });
        Ok((parts, grad))
    }

    pub fn log_likelihood(&self, theta: &ParameterVector) -> Result<LikelihoodParts> {
        Ok(self.evaluate(theta, false)?.0)
    }

    /// Analytic gradient of the log-likelihood.
    pub fn score(&self, theta: &ParameterVector) -> Result<Vec<f64>> {
        let (parts, grad) = self.evaluate(theta, true)?;
        if let Some(i) = parts.zero_intensity {
            return Err(Error::Validation(format!(
                "score undefined: event {i} has zero intensity"
            )));
        }
        Ok(grad.unwrap_or_default())
    }

    /// Per-event score contributions `u_i = ∂ log λ*_i / ∂θ`.
    pub fn event_scores(&self, theta: &ParameterVector) -> Result<Vec<Vec<f64>>> {
        theta.check(self.model.layout())?;
        let p = self.model.n_params();
        let exp_eta = self.exp_eta(theta);
        (0..self.n_events())
            .into_par_iter()
            .map(|i| {
                let mut u = vec![0.0; p];
                let lambda = self.event_intensity(theta, i, &exp_eta, Some(&mut u));
                if !(lambda > 0.0) {
                    return Err(Error::Validation(format!(
                        "score undefined: event {i} has zero intensity"
                    )));
                }
                u.iter_mut().for_each(|v| *v /= lambda);
                Ok(u)
            })
            .collect()
    }

    /// Optional-variation information `Σ_i u_i u_i'`.
    pub fn information(&self, theta: &ParameterVector) -> Result<DMatrix<f64>> {
        theta.check(self.model.layout())?;
        let p = self.model.n_params();
        let exp_eta = self.exp_eta(theta);
        let acc = blocked_reduce(
            self.n_events(),
            DEFAULT_BLOCK,
            |range| {
                let mut acc = NeumaierVec::zeros(p * p);
                let mut u = vec![0.0; p];
                let mut zero = None;
                for i in range {
                    let lambda = self.event_intensity(theta, i, &exp_eta, Some(&mut u));
                    if !(lambda > 0.0) {
                        zero = zero.or(Some(i));
                        continue;
                    }
                    for a in 0..p {
                        let ua = u[a] / lambda;
                        for (b, ub) in u.iter().enumerate().skip(a) {
                            acc.add_at(a * p + b, ua * ub / lambda);
                        }
                    }
                }
                (acc, zero)
            },
            |(mut a, z), (b, z2)| {
                a.merge(&b);
                (a, z.or(z2))
            },
            (NeumaierVec::zeros(p * p), None),
        );
        if let Some(i) = acc.1 {
            return Err(Error::Validation(format!(
                "information undefined: event {i} has zero intensity"
            )));
        }
        let upper = acc.0.values();
        Ok(DMatrix::from_fn(p, p, |a, b| {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            upper[lo * p + hi]
        }))
    }

    /// Negative Hessian of the log-likelihood by central differences of the
    /// analytic score (observed information), symmetrised.
    pub fn numerical_information(&self, theta: &ParameterVector) -> Result<DMatrix<f64>> {
        let p = self.model.n_params();
        let mut h = DMatrix::zeros(p, p);
        for k in 0..p {
            let step = 1e-4 * theta[k].abs().max(1.0);
            let mut plus = theta.clone();
            plus[k] += step;
            let mut minus = theta.clone();
            minus[k] -= step;
            let gp = self.score(&plus)?;
            let gm = self.score(&minus)?;
            for a in 0..p {
                h[(a, k)] = -(gp[a] - gm[a]) / (2.0 * step);
            }
        }
        Ok((&h + h.transpose()) * 0.5)
    }
}
