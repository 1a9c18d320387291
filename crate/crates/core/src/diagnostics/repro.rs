use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Event, Model, ParameterVector};

/// Default number of parameter draws.
pub const DEFAULT_DRAWS: usize = 999;

/// `μ = e^η · ∫₀^ε g · ∫_{b(0,δ)} f` for an event with epidemic term
/// values `m`, evaluated with the kernels of type `kind`.
pub fn mu_from_terms(model: &Model, theta: &ParameterVector, m: &[f64], kind: usize) -> f64 {
    let g = model
        .temporal_kernel()
        .integral(model.eps(), model.log_alpha(theta, kind))
        .0;
    let f = model
        .spatial_kernel()
        .disc_integral(model.delta(), model.log_sigma(theta, kind))
        .0;
    model.eta(theta, m).exp() * g * f
}

/// Individual mean number of infections caused by `event`, without
/// truncation to W or the observation period.
pub fn mu_individual(model: &Model, theta: &ParameterVector, event: &Event) -> Result<f64> {
    if !model.has_epidemic() {
        return Err(Error::InvalidArgument(
            "reproduction numbers need an epidemic component".into(),
        ));
    }
    Ok(mu_from_terms(
        model,
        theta,
        &model.epidemic_covariates(event)?,
        event.kind,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReproductionSummary {
    pub kind: String,
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
    pub draws: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReproductionReport {
    pub summaries: Vec<ReproductionSummary>,
    pub seed: u64,
    pub warnings: Vec<String>,
}

/// Type-7 sample quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Type-`k` mean of μ over the pooled empirical distribution of the
/// epidemic terms: each observed event is evaluated with its type set to
/// `k`.
fn mean_mu(model: &Model, theta: &ParameterVector, terms: &[Vec<Vec<f64>>], kind: usize) -> f64 {
    let per_event = &terms[kind];
    if per_event.is_empty() {
        return f64::NAN;
    }
    per_event
        .iter()
        .map(|m| mu_from_terms(model, theta, m, kind))
        .sum::<f64>()
        / per_event.len() as f64
}

/// Square root `L` with `L L' = cov`, after clamping negative eigenvalues.
fn psd_sqrt(cov: &DMatrix<f64>, warnings: &mut Vec<String>) -> DMatrix<f64> {
    let sym = (cov + cov.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let max = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tol = max * cov.nrows() as f64 * f64::EPSILON * 10.0;
    if eig.eigenvalues.iter().any(|&v| v < -tol) {
        warnings.push(
            "covariance is not positive semidefinite; projected to the nearest PSD matrix".into(),
        );
    }
    let roots = DVector::from_iterator(
        eig.eigenvalues.len(),
        eig.eigenvalues.iter().map(|v| v.max(0.0).sqrt()),
    );
    &eig.eigenvectors * DMatrix::from_diagonal(&roots)
}

/// Per-type μ̂ with percentile intervals from `draws` parameter vectors
/// drawn from N(θ̂, cov).
pub fn reproduction_numbers(
    model: &Model,
    theta: &ParameterVector,
    covariance: &DMatrix<f64>,
    events: &[Event],
    draws: usize,
    seed: u64,
) -> Result<ReproductionReport> {
    if !model.has_epidemic() {
        return Err(Error::InvalidArgument(
            "reproduction numbers need an epidemic component".into(),
        ));
    }
    theta.check(model.layout())?;
    let p = theta.len();
    if covariance.shape() != (p, p) {
        return Err(Error::Dimension(format!(
            "covariance is {}x{}, expected {p}x{p}",
            covariance.nrows(),
            covariance.ncols()
        )));
    }
    if events.is_empty() {
        return Err(Error::InvalidArgument("no events to average μ over".into()));
    }
    let k = model.n_types();
    let terms: Vec<Vec<Vec<f64>>> = (0..k)
        .map(|kind| {
            events
                .iter()
                .map(|e| model.epidemic_covariates_as(e, kind))
                .collect()
        })
        .collect::<Result<_>>()?;
    let mut warnings = Vec::new();
    let root = psd_sqrt(covariance, &mut warnings);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let center = DVector::from_column_slice(theta.as_slice());
    let mut samples = vec![Vec::with_capacity(draws); k];
    for _ in 0..draws {
        let z = DVector::from_iterator(p, (0..p).map(|_| StandardNormal.sample(&mut rng)));
        let t = ParameterVector((&center + &root * z).iter().copied().collect());
        for (kind, s) in samples.iter_mut().enumerate() {
            s.push(mean_mu(model, &t, &terms, kind));
        }
    }
    let summaries = samples
        .into_iter()
        .enumerate()
        .map(|(kind, draws)| {
            let estimate = mean_mu(model, theta, &terms, kind);
            let mut sorted = draws.clone();
            sorted.sort_by(f64::total_cmp);
            let (lower, upper) = if sorted.is_empty() {
                (estimate, estimate)
            } else {
                (
                    quantile_sorted(&sorted, 0.025),
                    quantile_sorted(&sorted, 0.975),
                )
            };
            ReproductionSummary {
                kind: model.spec().types[kind].clone(),
                estimate,
                lower,
                upper,
                draws,
            }
        })
        .collect();
    Ok(ReproductionReport {
        summaries,
        seed,
        warnings,
    })
}
