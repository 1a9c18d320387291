//! Goodness-of-fit and summary diagnostics for fitted models.

mod envelope;
mod ks;
mod repro;
mod residuals;
mod ties;

pub use envelope::{incidence_envelope, IncidenceEnvelope, TileEnvelope, PER_POPULATION};
pub use ks::{
    kolmogorov_cdf_exact, kolmogorov_survival, ks_band, ks_statistic, ks_uniform, KsTest,
    ASYMPTOTIC_95, EXACT_BELOW,
};
pub use repro::{
    mu_from_terms, mu_individual, quantile_sorted, reproduction_numbers, ReproductionReport,
    ReproductionSummary, DEFAULT_DRAWS,
};
pub use residuals::{
    cumulative_ground_intensity, rescaled_residuals, CdfPoint, CumulativeIntensity, ResidualSeries,
};
pub use ties::break_ties;
