use serde::{Deserialize, Serialize};

use super::ks::{ks_uniform, KsTest};
use crate::error::Result;
use crate::likelihood::Evaluator;
use crate::model::ParameterVector;
use crate::summation::NeumaierSum;

/// Fitted cumulative ground intensity `Λ_g(t)` on `[0, T]`.
pub struct CumulativeIntensity {
    /// Interval boundaries `0 = b_0 < … < b_D = T`.
    boundaries: Vec<f64>,
    /// Endemic ground rate per interval.
    rates: Vec<f64>,
    /// `Λ_endemic(b_d)`.
    at_boundary: Vec<f64>,
    times: Vec<f64>,
    /// `q e^η F_j` per event.
    weights: Vec<f64>,
    log_alpha: Vec<f64>,
    /// `Σ_{i<j} weights_i G(ε)`.
    saturated: Vec<f64>,
    eps: f64,
    kernel: crate::model::TemporalKernel,
}

impl CumulativeIntensity {
    pub fn new(ev: &Evaluator<'_>, theta: &ParameterVector) -> Result<Self> {
        let model = ev.model();
        theta.check(model.layout())?;
        let grid = model.grid();
        let mass = model.intercept_mass(theta);
        let mut boundaries = vec![0.0];
        let mut rates = Vec::new();
        let mut at_boundary = vec![0.0];
        let mut acc = NeumaierSum::new();
        for (tau, iv) in grid.intervals().iter().enumerate() {
            let mut s = NeumaierSum::new();
            for (xi, tile) in grid.tiles().iter().enumerate() {
                let cell = grid.cell(tau, xi);
                let rho = grid.offsets()[cell];
                if rho != 0.0 {
                    s.add(tile.area * rho * model.endemic_linear_predictor(theta, cell).exp());
                }
            }
            let rate = mass * s.value();
            acc.add(rate * iv.length());
            rates.push(rate);
            boundaries.push(iv.end);
            at_boundary.push(acc.value());
        }
        let events = ev.events();
        let n = events.len();
        let (mut weights, mut log_alpha) = (vec![0.0; n], vec![0.0; n]);
        if model.has_epidemic() {
            let f = ev.spatial_integrals(theta);
            for (j, e) in events.iter().enumerate() {
                let eta = model.eta(theta, &model.epidemic_covariates(e)?);
                weights[j] = model.out_degree(e.kind) * eta.exp() * f[j].0;
                log_alpha[j] = model.log_alpha(theta, e.kind);
            }
        }
        let kernel = model.temporal_kernel();
        let eps = model.eps();
        let mut saturated = Vec::with_capacity(n + 1);
        let mut s = NeumaierSum::new();
        saturated.push(0.0);
        for j in 0..n {
            s.add(weights[j] * kernel.integral(eps, log_alpha[j]).0);
            saturated.push(s.value());
        }
        Ok(CumulativeIntensity {
            boundaries,
            rates,
            at_boundary,
            times: events.iter().map(|e| e.time).collect(),
            weights,
            log_alpha,
            saturated,
            eps,
            kernel,
        })
    }

    pub fn end_time(&self) -> f64 {
        *self.boundaries.last().expect("at least one interval")
    }

    fn endemic(&self, t: f64) -> f64 {
        let t = t.clamp(0.0, self.end_time());
        let d = self
            .boundaries
            .partition_point(|&b| b <= t)
            .saturating_sub(1);
        if d >= self.rates.len() {
            return self.at_boundary[self.rates.len()];
        }
        self.at_boundary[d] + self.rates[d] * (t - self.boundaries[d])
    }

    /// `Λ_g(t)`.
    pub fn at(&self, t: f64) -> f64 {
        let t = t.clamp(0.0, self.end_time());
        // Sources with t_j + ε ≤ t contribute their full G(ε).
        let full = self.times.partition_point(|&tj| tj + self.eps <= t);
        let started = self.times.partition_point(|&tj| tj < t);
        let mut acc = NeumaierSum::new();
        acc.add(self.endemic(t));
        acc.add(self.saturated[full]);
        for j in full..started.max(full) {
            let len = (t - self.times[j]).min(self.eps);
            acc.add(self.weights[j] * self.kernel.integral(len, self.log_alpha[j]).0);
        }
        acc.value()
    }

    /// `Λ_g(b) − Λ_g(a)` for `a ≤ b`, summed from its parts so it stays
    /// non-negative.
    pub fn increment(&self, a: f64, b: f64) -> f64 {
        let mut acc = NeumaierSum::new();
        acc.add(self.endemic(b) - self.endemic(a));
        let first = self.times.partition_point(|&tj| tj + self.eps <= a);
        let last = self.times.partition_point(|&tj| tj < b);
        for j in first..last.max(first) {
            let tj = self.times[j];
            let gb = self
                .kernel
                .integral((b - tj).min(self.eps), self.log_alpha[j])
                .0;
            let ga = if a > tj {
                self.kernel
                    .integral((a - tj).min(self.eps), self.log_alpha[j])
                    .0
            } else {
                0.0
            };
            acc.add(self.weights[j] * (gb - ga));
        }
        acc.value().max(0.0)
    }
}

/// `Λ_g(t)` at θ for the evaluator's data.
pub fn cumulative_ground_intensity(
    ev: &Evaluator<'_>,
    theta: &ParameterVector,
    t: f64,
) -> Result<f64> {
    Ok(CumulativeIntensity::new(ev, theta)?.at(t))
}

/// Time-rescaling residuals and their KS test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualSeries {
    /// Event times `t_2, …, t_n`.
    pub times: Vec<f64>,
    /// `Y_i = Λ_g(t_i) − Λ_g(t_{i−1})`.
    pub y: Vec<f64>,
    /// `U_i = 1 − exp(−Y_i)`.
    pub u: Vec<f64>,
    pub ks: KsTest,
}

/// One point of the empirical CDF plot with its band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CdfPoint {
    pub u: f64,
    pub ecdf: f64,
    pub lower: f64,
    pub upper: f64,
}

impl ResidualSeries {
    /// Empirical CDF of `U` at its sorted values, with the KS band around
    /// the identity.
    pub fn cdf_points(&self) -> Vec<CdfPoint> {
        let mut u = self.u.clone();
        u.sort_by(f64::total_cmp);
        let m = u.len() as f64;
        u.iter()
            .enumerate()
            .map(|(i, &x)| CdfPoint {
                u: x,
                ecdf: (i + 1) as f64 / m,
                lower: (x - self.ks.band).max(0.0),
                upper: (x + self.ks.band).min(1.0),
            })
            .collect()
    }
}

/// Residuals of the fitted model at θ. The evaluator already requires
/// strictly increasing event times.
pub fn rescaled_residuals(ev: &Evaluator<'_>, theta: &ParameterVector) -> Result<ResidualSeries> {
    let lambda = CumulativeIntensity::new(ev, theta)?;
    let times: Vec<f64> = ev.events().iter().map(|e| e.time).collect();
    let y: Vec<f64> = times
        .windows(2)
        .map(|w| lambda.increment(w[0], w[1]))
        .collect();
    // The largest double below 1 keeps U_i < 1 when Y_i is huge.
    let u: Vec<f64> = y
        .iter()
        .map(|&y| (-(-y).exp_m1()).min(1.0 - f64::EPSILON / 2.0))
        .collect();
    let ks = ks_uniform(&u);
    Ok(ResidualSeries {
        times: times.get(1..).unwrap_or_default().to_vec(),
        y,
        u,
        ks,
    })
}
