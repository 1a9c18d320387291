//! Interaction functions g (temporal) and f (spatial), their integrals and
//! derivatives with respect to the log-scale parameters.

use std::f64::consts::PI;

/// Temporal interaction function. Both families have supremum 1 at 0⁺.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TemporalKernel {
    Constant,
    /// `exp(-alpha t)` with `alpha = exp(log_alpha)`.
    Exponential,
}

impl TemporalKernel {
    #[inline]
    pub fn value(self, dt: f64, log_alpha: f64) -> f64 {
        match self {
            TemporalKernel::Constant => 1.0,
            TemporalKernel::Exponential => (-log_alpha.exp() * dt).exp(),
        }
    }

    /// `d log g / d log alpha`.
    #[inline]
    pub fn dlog_value(self, dt: f64, log_alpha: f64) -> f64 {
        match self {
            TemporalKernel::Constant => 0.0,
            TemporalKernel::Exponential => -log_alpha.exp() * dt,
        }
    }

    /// `G(L) = ∫₀^L g(u) du` and `dG / d log alpha`.
    #[inline]
    pub fn integral(self, len: f64, log_alpha: f64) -> (f64, f64) {
        match self {
            TemporalKernel::Constant => (len, 0.0),
            TemporalKernel::Exponential => {
                let alpha = log_alpha.exp();
                let g = -(-alpha * len).exp_m1() / alpha;
                (g, len * (-alpha * len).exp() - g)
            }
        }
    }

    /// Upper bound of g used by the dominating intensity.
    pub fn sup(self) -> f64 {
        1.0
    }
}

/// Spatial interaction function, radially symmetric.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpatialKernel {
    Constant,
    /// `exp(-d² / (2 sigma²))` with `sigma = exp(log_sigma)`.
    Gaussian,
}

impl SpatialKernel {
    #[inline]
    pub fn value(self, d2: f64, log_sigma: f64) -> f64 {
        match self {
            SpatialKernel::Constant => 1.0,
            SpatialKernel::Gaussian => {
                let s2 = (2.0 * log_sigma).exp();
                (-0.5 * d2 / s2).exp()
            }
        }
    }

    /// `d log f / d log sigma`.
    #[inline]
    pub fn dlog_value(self, d2: f64, log_sigma: f64) -> f64 {
        match self {
            SpatialKernel::Constant => 0.0,
            SpatialKernel::Gaussian => d2 / (2.0 * log_sigma).exp(),
        }
    }

    /// `∫_{b(0,δ)} f` and its derivative with respect to `log sigma`.
    pub fn disc_integral(self, delta: f64, log_sigma: f64) -> (f64, f64) {
        match self {
            SpatialKernel::Constant => (PI * delta * delta, 0.0),
            SpatialKernel::Gaussian => {
                let s2 = (2.0 * log_sigma).exp();
                let a = delta * delta / (2.0 * s2);
                let one_minus = -(-a).exp_m1();
                let value = 2.0 * PI * s2 * one_minus;
                (value, 2.0 * value - 2.0 * PI * delta * delta * (-a).exp())
            }
        }
    }

    pub fn sup(self) -> f64 {
        1.0
    }
}
