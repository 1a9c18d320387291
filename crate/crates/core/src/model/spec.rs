use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Endemic intercept structure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum InterceptMode {
    /// One intercept shared by all event types.
    #[default]
    Shared,
    /// One intercept per event type.
    PerType,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct EndemicSpec {
    #[serde(default)]
    pub intercept: InterceptMode,
    /// Covariate names: grid covariates or the built-in time terms
    /// `trend`, `sin<k>`, `cos<k>`.
    #[serde(default)]
    pub terms: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct EpidemicSpec {
    /// Mark terms. Each term is a product of factors joined by `*`; a factor
    /// is a numeric mark name or a type indicator `type:<label>`.
    #[serde(default)]
    pub terms: Vec<String>,
}

/// Temporal interaction function family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum TemporalFamily {
    /// `g(t) = 1` on `(0, eps]`.
    #[default]
    Constant,
    /// `g(t) = exp(-alpha t)`, parametrised by `log alpha`.
    Exponential {
        #[serde(default)]
        per_type: bool,
    },
}

/// Spatial interaction function family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum SpatialFamily {
    /// `f(s) = 1` on the disc of radius `delta`.
    #[default]
    Constant,
    /// `f(s) = exp(-|s|^2 / (2 sigma^2))`, parametrised by `log sigma`.
    Gaussian {
        #[serde(default)]
        per_type: bool,
    },
}

impl TemporalFamily {
    pub fn n_params(&self, n_types: usize) -> usize {
        match self {
            TemporalFamily::Constant => 0,
            TemporalFamily::Exponential { per_type: false } => 1,
            TemporalFamily::Exponential { per_type: true } => n_types,
        }
    }
}

impl SpatialFamily {
    pub fn n_params(&self, n_types: usize) -> usize {
        match self {
            SpatialFamily::Constant => 0,
            SpatialFamily::Gaussian { per_type: false } => 1,
            SpatialFamily::Gaussian { per_type: true } => n_types,
        }
    }
}

/// Tie-breaking scheme applied to event times before fitting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum TieScheme {
    /// Shift tied duplicates back by multiples of `tie_epsilon` days.
    #[default]
    EpsilonShift,
    /// Subtract an independent U(0,1) day from every event time.
    UniformSubdaily,
}

/// Binary K×K matrix: entry `[k][l] == 1` lets a type-`k` event trigger
/// type-`l` events.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(transparent)]
pub struct TransmissionMatrix(pub Vec<Vec<u8>>);

impl TransmissionMatrix {
    pub fn identity(k: usize) -> Self {
        TransmissionMatrix(
            (0..k)
                .map(|i| (0..k).map(|j| u8::from(i == j)).collect())
                .collect(),
        )
    }

    pub fn full(k: usize) -> Self {
        TransmissionMatrix(vec![vec![1; k]; k])
    }

    pub fn validate(&self, k: usize, epidemic: bool) -> Result<()> {
        if self.0.len() != k || self.0.iter().any(|r| r.len() != k) {
            return Err(Error::Dimension(format!(
                "transmission matrix must be {k}x{k} (one row and column per type)"
            )));
        }
        if self.0.iter().flatten().any(|&q| q > 1) {
            return Err(Error::Validation(
                "transmission matrix entries must be 0 or 1".into(),
            ));
        }
        if epidemic && self.0.iter().flatten().all(|&q| q == 0) {
            return Err(Error::Validation(
                "transmission matrix is all zero but an epidemic component is present".into(),
            ));
        }
        Ok(())
    }

    #[inline]
    pub fn allows(&self, from: usize, to: usize) -> bool {
        self.0[from][to] == 1
    }

    /// Number of types an event of type `from` can trigger.
    pub fn out_degree(&self, from: usize) -> usize {
        self.0[from].iter().filter(|&&q| q == 1).count()
    }

    pub fn targets(&self, from: usize) -> Vec<usize> {
        (0..self.0.len())
            .filter(|&l| self.allows(from, l))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct CubatureSettings {
    /// Vertex count of the polygon approximating each interaction disc.
    pub disc_vertices: usize,
    /// Initial midpoint-rule cell width as a fraction of `delta`.
    pub cell_fraction: f64,
    /// Relative agreement between successive halvings that stops refinement.
    pub rel_tol: f64,
    pub max_refinements: u32,
}

impl Default for CubatureSettings {
    fn default() -> Self {
        Self {
            disc_vertices: crate::geometry::DEFAULT_DISC_VERTICES,
            cell_fraction: 1.0 / 40.0,
            rel_tol: 1e-4,
            max_refinements: 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerSettings {
    pub max_iterations: usize,
    /// Stop when the gradient ∞-norm is below `gtol * max(1, |loglik|)`.
    pub gtol: f64,
    /// Stop when the relative log-likelihood change is below `ftol`.
    pub ftol: f64,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            gtol: 1e-6,
            ftol: 1e-10,
        }
    }
}

fn default_tie_epsilon() -> f64 {
    0.01
}

/// Complete model specification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    /// Event type labels; events refer to types by label.
    pub types: Vec<String>,
    #[serde(default)]
    pub endemic: EndemicSpec,
    /// Absent for endemic-only models.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epidemic: Option<EpidemicSpec>,
    #[serde(default)]
    pub temporal: TemporalFamily,
    #[serde(default)]
    pub spatial: SpatialFamily,
    /// Maximal temporal interaction range (days).
    pub eps: f64,
    /// Maximal spatial interaction range (km).
    pub delta: f64,
    /// Defaults to the identity (type-specific transmission).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transmission: Option<TransmissionMatrix>,
    #[serde(default)]
    pub ties: TieScheme,
    #[serde(default = "default_tie_epsilon")]
    pub tie_epsilon: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub cubature: CubatureSettings,
    #[serde(default)]
    pub optimizer: OptimizerSettings,
}

impl ModelSpec {
    /// Endemic-only spec with a shared intercept.
    pub fn endemic_only(types: &[&str], terms: &[&str], eps: f64, delta: f64) -> Self {
        ModelSpec {
            types: types.iter().map(|s| s.to_string()).collect(),
            endemic: EndemicSpec {
                intercept: InterceptMode::Shared,
                terms: terms.iter().map(|s| s.to_string()).collect(),
            },
            epidemic: None,
            temporal: TemporalFamily::Constant,
            spatial: SpatialFamily::Constant,
            eps,
            delta,
            transmission: None,
            ties: TieScheme::EpsilonShift,
            tie_epsilon: default_tie_epsilon(),
            seed: 0,
            cubature: CubatureSettings::default(),
            optimizer: OptimizerSettings::default(),
        }
    }

    pub fn with_epidemic(mut self, terms: &[&str]) -> Self {
        self.epidemic = Some(EpidemicSpec {
            terms: terms.iter().map(|s| s.to_string()).collect(),
        });
        self
    }

    pub fn with_spatial(mut self, f: SpatialFamily) -> Self {
        self.spatial = f;
        self
    }

    pub fn with_temporal(mut self, g: TemporalFamily) -> Self {
        self.temporal = g;
        self
    }

    pub fn with_intercept(mut self, mode: InterceptMode) -> Self {
        self.endemic.intercept = mode;
        self
    }

    pub fn with_transmission(mut self, q: TransmissionMatrix) -> Self {
        self.transmission = Some(q);
        self
    }

    pub fn n_types(&self) -> usize {
        self.types.len()
    }

    pub fn has_epidemic(&self) -> bool {
        self.epidemic.is_some()
    }

    pub fn transmission(&self) -> TransmissionMatrix {
        self.transmission
            .clone()
            .unwrap_or_else(|| TransmissionMatrix::identity(self.types.len()))
    }

    pub fn type_index(&self, label: &str) -> Option<usize> {
        self.types.iter().position(|t| t == label)
    }

    pub fn validate(&self) -> Result<()> {
        if self.types.is_empty() {
            return Err(Error::Validation(
                "at least one event type must be declared".into(),
            ));
        }
        let mut sorted = self.types.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != self.types.len() {
            return Err(Error::Validation("event type labels must be unique".into()));
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::Validation(format!(
                "eps must be finite and positive, got {}",
                self.eps
            )));
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(Error::Validation(format!(
                "delta must be finite and positive, got {}",
                self.delta
            )));
        }
        if !(self.tie_epsilon > 0.0 && self.tie_epsilon.is_finite()) {
            return Err(Error::Validation("tie_epsilon must be positive".into()));
        }
        let c = &self.cubature;
        if c.disc_vertices < 3 || !(c.cell_fraction > 0.0) || !(c.rel_tol >= 0.0) {
            return Err(Error::Validation("invalid cubature settings".into()));
        }
        let o = &self.optimizer;
        if o.max_iterations == 0 || !(o.gtol >= 0.0) || !(o.ftol >= 0.0) {
            return Err(Error::Validation("invalid optimizer settings".into()));
        }
        self.transmission()
            .validate(self.types.len(), self.has_epidemic())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_round_trips_through_json() {
        let spec = ModelSpec::endemic_only(&["B", "C"], &["trend", "sin1"], 30.0, 200.0)
            .with_epidemic(&["type:C", "age"])
            .with_spatial(SpatialFamily::Gaussian { per_type: true })
            .with_temporal(TemporalFamily::Exponential { per_type: false })
            .with_intercept(InterceptMode::PerType)
            .with_transmission(TransmissionMatrix::identity(2));
        let text = serde_json::to_string(&spec).unwrap();
        let back: ModelSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(spec, back);
        assert_eq!(text, serde_json::to_string(&back).unwrap());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let bad = r#"{"types":["A"],"eps":1,"delta":1,"colour":"red"}"#;
        assert!(serde_json::from_str::<ModelSpec>(bad).is_err());
        let bad_family =
            r#"{"types":["A"],"eps":1,"delta":1,"spatial":{"family":"gaussian","sigma":2}}"#;
        assert!(serde_json::from_str::<ModelSpec>(bad_family).is_err());
        let good = r#"{"types":["A"],"eps":1,"delta":1,"spatial":{"family":"gaussian"}}"#;
        let spec: ModelSpec = serde_json::from_str(good).unwrap();
        assert_eq!(spec.spatial, SpatialFamily::Gaussian { per_type: false });
    }

    #[test]
    fn transmission_validation() {
        assert!(TransmissionMatrix::identity(2).validate(2, true).is_ok());
        assert!(TransmissionMatrix(vec![vec![0, 0], vec![0, 0]])
            .validate(2, true)
            .is_err());
        assert!(TransmissionMatrix(vec![vec![0, 0], vec![0, 0]])
            .validate(2, false)
            .is_ok());
        assert!(TransmissionMatrix(vec![vec![2]]).validate(1, true).is_err());
        assert!(TransmissionMatrix::identity(3).validate(2, true).is_err());
        assert_eq!(TransmissionMatrix::full(3).out_degree(1), 3);
    }
}
