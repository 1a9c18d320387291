use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::spec::{InterceptMode, ModelSpec, SpatialFamily, TemporalFamily};
use crate::error::{Error, Result};

/// Fixed parameter layout of a model: endemic intercepts, endemic
/// coefficients, epidemic intercept and coefficients, log-scale spatial
/// parameters, log-scale temporal parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamLayout {
    names: Vec<String>,
    pub intercepts: Range<usize>,
    pub endemic: Range<usize>,
    pub epidemic: Range<usize>,
    pub sigma: Range<usize>,
    pub alpha: Range<usize>,
    per_type_intercept: bool,
    per_type_sigma: bool,
    per_type_alpha: bool,
}

impl ParamLayout {
    pub fn new(spec: &ModelSpec) -> Self {
        let mut names = Vec::new();
        let per_type_intercept = spec.endemic.intercept == InterceptMode::PerType;
        let start = names.len();
        if per_type_intercept {
            names.extend(spec.types.iter().map(|t| format!("h.intercept[{t}]")));
        } else {
            names.push("h.intercept".to_string());
        }
        let intercepts = start..names.len();
        let start = names.len();
        names.extend(spec.endemic.terms.iter().map(|t| format!("h.{t}")));
        let endemic = start..names.len();
        let start = names.len();
        let (mut per_type_sigma, mut per_type_alpha) = (false, false);
        let (epidemic, sigma, alpha);
        if let Some(epi) = &spec.epidemic {
            names.push("e.intercept".to_string());
            names.extend(epi.terms.iter().map(|t| format!("e.{t}")));
            epidemic = start..names.len();
            let s0 = names.len();
            match spec.spatial {
                SpatialFamily::Constant => {}
                SpatialFamily::Gaussian { per_type: false } => names.push("e.log_sigma".into()),
                SpatialFamily::Gaussian { per_type: true } => {
                    per_type_sigma = true;
                    names.extend(spec.types.iter().map(|t| format!("e.log_sigma[{t}]")));
                }
            }
            sigma = s0..names.len();
            let a0 = names.len();
            match spec.temporal {
                TemporalFamily::Constant => {}
                TemporalFamily::Exponential { per_type: false } => names.push("e.log_alpha".into()),
                TemporalFamily::Exponential { per_type: true } => {
                    per_type_alpha = true;
                    names.extend(spec.types.iter().map(|t| format!("e.log_alpha[{t}]")));
                }
            }
            alpha = a0..names.len();
        } else {
            epidemic = start..start;
            sigma = start..start;
            alpha = start..start;
        }
        ParamLayout {
            names,
            intercepts,
            endemic,
            epidemic,
            sigma,
            alpha,
            per_type_intercept,
            per_type_sigma,
            per_type_alpha,
        }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Index of β₀(κ).
    #[inline]
    pub fn intercept_index(&self, kind: usize) -> usize {
        self.intercepts.start + if self.per_type_intercept { kind } else { 0 }
    }

    /// Index of the spatial scale parameter used by sources of type `kind`.
    #[inline]
    pub fn sigma_index(&self, kind: usize) -> Option<usize> {
        if self.sigma.is_empty() {
            None
        } else {
            Some(self.sigma.start + if self.per_type_sigma { kind } else { 0 })
        }
    }

    #[inline]
    pub fn alpha_index(&self, kind: usize) -> Option<usize> {
        if self.alpha.is_empty() {
            None
        } else {
            Some(self.alpha.start + if self.per_type_alpha { kind } else { 0 })
        }
    }

    /// Whether parameter `i` is stored on the log scale.
    pub fn is_log_scale(&self, i: usize) -> bool {
        self.sigma.contains(&i) || self.alpha.contains(&i)
    }
}

/// Parameter values in the layout order of a [`ParamLayout`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParameterVector(pub Vec<f64>);

impl ParameterVector {
    pub fn zeros(layout: &ParamLayout) -> Self {
        ParameterVector(vec![0.0; layout.len()])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Checks length and finiteness against a layout.
    pub fn check(&self, layout: &ParamLayout) -> Result<()> {
        if self.0.len() != layout.len() {
            return Err(Error::Dimension(format!(
                "parameter vector has {} entries, model expects {} ({})",
                self.0.len(),
                layout.len(),
                layout.names().join(", ")
            )));
        }
        if let Some(i) = self.0.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "parameter '{}' is not finite",
                layout.names()[i]
            )));
        }
        Ok(())
    }

    /// Builds a vector from named values; every layout name must be given.
    pub fn from_named<'a, I>(layout: &ParamLayout, values: I) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a str, f64)>,
    {
        let mut out = vec![None; layout.len()];
        for (name, v) in values {
            let i = layout.index_of(name).ok_or_else(|| {
                Error::Validation(format!(
                    "unknown parameter '{name}'; expected one of: {}",
                    layout.names().join(", ")
                ))
            })?;
            out[i] = Some(v);
        }
        let values = out
            .into_iter()
            .enumerate()
            .map(|(i, v)| {
                v.ok_or_else(|| {
                    Error::Validation(format!("parameter '{}' is missing", layout.names()[i]))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let theta = ParameterVector(values);
        theta.check(layout)?;
        Ok(theta)
    }

    pub fn named<'a>(&'a self, layout: &'a ParamLayout) -> impl Iterator<Item = (&'a str, f64)> {
        layout
            .names()
            .iter()
            .map(String::as_str)
            .zip(self.0.iter().copied())
    }
}

impl std::ops::Index<usize> for ParameterVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl std::ops::IndexMut<usize> for ParameterVector {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.0[i]
    }
}

impl From<Vec<f64>> for ParameterVector {
    fn from(v: Vec<f64>) -> Self {
        ParameterVector(v)
    }
}
