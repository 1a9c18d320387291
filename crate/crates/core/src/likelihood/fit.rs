use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use super::optim::{bfgs, OptimOutcome};
use super::Evaluator;
use crate::error::{Error, Result};
use crate::model::{Event, Model, ModelSpec, ParameterVector};

/// Maximum-likelihood fit summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub spec: ModelSpec,
    pub parameters: Vec<String>,
    pub estimates: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub loglik: f64,
    pub event_term: f64,
    pub endemic_integral: f64,
    pub epidemic_integral: f64,
    pub aic: f64,
    pub n_params: usize,
    pub n_events: usize,
    pub score: Vec<f64>,
    /// Optional-variation information `Σ u_i u_i'`.
    pub information: Vec<Vec<f64>>,
    /// Inverse (or pseudo-inverse) of the information.
    pub covariance: Vec<Vec<f64>>,
    pub pseudo_inverse: bool,
    pub converged: bool,
    pub iterations: usize,
    pub gradient_norm: f64,
    pub message: String,
    /// Log-likelihood at the start and after every accepted iteration.
    pub trace: Vec<f64>,
    pub warnings: Vec<String>,
}

impl FitResult {
    pub fn theta(&self) -> ParameterVector {
        ParameterVector(self.estimates.clone())
    }

    pub fn covariance_matrix(&self) -> DMatrix<f64> {
        let p = self.covariance.len();
        DMatrix::from_fn(p, p, |i, j| self.covariance[i][j])
    }

    pub fn estimate(&self, name: &str) -> Option<f64> {
        let i = self.parameters.iter().position(|n| n == name)?;
        Some(self.estimates[i])
    }

    pub fn std_error(&self, name: &str) -> Option<f64> {
        let i = self.parameters.iter().position(|n| n == name)?;
        Some(self.std_errors[i])
    }

    /// Estimates, standard errors and Wald tests as aligned text.
    pub fn table_text(&self) -> String {
        let rows = wald_table(self);
        let width = rows.iter().map(|r| r.name.len()).max().unwrap_or(9).max(9);
        let mut out = format!(
            "{:<width$}  {:>12}  {:>10}  {:>8}  {:>10}\n",
            "parameter", "estimate", "std.error", "z", "p"
        );
        for r in &rows {
            let (z, p) = match (r.z, r.p) {
                (Some(z), Some(p)) => (format!("{z:.2}"), format_p(p)),
                _ => ("-".to_string(), "-".to_string()),
            };
            out.push_str(&format!(
                "{:<width$}  {:>12.4}  {:>10.4}  {:>8}  {:>10}\n",
                r.name, r.estimate, r.std_error, z, p
            ));
        }
        out.push_str(&format!(
            "\nlog-likelihood {:.4}  AIC {:.4}  parameters {}  events {}  converged {}\n",
            self.loglik, self.aic, self.n_params, self.n_events, self.converged
        ));
        out
    }
}

fn format_p(p: f64) -> String {
    if p < 1e-4 {
        if p < 1e-16 {
            "<1e-16".to_string()
        } else {
            format!("{p:.1e}")
        }
    } else {
        format!("{p:.4}")
    }
}

/// One row of the Wald table. Tests are omitted for log-scale parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct WaldRow {
    pub name: String,
    pub estimate: f64,
    pub std_error: f64,
    pub z: Option<f64>,
    pub p: Option<f64>,
}

pub fn wald_table(fit: &FitResult) -> Vec<WaldRow> {
    fit.parameters
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let (est, se) = (fit.estimates[i], fit.std_errors[i]);
            let log_scale = name.starts_with("e.log_");
            let z = (!log_scale && se > 0.0).then(|| est / se);
            WaldRow {
                name: name.clone(),
                estimate: est,
                std_error: se,
                z,
                p: z.map(|z| erfc(z.abs() / std::f64::consts::SQRT_2)),
            }
        })
        .collect()
}

/// Inverse of a symmetric PSD matrix, falling back to the eigen
/// pseudo-inverse when it is singular or not positive definite.
pub(crate) fn covariance_from_information(info: &DMatrix<f64>) -> (DMatrix<f64>, bool) {
    let p = info.nrows();
    if p == 0 {
        return (info.clone(), false);
    }
    if let Some(chol) = info.clone().cholesky() {
        let inv = chol.inverse();
        if inv.iter().all(|v| v.is_finite()) {
            return ((&inv + inv.transpose()) * 0.5, false);
        }
    }
    let eig = info.clone().symmetric_eigen();
    let max = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tol = max * p as f64 * f64::EPSILON;
    let mut out = DMatrix::zeros(p, p);
    for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda > tol {
            let v = eig.eigenvectors.column(k);
            out += (v * v.transpose()) / lambda;
        }
    }
    (out, true)
}

const POLISH_STEPS: usize = 3;

/// Scoring steps `θ + Î⁻¹u` after BFGS convergence, each kept only when it
/// raises the log-likelihood and shrinks the score.
fn polish(ev: &Evaluator<'_>, out: &mut OptimOutcome) {
    for _ in 0..POLISH_STEPS {
        let theta = ParameterVector(out.x.clone());
        let Ok(info) = ev.information(&theta) else {
            return;
        };
        let Some(chol) = info.cholesky() else {
            return;
        };
        let step = chol.solve(&DVector::from_column_slice(&out.gradient));
        let x: Vec<f64> = out.x.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
        let Ok((parts, Some(g))) = ev.evaluate(&ParameterVector(x.clone()), true) else {
            return;
        };
        let norm = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if !(parts.loglik >= out.value && norm(&g) < norm(&out.gradient)) {
            return;
        }
        out.x = x;
        out.value = parts.loglik;
        out.gradient = g;
        out.trace.push(parts.loglik);
    }
}

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

/// Fits the model by BFGS from `init` (default: [`Model::default_theta`]).
pub fn fit(model: &Model, events: &[Event], init: Option<&ParameterVector>) -> Result<FitResult> {
    let ev = Evaluator::new(model, events)?;
    fit_with_evaluator(&ev, init)
}

pub fn fit_with_evaluator(ev: &Evaluator<'_>, init: Option<&ParameterVector>) -> Result<FitResult> {
    let model = ev.model();
    let layout = model.layout();
    let theta0 = match init {
        Some(t) => t.clone(),
        None => model.default_theta(ev.events()),
    };
    theta0.check(layout)?;
    let start = ev.log_likelihood(&theta0)?;
    if let Some(i) = start.zero_intensity {
        return Err(Error::Validation(format!(
            "log-likelihood is -inf at the initial parameters: event {i} has zero intensity"
        )));
    }
    let outcome = bfgs(
        |x| match ev.evaluate(&ParameterVector(x.to_vec()), true) {
            Ok((parts, Some(g))) => (parts.loglik, g),
            _ => (f64::NEG_INFINITY, vec![f64::NAN; x.len()]),
        },
        theta0.as_slice(),
        &model.spec().optimizer,
    );
    let mut outcome = outcome;
    if outcome.converged {
        polish(ev, &mut outcome);
    }
    let theta = ParameterVector(outcome.x.clone());
    let parts = ev.log_likelihood(&theta)?;
    let info = ev.information(&theta)?;
    let (cov, pseudo) = covariance_from_information(&info);
    let mut warnings = ev.warnings().to_vec();
    if pseudo {
        warnings.push("information matrix is singular; covariance is a pseudo-inverse".into());
    }
    if !outcome.converged {
        warnings.push(format!("optimizer did not converge: {}", outcome.message));
    }
    let p = layout.len();
    let std_errors = (0..p).map(|i| cov[(i, i)].max(0.0).sqrt()).collect();
    let gradient_norm = outcome.gradient.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Ok(FitResult {
        spec: model.spec().clone(),
        parameters: layout.names().to_vec(),
        estimates: outcome.x,
        std_errors,
        loglik: parts.loglik,
        event_term: parts.event_term,
        endemic_integral: parts.endemic_integral,
        epidemic_integral: parts.epidemic_integral,
        aic: -2.0 * parts.loglik + 2.0 * p as f64,
        n_params: p,
        n_events: ev.n_events(),
        score: outcome.gradient,
        information: to_rows(&info),
        covariance: to_rows(&cov),
        pseudo_inverse: pseudo,
        converged: outcome.converged,
        iterations: outcome.iterations,
        gradient_norm,
        message: outcome.message,
        trace: outcome.trace,
        warnings,
    })
}
