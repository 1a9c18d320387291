use std::sync::Arc;

use rayon::prelude::*;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use super::fit::{fit_with_evaluator, FitResult};
use super::Evaluator;
use crate::error::Result;
use crate::model::{
    EpidemicSpec, Event, Model, ModelSpec, ParameterVector, SpaceTimeGrid, SpatialFamily,
};

fn default_refit_top() -> usize {
    10
}

/// Candidate lattice: every endemic subset is combined with every epidemic
/// subset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct SearchLattice {
    /// Endemic term subsets.
    pub endemic: Vec<Vec<String>>,
    /// Epidemic term subsets; `null` stands for no epidemic component.
    pub epidemic: Vec<Option<Vec<String>>>,
    /// Number of best epidemic candidates refitted with a gaussian f.
    #[serde(default = "default_refit_top")]
    pub refit_top: usize,
}

/// One fitted (or failed) candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateOutcome {
    pub id: String,
    pub stage: u8,
    pub endemic_terms: Vec<String>,
    pub epidemic_terms: Option<Vec<String>>,
    pub spatial: SpatialFamily,
    pub fit: Option<FitResult>,
    pub error: Option<String>,
}

impl CandidateOutcome {
    pub fn aic(&self) -> Option<f64> {
        self.fit.as_ref().map(|f| f.aic)
    }

    pub fn n_params(&self) -> Option<usize> {
        self.fit.as_ref().map(|f| f.n_params)
    }
}

/// Ranked search outcome: successful fits by increasing AIC (ties broken
/// by fewer parameters), then failures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub ranking: Vec<CandidateOutcome>,
}

impl SearchResult {
    pub fn best(&self) -> Option<&CandidateOutcome> {
        self.ranking.first().filter(|c| c.fit.is_some())
    }
}

struct Candidate {
    id: String,
    stage: u8,
    spec: ModelSpec,
    init: Option<Vec<(String, f64)>>,
}

fn fit_candidate(c: &Candidate, grid: &Arc<SpaceTimeGrid>, events: &[Event]) -> CandidateOutcome {
    let run = || -> Result<FitResult> {
        let model = Model::new(c.spec.clone(), Arc::clone(grid))?;
        let ev = Evaluator::new(&model, events)?;
        let init = c
            .init
            .as_ref()
            .map(|named| warm_start(&model, events, named));
        fit_with_evaluator(&ev, init.as_ref())
    };
    let (fit, error) = match run() {
        Ok(f) => (Some(f), None),
        Err(e) => (None, Some(e.to_string())),
    };
    CandidateOutcome {
        id: c.id.clone(),
        stage: c.stage,
        endemic_terms: c.spec.endemic.terms.clone(),
        epidemic_terms: c.spec.epidemic.as_ref().map(|e| e.terms.clone()),
        spatial: c.spec.spatial,
        fit,
        error,
    }
}

fn rank(mut all: Vec<CandidateOutcome>) -> Vec<CandidateOutcome> {
    all.sort_by(|a, b| match (a.aic(), b.aic()) {
        (Some(x), Some(y)) => x
            .total_cmp(&y)
            .then(a.n_params().cmp(&b.n_params()))
            .then(a.id.cmp(&b.id)),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => a.id.cmp(&b.id),
    });
    all
}

/// Two-stage AIC search. Stage 1 fits every lattice candidate with a
/// constant spatial kernel; stage 2 refits the `refit_top` best epidemic
/// candidates with a gaussian kernel, shared and (for K > 1) type-specific
/// σ. `base` supplies everything except the term lists and f.
pub fn model_search(
    base: &ModelSpec,
    grid: &Arc<SpaceTimeGrid>,
    events: &[Event],
    lattice: &SearchLattice,
) -> SearchResult {
    let mut stage1 = Vec::new();
    for endemic in &lattice.endemic {
        for epidemic in &lattice.epidemic {
            let mut spec = base.clone();
            spec.endemic.terms = endemic.clone();
            spec.epidemic = epidemic.as_ref().map(|terms| EpidemicSpec {
                terms: terms.clone(),
            });
            spec.spatial = SpatialFamily::Constant;
            stage1.push(Candidate {
                id: format!("m{:03}", stage1.len() + 1),
                stage: 1,
                spec,
                init: None,
            });
        }
    }
    let first: Vec<CandidateOutcome> = stage1
        .par_iter()
        .map(|c| fit_candidate(c, grid, events))
        .collect();

    let mut epidemic_ranked: Vec<(&Candidate, &CandidateOutcome)> = stage1
        .iter()
        .zip(&first)
        .filter(|(c, o)| c.spec.epidemic.is_some() && o.fit.is_some())
        .collect();
    epidemic_ranked.sort_by(|a, b| {
        let (x, y) = (
            a.1.aic().unwrap_or(f64::INFINITY),
            b.1.aic().unwrap_or(f64::INFINITY),
        );
        x.total_cmp(&y).then(a.1.n_params().cmp(&b.1.n_params()))
    });
    let mut stage2 = Vec::new();
    let families: &[SpatialFamily] = if base.n_types() > 1 {
        &[
            SpatialFamily::Gaussian { per_type: false },
            SpatialFamily::Gaussian { per_type: true },
        ]
    } else {
        &[SpatialFamily::Gaussian { per_type: false }]
    };
    for (c, o) in epidemic_ranked.into_iter().take(lattice.refit_top) {
        let fitted = o.fit.as_ref().expect("filtered on successful fits");
        let named: Vec<(String, f64)> = fitted
            .parameters
            .iter()
            .cloned()
            .zip(fitted.estimates.iter().copied())
            .collect();
        for (k, family) in families.iter().enumerate() {
            let mut spec = c.spec.clone();
            spec.spatial = *family;
            stage2.push(Candidate {
                id: format!("{}{}", c.id, if k == 0 { "g" } else { "gt" }),
                stage: 2,
                spec,
                init: Some(named.clone()),
            });
        }
    }
    let second: Vec<CandidateOutcome> = stage2
        .par_iter()
        .map(|c| fit_candidate(c, grid, events))
        .collect();
    let mut all = first;
    all.extend(second);
    SearchResult { ranking: rank(all) }
}

fn warm_start(model: &Model, events: &[Event], named: &[(String, f64)]) -> ParameterVector {
    let mut theta = model.default_theta(events);
    for (name, v) in named {
        if let Some(i) = model.layout().index_of(name) {
            theta[i] = *v;
        }
    }
    theta
}
