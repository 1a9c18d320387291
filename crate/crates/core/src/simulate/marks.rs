use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use super::SimRng;
use crate::error::{Error, Result};
use crate::model::Event;

pub type Marks = BTreeMap<String, f64>;

/// Supplies marks for newly simulated events.
pub trait MarkSampler: Send + Sync {
    /// Marks for a new event of type `kind`; `parent` is the triggering
    /// event for epidemic births.
    fn sample(&self, kind: usize, parent: Option<&Event>, rng: &mut SimRng) -> Result<Marks>;
}

/// Events without marks.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoMarks;

impl MarkSampler for NoMarks {
    fn sample(&self, _: usize, _: Option<&Event>, _: &mut SimRng) -> Result<Marks> {
        Ok(Marks::new())
    }
}

/// Resamples whole mark vectors from observed events of the same type,
/// falling back to the pooled set when a type has no observations.
#[derive(Debug, Clone, Default)]
pub struct EmpiricalMarks {
    by_type: Vec<Vec<Marks>>,
    pooled: Vec<Marks>,
}

impl EmpiricalMarks {
    pub fn from_events(events: &[Event], n_types: usize) -> Self {
        let mut by_type = vec![Vec::new(); n_types];
        for e in events {
            if let Some(pool) = by_type.get_mut(e.kind) {
                pool.push(e.marks.clone());
            }
        }
        EmpiricalMarks {
            by_type,
            pooled: events.iter().map(|e| e.marks.clone()).collect(),
        }
    }
}

impl MarkSampler for EmpiricalMarks {
    fn sample(&self, kind: usize, _: Option<&Event>, rng: &mut SimRng) -> Result<Marks> {
        let pool = match self.by_type.get(kind) {
            Some(p) if !p.is_empty() => p,
            _ => &self.pooled,
        };
        if pool.is_empty() {
            return Ok(Marks::new());
        }
        Ok(pool[rng.random_range(0..pool.len())].clone())
    }
}

/// Distribution of a single mark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "dist", rename_all = "snake_case", deny_unknown_fields)]
pub enum MarkDistribution {
    Normal { mean: f64, sd: f64 },
    Uniform { low: f64, high: f64 },
    Bernoulli { p: f64 },
    Categorical { values: Vec<f64>, weights: Vec<f64> },
}

impl MarkDistribution {
    fn validate(&self, name: &str) -> Result<()> {
        let bad = |msg: &str| Err(Error::Validation(format!("mark '{name}': {msg}")));
        match self {
            MarkDistribution::Normal { mean, sd } if !(mean.is_finite() && *sd >= 0.0 && sd.is_finite()) => {
                bad("normal needs a finite mean and sd >= 0")
            }
            MarkDistribution::Uniform { low, high } if !(low.is_finite() && high.is_finite() && low <= high) => {
                bad("uniform needs finite low <= high")
            }
            MarkDistribution::Bernoulli { p } if !(0.0..=1.0).contains(p) => bad("bernoulli p must lie in [0, 1]"),
            MarkDistribution::Categorical { values, weights }
                if values.is_empty()
                    || values.len() != weights.len()
                    || weights.iter().any(|w| !(*w >= 0.0 && w.is_finite()))
                    || weights.iter().sum::<f64>() <= 0.0 =>
            {
                bad("categorical needs matching non-empty values and non-negative weights with positive sum")
            }
            _ => Ok(()),
        }
    }

    fn draw(&self, rng: &mut SimRng) -> f64 {
        match self {
            MarkDistribution::Normal { mean, sd } => {
                Normal::new(*mean, *sd).expect("validated").sample(rng)
            }
            MarkDistribution::Uniform { low, high } => low + (high - low) * rng.random::<f64>(),
            MarkDistribution::Bernoulli { p } => f64::from(u8::from(rng.random::<f64>() < *p)),
            MarkDistribution::Categorical { values, weights } => {
                let total: f64 = weights.iter().sum();
                let mut u = rng.random::<f64>() * total;
                for (v, w) in values.iter().zip(weights) {
                    if u < *w {
                        return *v;
                    }
                    u -= w;
                }
                *values.last().expect("validated non-empty")
            }
        }
    }
}

/// Marks drawn independently per name, in name order.
#[derive(Debug, Clone, Default)]
pub struct IndependentMarks {
    marks: BTreeMap<String, MarkDistribution>,
}

impl IndependentMarks {
    pub fn new(marks: BTreeMap<String, MarkDistribution>) -> Result<Self> {
        for (name, d) in &marks {
            d.validate(name)?;
        }
        Ok(IndependentMarks { marks })
    }
}

impl MarkSampler for IndependentMarks {
    fn sample(&self, _: usize, _: Option<&Event>, rng: &mut SimRng) -> Result<Marks> {
        Ok(self
            .marks
            .iter()
            .map(|(name, d)| (name.clone(), d.draw(rng)))
            .collect())
    }
}

/// Mark scheme as given in a configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "scheme", rename_all = "snake_case", deny_unknown_fields)]
pub enum MarkScheme {
    /// Resample from the observed events.
    Empirical {},
    None {},
    Independent {
        marks: BTreeMap<String, MarkDistribution>,
    },
}

impl Default for MarkScheme {
    fn default() -> Self {
        MarkScheme::Empirical {}
    }
}

impl MarkScheme {
    pub fn build(&self, observed: &[Event], n_types: usize) -> Result<Box<dyn MarkSampler>> {
        Ok(match self {
            MarkScheme::Empirical {} => Box::new(EmpiricalMarks::from_events(observed, n_types)),
            MarkScheme::None {} => Box::new(NoMarks),
            MarkScheme::Independent { marks } => Box::new(IndependentMarks::new(marks.clone())?),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point;
    use rand::SeedableRng;

    #[test]
    fn empirical_uses_type_pool_then_pooled() {
        let events = vec![
            Event::new(1.0, Point::new(0.0, 0.0), 0).with_mark("age", 3.0),
            Event::new(2.0, Point::new(0.0, 0.0), 0).with_mark("age", 5.0),
        ];
        let s = EmpiricalMarks::from_events(&events, 2);
        let mut rng = SimRng::seed_from_u64(1);
        for _ in 0..50 {
            let m = s.sample(0, None, &mut rng).unwrap();
            assert!(m["age"] == 3.0 || m["age"] == 5.0);
            assert!(s.sample(1, None, &mut rng).unwrap().contains_key("age"));
        }
        let empty = EmpiricalMarks::from_events(&[], 1);
        assert!(empty.sample(0, None, &mut rng).unwrap().is_empty());
    }

    #[test]
    fn independent_draws_respect_supports() {
        let mut marks = BTreeMap::new();
        marks.insert(
            "u".into(),
            MarkDistribution::Uniform {
                low: 2.0,
                high: 3.0,
            },
        );
        marks.insert("b".into(), MarkDistribution::Bernoulli { p: 0.3 });
        marks.insert(
            "c".into(),
            MarkDistribution::Categorical {
                values: vec![1.0, 7.0],
                weights: vec![0.0, 2.0],
            },
        );
        let s = IndependentMarks::new(marks).unwrap();
        let mut rng = SimRng::seed_from_u64(2);
        let mut ones = 0;
        for _ in 0..10_000 {
            let m = s.sample(0, None, &mut rng).unwrap();
            assert!((2.0..=3.0).contains(&m["u"]));
            assert_eq!(m["c"], 7.0);
            ones += m["b"] as usize;
        }
        assert!((ones as f64 - 3000.0).abs() < 3.0 * (10_000.0f64 * 0.21).sqrt());
    }

    #[test]
    fn invalid_distributions_are_rejected() {
        let mut marks = BTreeMap::new();
        marks.insert("p".into(), MarkDistribution::Bernoulli { p: 1.5 });
        assert!(IndependentMarks::new(marks)
            .unwrap_err()
            .to_string()
            .contains("'p'"));
    }

    #[test]
    fn scheme_round_trips() {
        let s: MarkScheme = serde_json::from_str(
            r#"{"scheme":"independent","marks":{"age":{"dist":"normal","mean":1,"sd":2}}}"#,
        )
        .unwrap();
        assert_eq!(
            serde_json::from_str::<MarkScheme>(&serde_json::to_string(&s).unwrap()).unwrap(),
            s
        );
        assert!(serde_json::from_str::<MarkScheme>(r#"{"scheme":"empirical","x":1}"#).is_err());
    }
}
