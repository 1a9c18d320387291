use serde::{Deserialize, Serialize};

use super::repro::quantile_sorted;
use crate::error::{Error, Result};
use crate::model::{Event, Model, ParameterVector};
use crate::simulate::{simulate_replicates, MarkSampler};

/// Incidence is reported per this many inhabitants.
pub const PER_POPULATION: f64 = 100_000.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TileEnvelope {
    pub tile: String,
    pub population: f64,
    pub observed_count: usize,
    pub observed: f64,
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
    /// Observed incidence lies strictly outside `[lower, upper]`.
    pub outside: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncidenceEnvelope {
    pub tiles: Vec<TileEnvelope>,
    /// Tiles without a positive population.
    pub excluded: Vec<String>,
    pub n_sims: usize,
    pub seed: u64,
    pub warnings: Vec<String>,
}

impl IncidenceEnvelope {
    pub fn n_outside(&self) -> usize {
        self.tiles.iter().filter(|t| t.outside).count()
    }
}

fn counts_by_tile(model: &Model, events: &[Event]) -> Result<Vec<usize>> {
    let mut counts = vec![0; model.grid().n_tiles()];
    for e in events {
        counts[model.grid().tile_of(e.location)?] += 1;
    }
    Ok(counts)
}

/// Per-tile cumulative incidence of `observed` against the 2.5% and 97.5%
/// quantiles over `n_sims` replicates simulated on the whole period.
pub fn incidence_envelope(
    model: &Model,
    theta: &ParameterVector,
    observed: &[Event],
    marks: &dyn MarkSampler,
    n_sims: usize,
    seed: u64,
) -> Result<IncidenceEnvelope> {
    if n_sims == 0 {
        return Err(Error::InvalidArgument(
            "the envelope needs at least one simulation".into(),
        ));
    }
    let grid = model.grid();
    let obs = counts_by_tile(model, observed)?;
    let sims = simulate_replicates(model, theta, marks, grid.end_time(), seed, n_sims)?;
    let mut warnings = Vec::new();
    let capped = sims.iter().filter(|s| !s.complete).count();
    if capped > 0 {
        warnings.push(format!(
            "{capped} of {n_sims} replicates stopped at the event cap"
        ));
    }
    let sim_counts: Vec<Vec<usize>> = sims
        .iter()
        .map(|s| counts_by_tile(model, &s.events))
        .collect::<Result<_>>()?;
    let mut tiles = Vec::new();
    let mut excluded = Vec::new();
    for (x, tile) in grid.tiles().iter().enumerate() {
        let pop = match tile.population {
            Some(p) if p > 0.0 => p,
            _ => {
                excluded.push(tile.id.clone());
                continue;
            }
        };
        let scale = PER_POPULATION / pop;
        let mut values: Vec<f64> = sim_counts.iter().map(|c| c[x] as f64 * scale).collect();
        values.sort_by(f64::total_cmp);
        let observed = obs[x] as f64 * scale;
        let (lower, upper) = (
            quantile_sorted(&values, 0.025),
            quantile_sorted(&values, 0.975),
        );
        tiles.push(TileEnvelope {
            tile: tile.id.clone(),
            population: pop,
            observed_count: obs[x],
            observed,
            mean: values.iter().sum::<f64>() / n_sims as f64,
            lower,
            upper,
            outside: observed < lower || observed > upper,
        });
    }
    Ok(IncidenceEnvelope {
        tiles,
        excluded,
        n_sims,
        seed,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point;
    use crate::model::{ModelSpec, SpaceTimeGrid};
    use crate::simulate::{simulate, NoMarks};
    use std::sync::Arc;

    fn model(populations: &[Option<f64>]) -> Model {
        let grid = SpaceTimeGrid::lattice(10, 10, 1.0, &[0.0, 50.0])
            .unwrap()
            .with_populations(populations)
            .unwrap();
        Model::new(
            ModelSpec::endemic_only(&["A"], &[], 10.0, 1.0),
            Arc::new(grid),
        )
        .unwrap()
    }

    #[test]
    fn zero_simulations_is_an_error() {
        let m = model(&[Some(1000.0); 100]);
        let err =
            incidence_envelope(&m, &ParameterVector(vec![0.0]), &[], &NoMarks, 0, 1).unwrap_err();
        assert!(matches!(err, Error::InvalidArgument(_)));
    }

    #[test]
    fn tiles_without_population_are_excluded() {
        let mut pops = vec![Some(1000.0); 100];
        pops[3] = None;
        pops[7] = Some(0.0);
        let m = model(&pops);
        let obs = vec![Event::new(1.0, Point::new(3.5, 0.5), 0)];
        let env =
            incidence_envelope(&m, &ParameterVector(vec![-3.0]), &obs, &NoMarks, 5, 1).unwrap();
        assert_eq!(env.tiles.len(), 98);
        assert_eq!(env.excluded.len(), 2);
        assert!(env
            .tiles
            .iter()
            .all(|t| t.lower <= t.mean && t.mean <= t.upper));
    }

    #[test]
    fn data_from_the_model_fall_outside_about_five_percent() {
        let m = model(&[Some(2000.0); 100]);
        let theta = ParameterVector(vec![0.0]);
        let (mut outside, mut total) = (0, 0);
        for seed in 0..5 {
            let obs = simulate(&m, &theta, &NoMarks, 50.0, 1000 + seed)
                .unwrap()
                .events;
            let env = incidence_envelope(&m, &theta, &obs, &NoMarks, 199, seed).unwrap();
            outside += env.n_outside();
            total += env.tiles.len();
        }
        let rate = outside as f64 / total as f64;
        assert!((0.01..=0.10).contains(&rate), "{rate}");
    }
}
