//! Shared fixtures for the benchmarks.

use std::sync::Arc;

use stcif_core::model::{SpatialFamily, TemporalFamily, TransmissionMatrix};
use stcif_core::simulate::{simulate, NoMarks};
use stcif_core::{Event, Model, ModelSpec, ParameterVector, SpaceTimeGrid};

/// Two-type model on a `side × side` km lattice with gaussian f and
/// exponential g, observed for `days` days in 30-day intervals.
pub fn model(side: usize, days: f64) -> Model {
    let grid = SpaceTimeGrid::lattice(
        side,
        side,
        1.0,
        &SpaceTimeGrid::regular_boundaries(days, 30.0),
    )
    .expect("valid lattice");
    let spec = ModelSpec::endemic_only(&["B", "C"], &["trend"], 10.0, 2.0)
        .with_epidemic(&["type:C"])
        .with_spatial(SpatialFamily::Gaussian { per_type: false })
        .with_temporal(TemporalFamily::Exponential { per_type: false })
        .with_transmission(TransmissionMatrix::identity(2));
    Model::new(spec, Arc::new(grid)).expect("valid model")
}

/// Parameters with a reproduction number around one half.
pub fn theta(model: &Model, events_per_day: f64) -> ParameterVector {
    let area = model.grid().area();
    ParameterVector(vec![
        (events_per_day / 2.0 / area).ln(),
        0.0,
        -3.0,
        -0.5,
        0.5f64.ln(),
        0.2f64.ln(),
    ])
}

/// Events simulated from [`theta`].
pub fn events(model: &Model, theta: &ParameterVector, seed: u64) -> Vec<Event> {
    simulate(model, theta, &NoMarks, model.grid().end_time(), seed)
        .expect("simulation succeeds")
        .events
}
