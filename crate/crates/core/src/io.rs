//! JSON file formats, validated loading and synthetic data generation.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use schemars::{schema_for, JsonSchema};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::diagnostics::break_ties;
use crate::error::{Error, Result};
use crate::geometry::{Point, Polygon};
use crate::likelihood::SearchLattice;
use crate::model::{Event, Interval, Model, ModelSpec, ParameterVector, SpaceTimeGrid, Tile};
use crate::simulate::{simulate, EventSource, MarkScheme, SimulationResult};

/// Version written to and required in events files.
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum EndemicTag {
    Endemic,
}

/// Origin of a simulated event: `"endemic"` or the index of its parent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(untagged)]
pub enum SourceRef {
    Endemic(EndemicTag),
    Parent(usize),
}

impl From<EventSource> for SourceRef {
    fn from(s: EventSource) -> Self {
        match s {
            EventSource::Endemic => SourceRef::Endemic(EndemicTag::Endemic),
            EventSource::Parent(j) => SourceRef::Parent(j),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct EventRecord {
    /// Days since the origin date.
    pub t: f64,
    /// Easting in km.
    pub x: f64,
    /// Northing in km.
    pub y: f64,
    /// Type label from the configuration's type table.
    #[serde(rename = "type")]
    pub kind: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub marks: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<SourceRef>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct EventsFile {
    pub version: u32,
    /// Calendar date of day 0, informational only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub origin_date: Option<String>,
    pub events: Vec<EventRecord>,
}

impl EventsFile {
    /// Events with types resolved against `spec`, in file order.
    pub fn to_events(&self, spec: &ModelSpec) -> Result<Vec<Event>> {
        if self.version != FORMAT_VERSION {
            return Err(Error::Validation(format!(
                "events file version {} is not supported (expected {FORMAT_VERSION})",
                self.version
            )));
        }
        self.events
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let kind = spec.type_index(&r.kind).ok_or_else(|| {
                    Error::Validation(format!(
                        "event {i}: type '{}' is not declared (types: {})",
                        r.kind,
                        spec.types.join(", ")
                    ))
                })?;
                if !(r.t.is_finite() && r.x.is_finite() && r.y.is_finite()) {
                    return Err(Error::Validation(format!(
                        "event {i}: non-finite time or coordinate"
                    )));
                }
                if let Some((name, _)) = r.marks.iter().find(|(_, v)| !v.is_finite()) {
                    return Err(Error::Validation(format!(
                        "event {i}: mark '{name}' is not finite"
                    )));
                }
                let mut e = Event::new(r.t, Point::new(r.x, r.y), kind);
                e.marks = r.marks.clone();
                Ok(e)
            })
            .collect()
    }

    pub fn from_events(
        events: &[Event],
        spec: &ModelSpec,
        sources: Option<&[EventSource]>,
    ) -> Self {
        EventsFile {
            version: FORMAT_VERSION,
            origin_date: None,
            events: events
                .iter()
                .enumerate()
                .map(|(i, e)| EventRecord {
                    t: e.time,
                    x: e.location.x,
                    y: e.location.y,
                    kind: spec.types[e.kind].clone(),
                    marks: e.marks.clone(),
                    source: sources.map(|s| s[i].into()),
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct TileRecord {
    pub id: String,
    /// Closed rings of `[x, y]` km coordinates: a counter-clockwise outer
    /// ring followed by clockwise holes.
    pub rings: Vec<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub population: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct IntervalRecord {
    pub start: f64,
    pub end: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct GridFile {
    pub tiles: Vec<TileRecord>,
    pub intervals: Vec<IntervalRecord>,
    /// `offset[interval][tile]`; all ones when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offset: Option<Vec<Vec<f64>>>,
    /// `covariates[name][interval][tile]`.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub covariates: BTreeMap<String, Vec<Vec<f64>>>,
}

impl GridFile {
    pub fn to_grid(&self) -> Result<SpaceTimeGrid> {
        let tiles = self
            .tiles
            .iter()
            .map(|t| {
                let rings = t
                    .rings
                    .iter()
                    .map(|r| r.iter().map(|&[x, y]| Point::new(x, y)).collect())
                    .collect();
                let poly = Polygon::new(rings)
                    .map_err(|e| Error::Geometry(format!("tile '{}': {e}", t.id)))?;
                Ok(Tile::new(t.id.clone(), poly, t.population))
            })
            .collect::<Result<Vec<_>>>()?;
        let intervals: Vec<Interval> = self
            .intervals
            .iter()
            .map(|iv| Interval {
                start: iv.start,
                end: iv.end,
            })
            .collect();
        let offset = self
            .offset
            .clone()
            .unwrap_or_else(|| vec![vec![1.0; tiles.len()]; intervals.len()]);
        SpaceTimeGrid::new(intervals, tiles, offset, self.covariates.clone())
    }

    pub fn from_grid(grid: &SpaceTimeGrid) -> Self {
        let (d, m) = (grid.n_intervals(), grid.n_tiles());
        let table = |flat: &[f64]| -> Vec<Vec<f64>> {
            (0..d).map(|k| flat[k * m..(k + 1) * m].to_vec()).collect()
        };
        GridFile {
            tiles: grid
                .tiles()
                .iter()
                .map(|t| TileRecord {
                    id: t.id.clone(),
                    rings: t
                        .polygon
                        .rings()
                        .iter()
                        .map(|r| r.iter().map(|p| [p.x, p.y]).collect())
                        .collect(),
                    population: t.population,
                })
                .collect(),
            intervals: grid
                .intervals()
                .iter()
                .map(|iv| IntervalRecord {
                    start: iv.start,
                    end: iv.end,
                })
                .collect(),
            offset: Some(table(grid.offsets())),
            covariates: grid
                .covariate_names()
                .map(|name| {
                    (
                        name.to_string(),
                        table(&grid.covariate(name).expect("listed name")),
                    )
                })
                .collect(),
        }
    }
}

/// Simulation settings of a configuration file.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct SimulationSettings {
    /// Simulation horizon; the grid end time when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub end_time: Option<f64>,
    #[serde(default)]
    pub marks: MarkScheme,
}

/// Configuration file: the model, optional true or fixed parameters, the
/// search lattice and simulation settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub model: ModelSpec,
    /// Named parameter values. Required by `simulate` and `synth`; when
    /// present, `diagnose` and `repro` use them instead of fitting.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<BTreeMap<String, f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub search: Option<SearchLattice>,
    #[serde(default)]
    pub simulation: SimulationSettings,
}

impl ConfigFile {
    pub fn new(model: ModelSpec) -> Self {
        ConfigFile {
            model,
            theta: None,
            search: None,
            simulation: SimulationSettings::default(),
        }
    }

    /// The configured parameters resolved against the model's layout.
    pub fn theta_for(&self, model: &Model) -> Result<Option<ParameterVector>> {
        self.theta
            .as_ref()
            .map(|m| {
                ParameterVector::from_named(model.layout(), m.iter().map(|(k, v)| (k.as_str(), *v)))
            })
            .transpose()
    }
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.display().to_string(),
        source,
    })
}

/// Pretty JSON with a trailing newline. Floats use the shortest
/// representation that round-trips exactly.
pub fn to_json_string<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable value");
    s.push('\n');
    s
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, to_json_string(value)).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Validated inputs of one analysis.
#[derive(Debug, Clone)]
pub struct Bundle {
    pub config: ConfigFile,
    pub model: Model,
    /// Time-sorted, strictly increasing events.
    pub events: Vec<Event>,
    /// Number of events whose time was changed by tie breaking.
    pub ties_adjusted: usize,
}

impl Bundle {
    pub fn grid(&self) -> Arc<SpaceTimeGrid> {
        self.model.grid_arc()
    }

    /// One-line description: events, intervals, tiles, types.
    pub fn summary(&self) -> String {
        let g = self.model.grid();
        format!(
            "n = {}, D = {}, M = {}, K = {}",
            self.events.len(),
            g.n_intervals(),
            g.n_tiles(),
            self.model.n_types()
        )
    }
}

/// Validates parsed inputs. Events are checked in file order (messages
/// name the event index), then sorted; ties are broken with the configured
/// scheme only when present.
pub fn validate(events: &EventsFile, grid: &GridFile, config: ConfigFile) -> Result<Bundle> {
    let spec = &config.model;
    spec.validate()?;
    let grid = Arc::new(grid.to_grid()?);
    let model = Model::new(spec.clone(), grid)?;
    let raw = events.to_events(spec)?;
    model.check_event_domain(&raw)?;
    let mut sorted = raw;
    sorted.sort_by(|a, b| a.time.total_cmp(&b.time));
    let tied = sorted.windows(2).any(|w| w[1].time <= w[0].time);
    let events = if tied {
        let broken = break_ties(&sorted, spec.ties, spec.tie_epsilon, spec.seed)?;
        model.check_event_domain(&broken)?;
        broken
    } else {
        sorted.clone()
    };
    let ties_adjusted = sorted
        .iter()
        .zip(&events)
        .filter(|(a, b)| a.time != b.time)
        .count();
    model.check_events(&events)?;
    Ok(Bundle {
        config,
        model,
        events,
        ties_adjusted,
    })
}

pub fn load_validate(events: &Path, grid: &Path, config: &Path) -> Result<Bundle> {
    let e: EventsFile = read_json(events)?;
    let g: GridFile = read_json(grid)?;
    let c: ConfigFile = read_json(config)?;
    validate(&e, &g, c)
}

/// Simulates from `theta` on `(0, t_end]` and wraps the result as an
/// events file with source attribution.
pub fn synth(
    config: &ConfigFile,
    grid: Arc<SpaceTimeGrid>,
    theta: &ParameterVector,
    t_end: f64,
    seed: u64,
) -> Result<(EventsFile, SimulationResult)> {
    let model = Model::new(config.model.clone(), grid)?;
    let marks = config.simulation.marks.build(&[], model.n_types())?;
    let sim = simulate(&model, theta, marks.as_ref(), t_end, seed)?;
    let file = EventsFile::from_events(&sim.events, &config.model, Some(&sim.sources));
    Ok((file, sim))
}

/// JSON schemas of the input formats, keyed by `events`, `grid`, `config`.
pub fn schemas() -> serde_json::Value {
    serde_json::json!({
        "events": schema_for!(EventsFile),
        "grid": schema_for!(GridFile),
        "config": schema_for!(ConfigFile),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::TransmissionMatrix;

    fn grid_file() -> GridFile {
        GridFile::from_grid(
            &SpaceTimeGrid::lattice(3, 2, 1.0, &[0.0, 50.0, 100.0])
                .unwrap()
                .with_covariate("pop", vec![vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]; 2])
                .unwrap()
                .with_populations(&[Some(100.0); 6])
                .unwrap(),
        )
    }

    fn config() -> ConfigFile {
        ConfigFile::new(
            ModelSpec::endemic_only(&["B", "C"], &["pop"], 10.0, 1.0).with_epidemic(&["type:C"]),
        )
    }

    fn events_file() -> EventsFile {
        serde_json::from_str(
            r#"{"version":1,"origin_date":"2002-01-01","events":[
                {"t":3.0,"x":0.5,"y":0.5,"type":"B"},
                {"t":1.5,"x":2.5,"y":1.5,"type":"C","marks":{"age":4}},
                {"t":3.0,"x":1.5,"y":0.5,"type":"C"}]}"#,
        )
        .unwrap()
    }

    #[test]
    fn valid_triple_loads() {
        let b = validate(&events_file(), &grid_file(), config()).unwrap();
        assert_eq!(b.summary(), "n = 3, D = 2, M = 6, K = 2");
        assert!(b.events.windows(2).all(|w| w[1].time > w[0].time));
        assert_eq!(b.ties_adjusted, 1);
        assert_eq!(b.events[0].marks["age"], 4.0);
        assert!((b.events[1].time - 2.99).abs() < 1e-12);
    }

    #[test]
    fn event_at_time_zero_names_its_index() {
        let mut e = events_file();
        e.events[2].t = 0.0;
        let err = validate(&e, &grid_file(), config()).unwrap_err();
        assert!(err.is_validation());
        assert!(err.to_string().contains("event 2"), "{err}");
    }

    #[test]
    fn event_outside_region_or_of_unknown_type() {
        let mut e = events_file();
        e.events[1].x = 7.0;
        assert!(validate(&e, &grid_file(), config())
            .unwrap_err()
            .to_string()
            .contains("event 1"));
        let mut e = events_file();
        e.events[0].kind = "Z".into();
        let err = validate(&e, &grid_file(), config()).unwrap_err();
        assert!(err.to_string().contains("event 0") && err.to_string().contains("'Z'"));
    }

    #[test]
    fn short_covariate_table_names_the_covariate() {
        let mut g = grid_file();
        for row in g.covariates.get_mut("pop").unwrap() {
            row.pop();
        }
        let err = validate(&events_file(), &g, config()).unwrap_err();
        assert!(matches!(err, Error::Dimension(_)));
        assert!(
            err.to_string().contains("'pop'") && err.to_string().contains("2x5"),
            "{err}"
        );
    }

    #[test]
    fn bad_geometry_names_the_tile() {
        let mut g = grid_file();
        g.tiles[4].rings[0].reverse();
        let err = validate(&events_file(), &g, config()).unwrap_err();
        assert!(err.to_string().contains("tile 't4'"), "{err}");
    }

    #[test]
    fn wrong_version_and_unknown_keys_are_rejected() {
        let mut e = events_file();
        e.version = 2;
        assert!(validate(&e, &grid_file(), config())
            .unwrap_err()
            .to_string()
            .contains("version"));
        assert!(
            serde_json::from_str::<EventsFile>(r#"{"version":1,"events":[],"extra":0}"#).is_err()
        );
        assert!(serde_json::from_str::<ConfigFile>(
            r#"{"model":{"types":["A"],"eps":1,"delta":1,"foo":1}}"#
        )
        .is_err());
        assert!(
            serde_json::from_str::<GridFile>(r#"{"tiles":[],"intervals":[],"bogus":[]}"#).is_err()
        );
    }

    #[test]
    fn config_round_trips() {
        let mut c = config();
        c.theta = Some(BTreeMap::from([("h.intercept".to_string(), -3.0)]));
        c.model.transmission = Some(TransmissionMatrix::full(2));
        c.search = Some(SearchLattice {
            endemic: vec![vec![], vec!["pop".into()]],
            epidemic: vec![None, Some(vec!["type:C".into()])],
            refit_top: 4,
        });
        let text = to_json_string(&c);
        assert_eq!(serde_json::from_str::<ConfigFile>(&text).unwrap(), c);
        let text2 = to_json_string(&serde_json::from_str::<ConfigFile>(&text).unwrap());
        assert_eq!(text, text2);
    }

    #[test]
    fn grid_round_trips() {
        let g = grid_file();
        let back = GridFile::from_grid(&g.to_grid().unwrap());
        assert_eq!(back, g);
    }

    #[test]
    fn source_field_accepts_index_or_endemic() {
        let e: EventsFile = serde_json::from_str(
            r#"{"version":1,"events":[{"t":1,"x":0,"y":0,"type":"A","source":"endemic"},
                {"t":2,"x":0,"y":0,"type":"A","source":0}]}"#,
        )
        .unwrap();
        assert_eq!(
            e.events[0].source,
            Some(SourceRef::Endemic(EndemicTag::Endemic))
        );
        assert_eq!(e.events[1].source, Some(SourceRef::Parent(0)));
        assert!(serde_json::from_str::<SourceRef>(r#""epidemic""#).is_err());
    }

    #[test]
    fn synth_is_deterministic_and_reloads() {
        let mut c = ConfigFile::new(ModelSpec::endemic_only(&["A"], &[], 10.0, 1.0));
        c.theta = Some(BTreeMap::from([(
            "h.intercept".to_string(),
            (1.0f64 / 6.0).ln(),
        )]));
        let g = grid_file();
        let grid = Arc::new(g.to_grid().unwrap());
        let model = Model::new(c.model.clone(), Arc::clone(&grid)).unwrap();
        let theta = c.theta_for(&model).unwrap().unwrap();
        let (a, _) = synth(&c, Arc::clone(&grid), &theta, 100.0, 9).unwrap();
        let (b, _) = synth(&c, Arc::clone(&grid), &theta, 100.0, 9).unwrap();
        assert_eq!(to_json_string(&a), to_json_string(&b));
        assert!(a
            .events
            .iter()
            .all(|r| r.source == Some(SourceRef::Endemic(EndemicTag::Endemic))));
        let text = to_json_string(&a);
        let reread: EventsFile = serde_json::from_str(&text).unwrap();
        let bundle = validate(&reread, &g, c).unwrap();
        assert_eq!(bundle.events.len(), a.events.len());
        assert_eq!(bundle.ties_adjusted, 0);
        // Rate 1/day over 100 days.
        assert!((a.events.len() as f64 - 100.0).abs() < 40.0);
    }

    #[test]
    fn schemas_cover_all_formats() {
        let s = schemas();
        for key in ["events", "grid", "config"] {
            assert!(s[key].is_object(), "{key}");
        }
        assert!(s.to_string().contains("origin_date"));
    }
}
