//! Space-time grid of intervals × tiles carrying the endemic offset and
//! covariates.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::geometry::{
    on_boundary, point_in_polygon, point_strictly_inside, polygon_area, segments_cross, BBox,
    Point, Polygon,
};

/// Half-open day range `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub start: f64,
    pub end: f64,
}

impl Interval {
    pub fn length(&self) -> f64 {
        self.end - self.start
    }
}

#[derive(Debug, Clone)]
pub struct Tile {
    pub id: String,
    pub polygon: Polygon,
    pub area: f64,
    /// Population used for incidence summaries; tiles without one are
    /// excluded from incidence envelopes.
    pub population: Option<f64>,
    bbox: BBox,
}

impl Tile {
    pub fn new(id: impl Into<String>, polygon: Polygon, population: Option<f64>) -> Self {
        let area = polygon_area(&polygon);
        let bbox = polygon.bbox();
        Tile {
            id: id.into(),
            polygon,
            area,
            population,
            bbox,
        }
    }

    pub fn bbox(&self) -> BBox {
        self.bbox
    }
}

/// Uniform-bin index from locations to candidate tiles.
#[derive(Debug, Clone)]
struct TileIndex {
    bbox: BBox,
    nx: usize,
    ny: usize,
    bins: Vec<Vec<u32>>,
}

impl TileIndex {
    fn new(tiles: &[Tile], bbox: BBox) -> Self {
        let side = ((tiles.len() as f64).sqrt().ceil() as usize * 2).clamp(1, 128);
        let (nx, ny) = (side, side);
        let mut bins = vec![Vec::new(); nx * ny];
        let index = TileIndex {
            bbox,
            nx,
            ny,
            bins: Vec::new(),
        };
        for (k, tile) in tiles.iter().enumerate() {
            let (x0, y0) = index.bin_of(tile.bbox.min);
            let (x1, y1) = index.bin_of(tile.bbox.max);
            for by in y0..=y1 {
                for bx in x0..=x1 {
                    bins[by * nx + bx].push(k as u32);
                }
            }
        }
        TileIndex { bins, ..index }
    }

    fn bin_of(&self, p: Point) -> (usize, usize) {
        let fx = (p.x - self.bbox.min.x) / self.bbox.width().max(f64::MIN_POSITIVE);
        let fy = (p.y - self.bbox.min.y) / self.bbox.height().max(f64::MIN_POSITIVE);
        let bx = ((fx * self.nx as f64).floor().max(0.0) as usize).min(self.nx - 1);
        let by = ((fy * self.ny as f64).floor().max(0.0) as usize).min(self.ny - 1);
        (bx, by)
    }

    fn candidates(&self, p: Point) -> &[u32] {
        let (bx, by) = self.bin_of(p);
        &self.bins[by * self.nx + bx]
    }
}

/// Temporal intervals C_1..C_D × spatial tiles A_1..A_M with offset ρ and
/// named covariate tables, all stored row-major as `[interval][tile]`.
#[derive(Debug, Clone)]
pub struct SpaceTimeGrid {
    intervals: Vec<Interval>,
    tiles: Vec<Tile>,
    offset: Vec<f64>,
    covariates: BTreeMap<String, Vec<f64>>,
    bbox: BBox,
    area: f64,
    index: TileIndex,
}

fn flatten_table(name: &str, table: Vec<Vec<f64>>, d: usize, m: usize) -> Result<Vec<f64>> {
    if table.len() != d || table.iter().any(|row| row.len() != m) {
        let cols = table.first().map_or(0, Vec::len);
        return Err(Error::Dimension(format!(
            "table '{name}' must be {d}x{m} (intervals x tiles), got {}x{cols}",
            table.len()
        )));
    }
    let flat: Vec<f64> = table.into_iter().flatten().collect();
    if let Some(pos) = flat.iter().position(|v| !v.is_finite()) {
        return Err(Error::Validation(format!(
            "table '{name}' has a non-finite value at interval {}, tile {}",
            pos / m,
            pos % m
        )));
    }
    Ok(flat)
}

impl SpaceTimeGrid {
    pub fn new(
        intervals: Vec<Interval>,
        tiles: Vec<Tile>,
        offset: Vec<Vec<f64>>,
        covariates: BTreeMap<String, Vec<Vec<f64>>>,
    ) -> Result<Self> {
        if intervals.is_empty() {
            return Err(Error::Validation("grid has no time intervals".into()));
        }
        if tiles.is_empty() {
            return Err(Error::Validation("grid has no tiles".into()));
        }
        if intervals[0].start != 0.0 {
            return Err(Error::Validation(format!(
                "first interval must start at 0, got {}",
                intervals[0].start
            )));
        }
        for (k, iv) in intervals.iter().enumerate() {
            if !(iv.end > iv.start) || !iv.end.is_finite() {
                return Err(Error::Validation(format!(
                    "interval {k} [{}, {}) is empty or not finite",
                    iv.start, iv.end
                )));
            }
            if k > 0 && iv.start != intervals[k - 1].end {
                return Err(Error::Validation(format!(
                    "interval {k} starts at {} but interval {} ends at {}",
                    iv.start,
                    k - 1,
                    intervals[k - 1].end
                )));
            }
        }
        let mut ids: Vec<&str> = tiles.iter().map(|t| t.id.as_str()).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Validation("tile ids must be unique".into()));
        }
        for t in &tiles {
            if let Some(p) = t.population {
                if !(p >= 0.0 && p.is_finite()) {
                    return Err(Error::Validation(format!(
                        "tile '{}' has invalid population {p}",
                        t.id
                    )));
                }
            }
        }
        check_disjoint(&tiles)?;
        let (d, m) = (intervals.len(), tiles.len());
        let offset = flatten_table("offset", offset, d, m)?;
        if let Some(pos) = offset.iter().position(|&r| r < 0.0) {
            return Err(Error::Validation(format!(
                "offset is negative at interval {}, tile {}",
                pos / m,
                pos % m
            )));
        }
        let covariates = covariates
            .into_iter()
            .map(|(name, table)| flatten_table(&name, table, d, m).map(|flat| (name, flat)))
            .collect::<Result<BTreeMap<_, _>>>()?;
        let bbox = tiles.iter().fold(BBox::empty(), |b, t| b.union(&t.bbox));
        let area = tiles.iter().map(|t| t.area).sum();
        let index = TileIndex::new(&tiles, bbox);
        Ok(SpaceTimeGrid {
            intervals,
            tiles,
            offset,
            covariates,
            bbox,
            area,
            index,
        })
    }

    /// `nx × ny` square tiles of side `tile_side` with lower-left corner at
    /// the origin, unit offset, no covariates, and the given interval
    /// boundaries (`0 = b_0 < b_1 < … < b_D = T`).
    pub fn lattice(nx: usize, ny: usize, tile_side: f64, boundaries: &[f64]) -> Result<Self> {
        let intervals: Vec<Interval> = boundaries
            .windows(2)
            .map(|w| Interval {
                start: w[0],
                end: w[1],
            })
            .collect();
        let mut tiles = Vec::with_capacity(nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                let (x0, y0) = (i as f64 * tile_side, j as f64 * tile_side);
                let poly = Polygon::rectangle(x0, y0, x0 + tile_side, y0 + tile_side)?;
                tiles.push(Tile::new(format!("t{}", j * nx + i), poly, None));
            }
        }
        let d = intervals.len();
        let m = tiles.len();
        SpaceTimeGrid::new(intervals, tiles, vec![vec![1.0; m]; d], BTreeMap::new())
    }

    /// Equal-length interval boundaries `0, len, 2 len, …, T`.
    pub fn regular_boundaries(end: f64, len: f64) -> Vec<f64> {
        let n = (end / len).ceil().max(1.0) as usize;
        (0..=n).map(|k| (k as f64 * len).min(end)).collect()
    }

    pub fn with_offset(mut self, offset: Vec<Vec<f64>>) -> Result<Self> {
        let (d, m) = (self.n_intervals(), self.n_tiles());
        let flat = flatten_table("offset", offset, d, m)?;
        if flat.iter().any(|&r| r < 0.0) {
            return Err(Error::Validation("offset must be non-negative".into()));
        }
        self.offset = flat;
        Ok(self)
    }

    pub fn with_covariate(mut self, name: &str, table: Vec<Vec<f64>>) -> Result<Self> {
        let flat = flatten_table(name, table, self.n_intervals(), self.n_tiles())?;
        self.covariates.insert(name.to_string(), flat);
        Ok(self)
    }

    pub fn with_populations(mut self, populations: &[Option<f64>]) -> Result<Self> {
        if populations.len() != self.tiles.len() {
            return Err(Error::Dimension("one population per tile required".into()));
        }
        for (t, &p) in self.tiles.iter_mut().zip(populations) {
            t.population = p;
        }
        Ok(self)
    }

    pub fn n_intervals(&self) -> usize {
        self.intervals.len()
    }

    pub fn n_tiles(&self) -> usize {
        self.tiles.len()
    }

    pub fn n_cells(&self) -> usize {
        self.intervals.len() * self.tiles.len()
    }

    pub fn intervals(&self) -> &[Interval] {
        &self.intervals
    }

    pub fn tiles(&self) -> &[Tile] {
        &self.tiles
    }

    /// End of the observation period, T.
    pub fn end_time(&self) -> f64 {
        self.intervals.last().map_or(0.0, |iv| iv.end)
    }

    /// |W|, the summed tile area.
    pub fn area(&self) -> f64 {
        self.area
    }

    pub fn bbox(&self) -> BBox {
        self.bbox
    }

    #[inline]
    pub fn cell(&self, interval: usize, tile: usize) -> usize {
        interval * self.tiles.len() + tile
    }

    #[inline]
    pub fn offset(&self, interval: usize, tile: usize) -> f64 {
        self.offset[self.cell(interval, tile)]
    }

    pub fn offsets(&self) -> &[f64] {
        &self.offset
    }

    pub fn covariate_names(&self) -> impl Iterator<Item = &str> {
        self.covariates.keys().map(String::as_str)
    }

    /// Covariate table by name. Names missing from the grid resolve to the
    /// built-in time terms evaluated at each interval start:
    /// `trend` = start/365, `sin<k>` = sin(2πk·start/365),
    /// `cos<k>` = cos(2πk·start/365).
    pub fn covariate(&self, name: &str) -> Option<Vec<f64>> {
        if let Some(table) = self.covariates.get(name) {
            return Some(table.clone());
        }
        let per_interval: Box<dyn Fn(f64) -> f64> = if name == "trend" {
            Box::new(|start| start / 365.0)
        } else if let Some(k) = harmonic(name, "sin") {
            Box::new(move |start| (start * std::f64::consts::TAU * k / 365.0).sin())
        } else {
            let k = harmonic(name, "cos")?;
            Box::new(move |start| (start * std::f64::consts::TAU * k / 365.0).cos())
        };
        let m = self.tiles.len();
        Some(
            self.intervals
                .iter()
                .flat_map(|iv| std::iter::repeat_n(per_interval(iv.start), m))
                .collect(),
        )
    }

    /// Index of the interval containing `t ∈ (0, T]`; `T` itself maps to
    /// the last interval.
    pub fn interval_of(&self, t: f64) -> Result<usize> {
        let end = self.end_time();
        if !(t > 0.0 && t <= end) {
            return Err(Error::OutOfPeriod(t));
        }
        let k = self.intervals.partition_point(|iv| iv.end <= t);
        Ok(k.min(self.intervals.len() - 1))
    }

    /// Lowest-index tile containing `s` (boundaries inclusive).
    pub fn tile_of(&self, s: Point) -> Result<usize> {
        if !self.bbox.contains(s) {
            return Err(Error::OutOfRegion(s));
        }
        self.index
            .candidates(s)
            .iter()
            .map(|&k| k as usize)
            .find(|&k| {
                self.tiles[k].bbox.contains(s) && point_in_polygon(s, &self.tiles[k].polygon)
            })
            .ok_or(Error::OutOfRegion(s))
    }

    pub fn contains(&self, s: Point) -> bool {
        self.tile_of(s).is_ok()
    }

    /// `(τ(t), ξ(s))`.
    pub fn locate(&self, t: f64, s: Point) -> Result<(usize, usize)> {
        Ok((self.interval_of(t)?, self.tile_of(s)?))
    }
}

fn harmonic(name: &str, prefix: &str) -> Option<f64> {
    let k: u32 = name.strip_prefix(prefix)?.parse().ok()?;
    (k >= 1).then_some(k as f64)
}

/// Pairwise interior-disjointness of tiles: no proper edge crossings, no
/// vertex or edge midpoint strictly inside another tile, no tile centroid
/// strictly inside another tile.
fn check_disjoint(tiles: &[Tile]) -> Result<()> {
    for a in 0..tiles.len() {
        for b in a + 1..tiles.len() {
            let (ta, tb) = (&tiles[a], &tiles[b]);
            if !ta.bbox.intersects(&tb.bbox) {
                continue;
            }
            if overlaps(&ta.polygon, &tb.polygon) || overlaps(&tb.polygon, &ta.polygon) {
                return Err(Error::Geometry(format!(
                    "tiles '{}' and '{}' overlap",
                    ta.id, tb.id
                )));
            }
        }
    }
    Ok(())
}

fn overlaps(p: &Polygon, q: &Polygon) -> bool {
    let edges = |poly: &Polygon| -> Vec<(Point, Point)> {
        poly.rings()
            .iter()
            .flat_map(|r| r.windows(2).map(|w| (w[0], w[1])))
            .collect()
    };
    let (ep, eq) = (edges(p), edges(q));
    for &(a, b) in &ep {
        if point_strictly_inside(a, q) {
            return true;
        }
        let mid = Point::new(0.5 * (a.x + b.x), 0.5 * (a.y + b.y));
        if point_strictly_inside(mid, q) {
            return true;
        }
        if eq.iter().any(|&(c, d)| segments_cross(a, b, c, d)) {
            return true;
        }
    }
    let c = p.centroid();
    point_in_polygon(c, p) && !on_boundary(c, p) && point_strictly_inside(c, q)
}
