//! Planar polygons, polygon/disc clipping and midpoint-rule cubature.
//!
//! Coordinates are planar kilometres. Polygons carry closed rings: the first
//! ring is the outer boundary (counter-clockwise), any further rings are holes
//! (clockwise). Membership uses the even-odd rule over all rings; points on a
//! boundary count as inside.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default vertex count of the regular polygon inscribed in a clipping disc.
pub const DEFAULT_DISC_VERTICES: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const ORIGIN: Point = Point { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    #[inline]
    pub fn norm2(self) -> f64 {
        self.x * self.x + self.y * self.y
    }

    #[inline]
    pub fn dist2(self, other: Point) -> f64 {
        (self - other).norm2()
    }
}

impl std::ops::Add for Point {
    type Output = Point;
    fn add(self, rhs: Point) -> Point {
        Point::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl std::ops::Sub for Point {
    type Output = Point;
    fn sub(self, rhs: Point) -> Point {
        Point::new(self.x - rhs.x, self.y - rhs.y)
    }
}

#[inline]
fn cross(o: Point, a: Point, b: Point) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub min: Point,
    pub max: Point,
}

impl BBox {
    pub fn empty() -> Self {
        BBox {
            min: Point::new(f64::INFINITY, f64::INFINITY),
            max: Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY),
        }
    }

    pub fn include(&mut self, p: Point) {
        self.min.x = self.min.x.min(p.x);
        self.min.y = self.min.y.min(p.y);
        self.max.x = self.max.x.max(p.x);
        self.max.y = self.max.y.max(p.y);
    }

    pub fn union(&self, other: &BBox) -> BBox {
        let mut b = *self;
        b.include(other.min);
        b.include(other.max);
        b
    }

    pub fn is_empty(&self) -> bool {
        !(self.min.x <= self.max.x && self.min.y <= self.max.y)
    }

    pub fn width(&self) -> f64 {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> f64 {
        self.max.y - self.min.y
    }

    pub fn center(&self) -> Point {
        Point::new(
            0.5 * (self.min.x + self.max.x),
            0.5 * (self.min.y + self.max.y),
        )
    }

    pub fn intersects(&self, other: &BBox) -> bool {
        self.min.x <= other.max.x
            && other.min.x <= self.max.x
            && self.min.y <= other.max.y
            && other.min.y <= self.max.y
    }

    pub fn contains(&self, p: Point) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }
}

/// Signed shoelace area of a closed ring (positive when counter-clockwise).
pub fn ring_signed_area(ring: &[Point]) -> f64 {
    if ring.len() < 3 {
        return 0.0;
    }
    let mut acc = 0.0;
    for w in ring.windows(2) {
        acc += w[0].x * w[1].y - w[1].x * w[0].y;
    }
    let (first, last) = (ring[0], ring[ring.len() - 1]);
    if first != last {
        acc += last.x * first.y - first.x * last.y;
    }
    0.5 * acc
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polygon {
    rings: Vec<Vec<Point>>,
}

impl Polygon {
    /// Builds a validated polygon.
    pub fn new(rings: Vec<Vec<Point>>) -> Result<Self> {
        validate_rings(&rings)?;
        Ok(Self { rings })
    }

    /// Builds a polygon from an outer ring given without the closing vertex
    /// and in any orientation. Convenience for tests and synthetic grids.
    pub fn from_outer(points: &[Point]) -> Result<Self> {
        let mut ring = points.to_vec();
        if ring.first() != ring.last() {
            if let Some(&p) = ring.first() {
                ring.push(p);
            }
        }
        if ring_signed_area(&ring) < 0.0 {
            ring.reverse();
        }
        Polygon::new(vec![ring])
    }

    /// Axis-aligned rectangle `[x0, x1] x [y0, y1]`.
    pub fn rectangle(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self> {
        Polygon::from_outer(&[
            Point::new(x0, y0),
            Point::new(x1, y0),
            Point::new(x1, y1),
            Point::new(x0, y1),
        ])
    }

    /// Skips validation; used for clip results which may contain
    /// degenerate (zero-width) edges.
    pub(crate) fn from_rings_unchecked(rings: Vec<Vec<Point>>) -> Self {
        Self { rings }
    }

    pub fn rings(&self) -> &[Vec<Point>] {
        &self.rings
    }

    pub fn outer(&self) -> &[Point] {
        &self.rings[0]
    }

    pub fn bbox(&self) -> BBox {
        let mut b = BBox::empty();
        for ring in &self.rings {
            for &p in ring {
                b.include(p);
            }
        }
        b
    }

    pub fn translate(&self, offset: Point) -> Polygon {
        Polygon {
            rings: self
                .rings
                .iter()
                .map(|r| r.iter().map(|&p| p + offset).collect())
                .collect(),
        }
    }

    /// Area-weighted centroid.
    pub fn centroid(&self) -> Point {
        let (mut cx, mut cy, mut a) = (0.0, 0.0, 0.0);
        for ring in &self.rings {
            for w in ring.windows(2) {
                let c = w[0].x * w[1].y - w[1].x * w[0].y;
                cx += (w[0].x + w[1].x) * c;
                cy += (w[0].y + w[1].y) * c;
                a += c;
            }
        }
        if a == 0.0 {
            return self.bbox().center();
        }
        Point::new(cx / (3.0 * a), cy / (3.0 * a))
    }

    fn edges(&self) -> impl Iterator<Item = (Point, Point)> + '_ {
        self.rings
            .iter()
            .flat_map(|r| r.windows(2).map(|w| (w[0], w[1])))
    }
}

fn validate_rings(rings: &[Vec<Point>]) -> Result<()> {
    if rings.is_empty() {
        return Err(Error::Geometry("polygon has no rings".into()));
    }
    for (k, ring) in rings.iter().enumerate() {
        if ring.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
            return Err(Error::Geometry(format!(
                "ring {k} has non-finite coordinates"
            )));
        }
        if ring.len() < 4 || ring.first() != ring.last() {
            return Err(Error::Geometry(format!(
                "ring {k} is not closed (first and last point must coincide, at least 4 points)"
            )));
        }
        let mut distinct: Vec<Point> = ring[..ring.len() - 1].to_vec();
        distinct.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
        distinct.dedup();
        if distinct.len() < 3 {
            return Err(Error::Geometry(format!(
                "ring {k} has fewer than 3 distinct points"
            )));
        }
        let area = ring_signed_area(ring);
        if k == 0 && area <= 0.0 {
            return Err(Error::Geometry(
                "outer ring must be counter-clockwise with positive area".into(),
            ));
        }
        if k > 0 && area >= 0.0 {
            return Err(Error::Geometry(format!(
                "hole ring {k} must be clockwise with negative area"
            )));
        }
    }
    // Self-intersection: no two non-adjacent segments may touch.
    let segs: Vec<(usize, usize, Point, Point)> = rings
        .iter()
        .enumerate()
        .flat_map(|(k, r)| {
            r.windows(2)
                .enumerate()
                .map(move |(i, w)| (k, i, w[0], w[1]))
        })
        .collect();
    for a in 0..segs.len() {
        for b in a + 1..segs.len() {
            let (ka, ia, p1, p2) = segs[a];
            let (kb, ib, q1, q2) = segs[b];
            if ka == kb {
                let n = rings[ka].len() - 1;
                if ib == ia + 1 || (ia == 0 && ib == n - 1) {
                    continue;
                }
            }
            if segments_intersect(p1, p2, q1, q2) {
                return Err(Error::Geometry(format!(
                    "ring {ka} segment {ia} intersects ring {kb} segment {ib}"
                )));
            }
        }
    }
    Ok(())
}

fn on_segment(p: Point, q: Point, r: Point) -> bool {
    r.x >= p.x.min(q.x) && r.x <= p.x.max(q.x) && r.y >= p.y.min(q.y) && r.y <= p.y.max(q.y)
}

/// Closed segment intersection test (touching counts).
pub fn segments_intersect(p1: Point, p2: Point, q1: Point, q2: Point) -> bool {
    let d1 = cross(q1, q2, p1);
    let d2 = cross(q1, q2, p2);
    let d3 = cross(p1, p2, q1);
    let d4 = cross(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    (d1 == 0.0 && on_segment(q1, q2, p1))
        || (d2 == 0.0 && on_segment(q1, q2, p2))
        || (d3 == 0.0 && on_segment(p1, p2, q1))
        || (d4 == 0.0 && on_segment(p1, p2, q2))
}

/// Proper crossing: the segments intersect at a single interior point of both.
pub fn segments_cross(p1: Point, p2: Point, q1: Point, q2: Point) -> bool {
    let d1 = cross(q1, q2, p1);
    let d2 = cross(q1, q2, p2);
    let d3 = cross(p1, p2, q1);
    let d4 = cross(p1, p2, q2);
    ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
}

/// Area of a polygon with holes subtracted.
pub fn polygon_area(p: &Polygon) -> f64 {
    p.rings
        .iter()
        .map(|r| ring_signed_area(r))
        .sum::<f64>()
        .max(0.0)
}

fn point_on_segment(a: Point, b: Point, p: Point) -> bool {
    let c = cross(a, b, p);
    let scale = (b - a).norm2().sqrt() * (p - a).norm2().sqrt().max(1.0);
    c.abs() <= 1e-12 * scale.max(f64::MIN_POSITIVE) && on_segment(a, b, p)
}

/// True when `pt` lies on an edge of `p`.
pub fn on_boundary(pt: Point, p: &Polygon) -> bool {
    p.edges().any(|(a, b)| point_on_segment(a, b, pt))
}

fn even_odd(pt: Point, p: &Polygon) -> bool {
    let mut inside = false;
    for (a, b) in p.edges() {
        if (a.y > pt.y) != (b.y > pt.y) {
            let x = a.x + (pt.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if pt.x < x {
                inside = !inside;
            }
        }
    }
    inside
}

/// Even-odd membership; boundary points count as inside.
pub fn point_in_polygon(pt: Point, p: &Polygon) -> bool {
    on_boundary(pt, p) || even_odd(pt, p)
}

/// Membership excluding the boundary.
pub fn point_strictly_inside(pt: Point, p: &Polygon) -> bool {
    !on_boundary(pt, p) && even_odd(pt, p)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Disc {
    pub center: Point,
    pub radius: f64,
}

impl Disc {
    pub fn new(center: Point, radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::Geometry(format!(
                "disc radius must be positive, got {radius}"
            )));
        }
        Ok(Self { center, radius })
    }

    pub fn bbox(&self) -> BBox {
        BBox {
            min: Point::new(self.center.x - self.radius, self.center.y - self.radius),
            max: Point::new(self.center.x + self.radius, self.center.y + self.radius),
        }
    }
}

/// Counter-clockwise regular polygon inscribed in the circle of `radius`
/// around the origin (open ring).
pub fn regular_polygon(radius: f64, vertices: usize) -> Vec<Point> {
    let n = vertices.max(3);
    (0..n)
        .map(|k| {
            let a = std::f64::consts::TAU * k as f64 / n as f64;
            Point::new(radius * a.cos(), radius * a.sin())
        })
        .collect()
}

/// Area of the inscribed regular polygon with `vertices` corners.
pub fn regular_polygon_area(radius: f64, vertices: usize) -> f64 {
    let n = vertices.max(3) as f64;
    0.5 * n * radius * radius * (std::f64::consts::TAU / n).sin()
}

/// Polygon ∩ disc, translated so the disc centre is the origin.
#[derive(Debug, Clone)]
pub struct IntegrationRegion {
    pieces: Vec<Polygon>,
    clip_radius: f64,
    polyline_area: f64,
    area: f64,
}

impl IntegrationRegion {
    pub fn pieces(&self) -> &[Polygon] {
        &self.pieces
    }

    pub fn clip_radius(&self) -> f64 {
        self.clip_radius
    }

    pub fn area(&self) -> f64 {
        self.area
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty() || self.area <= 0.0
    }

    /// Relative area deficit of the inscribed disc polyline vs the true disc.
    pub fn polyline_area_error(&self) -> f64 {
        let disc = std::f64::consts::PI * self.clip_radius * self.clip_radius;
        (disc - self.polyline_area) / disc
    }

    /// The clipped region equals the whole (polygonal) disc.
    pub fn is_full_disc(&self) -> bool {
        (self.area - self.polyline_area).abs() <= 1e-9 * self.polyline_area
    }

    pub fn bbox(&self) -> BBox {
        self.pieces
            .iter()
            .fold(BBox::empty(), |b, p| b.union(&p.bbox()))
    }

    pub fn contains(&self, p: Point) -> bool {
        p.norm2() <= self.clip_radius * self.clip_radius
            && self.pieces.iter().any(|q| point_in_polygon(p, q))
    }

    pub fn centroid(&self) -> Point {
        let (mut cx, mut cy, mut a) = (0.0, 0.0, 0.0);
        for piece in &self.pieces {
            let w = polygon_area(piece);
            let c = piece.centroid();
            cx += w * c.x;
            cy += w * c.y;
            a += w;
        }
        if a > 0.0 {
            Point::new(cx / a, cy / a)
        } else {
            self.bbox().center()
        }
    }
}

fn clip_ring_convex(ring: &[Point], clip: &[Point]) -> Vec<Point> {
    // `ring` is open (no closing duplicate); `clip` is open, convex, CCW.
    let mut output = ring.to_vec();
    for i in 0..clip.len() {
        if output.is_empty() {
            break;
        }
        let a = clip[i];
        let b = clip[(i + 1) % clip.len()];
        let input = std::mem::take(&mut output);
        let inside = |p: Point| cross(a, b, p) >= 0.0;
        let mut prev = *input.last().unwrap();
        for &cur in &input {
            let (pin, cin) = (inside(prev), inside(cur));
            if cin {
                if !pin {
                    output.push(intersect_lines(prev, cur, a, b));
                }
                output.push(cur);
            } else if pin {
                output.push(intersect_lines(prev, cur, a, b));
            }
            prev = cur;
        }
    }
    output
}

fn intersect_lines(p: Point, q: Point, a: Point, b: Point) -> Point {
    let d1 = cross(a, b, p);
    let d2 = cross(a, b, q);
    let t = d1 / (d1 - d2);
    Point::new(p.x + t * (q.x - p.x), p.y + t * (q.y - p.y))
}

fn clip_polygon_at_origin(p: &Polygon, clip: &[Point], clip_bbox: &BBox) -> Option<Polygon> {
    if !p.bbox().intersects(clip_bbox) {
        return None;
    }
    let mut rings = Vec::with_capacity(p.rings.len());
    for (k, ring) in p.rings.iter().enumerate() {
        let open = &ring[..ring.len() - 1];
        let mut out = clip_ring_convex(open, clip);
        if out.len() < 3 {
            if k == 0 {
                return None;
            }
            continue;
        }
        out.push(out[0]);
        rings.push(out);
    }
    let poly = Polygon::from_rings_unchecked(rings);
    (polygon_area(&poly) > 0.0).then_some(poly)
}

/// Clips `p` to the disc and translates the result by `-d.center`. The disc
/// boundary is approximated by an inscribed regular polygon with `vertices`
/// corners.
pub fn clip_to_disc(p: &Polygon, d: &Disc, vertices: usize) -> IntegrationRegion {
    clip_polygons_to_disc(std::iter::once(p), d, vertices)
}

/// As [`clip_to_disc`] for a set of interior-disjoint polygons (e.g. the
/// tiles making up an observation region).
pub fn clip_polygons_to_disc<'a, I>(polygons: I, d: &Disc, vertices: usize) -> IntegrationRegion
where
    I: IntoIterator<Item = &'a Polygon>,
{
    let clip = regular_polygon(d.radius, vertices);
    let clip_bbox = BBox {
        min: Point::new(-d.radius, -d.radius),
        max: Point::new(d.radius, d.radius),
    };
    let shift = Point::new(-d.center.x, -d.center.y);
    let disc_bbox = d.bbox();
    let pieces: Vec<Polygon> = polygons
        .into_iter()
        .filter(|p| p.bbox().intersects(&disc_bbox))
        .filter_map(|p| clip_polygon_at_origin(&p.translate(shift), &clip, &clip_bbox))
        .collect();
    let area = pieces.iter().map(polygon_area).sum();
    IntegrationRegion {
        pieces,
        clip_radius: d.radius,
        polyline_area: regular_polygon_area(d.radius, vertices),
        area,
    }
}

/// Set of lattice cells whose midpoints fall inside a region.
///
/// Cells have width `h` and are anchored at the lower-left corner of the
/// region's bounding box; cell `(row, col)` has midpoint
/// `(x0 + (col + 0.5) h, y0 + (row + 0.5) h)`.
#[derive(Debug, Clone)]
pub struct CellCover {
    h: f64,
    x0: f64,
    y0: f64,
    ncols: usize,
    nrows: usize,
    /// `(row, first col, one past last col)`.
    spans: Vec<(u32, u32, u32)>,
    n_cells: usize,
}

impl CellCover {
    /// Scanline construction; cost is linear in rows × edges plus cells.
    pub fn new(region: &IntegrationRegion, h: f64) -> CellCover {
        let bbox = region.bbox();
        let empty = CellCover {
            h,
            x0: 0.0,
            y0: 0.0,
            ncols: 0,
            nrows: 0,
            spans: Vec::new(),
            n_cells: 0,
        };
        if region.is_empty() || bbox.is_empty() || !(h > 0.0) {
            return empty;
        }
        let ncols = ((bbox.width() / h).ceil() as usize).max(1);
        let nrows = ((bbox.height() / h).ceil() as usize).max(1);
        let (x0, y0) = (bbox.min.x, bbox.min.y);
        let mut spans = Vec::new();
        let mut n_cells = 0;
        let mut crossings = Vec::new();
        let mut intervals: Vec<(f64, f64)> = Vec::new();
        for row in 0..nrows {
            let y = y0 + (row as f64 + 0.5) * h;
            let merged = row_intervals(region, y, &mut crossings, &mut intervals);
            for &(a, b) in merged {
                let c0 = ((a - x0) / h - 0.5).ceil().max(0.0) as usize;
                let c1 = (((b - x0) / h - 0.5).floor() + 1.0).max(0.0) as usize;
                let c1 = c1.min(ncols);
                if c1 > c0 {
                    spans.push((row as u32, c0 as u32, c1 as u32));
                    n_cells += c1 - c0;
                }
            }
        }
        CellCover {
            h,
            x0,
            y0,
            ncols,
            nrows,
            spans,
            n_cells,
        }
    }

    pub fn cell_width(&self) -> f64 {
        self.h
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    fn col_x(&self, col: usize) -> f64 {
        self.x0 + (col as f64 + 0.5) * self.h
    }

    fn row_y(&self, row: usize) -> f64 {
        self.y0 + (row as f64 + 0.5) * self.h
    }

    pub fn midpoints(&self) -> impl Iterator<Item = Point> + '_ {
        self.spans.iter().flat_map(move |&(r, c0, c1)| {
            let y = self.row_y(r as usize);
            (c0..c1).map(move |c| Point::new(self.col_x(c as usize), y))
        })
    }

    /// Midpoint-rule sum of `kernel` over the covered cells.
    pub fn integrate<K: Fn(Point) -> f64>(&self, kernel: K) -> f64 {
        let mut acc = crate::summation::NeumaierSum::new();
        for p in self.midpoints() {
            acc.add(kernel(p));
        }
        acc.value() * self.h * self.h
    }

    /// Midpoint-rule integral of `exp(-|s|^2 / (2 sigma^2))` and its
    /// derivative with respect to `log sigma`, using separability of the
    /// kernel (prefix sums over columns).
    pub fn gaussian(&self, sigma: f64) -> (f64, f64) {
        if self.n_cells == 0 {
            return (0.0, 0.0);
        }
        let inv = 1.0 / (2.0 * sigma * sigma);
        let s2 = sigma * sigma;
        let mut pre = Vec::with_capacity(self.ncols + 1);
        let mut pre_x2 = Vec::with_capacity(self.ncols + 1);
        pre.push(0.0);
        pre_x2.push(0.0);
        let (mut a, mut b) = (0.0, 0.0);
        for c in 0..self.ncols {
            let x = self.col_x(c);
            let e = (-x * x * inv).exp();
            a += e;
            b += e * x * x;
            pre.push(a);
            pre_x2.push(b);
        }
        let mut value = crate::summation::NeumaierSum::new();
        let mut deriv = crate::summation::NeumaierSum::new();
        let mut row_cache = (u32::MAX, 0.0, 0.0);
        for &(r, c0, c1) in &self.spans {
            if row_cache.0 != r {
                let y = self.row_y(r as usize);
                row_cache = (r, (-y * y * inv).exp(), y * y);
            }
            let (_, ey, y2) = row_cache;
            let sx = pre[c1 as usize] - pre[c0 as usize];
            let sx2 = pre_x2[c1 as usize] - pre_x2[c0 as usize];
            value.add(ey * sx);
            deriv.add(ey * (y2 * sx + sx2) / s2);
        }
        let w = self.h * self.h;
        (value.value() * w, deriv.value() * w)
    }

    pub fn rows(&self) -> usize {
        self.nrows
    }
}

/// Merged x-intervals of `region` along the horizontal line at `y`.
fn row_intervals<'a>(
    region: &IntegrationRegion,
    y: f64,
    crossings: &mut Vec<f64>,
    out: &'a mut Vec<(f64, f64)>,
) -> &'a [(f64, f64)] {
    out.clear();
    for piece in &region.pieces {
        crossings.clear();
        for (a, b) in piece.edges() {
            if (a.y > y) != (b.y > y) {
                crossings.push(a.x + (y - a.y) * (b.x - a.x) / (b.y - a.y));
            }
        }
        crossings.sort_by(f64::total_cmp);
        for pair in crossings.chunks_exact(2) {
            out.push((pair[0], pair[1]));
        }
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut n = 0;
    for i in 0..out.len() {
        if n > 0 && out[i].0 <= out[n - 1].1 {
            out[n - 1].1 = out[n - 1].1.max(out[i].1);
        } else {
            out[n] = out[i];
            n += 1;
        }
    }
    out.truncate(n);
    out
}

/// Horizontal strips through a region: the midpoint rule in y with rows
/// fitted exactly to the bounding box, and exact x-intervals per row. A
/// separable kernel is then integrated in closed form along each row.
#[derive(Debug, Clone, PartialEq)]
pub struct StripCover {
    h: f64,
    /// `(y, x_start, x_end)` per interval, grouped by row.
    spans: Vec<(f64, f64, f64)>,
}

impl StripCover {
    /// Rows of height at most `h`.
    pub fn new(region: &IntegrationRegion, h: f64) -> StripCover {
        let bbox = region.bbox();
        if region.is_empty() || bbox.is_empty() || !(h > 0.0) {
            return StripCover {
                h,
                spans: Vec::new(),
            };
        }
        let nrows = ((bbox.height() / h).ceil() as usize).max(1);
        let h = bbox.height() / nrows as f64;
        let mut spans = Vec::new();
        let mut crossings = Vec::new();
        let mut intervals = Vec::new();
        for row in 0..nrows {
            let y = bbox.min.y + (row as f64 + 0.5) * h;
            for &(a, b) in row_intervals(region, y, &mut crossings, &mut intervals) {
                spans.push((y, a, b));
            }
        }
        StripCover { h, spans }
    }

    pub fn row_height(&self) -> f64 {
        self.h
    }

    pub fn n_spans(&self) -> usize {
        self.spans.len()
    }

    /// Integral of `exp(-|s|^2 / (2 sigma^2))` and its derivative with
    /// respect to `log sigma`.
    pub fn gaussian(&self, sigma: f64) -> (f64, f64) {
        let inv = 1.0 / (2.0 * sigma * sigma);
        let scale = sigma * (std::f64::consts::PI / 2.0).sqrt();
        let erf_at = |x: f64| statrs::function::erf::erf(x * inv.sqrt());
        let mut value = crate::summation::NeumaierSum::new();
        let mut deriv = crate::summation::NeumaierSum::new();
        for &(y, a, b) in &self.spans {
            let ey = (-y * y * inv).exp();
            let ix = scale * (erf_at(b) - erf_at(a));
            let edge = b * (-b * b * inv).exp() - a * (-a * a * inv).exp();
            value.add(ey * ix);
            deriv.add(ey * (2.0 * y * y * inv * ix + ix - edge));
        }
        (value.value() * self.h, deriv.value() * self.h)
    }
}

/// Result of a midpoint-rule integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CubatureEstimate {
    pub value: f64,
    pub cell_width: f64,
    pub cells: usize,
    pub refinements: u32,
    /// The cell width exceeded the region's bounding box; the value is a
    /// single-cell estimate (kernel at the region centroid times its area).
    pub degenerate: bool,
}

fn degenerate_width(region: &IntegrationRegion, h: f64) -> bool {
    let b = region.bbox();
    h > b.width() || h > b.height()
}

/// Two-dimensional midpoint rule over `region` with square cells of width
/// `cell_width`.
pub fn cubature_midpoint<K: Fn(Point) -> f64>(
    kernel: K,
    region: &IntegrationRegion,
    cell_width: f64,
) -> Result<CubatureEstimate> {
    if !(cell_width > 0.0 && cell_width.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "cell width must be positive, got {cell_width}"
        )));
    }
    if region.is_empty() {
        return Ok(CubatureEstimate {
            value: 0.0,
            cell_width,
            cells: 0,
            refinements: 0,
            degenerate: false,
        });
    }
    if degenerate_width(region, cell_width) {
        return Ok(CubatureEstimate {
            value: kernel(region.centroid()) * region.area(),
            cell_width,
            cells: 1,
            refinements: 0,
            degenerate: true,
        });
    }
    let cover = CellCover::new(region, cell_width);
    Ok(CubatureEstimate {
        value: cover.integrate(kernel),
        cell_width,
        cells: cover.n_cells(),
        refinements: 0,
        degenerate: false,
    })
}

/// Midpoint rule with cell halving until successive estimates agree to
/// `rel_tol` or `max_refinements` halvings were made.
pub fn cubature_adaptive<K: Fn(Point) -> f64>(
    kernel: K,
    region: &IntegrationRegion,
    initial_width: f64,
    rel_tol: f64,
    max_refinements: u32,
) -> Result<CubatureEstimate> {
    let mut est = cubature_midpoint(&kernel, region, initial_width)?;
    let mut h = initial_width;
    for k in 1..=max_refinements {
        h *= 0.5;
        let next = cubature_midpoint(&kernel, region, h)?;
        let converged = (next.value - est.value).abs() <= rel_tol * next.value.abs();
        est = CubatureEstimate {
            refinements: k,
            ..next
        };
        if converged {
            break;
        }
    }
    Ok(est)
}
