//! Per-source spatial interaction regions R_j = (W ∩ b(s_j, δ)) − s_j and
//! the integral of the spatial kernel over them.

use crate::geometry::{clip_polygons_to_disc, Disc, IntegrationRegion, Point, StripCover};
use crate::model::{CubatureSettings, SpaceTimeGrid, SpatialKernel};

#[derive(Debug, Clone)]
enum Shape {
    Empty,
    /// The clipped region is the whole disc; closed forms apply.
    FullDisc,
    /// Constant kernel over a partial disc: the exact polygon area.
    Area,
    /// Strip rule (midpoint in y, exact in x) over frozen rows.
    Strips(StripCover),
    /// Cell width exceeded the region; single-cell estimate at the centroid.
    Degenerate {
        centroid_d2: f64,
    },
}

/// Precomputed integration region of one source event.
#[derive(Debug, Clone)]
pub struct SourceRegion {
    shape: Shape,
    area: f64,
    delta: f64,
}

impl SourceRegion {
    /// Clips the grid tiles to the disc around `center`. For the gaussian
    /// kernel the row height starts at `δ · cell_fraction` and is halved
    /// until successive estimates at `ref_log_sigma` agree to `rel_tol` (at
    /// most `max_refinements` halvings); the resulting rows are then fixed.
    pub fn build(
        grid: &SpaceTimeGrid,
        center: Point,
        delta: f64,
        kernel: SpatialKernel,
        settings: &CubatureSettings,
        ref_log_sigma: f64,
    ) -> SourceRegion {
        let disc = Disc {
            center,
            radius: delta,
        };
        let region = clip_polygons_to_disc(
            grid.tiles().iter().map(|t| &t.polygon),
            &disc,
            settings.disc_vertices,
        );
        let area = region.area();
        let shape = if region.is_empty() {
            Shape::Empty
        } else if region.is_full_disc() {
            Shape::FullDisc
        } else {
            match kernel {
                SpatialKernel::Constant => Shape::Area,
                SpatialKernel::Gaussian => choose_cells(&region, delta, settings, ref_log_sigma),
            }
        };
        SourceRegion { shape, area, delta }
    }

    /// Area of the (polygonal) clipped region.
    pub fn area(&self) -> f64 {
        self.area
    }

    pub fn is_full_disc(&self) -> bool {
        matches!(self.shape, Shape::FullDisc)
    }

    /// The single-cell fallback was used.
    pub fn is_degenerate(&self) -> bool {
        matches!(self.shape, Shape::Degenerate { .. })
    }

    /// Number of row intervals of the strip rule (0 for closed forms).
    pub fn n_spans(&self) -> usize {
        match &self.shape {
            Shape::Strips(c) => c.n_spans(),
            _ => 0,
        }
    }

    /// `F = ∫_R f` and `dF / d log σ`.
    pub fn integral(&self, kernel: SpatialKernel, log_sigma: f64) -> (f64, f64) {
        match (&self.shape, kernel) {
            (Shape::Empty, _) => (0.0, 0.0),
            (Shape::FullDisc, k) => k.disc_integral(self.delta, log_sigma),
            (_, SpatialKernel::Constant) | (Shape::Area, _) => (self.area, 0.0),
            (Shape::Strips(cover), SpatialKernel::Gaussian) => cover.gaussian(log_sigma.exp()),
            (Shape::Degenerate { centroid_d2 }, SpatialKernel::Gaussian) => {
                let f = kernel.value(*centroid_d2, log_sigma);
                let v = f * self.area;
                (v, v * kernel.dlog_value(*centroid_d2, log_sigma))
            }
        }
    }
}

fn choose_cells(
    region: &IntegrationRegion,
    delta: f64,
    settings: &CubatureSettings,
    ref_log_sigma: f64,
) -> Shape {
    let bbox = region.bbox();
    let centroid_d2 = region.centroid().norm2();
    let estimate = |h: f64| -> (Shape, f64) {
        if h > bbox.width() || h > bbox.height() {
            let k = SpatialKernel::Gaussian;
            (
                Shape::Degenerate { centroid_d2 },
                k.value(centroid_d2, ref_log_sigma) * region.area(),
            )
        } else {
            let cover = StripCover::new(region, h);
            let v = cover.gaussian(ref_log_sigma.exp()).0;
            (Shape::Strips(cover), v)
        }
    };
    let mut h = delta * settings.cell_fraction;
    let (mut shape, mut value) = estimate(h);
    for _ in 0..settings.max_refinements {
        h *= 0.5;
        let (next_shape, next) = estimate(h);
        let converged = (next - value).abs() <= settings.rel_tol * next.abs();
        shape = next_shape;
        value = next;
        if converged {
            break;
        }
    }
    shape
}
