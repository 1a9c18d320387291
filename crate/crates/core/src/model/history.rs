use std::collections::HashMap;

use super::spec::TransmissionMatrix;
use super::Event;
use crate::error::{Error, Result};
use crate::geometry::Point;

const MAX_BINS_PER_AXIS: f64 = 256.0;

/// Time-ordered event history with a uniform spatial bin index whose bin
/// side is at least δ, so a δ-disc query touches a 3×3 block of bins.
#[derive(Debug, Clone)]
pub struct History {
    events: Vec<Event>,
    side: f64,
    origin: Point,
    bins: HashMap<(i64, i64), Vec<usize>>,
}

impl History {
    /// Empty history for interaction radius `delta` over a region whose
    /// bounding box has the given extent.
    pub fn new(delta: f64, origin: Point, extent: f64) -> Self {
        let side = delta.max(extent / MAX_BINS_PER_AXIS).max(f64::MIN_POSITIVE);
        History {
            events: Vec::new(),
            side,
            origin,
            bins: HashMap::new(),
        }
    }

    pub fn from_events(events: Vec<Event>, delta: f64, origin: Point, extent: f64) -> Result<Self> {
        let mut h = History::new(delta, origin, extent);
        h.events.reserve(events.len());
        for e in events {
            h.push(e)?;
        }
        Ok(h)
    }

    fn key(&self, s: Point) -> (i64, i64) {
        (
            ((s.x - self.origin.x) / self.side).floor() as i64,
            ((s.y - self.origin.y) / self.side).floor() as i64,
        )
    }

    /// Appends an event; times must be non-decreasing.
    pub fn push(&mut self, event: Event) -> Result<()> {
        if let Some(last) = self.events.last() {
            if event.time < last.time {
                return Err(Error::Validation(format!(
                    "history must be time-ordered: {} after {}",
                    event.time, last.time
                )));
            }
        }
        let key = self.key(event.location);
        self.bins.entry(key).or_default().push(self.events.len());
        self.events.push(event);
        Ok(())
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn into_events(self) -> Vec<Event> {
        self.events
    }

    /// `I*(t, s, κ)`: indices `j` with `0 < t − t_j ≤ ε`, `‖s − s_j‖ ≤ δ` and
    /// `q[κ_j][κ] = 1`, in increasing order.
    pub fn infective_set(
        &self,
        t: f64,
        s: Point,
        kind: usize,
        eps: f64,
        delta: f64,
        q: &TransmissionMatrix,
    ) -> Vec<usize> {
        let mut out = Vec::new();
        let (kx, ky) = self.key(s);
        let reach = (delta / self.side).ceil() as i64;
        let d2max = delta * delta;
        for by in ky - reach..=ky + reach {
            for bx in kx - reach..=kx + reach {
                let Some(bin) = self.bins.get(&(bx, by)) else {
                    continue;
                };
                let lo = bin.partition_point(|&j| self.events[j].time < t - eps);
                for &j in &bin[lo..] {
                    let e = &self.events[j];
                    let dt = t - e.time;
                    if dt <= 0.0 {
                        break;
                    }
                    if dt <= eps && e.location.dist2(s) <= d2max && q.allows(e.kind, kind) {
                        out.push(j);
                    }
                }
            }
        }
        out.sort_unstable();
        out
    }
}
