use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{Event, TieScheme};

/// Makes event times strictly increasing.
///
/// `EpsilonShift`: within each run of `g` equal times, the `k`-th event (in
/// input order) moves back by `(g − 1 − k) · epsilon`, so earlier duplicates
/// are shifted further and the last keeps its time. `UniformSubdaily`:
/// every time loses an independent U(0, 1) draw, then events are re-sorted.
/// Input is stably sorted by time first.
pub fn break_ties(
    events: &[Event],
    scheme: TieScheme,
    epsilon: f64,
    seed: u64,
) -> Result<Vec<Event>> {
    let mut out = events.to_vec();
    out.sort_by(|a, b| a.time.total_cmp(&b.time));
    match scheme {
        TieScheme::EpsilonShift => {
            if !(epsilon > 0.0 && epsilon.is_finite()) {
                return Err(Error::TieBreaking(format!(
                    "epsilon must be positive, got {epsilon}"
                )));
            }
            let mut start = 0;
            while start < out.len() {
                let t = out[start].time;
                let end = start + out[start..].iter().take_while(|e| e.time == t).count();
                let g = end - start;
                for (k, e) in out[start..end].iter_mut().enumerate() {
                    e.time = t - (g - 1 - k) as f64 * epsilon;
                }
                start = end;
            }
        }
        TieScheme::UniformSubdaily => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for e in &mut out {
                e.time -= rng.random::<f64>();
            }
            out.sort_by(|a, b| a.time.total_cmp(&b.time));
        }
    }
    if let Some((i, e)) = out.iter().enumerate().find(|(_, e)| !(e.time > 0.0)) {
        return Err(Error::TieBreaking(format!(
            "event {i} would move to non-positive time {}",
            e.time
        )));
    }
    if let Some(i) = out.windows(2).position(|w| w[1].time <= w[0].time) {
        return Err(Error::TieBreaking(format!(
            "shifted times collide at {} (event {}); use a smaller epsilon",
            out[i + 1].time,
            i + 1
        )));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point;
    use proptest::prelude::*;

    fn at(times: &[f64]) -> Vec<Event> {
        times
            .iter()
            .enumerate()
            .map(|(i, &t)| Event::new(t, Point::new(i as f64, 0.0), 0))
            .collect()
    }

    #[test]
    fn epsilon_shift_triplet() {
        let out = break_ties(&at(&[5.0, 5.0, 5.0]), TieScheme::EpsilonShift, 0.01, 0).unwrap();
        let t: Vec<f64> = out.iter().map(|e| e.time).collect();
        assert!((t[0] - 4.98).abs() < 1e-12 && (t[1] - 4.99).abs() < 1e-12 && t[2] == 5.0);
        // Input order among duplicates is kept.
        assert_eq!(out[0].location.x, 0.0);
        assert_eq!(out[2].location.x, 2.0);
    }

    #[test]
    fn no_ties_is_identity() {
        let ev = at(&[1.0, 2.5, 3.0]);
        assert_eq!(
            break_ties(&ev, TieScheme::EpsilonShift, 0.01, 0).unwrap(),
            ev
        );
    }

    #[test]
    fn non_positive_result_is_an_error() {
        let err =
            break_ties(&at(&[0.01, 0.01, 0.01]), TieScheme::EpsilonShift, 0.01, 0).unwrap_err();
        assert!(matches!(err, Error::TieBreaking(_)));
        assert!(break_ties(&at(&[4.995, 5.0, 5.0]), TieScheme::EpsilonShift, 0.01, 0).is_err());
    }

    #[test]
    fn uniform_subdaily_is_reproducible() {
        let ev = at(&[3.0, 3.0, 4.0, 4.0, 4.0, 9.0]);
        let a = break_ties(&ev, TieScheme::UniformSubdaily, 0.0, 7).unwrap();
        let b = break_ties(&ev, TieScheme::UniformSubdaily, 0.0, 7).unwrap();
        assert_eq!(a, b);
        assert!(a.windows(2).all(|w| w[1].time > w[0].time));
        assert!(a
            .iter()
            .zip([3.0, 3.0, 4.0, 4.0, 4.0, 9.0])
            .all(|(e, _)| e.time > 2.0));
        assert_ne!(
            a,
            break_ties(&ev, TieScheme::UniformSubdaily, 0.0, 8).unwrap()
        );
    }

    proptest! {
        #[test]
        fn output_is_increasing_and_order_preserving(days in proptest::collection::vec(1u32..40, 1..60)) {
            let mut times: Vec<f64> = days.iter().map(|&d| d as f64).collect();
            times.sort_by(f64::total_cmp);
            let ev = at(&times);
            let out = break_ties(&ev, TieScheme::EpsilonShift, 0.01, 0).unwrap();
            prop_assert!(out.windows(2).all(|w| w[1].time > w[0].time));
            // Events on different days keep their relative order.
            for w in out.windows(2) {
                prop_assert!(w[0].time.ceil() <= w[1].time.ceil());
            }
            prop_assert!(out.iter().zip(&ev).all(|(a, b)| a.time <= b.time && b.time - a.time < 0.6));
        }
    }
}
