use crate::error::TraceError;

/// An ordered time series of (offset, value) samples. Offsets are
/// microseconds from the trace origin, strictly increasing.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Series {
    points: Vec<(i64, f64)>,
}

impl Series {
    pub fn empty() -> Series {
        Series { points: Vec::new() }
    }

    /// Builds a series from already-sorted points. Fails on negative or
    /// non-increasing offsets.
    pub fn from_points(points: Vec<(i64, f64)>) -> Result<Series, TraceError> {
        for window in points.windows(2) {
            if window[0].0 >= window[1].0 {
                return Err(TraceError::UnsortedSeries);
            }
        }
        if points.first().is_some_and(|(t, _)| *t < 0) {
            return Err(TraceError::UnsortedSeries);
        }
        Ok(Series { points })
    }

    /// Builds a series from unordered samples. Samples are sorted by
    /// offset; when two samples share an offset the first one wins.
    pub fn from_samples(mut samples: Vec<(i64, f64)>) -> Result<Series, TraceError> {
        samples.sort_by_key(|(t, _)| *t);
        samples.dedup_by_key(|(t, _)| *t);
        Series::from_points(samples)
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn points(&self) -> &[(i64, f64)] {
        &self.points
    }

    pub fn first_offset(&self) -> Option<i64> {
        self.points.first().map(|(t, _)| *t)
    }

    pub fn last_offset(&self) -> Option<i64> {
        self.points.last().map(|(t, _)| *t)
    }

    /// Sample-and-hold lookup: the value of the latest sample at or before
    /// `t_us`. Queries before the first sample hold backward to it.
    pub fn value_at(&self, t_us: i64) -> Option<f64> {
        if self.points.is_empty() {
            return None;
        }
        let idx = self.points.partition_point(|(t, _)| *t <= t_us);
        if idx == 0 {
            Some(self.points[0].1)
        } else {
            Some(self.points[idx - 1].1)
        }
    }

    /// Shifts all offsets by `-origin_us`, dropping samples before the
    /// origin, and optionally dropping samples after `max_offset_us`
    /// (post-shift).
    pub(crate) fn rebase(&self, origin_us: i64, max_offset_us: Option<i64>) -> Series {
        let points = self
            .points
            .iter()
            .filter(|(t, _)| *t >= origin_us)
            .map(|(t, v)| (*t - origin_us, *v))
            .filter(|(t, _)| max_offset_us.is_none_or(|m| *t <= m))
            .collect();
        Series { points }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hold_previous_value() {
        let s = Series::from_points(vec![(0, 10.0), (1_000_000, 20.0)]).unwrap();
        assert_eq!(s.value_at(500_000), Some(10.0));
        assert_eq!(s.value_at(1_000_000), Some(20.0));
        assert_eq!(s.value_at(5_000_000), Some(20.0));
    }

    #[test]
    fn backward_hold_before_first_sample() {
        let s = Series::from_points(vec![(2_000_000, 7.0)]).unwrap();
        assert_eq!(s.value_at(0), Some(7.0));
    }

    #[test]
    fn rejects_unsorted_or_negative() {
        assert!(Series::from_points(vec![(5, 1.0), (5, 2.0)]).is_err());
        assert!(Series::from_points(vec![(-1, 1.0)]).is_err());
    }

    #[test]
    fn from_samples_sorts_and_keeps_first_duplicate() {
        let s = Series::from_samples(vec![(10, 2.0), (0, 1.0), (10, 3.0)]).unwrap();
        assert_eq!(s.points(), &[(0, 1.0), (10, 2.0)]);
    }
}
