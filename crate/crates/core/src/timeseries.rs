//! Dense hourly series anchored at a UTC start hour.

use chrono::{DateTime, Duration, Timelike, Utc};

/// A gap-free hourly series; sample `i` is valid at `start + i` hours.
#[derive(Debug, Clone, PartialEq)]
pub struct HourlySeries {
    start: DateTime<Utc>,
    values: Vec<f64>,
}

impl HourlySeries {
    pub fn new(start: DateTime<Utc>, values: Vec<f64>) -> Self {
        debug_assert_eq!(start.minute(), 0);
        debug_assert_eq!(start.second(), 0);
        Self { start, values }
    }

    pub fn start(&self) -> DateTime<Utc> {
        self.start
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn time_at(&self, idx: usize) -> DateTime<Utc> {
        self.start + Duration::hours(idx as i64)
    }

    /// Index of timestamp `t`, if it falls on this series' hourly lattice
    /// and within range.
    pub fn index_of(&self, t: DateTime<Utc>) -> Option<usize> {
        let dt = t - self.start;
        if dt < Duration::zero() {
            return None;
        }
        if dt.num_minutes() % 60 != 0 || t.minute() != self.start.minute() {
            return None;
        }
        let idx = dt.num_hours() as usize;
        (idx < self.values.len()).then_some(idx)
    }

    /// Elementwise scaling, preserving the time axis.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            start: self.start,
            values: self.values.iter().map(|v| v * factor).collect(),
        }
    }

    /// Element-wise transform; the closure also sees each hour's timestamp.
    pub fn map(&self, mut f: impl FnMut(DateTime<Utc>, f64) -> f64) -> Self {
        Self {
            start: self.start,
            values: self
                .values
                .iter()
                .enumerate()
                .map(|(i, v)| f(self.time_at(i), *v))
                .collect(),
        }
    }
}
