use serde::{Deserialize, Serialize};

use super::DataError;

/// Maps an elapsed time to one of `T` decay intervals.
///
/// `n = ceil(elapsed / unit)` clamped to `[1, T]`; the 0-based index
/// `n - 1` is returned, so zero elapsed time lands in the first interval.
pub fn time_bin(elapsed: f64, unit: f64, bins: usize) -> Result<usize, DataError> {
    if elapsed < 0.0 || elapsed.is_nan() {
        return Err(DataError::NegativeElapsed(elapsed));
    }
    if unit <= 0.0 || !unit.is_finite() {
        return Err(DataError::BadTimeUnit(unit));
    }
    let n = (elapsed / unit).ceil();
    let n = if n < 1.0 {
        1
    } else if n >= bins as f64 {
        bins
    } else {
        n as usize
    };
    Ok(n - 1)
}

/// Interval width `T_max / T` together with the interval count.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeBinning {
    pub unit: f64,
    pub bins: usize,
}

impl TimeBinning {
    /// A corpus without any time spread gets a unit of 1 so every
    /// position falls in the first interval.
    pub fn new(t_max: f64, bins: usize) -> Self {
        let unit = if t_max > 0.0 && t_max.is_finite() {
            t_max / bins as f64
        } else {
            1.0
        };
        TimeBinning { unit, bins }
    }

    pub fn bin(&self, elapsed: f64) -> Result<usize, DataError> {
        time_bin(elapsed, self.unit, self.bins)
    }
}
