use super::MetricsError;

/// Affine map of a fitted range onto `[0, 1]`; a constant population maps to 0.5.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinMax {
    pub min: f64,
    pub max: f64,
}

impl MinMax {
    /// Range of the finite values, `None` if there are none.
    pub fn fit(values: impl IntoIterator<Item = f64>) -> Option<Self> {
        values.into_iter().filter(|v| v.is_finite()).fold(None, |acc, v| match acc {
            None => Some(MinMax { min: v, max: v }),
            Some(m) => Some(MinMax { min: m.min.min(v), max: m.max.max(v) }),
        })
    }

    pub fn apply(&self, v: f64) -> f64 {
        if self.max == self.min {
            0.5
        } else {
            (v - self.min) / (self.max - self.min)
        }
    }
}

pub fn minmax_normalize(values: &[f64]) -> Result<Vec<f64>, MetricsError> {
    let scaler = MinMax::fit(values.iter().copied()).ok_or(MetricsError::EmptyInput)?;
    Ok(values.iter().map(|&v| scaler.apply(v)).collect())
}

/// As [`minmax_normalize`], with undefined entries excluded from the range and passed through.
pub fn minmax_normalize_partial(values: &[Option<f64>]) -> Result<Vec<Option<f64>>, MetricsError> {
    let scaler = MinMax::fit(values.iter().flatten().copied()).ok_or(MetricsError::EmptyInput)?;
    Ok(values.iter().map(|v| v.map(|v| scaler.apply(v))).collect())
}
