use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnRange {
    pub min: f64,
    pub max: f64,
}

impl ColumnRange {
    pub fn is_constant(&self) -> bool {
        self.max == self.min
    }

    pub fn scale(&self, v: f64) -> f64 {
        if self.is_constant() {
            0.0
        } else {
            (v - self.min) / (self.max - self.min)
        }
    }

    pub fn unscale(&self, s: f64) -> f64 {
        s * (self.max - self.min) + self.min
    }
}

/// Per-column min-max scaling to `[0, 1]` on the fitting data.
///
/// Values outside the fitted range are extrapolated, not clipped. Constant
/// columns scale to 0.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MinMaxScaler {
    ranges: Option<Vec<ColumnRange>>,
}

impl MinMaxScaler {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn fitted<'a>(rows: impl IntoIterator<Item = &'a [f64]>) -> Result<Self> {
        let mut s = Self::new();
        s.fit(rows)?;
        Ok(s)
    }

    pub fn from_ranges(ranges: Vec<ColumnRange>) -> Self {
        MinMaxScaler { ranges: Some(ranges) }
    }

    pub fn fit<'a>(&mut self, rows: impl IntoIterator<Item = &'a [f64]>) -> Result<()> {
        let mut ranges: Option<Vec<ColumnRange>> = None;
        for row in rows {
            match ranges.as_mut() {
                None => ranges = Some(row.iter().map(|&v| ColumnRange { min: v, max: v }).collect()),
                Some(r) => {
                    if r.len() != row.len() {
                        return Err(Error::DimensionMismatch {
                            expected: r.len(),
                            got: row.len(),
                        });
                    }
                    for (c, &v) in r.iter_mut().zip(row) {
                        c.min = c.min.min(v);
                        c.max = c.max.max(v);
                    }
                }
            }
        }
        self.ranges = Some(ranges.ok_or_else(|| Error::EmptyMatrix("cannot fit a scaler on zero rows".into()))?);
        Ok(())
    }

    pub fn ranges(&self) -> Result<&[ColumnRange]> {
        self.ranges.as_deref().ok_or(Error::ScalerNotFitted)
    }

    pub fn is_fitted(&self) -> bool {
        self.ranges.is_some()
    }

    pub fn n_columns(&self) -> Option<usize> {
        self.ranges.as_ref().map(Vec::len)
    }

    fn checked(&self, len: usize) -> Result<&[ColumnRange]> {
        let r = self.ranges()?;
        if r.len() != len {
            return Err(Error::DimensionMismatch {
                expected: r.len(),
                got: len,
            });
        }
        Ok(r)
    }

    pub fn transform(&self, row: &[f64]) -> Result<Vec<f64>> {
        let r = self.checked(row.len())?;
        Ok(row.iter().zip(r).map(|(&v, c)| c.scale(v)).collect())
    }

    pub fn inverse_transform(&self, row: &[f64]) -> Result<Vec<f64>> {
        let r = self.checked(row.len())?;
        Ok(row.iter().zip(r).map(|(&s, c)| c.unscale(s)).collect())
    }

    pub fn transform_rows(&self, rows: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        rows.iter().map(|r| self.transform(r)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn column(vals: &[f64]) -> Vec<Vec<f64>> {
        vals.iter().map(|&v| vec![v]).collect()
    }

    #[test]
    fn ten_twenty_thirty() {
        let rows = column(&[10.0, 20.0, 30.0]);
        let s = MinMaxScaler::fitted(rows.iter().map(Vec::as_slice)).unwrap();
        let scaled: Vec<f64> = rows.iter().map(|r| s.transform(r).unwrap()[0]).collect();
        assert_eq!(scaled, vec![0.0, 0.5, 1.0]);
        // extrapolation is not clipped
        assert_eq!(s.transform(&[40.0]).unwrap(), vec![1.5]);
    }

    #[test]
    fn constant_column_maps_to_zero() {
        let rows = column(&[3.0, 3.0]);
        let s = MinMaxScaler::fitted(rows.iter().map(Vec::as_slice)).unwrap();
        assert!(s.ranges().unwrap()[0].is_constant());
        assert_eq!(s.transform(&[3.0]).unwrap(), vec![0.0]);
        assert_eq!(s.inverse_transform(&[0.0]).unwrap(), vec![3.0]);
    }

    #[test]
    fn unfitted_errors() {
        let s = MinMaxScaler::new();
        assert!(matches!(s.inverse_transform(&[0.5]), Err(Error::ScalerNotFitted)));
        assert!(matches!(s.transform(&[0.5]), Err(Error::ScalerNotFitted)));
    }

    #[test]
    fn width_checked() {
        let rows = [vec![1.0, 2.0], vec![2.0, 3.0]];
        let s = MinMaxScaler::fitted(rows.iter().map(Vec::as_slice)).unwrap();
        assert!(matches!(s.transform(&[1.0]), Err(Error::DimensionMismatch { .. })));
    }

    proptest! {
        #[test]
        fn round_trip(rows in prop::collection::vec(prop::collection::vec(-1e4f64..1e4, 4), 2..30),
                      probe in prop::collection::vec(-2e4f64..2e4, 4)) {
            let s = MinMaxScaler::fitted(rows.iter().map(Vec::as_slice)).unwrap();
            let back = s.inverse_transform(&s.transform(&probe).unwrap()).unwrap();
            for (j, (a, b)) in probe.iter().zip(&back).enumerate() {
                if !s.ranges().unwrap()[j].is_constant() {
                    prop_assert!((a - b).abs() < 1e-9, "{a} vs {b}");
                }
            }
        }

        #[test]
        fn training_rows_span_unit_interval(rows in prop::collection::vec(prop::collection::vec(-50f64..50.0, 3), 2..30)) {
            let s = MinMaxScaler::fitted(rows.iter().map(Vec::as_slice)).unwrap();
            let scaled = s.transform_rows(&rows).unwrap();
            for j in 0..3 {
                if s.ranges().unwrap()[j].is_constant() { continue; }
                let lo = scaled.iter().map(|r| r[j]).fold(f64::INFINITY, f64::min);
                let hi = scaled.iter().map(|r| r[j]).fold(f64::NEG_INFINITY, f64::max);
                prop_assert_eq!(lo, 0.0);
                prop_assert_eq!(hi, 1.0);
            }
        }
    }
}
