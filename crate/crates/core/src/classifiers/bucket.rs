use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform partition of `[min, max]` into `num_buckets` buckets. Values
/// outside the range clamp to the end buckets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bucketizer {
    min: f64,
    max: f64,
    num_buckets: usize,
}

impl Bucketizer {
    pub fn new(min: f64, max: f64, num_buckets: usize) -> Result<Self> {
        if !(min.is_finite() && max.is_finite() && min < max) {
            return Err(Error::param("buckets.min/max", format!("need min < max, got [{min}, {max}]")));
        }
        if num_buckets == 0 {
            return Err(Error::param("buckets.count", "must be positive"));
        }
        Ok(Bucketizer { min, max, num_buckets })
    }

    pub fn num_buckets(&self) -> usize {
        self.num_buckets
    }

    pub fn bucket_width(&self) -> f64 {
        (self.max - self.min) / self.num_buckets as f64
    }

    pub fn bucketize(&self, value: f64) -> Result<usize> {
        if !value.is_finite() {
            return Err(Error::NonFinite(value));
        }
        let idx = ((value - self.min) / self.bucket_width()).floor();
        Ok((idx.max(0.0) as usize).min(self.num_buckets - 1))
    }

    pub fn bucket_center(&self, idx: usize) -> Result<f64> {
        if idx >= self.num_buckets {
            return Err(Error::OutOfRange {
                index: idx,
                limit: self.num_buckets,
            });
        }
        Ok(self.min + (idx as f64 + 0.5) * self.bucket_width())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn edges_and_clamping() {
        let b = Bucketizer::new(0.0, 40_000.0, 22).unwrap();
        assert_eq!(b.bucketize(0.0).unwrap(), 0);
        assert_eq!(b.bucketize(40_000.0).unwrap(), 21);
        assert_eq!(b.bucketize(1e9).unwrap(), 21);
        assert_eq!(b.bucketize(-3.0).unwrap(), 0);
        assert!(b.bucketize(f64::INFINITY).is_err());
        assert!(b.bucket_center(22).is_err());
    }

    proptest! {
        #[test]
        fn center_within_half_bucket(v in 0.0f64..40_000.0) {
            let b = Bucketizer::new(0.0, 40_000.0, 22).unwrap();
            let c = b.bucket_center(b.bucketize(v).unwrap()).unwrap();
            prop_assert!((v - c).abs() <= 40_000.0 / 44.0 + 1e-9);
        }
    }
}
