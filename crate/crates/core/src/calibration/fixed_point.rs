//! Saturating two's-complement fixed point for the mismatch table.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `total_bits` wide, `frac_bits` of them fractional, sign included.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixedPointFormat {
    pub total_bits: u32,
    pub frac_bits: u32,
}

impl Default for FixedPointFormat {
    /// Sign + 5 integer + 4 fractional bits: 1/16 LSB steps over ±32 LSB.
    fn default() -> Self {
        Self {
            total_bits: 10,
            frac_bits: 4,
        }
    }
}

impl FixedPointFormat {
    pub fn new(total_bits: u32, frac_bits: u32) -> Result<Self> {
        if total_bits < 2 || total_bits > 32 || frac_bits >= total_bits {
            return Err(Error::validation(format!(
                "unsupported fixed-point format Q{total_bits}.{frac_bits}"
            )));
        }
        Ok(Self {
            total_bits,
            frac_bits,
        })
    }

    pub fn quantum(&self) -> f64 {
        (-(self.frac_bits as f64)).exp2()
    }

    pub fn raw_min(&self) -> i32 {
        -(1i32 << (self.total_bits - 1))
    }

    pub fn raw_max(&self) -> i32 {
        (1i32 << (self.total_bits - 1)) - 1
    }

    pub fn min_value(&self) -> f64 {
        self.decode(self.raw_min())
    }

    pub fn max_value(&self) -> f64 {
        self.decode(self.raw_max())
    }

    /// Nearest grid value, saturated. The flag is set when saturation
    /// changed the result.
    pub fn encode(&self, value: f64) -> (i32, bool) {
        let scaled = (value / self.quantum()).round();
        if scaled > self.raw_max() as f64 {
            (self.raw_max(), true)
        } else if scaled < self.raw_min() as f64 {
            (self.raw_min(), true)
        } else {
            (scaled as i32, false)
        }
    }

    pub fn decode(&self, raw: i32) -> f64 {
        raw as f64 * self.quantum()
    }

    pub fn contains_raw(&self, raw: i32) -> bool {
        (self.raw_min()..=self.raw_max()).contains(&raw)
    }
}
