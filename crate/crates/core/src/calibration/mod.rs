//! Calibration of half-split arrays `N·(N-1, 1)`.
//!
//! [`estimate_mismatch`] measures the relative error of every component by
//! comparing neighbours of equal nominal weight and stores the result in a
//! fixed-point table. [`calibrated_assembly`] then maps each code to an
//! assembly that leans on the primary set and spends the idle low-order
//! secondary components on cancelling the estimated residual error.

mod estimate;
pub mod fixed_point;
mod heuristic;

use serde::{Deserialize, Serialize};

pub use estimate::{estimate_mismatch, DifferencePair, MismatchEstimate};
pub use fixed_point::FixedPointFormat;
pub use heuristic::{
    calibrated_assembly, compensate_residual, map_and_shift, residual_error, CalibratedAssembly,
    Calibrator, CompensationRoute, MappingPlan, COMPENSATION_POOL_SIZE,
};

use crate::component::ComponentRealization;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MeasurementMode {
    /// Differences digitized by simulated charge redistribution.
    #[default]
    Behavioral,
    /// Differences and offset read exactly.
    Ideal,
}

/// A half-split array together with what the estimation procedure sees of
/// the surrounding circuit.
#[derive(Debug, Clone)]
pub struct HalfSplitArray {
    pub realization: ComponentRealization,
    pub sub_dac_bits: u32,
    /// Gain error of the sub-DAC steps (bridge capacitor), 1.0 when exact.
    pub sub_dac_gain: f64,
    /// LSB.
    pub comparator_offset: f64,
    /// LSB, per decision.
    pub comparator_noise_sigma: f64,
    pub measurement_mode: MeasurementMode,
    pub format: FixedPointFormat,
}

impl HalfSplitArray {
    pub fn new(realization: ComponentRealization) -> Result<Self> {
        if !realization.identity.is_half_split() {
            return Err(Error::validation(format!(
                "identity {} is not a half-split array",
                realization.identity
            )));
        }
        realization.validate()?;
        Ok(Self {
            realization,
            sub_dac_bits: 4,
            sub_dac_gain: 1.0,
            comparator_offset: 0.0,
            comparator_noise_sigma: 0.0,
            measurement_mode: MeasurementMode::Behavioral,
            format: FixedPointFormat::default(),
        })
    }
}
