//! Behavioral models of mismatch-limited quantizers built from redundant
//! component sets.
//!
//! - [`quantizer`]: reference sets, mean square error, entropy, MQR and
//!   error profiles.
//! - [`component`]: geometric identities, nominal and sampled component
//!   weights, assemblies and their references.
//! - [`search`]: exact minimum-error assembly search.
//! - [`calibration`]: on-chip style mismatch estimation, fixed-point storage
//!   and the mapping/compensation heuristic for half-split arrays.
//! - [`adc`]: successive-approximation conversion, transfer functions,
//!   DNL/INL, ENOB and Monte Carlo sweeps.
//! - [`experiment`]: reproducible experiment specs and file emitters.
//! - [`acceptance`]: the numbered acceptance checks run by `redsense verify`.

pub mod acceptance;
pub mod adc;
pub mod calibration;
pub mod component;
pub mod error;
pub mod experiment;
pub mod oracle;
pub mod quantizer;
pub mod rng;
pub mod search;

pub use error::{Error, Result};
