//! Simulation and analysis toolkit for chirped-pulse photon-echo memories in
//! rare-earth-doped crystals: pulse design, Bloch-equation ensembles, analytic
//! efficiency models with instantaneous spectral diffusion, fits, and
//! orientation maps.

// `!(x > 0.0)` guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod anchors;
pub mod bloch;
pub mod chs;
pub mod error;
pub mod fitting;
pub mod isd;
pub mod material;
pub mod ode;
pub mod perf_map;
pub mod rose;
pub mod sequence;
pub mod units;

pub use bloch::{BlochState, Decay};
pub use chs::{design_pulse, ChsPulse, PulseDescriptor, WavevectorTag};
pub use error::{Error, Result};
pub use material::{AngleTable, MaterialFile, MaterialParams};
pub use ode::Tolerance;
pub use rose::RoseTiming;
pub use sequence::{EnsembleSpec, Pulse, SequenceConfig, SignalPulse};
pub use units::{AngularFrequency, IsdCoefficient};
