//! Radio map estimation toolkit.
//!
//! The crate covers the full experimental loop for predicting an urban
//! signal-strength field from sparse measurements and a 3D building map:
//!
//! * [`grid`] — grid geometry, height maps, signal fields, outdoor masks
//!   and measurement sets shared by every other module.
//! * [`citygen`] — procedural Manhattan-grid environments and transmitter
//!   placement.
//! * [`propagation`] — deterministic ground-truth simulator (free-space
//!   path loss, knife-edge diffraction, Gudmundson-correlated shadowing).
//! * [`sampling`] — uniform and random-trajectory measurement collection.
//! * [`nn`] — minimal dense/convolutional tensor ops with reverse-mode
//!   differentiation and Adam, enough to train the predictor.
//! * [`predictor`] — the convolutional mean/variance field predictor, its
//!   masked Gaussian loss and training loop.
//! * [`kriging`] — path-loss fitting plus ordinary Kriging baseline.
//! * [`eval`] — masked metrics and Monte-Carlo benchmark sweeps.
//! * [`dataset`] / [`io`] — dataset assembly, binary grid files, model
//!   checkpoints, manifests and PGM export.

pub mod citygen;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod grid;
pub mod io;
pub mod kriging;
pub mod nn;
pub mod predictor;
pub mod propagation;
pub mod sampling;
pub mod seeds;

pub use error::{Error, Result};
pub use grid::{
    Grid, HeightMap, MeasurementSet, Measurement, OutdoorMask, Point3, PredictedField,
    SignalField,
};
