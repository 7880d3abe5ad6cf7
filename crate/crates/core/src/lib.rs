//! Simulation of UAV-relayed positioning for ground users inside a jammed
//! area: link budgets, UAV self-localization bounds and estimators,
//! synchronization error, UE TDoA positioning and the experiment drivers.

// Range checks are written as `!(x > lo)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod experiments;
pub mod linalg;
pub mod measurement;
pub mod scenario;
pub mod selfloc;
pub mod sync;
pub mod uepos;

pub use channel::{ChannelError, LinkVariances, UeLinkVariances, SPEED_OF_LIGHT};
pub use experiments::{ExperimentError, Heatmap, Variant};
pub use measurement::{MeasurementError, MeasurementSet};
pub use scenario::{
    build_canonical_scenario, canonical_scenario, discretize_target_area, validate_scenario,
    LinkCondition, Overrides, Position3, Scenario, ScenarioError,
};
pub use selfloc::{SelfLocError, UavStateVector};
pub use uepos::UePosError;

/// Any error raised by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Measurement(#[from] MeasurementError),
    #[error(transparent)]
    SelfLoc(#[from] SelfLocError),
    #[error(transparent)]
    UePos(#[from] UePosError),
    #[error(transparent)]
    Experiment(#[from] ExperimentError),
}
