//! Three-phase least-squares channel estimation for a double-IRS aided
//! multi-user MIMO uplink.
//!
//! The crate covers channel generation ([`channel_model`]), training
//! reflection design ([`training_design`]), the per-phase estimators
//! ([`estimators`]) and their end-to-end driver ([`pipeline`]), the decoupled
//! ON/OFF benchmark ([`benchmarks`]) and a Monte Carlo experiment runner
//! ([`harness`]).

pub mod benchmarks;
pub mod channel_model;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod json;
pub mod linalg;
pub mod pipeline;
pub mod random;
pub mod training_design;

pub use channel_model::{
    cascade, effective_channel, gen_channels, path_loss, receive, CascadedChannelSet,
    ChannelRealization, ReflectionState, SystemConfig, UserCsi,
};
pub use error::{Error, Result};
pub use estimators::normalized_mse;
pub use linalg::{CMat, CVec, C64};
pub use pipeline::{simulate_proposed, EstimateReport, PipelineOptions, ReferenceCsi};
pub use training_design::{overhead, Case2Mode, RankCase, Scheme};
