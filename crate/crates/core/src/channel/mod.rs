//! Complex channel matrices, synthetic generation, and link-level physics.

pub mod cmatrix;
pub mod dataset;
pub mod generate;
pub mod physics;
pub mod types;

pub use cmatrix::{vec_norm_sq, CMatrix};
pub use dataset::{load_dataset, read_dataset, save_dataset, write_dataset, DATASET_MAGIC};
pub use generate::{generate_channels, ChannelProcess};
pub use physics::{
    dbm_to_mw, effective_channel, effective_channel_theta, se_user, sinr_user, sum_se,
};
pub use types::{
    ChannelModel, ChannelSet, Precoder, RisPhaseConfig, ScenarioConfig, POWER_BUDGET_SLACK,
};
