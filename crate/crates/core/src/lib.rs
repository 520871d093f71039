//! Infer the latent correlation between a hidden rating and an observed
//! score from nothing but the score ranks of the candidates the rating
//! selected.
//!
//! The model takes (rating, score) to be standard bivariate normal with
//! correlation r. Winners are the pool's top fraction by rating. Their score
//! ranks, some possibly censored below a top-list cutoff, identify r.

pub mod cli_io;
pub mod error;
pub mod inference;
pub mod normal_core;
pub mod simulation;
pub mod tail_model;

pub use error::{Error, Result};
pub use inference::{
    CredibleInterval, DatasetFields, EstimateReport, Method, PosteriorGrid, PrizeDataset, RankEntry, Thresholds,
};
pub use normal_core::QuadratureSpec;
pub use simulation::{Coupling, OverlapResult, SimConfig};
pub use tail_model::TailCondition;
