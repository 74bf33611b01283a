//! Two-level credit assignment for multi-turn reinforcement learning.
//!
//! This crate implements a group-based policy optimization pipeline where
//! advantages are estimated at two levels and combined:
//!
//! - **Episode level**: z-score normalization of trajectory returns within a
//!   group ([`episode::zscore_advantages`]), optionally modulated by a
//!   success-rate-aware sigmoid weight ([`episode::psc_factor`]) that
//!   amplifies rare successes and attenuates common-failure noise.
//! - **Step level**: a soft baseline per step formed as a softmax-weighted
//!   convex combination of peer discounted returns, with weights driven by
//!   TF-IDF cosine similarity between observation texts
//!   ([`step_credit::psa_step_advantages`]). A hard exact-match comparator
//!   ([`step_credit::hard_group_advantages`]) is provided alongside.
//!
//! The combined advantage feeds a clipped surrogate objective with exact
//! categorical KL regularization ([`objective`]), optimized by plain gradient
//! ascent on a softmax-linear policy over hashed bag-of-words features
//! ([`policy`]). A deterministic synthetic text environment ([`env`]) and a
//! training loop with five estimator variants ([`trainer`]) close the loop;
//! [`analysis`] hosts the sweep, ablation, and diagnostic harnesses.
//!
//! With the default `parallel` feature, rollout collection, per-group
//! advantage computation, and grid cells run on rayon; disabling the feature
//! falls back to sequential execution with identical results.

pub mod analysis;
pub mod config;
pub mod env;
pub mod episode;
pub mod error;
pub mod objective;
pub mod parallel;
pub mod policy;
pub mod step_credit;
pub mod text_sim;
pub mod trainer;
pub mod types;

pub use config::TrainConfig;
pub use error::{Error, Result};
pub use types::{AdvantageTensor, EpisodeGroup, Estimator, Step, Trajectory};
