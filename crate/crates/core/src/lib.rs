//! Simulation of organic and recommender-mediated item matching.
//!
//! Users and items are points in R^d. In the organic model a user surveys
//! every item through noise and picks what looks closest; in the
//! recommender model a system observes the user through noise and picks the
//! true item closest to its estimate. The crate provides both processes,
//! their estimators, closed-form large-`n` limits, the population metrics,
//! a seeded Monte Carlo engine and a distance-based embedding trainer that
//! turns ratings data into populations.

pub mod analytic;
pub mod cf;
pub mod error;
pub mod estimators;
pub mod experiments;
pub mod io;
pub mod knn;
pub mod latent;
pub mod matching;
pub mod metrics;
pub mod rng;

pub use analytic::{predict, ScalarTheoremParams, TheoremPrediction, Variant};
pub use error::{Error, Result};
pub use estimators::EstimatorPolicy;
pub use experiments::{Engine, ExperimentConfig, NoiseSpec, PopulationSpec, TrialBatch};
pub use latent::{Covariance, GaussianPrior, Points, Population, PopulationSource};
pub use matching::{MatchOutcome, MatchedSet, Model};
pub use rng::{Role, RngStream};
