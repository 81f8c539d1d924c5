//! Entity disambiguation against a small knowledge base, plus occurrence
//! statistics over the resulting entity labels.
//!
//! The pipeline runs in layers:
//!
//! - [`kb`] loads the entity catalog, inlink graph and mention table.
//! - [`corpus`] holds tokenized documents with their spots, a gazetteer
//!   spotter and a seeded synthetic generator.
//! - [`local`] scores each (spot, candidate) pair with a 13-dimensional
//!   feature vector and a ranking-hinge trained weight vector.
//! - [`collective`] adds pairwise topical coherence and solves the
//!   per-document assignment by hill climbing, LP rounding or enumeration.
//! - [`ratio`] estimates class ratios by mean matching on the simplex, with
//!   label-and-collect as the baseline.
//! - [`stats`] tallies sense priors, entity bigrams and ranks related
//!   entities with personalized PageRank.

pub mod collective;
pub mod corpus;
pub mod error;
pub mod kb;
pub mod local;
pub mod ratio;
pub mod seed;
pub mod stats;
pub mod text;

pub use error::{Error, Result};
pub use kb::{EntityId, KnowledgeBase};
