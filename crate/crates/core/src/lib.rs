//! Detection of incongruity between a news headline and its body content.
//!
//! The pipeline: ingest a raw news corpus ([`corpus`]), synthesize labeled
//! incongruent samples by paragraph swapping ([`synthgen`]), build a
//! vocabulary and frozen embedding table ([`textenc`]), turn each sample
//! into a star graph of one headline node and k paragraph nodes ([`graph`]),
//! train a hierarchical dual encoder with edge-supervised graph convolution
//! ([`model`], [`training`]) and report document- and paragraph-level
//! metrics ([`evaluation`]).

pub mod autodiff;
pub mod checkpoint;
pub mod corpus;
pub mod error;
pub mod evaluation;
pub mod graph;
pub mod model;
pub mod synthgen;
pub mod textenc;
pub mod toy;
pub mod training;

pub use error::{Error, Result};
