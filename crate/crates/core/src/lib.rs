//! Entity-aware adversarial attacks on relation classifiers and
//! integrated-gradients diagnosis of the samples they produce.
//!
//! Pipeline: [`corpus`] loads data and inserts entity markers, [`model`]
//! trains a small differentiable classifier, [`attack`] generates adversarial
//! samples that leave entity spans untouched, [`attribution`] scores tokens
//! by integrated gradients, [`diagnosis`] relates the edits to salience,
//! out-of-vocabulary tokens and label co-occurrence, and [`report`] writes
//! the tables and figure data.

pub mod attack;
pub mod attribution;
pub mod corpus;
pub mod diagnosis;
pub mod error;
pub mod model;
pub mod pipeline;
pub mod report;
pub mod synth;

pub use error::{Error, Result};
