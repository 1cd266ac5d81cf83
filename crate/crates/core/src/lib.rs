//! Collaborative feature engineering: declarative feature definitions, a
//! fit/transform execution engine, a validation battery for candidate
//! features and streaming feature-definition selection by conditional
//! mutual information.

pub mod engine;
pub mod expr;
pub mod feature;
pub mod infotheory;
pub mod primitives;
pub mod project;
pub mod rng;
pub mod selection;
pub mod table;
pub mod validation;
