//! Valid selective p-values for features chosen by sequential feature
//! selection after optimal-transport domain adaptation.

pub mod error;
pub mod experiments;
pub mod numkernel;
pub mod inference;
pub mod ot;
pub mod seqfs;

pub use error::{Error, Result};
