//! Diversity-aware conformal selection.
//!
//! Selects test units whose outcome is predicted positive while controlling
//! the false discovery rate, and among FDR-valid selections prefers diverse
//! ones. Conformal e-values indexed by a stopping time are tuned by solving
//! an optimal stopping problem over the backward filtration of the pooled
//! score order.

pub mod conformal;
pub mod data;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod numeric;
pub mod oracle;
pub mod par;
pub mod pipeline;
pub mod qp;
pub mod relaxed;
pub mod seed;
pub mod stopping;
pub mod underrep;
pub mod validate;

pub use error::{DacsError, Result};
