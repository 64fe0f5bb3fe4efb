//! # mcpanel
//!
//! Causal effect estimation for panels with staggered treatment adoption,
//! built on nuclear-norm regularized matrix completion.
//!
//! The crate covers the whole workflow:
//!
//! * [`panel`]: balanced panels, CSV ingestion, treatment masks, and
//!   two-way fixed-effect residualization on untreated cells.
//! * [`lowrank`]: singular value thresholding, soft-impute, and
//!   cross-validation of the regularization level.
//! * [`estimators`]: full-matrix completion, the split-apply-combine
//!   completion estimator and its combine-then-apply variant, DiD, and
//!   pooled TWFE.
//! * [`aggregate`]: calendar-time and event-time averages, unit bootstrap.
//! * [`diagnostics`]: gap series, pre-trend summaries, in-time placebos.
//! * [`pipeline`]: the end-to-end run behind the `mcpanel` binary.
//!
//! Runnable examples live in `examples/`; run one with
//!
//! ```bash
//! cargo run --release --example staggered_estimators
//! ```

pub mod aggregate;
pub mod diagnostics;
pub mod error;
pub mod estimators;
pub mod io;
pub mod lowrank;
pub mod panel;
pub mod pipeline;
pub mod plot;
pub mod report;
pub mod simulate;

pub use error::{Error, Result};
pub use panel::{Panel, TreatmentMask};
