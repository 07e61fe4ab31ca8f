//! Learning task-space specifications from tabletop demonstrations.
//!
//! The crate is organized around the pipeline it implements:
//!
//! * [`geometry`]: points, trajectories and the quadratic Bézier code `z_θ`.
//! * [`scenegen`]: synthetic scenes, rendering, user-type oracles and demonstrations.
//! * [`autodiff`]: a small reverse-mode tape over dense `f64` tensors plus Adam.
//! * [`specmodel`]: the per-user-type encoder / decoder / validity classifier.
//! * [`refine`]: gradient ascent on predicted validity in trajectory space.
//! * [`causal`]: user-type and symbol interventions on trained models.
//! * [`specfit`]: min/max threshold envelopes by exact branch-and-bound.
//! * [`config`], [`io`], [`pipeline`]: run configuration, file formats and experiment drivers.

pub mod autodiff;
pub mod causal;
pub mod config;
pub mod error;
pub mod geometry;
pub mod io;
pub mod pipeline;
pub mod refine;
pub mod scenegen;
pub mod specfit;
pub mod specmodel;

pub use error::{Error, Result};
