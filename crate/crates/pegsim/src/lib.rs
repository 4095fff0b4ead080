//! Peg-in-hole assembly simulation toolkit.
//!
//! A force-controlled robotic assembly study in six parts:
//!
//! - [`lti`]: discrete-time LTI systems at a fixed 125 Hz sample rate —
//!   composition, simulation, spectral analysis.
//! - [`lp`]: a dense interior-point LP solver used by the synthesis step.
//! - [`synthesis`]: convex force-controller synthesis over a stiffness
//!   family via a FIR Youla parameter.
//! - [`controllers`]: runtime force laws (integral and synthesized) and the
//!   per-axis hybrid position/force arbiter.
//! - [`world`]: quasi-static contact simulation of a tilted peg over a
//!   holed plate, with penalty springs, stick-slip friction, sensor noise.
//! - [`strategy`]: the eight-state search-and-insert assembly state machine.
//! - [`config`] / [`runner`]: scenario configuration, deterministic batch
//!   experiments, CSV/JSON logging.

pub mod config;
pub mod controllers;
pub mod error;
pub mod lp;
pub mod lti;
pub mod runner;
pub mod strategy;
pub mod synthesis;
pub mod world;

pub use error::{Error, Result};
