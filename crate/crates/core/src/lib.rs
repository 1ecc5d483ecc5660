//! Battery power constraints that depend on state of charge.
//!
//! The crate turns the voltage and current limits of an equivalent-circuit
//! battery model into linear power bounds over SOC, embeds them in convex
//! scheduling problems and scores scheduler variants in a closed loop.
//!
//! * [`circuit`]: OCV curve and power bounds from voltage/current limits
//! * [`envelope`]: piecewise-linear fit of those bounds
//! * [`soc`]: SOC dynamics with charge/discharge efficiency
//! * [`forecast`]: empirical power and energy prediction intervals
//! * [`scheduler`]: static and dynamic power-constrained schedulers
//! * [`sim`]: 1 s plant with a receding-horizon scheduler, violation scoring
//! * [`fixtures`]: reference packs and scenarios used by tests and the CLI

pub mod circuit;
pub mod envelope;
pub mod error;
pub mod fixtures;
pub mod forecast;
pub mod scheduler;
pub mod sim;
pub mod soc;

pub use error::{Error, Result};
