//! Power control for a single-cell massive-MIMO full-duplex system.
//!
//! A full-duplex base station with `M` antennas serves `K_ul` uplink and
//! `K_dl` downlink single-antenna users in the same band. Uplink
//! transmissions interfere with downlink receptions; the crate models the
//! asymptotic (large-`M`) SINRs, poses sum-utility power allocation as a
//! convex program in log-power variables, and provides:
//!
//! * [`oracle`] — a centralized solver with a KKT/duality-gap certificate,
//!   plus a brute-force grid search for tiny instances,
//! * [`distpc`] — the distributed price/power iteration that reaches the
//!   same optimum using only one-hop information,
//! * [`onehop`] — the overheard-feedback protocol and the knowledge guard
//!   that enforces the one-hop information architecture,
//! * [`experiments`] — interference sweeps, convergence studies and
//!   antenna-scaling runs with CSV/SVG emission.

pub mod distpc;
pub mod experiments;
pub mod io;
pub mod model;
pub mod onehop;
pub mod oracle;
pub mod presets;
pub mod projection;
pub mod svg;
pub mod utility;

mod error;

pub use error::Error;
pub use model::{PowerAllocation, RateMode, Scenario, ScenarioSpec};
pub use utility::{UtilityFn, UtilitySet};

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;
