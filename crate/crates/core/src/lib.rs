//! Parallel first-order optimization: a batched oracle with depth/work accounting,
//! adversarial hard instances and the game that uses them, an accelerated
//! proximal-point framework with a parallel line search, and a smoothing-based
//! highly parallel minimizer for non-smooth Lipschitz functions.

pub mod accel;
pub mod error;
pub mod game;
pub mod hexfloat;
pub mod instances;
pub mod objectives;
pub mod oracle;
pub mod smoothing;

pub use error::{Error, Result};
pub use oracle::Point;
