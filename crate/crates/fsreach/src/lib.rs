//! File formats, scenario loading, parallel Monte-Carlo and the command-line
//! front end for [`fsreach_core`].

pub mod cli;
pub mod clock;
pub mod error;
pub mod io;
pub mod job;
pub mod mc;
pub mod report;
pub mod scenario;

pub use clock::MonotonicClock;
pub use error::{AppError, AppResult};
pub use job::FsrJob;
pub use scenario::{load_scenario, save_scenario, Overrides};
