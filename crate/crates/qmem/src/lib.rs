//! File formats, a parallel Monte-Carlo driver and the command-line front
//! end around [`qmem_core`].

pub mod error;
pub mod io;
pub mod runner;

pub use error::{AppError, AppResult};
pub use qmem_core as kernel;
pub use runner::Parallel;
