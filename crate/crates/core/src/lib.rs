pub mod attacks;
pub mod capacity;
pub mod channel;
pub mod codec;
pub mod ddim;
pub mod error;
#[doc(hidden)]
pub mod fuzz_checks;
pub mod grid;
pub mod harness;
pub mod io;
pub mod template;

pub use error::{Error, Result};
