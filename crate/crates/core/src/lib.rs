pub mod ctp;
pub mod error;
pub mod geomphase;
pub mod hilbert;
pub mod histories;
pub mod phasespace;
pub mod stochlimit;
pub mod wigner;

pub use error::{Error, Result};
