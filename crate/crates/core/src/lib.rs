pub mod bump;
pub mod cli;
pub mod completion;
pub mod error;
pub mod filterbank;
pub mod mra;
pub mod quad;
pub mod ratlat;
pub mod sfs;
pub mod verify;

pub use error::{Error, Result};
