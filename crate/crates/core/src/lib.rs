pub mod cli;
pub mod conformance;
pub mod dual;
pub mod error;
pub mod fading;
pub mod oracle;
pub mod policy;
pub mod quad;
pub mod sim;
pub mod special;
pub mod stream;
pub mod sweep;

pub use error::{Error, Result};
pub use fading::{ClassCTail, FadingModel};
