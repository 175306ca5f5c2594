pub mod dynamics;
pub mod error;
pub mod fockspace;
pub mod linalg;
pub mod model;
pub mod phasespace;
pub mod response;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;

/// The guide's chapters, compiled and run as doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/fockspace.md")]
    mod fockspace {}
    #[doc = include_str!("../../../book/src/dynamics.md")]
    mod dynamics {}
    #[doc = include_str!("../../../book/src/phasespace.md")]
    mod phasespace {}
    #[doc = include_str!("../../../book/src/response.md")]
    mod response {}
}
