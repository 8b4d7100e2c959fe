//! Maximum power throughput of Linear-DC networks with FACTS devices.

pub mod case_io;
pub mod error;
pub mod fixtures;
pub mod gadgets;
pub mod im;
pub mod ldc;
pub mod lp;
pub mod maxflow;
pub mod mip;
pub mod network;
pub mod random;
pub mod validate;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/networks.md")]
    mod networks {}
    #[doc = include_str!("../../../book/src/flows.md")]
    mod flows {}
    #[doc = include_str!("../../../book/src/lp.md")]
    mod lp {}
    #[doc = include_str!("../../../book/src/mff.md")]
    mod mff {}
    #[doc = include_str!("../../../book/src/im.md")]
    mod im {}
    #[doc = include_str!("../../../book/src/special_cases.md")]
    mod special_cases {}
    #[doc = include_str!("../../../book/src/gadgets.md")]
    mod gadgets {}
    #[doc = include_str!("../../../book/src/cases.md")]
    mod cases {}
}
