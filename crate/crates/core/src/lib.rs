//! Economic dispatch on DC networks, locational marginal emissions extracted
//! from an emissions-minimizing second layer over the cost-optimal face, and
//! the carbon-account ledger those emissions rates induce.

pub mod accounting;
pub mod combined;
pub mod dispatch;
pub mod error;
pub mod fixtures;
pub mod lp;
pub mod multiperiod;
pub mod network;
pub mod replay;
pub mod verify;

pub use error::{Error, Result};
