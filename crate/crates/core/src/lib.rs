//! Close-out of defaulted bilateral derivative portfolios by sealed-bid
//! auction.
//!
//! The crate covers the early-termination lifecycle of a master agreement,
//! a commit-reveal auction that yields the Market Quotation and a
//! second-price replacement trade, the trade-cost/IM stopping rule, and
//! settlement of the result as conserving ledger transfers. [`harness`]
//! drives all of it from scenario files.

pub mod auction;
pub mod harness;
pub mod lifecycle;
pub mod model;
pub mod money;
pub mod settlement;

pub use money::{Currency, Money, MoneyError};
