//! Multi-unit auctions of identical items with single-minded bidders, some of
//! whom collude.
//!
//! The crate covers three layers:
//!
//! * [`mechanisms`]: truthful VCG, VCG under the coalition's best response
//!   (bid shading), and the hybrid H-VCG mechanism that runs VCG on the
//!   non-colluding bidders and a posted price on the coalition.
//! * [`objectives`]: the item-split objectives `M(k)` used by H-VCG to decide
//!   how many items go to non-colluders, together with the probability that
//!   every item sells.
//! * [`harness`] and [`oracle`]: a seeded, worker-count independent Monte Carlo
//!   harness and brute-force verifiers for the equilibrium and truthfulness
//!   claims.

pub mod distributions;
pub mod error;
pub mod harness;
pub mod mechanisms;
pub mod model;
pub mod objectives;
pub mod oracle;
pub mod rng;
pub mod special;

pub use error::{Error, Result};
