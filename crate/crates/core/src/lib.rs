//! Decision-tree learning: greedy CART with cost-complexity pruning, and
//! Tree Alternating Optimization (TAO) for axis-aligned and oblique trees,
//! for classification and regression.

pub mod bench;
pub mod cart;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod solver;
pub mod tao;
pub mod tree;

pub use error::{Error, Result};
