//! Equivariant graph networks over node coordinates.
//!
//! The distance-preserving block (DGN) sees coordinates only through squared
//! edge lengths, so it is invariant to any map preserving those lengths, E(n)
//! included. The angle-preserving block (AGN) sees them only through the
//! angles formed at each node, so it is also invariant to dilations. A
//! scaling layer in front of a DGN (SDGN) normalises the longest edge and
//! adds dilation invariance. The crate bundles these blocks with a small
//! reverse-mode tensor library, coordinate-transform samplers, a regular
//! polytope benchmark and the training and property-checking harness.

pub mod blocks;
pub mod error;
pub mod geometry;
pub mod graph;
pub mod harness;
pub mod json;
pub mod polytopes;
pub mod rng;
pub mod tensor;

pub use blocks::{BlockConfig, BlockKind, Model, ModelConfig, Pooling, Readout};
pub use error::{Error, Result};
pub use geometry::{PsiChoice, TransformFamily, TransformSpec};
pub use graph::{Batch, Dataset, GraphSample};
pub use harness::{EquivarianceReport, RunResult};
pub use tensor::{Tape, Tensor, Var};
