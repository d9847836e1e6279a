//! Graph network blocks (GN, DGN, AGN and the combined angle/distance
//! block), the coordinate scaling layer and the classification readout.

mod block;
mod config;
mod model;
pub mod ops;

pub use block::{Block, GraphState, StateDims};
pub use config::{Aggregation, BlockConfig, BlockKind, ModelConfig, Pooling, Readout, EMBED_WIDTH, HIDDEN_WIDTH};
pub use model::{Model, ModelOutput};
