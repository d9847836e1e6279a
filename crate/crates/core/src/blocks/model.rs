use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::block::{Block, GraphState, StateDims};
use super::config::{BlockKind, ModelConfig};
use super::ops;
use crate::error::{Error, Result};
use crate::graph::{Batch, FeatureDims};
use crate::rng::rng_for;
use crate::tensor::{Activation, Checkpoint, Mlp, Mode, ParamStore, Tape, Tensor, Var};

/// Blocks plus readout, owning their parameters.
#[derive(Clone, Debug)]
pub struct Model {
    config: ModelConfig,
    dims: FeatureDims,
    store: ParamStore,
    blocks: Vec<Block>,
    node_mlp: Mlp,
    head: Mlp,
}

/// Everything recorded by one forward pass.
#[derive(Clone, Debug)]
pub struct ModelOutput {
    pub logits: Var,
    /// Coordinates entering the first block, after any scaling.
    pub coords_in: Var,
    /// State after each block.
    pub states: Vec<GraphState>,
}

#[derive(Serialize, Deserialize)]
struct ModelDoc {
    config: ModelConfig,
    dims: FeatureDims,
}

impl Model {
    pub fn new(config: ModelConfig, dims: FeatureDims) -> Result<Self> {
        config.validate()?;
        let mut rng = rng_for(config.seed, "model-init");
        let mut store = ParamStore::new();
        let coords_as_features = config.blocks[0].kind == BlockKind::Gn;
        let mut state = StateDims {
            n_v: dims.n_v + if coords_as_features { dims.n_x } else { 0 },
            n_e: dims.n_e,
            n_alpha: dims.n_alpha,
            n_u: dims.n_u,
            n_x: dims.n_x,
        };
        let mut blocks = Vec::with_capacity(config.blocks.len());
        for (i, bc) in config.blocks.iter().enumerate() {
            let block = Block::new(&mut store, &format!("block{i}"), bc, state, config.dropout, &mut rng)?;
            state = block.output_dims();
            blocks.push(block);
        }
        let ro = &config.readout;
        let mut node_widths = vec![state.n_v];
        node_widths.extend(&ro.node_widths);
        let node_mlp = Mlp::new(
            &mut store,
            "readout.node",
            &node_widths,
            Activation::Swish,
            config.dropout,
            &mut rng,
        )?;
        let mut head_widths = vec![*node_widths.last().expect("non-empty")];
        head_widths.extend(&ro.head_widths);
        head_widths.push(ro.num_classes);
        let head = Mlp::new(
            &mut store,
            "readout.head",
            &head_widths,
            Activation::Swish,
            config.dropout,
            &mut rng,
        )?;
        Ok(Self {
            config,
            dims,
            store,
            blocks,
            node_mlp,
            head,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn dims(&self) -> FeatureDims {
        self.dims
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn num_classes(&self) -> usize {
        self.config.readout.num_classes
    }

    /// Records the forward pass on `tape` and returns the logits
    /// (`graphs x classes`).
    pub fn forward(&self, tape: &mut Tape, batch: &Batch, mode: &mut Mode) -> Result<Var> {
        Ok(self.forward_detailed(tape, batch, mode)?.logits)
    }

    pub fn forward_detailed(&self, tape: &mut Tape, batch: &Batch, mode: &mut Mode) -> Result<ModelOutput> {
        if batch.dims != self.dims {
            return Err(Error::Shape(format!(
                "batch widths {:?} do not match model widths {:?}",
                batch.dims, self.dims
            )));
        }
        let coords = if self.config.scaling_layer {
            ops::scale_coords(batch, self.config.alpha_scale)?
        } else {
            batch.coords.clone()
        };
        let x = tape.constant(coords);
        let features = tape.constant(batch.node_features.clone());
        let v = if self.config.blocks[0].kind == BlockKind::Gn {
            tape.concat(&[features, x])?
        } else {
            features
        };
        let mut state = GraphState {
            v,
            e: tape.constant(batch.edge_features.clone()),
            a: tape.constant(batch.angle_features.clone()),
            u: tape.constant(batch.global.clone()),
            x,
        };
        let mut states = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            state = block.forward(tape, &self.store, batch, state, mode)?;
            states.push(state);
        }
        let h = self.node_mlp.forward(tape, &self.store, state.v, mode)?;
        let pooled = ops::aggregate(
            tape,
            h,
            &batch.node_graph,
            batch.num_graphs,
            self.config.readout.pooling,
        )?;
        let logits = self.head.forward(tape, &self.store, pooled, mode)?;
        Ok(ModelOutput {
            logits,
            coords_in: x,
            states,
        })
    }

    /// Evaluation-mode logits.
    pub fn predict(&self, batch: &Batch) -> Result<Tensor> {
        let mut tape = Tape::new();
        let logits = self.forward(&mut tape, batch, &mut Mode::Eval)?;
        Ok(tape.value(logits).clone())
    }

    /// Writes `model.json` (configuration and input widths) and
    /// `params.json` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let doc = ModelDoc {
            config: self.config.clone(),
            dims: self.dims,
        };
        fs::write(dir.join("model.json"), crate::json::to_string_precise(&doc)?)?;
        self.store.to_checkpoint().save(&dir.join("params.json"))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let doc: ModelDoc = serde_json::from_str(&fs::read_to_string(dir.join("model.json"))?)?;
        let mut model = Model::new(doc.config, doc.dims)?;
        let ckpt = Checkpoint::load(&dir.join("params.json"))?;
        model.store.load_checkpoint(&ckpt)?;
        Ok(model)
    }
}
