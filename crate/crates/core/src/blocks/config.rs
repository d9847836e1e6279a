use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::PsiChoice;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockKind {
    /// Standard graph network block; coordinates enter as node features.
    Gn,
    /// Distance-preserving block: geometry only via squared edge lengths.
    Dgn,
    /// Angle-preserving block: geometry only via angles at each node.
    Agn,
    /// Angle update plus distance-aware edge update.
    Combined,
}

impl BlockKind {
    pub fn uses_angles(self) -> bool {
        matches!(self, BlockKind::Agn | BlockKind::Combined)
    }

    pub fn uses_distances(self) -> bool {
        matches!(self, BlockKind::Dgn | BlockKind::Combined)
    }

    pub fn updates_coords(self) -> bool {
        !matches!(self, BlockKind::Gn)
    }
}

/// Permutation-invariant reduction used for every aggregation of a block
/// and for readout pooling.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    Sum,
    Mean,
}

pub type Pooling = Aggregation;

impl Aggregation {
    pub fn name(self) -> &'static str {
        match self {
            Aggregation::Sum => "sum",
            Aggregation::Mean => "mean",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockConfig {
    pub kind: BlockKind,
    pub aggregation: Aggregation,
    /// Hidden width of every update MLP in the block.
    pub hidden_width: usize,
    /// Output widths of the edge, node, angle and global embeddings.
    pub n_e: usize,
    pub n_v: usize,
    pub n_alpha: usize,
    pub n_u: usize,
    /// Ignored by GN blocks.
    #[serde(default)]
    pub psi: PsiChoice,
}

impl BlockConfig {
    pub fn new(kind: BlockKind, aggregation: Aggregation, hidden: usize, embed: usize, psi: PsiChoice) -> Self {
        Self {
            kind,
            aggregation,
            hidden_width: hidden,
            n_e: embed,
            n_v: embed,
            n_alpha: embed,
            n_u: embed,
            psi,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Readout {
    /// Node MLP widths after the input (hidden..., output).
    pub node_widths: Vec<usize>,
    pub pooling: Pooling,
    /// Head MLP hidden widths; the output width is `num_classes`.
    pub head_widths: Vec<usize>,
    pub num_classes: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub blocks: Vec<BlockConfig>,
    /// Normalise coordinates so the longest edge has length `alpha_scale`
    /// before the first block.
    #[serde(default)]
    pub scaling_layer: bool,
    #[serde(default = "default_alpha")]
    pub alpha_scale: f64,
    pub readout: Readout,
    #[serde(default)]
    pub dropout: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_alpha() -> f64 {
    1.0
}

/// Embedding width of graph layers in the polytope experiments.
pub const EMBED_WIDTH: usize = 32;
/// Hidden width of every MLP in the polytope experiments.
pub const HIDDEN_WIDTH: usize = 64;

impl ModelConfig {
    /// Polytope-experiment architecture: two AGN (or combined) layers or
    /// three DGN/GN layers, 32-wide embeddings, 64-wide swish MLPs, node MLP
    /// + pooling + head readout.
    pub fn preset(kind: BlockKind, rho: Aggregation, psi: PsiChoice, scaling_layer: bool, num_classes: usize) -> Self {
        let layers = if kind.uses_angles() { 2 } else { 3 };
        let psi = if kind == BlockKind::Gn {
            PsiChoice::Identity
        } else {
            psi
        };
        Self {
            blocks: (0..layers)
                .map(|_| BlockConfig::new(kind, rho, HIDDEN_WIDTH, EMBED_WIDTH, psi))
                .collect(),
            scaling_layer,
            alpha_scale: 1.0,
            readout: Readout {
                node_widths: vec![HIDDEN_WIDTH, EMBED_WIDTH],
                pooling: rho,
                head_widths: vec![HIDDEN_WIDTH],
                num_classes,
            },
            dropout: 0.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.blocks.is_empty() {
            return Err(Error::Config("model needs at least one block".into()));
        }
        if self.readout.num_classes == 0 {
            return Err(Error::Config("num_classes must be positive".into()));
        }
        if self.scaling_layer && !(self.alpha_scale > 0.0 && self.alpha_scale.is_finite()) {
            return Err(Error::Config(format!(
                "alpha_scale {} must be positive",
                self.alpha_scale
            )));
        }
        if self.scaling_layer && !self.blocks.iter().any(|b| b.kind.uses_distances()) {
            return Err(Error::Config("scaling layer requires a distance-based block".into()));
        }
        for (i, b) in self.blocks.iter().enumerate() {
            if b.hidden_width == 0 || b.n_v == 0 {
                return Err(Error::Config(format!("block {i}: widths must be positive")));
            }
        }
        if self.readout.node_widths.is_empty() {
            return Err(Error::Config("readout node MLP needs an output width".into()));
        }
        Ok(())
    }

    /// Short architecture label used in result tables (AGN, SDGN, DGN, GN,
    /// COMBINED).
    pub fn label(&self) -> String {
        let kind = self.blocks[0].kind;
        match kind {
            BlockKind::Agn => "AGN",
            BlockKind::Dgn if self.scaling_layer => "SDGN",
            BlockKind::Dgn => "DGN",
            BlockKind::Gn => "GN",
            BlockKind::Combined => "COMBINED",
        }
        .to_string()
    }

    pub fn aggregation(&self) -> Aggregation {
        self.blocks[0].aggregation
    }

    pub fn psi(&self) -> PsiChoice {
        self.blocks[0].psi
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_layer_counts() {
        let agn = ModelConfig::preset(BlockKind::Agn, Aggregation::Sum, PsiChoice::Identity, false, 5);
        assert_eq!(agn.blocks.len(), 2);
        let dgn = ModelConfig::preset(BlockKind::Dgn, Aggregation::Mean, PsiChoice::Identity, true, 5);
        assert_eq!(dgn.blocks.len(), 3);
        assert_eq!(dgn.label(), "SDGN");
        dgn.validate().unwrap();
    }

    #[test]
    fn scaling_without_distances_rejected() {
        let gn = ModelConfig::preset(BlockKind::Gn, Aggregation::Sum, PsiChoice::Identity, true, 5);
        assert!(gn.validate().is_err());
    }

    #[test]
    fn json_field_names() {
        let cfg = ModelConfig::preset(BlockKind::Agn, Aggregation::Sum, PsiChoice::Identity, false, 5);
        let v = serde_json::to_value(&cfg).unwrap();
        assert_eq!(v["blocks"][0]["kind"], "agn");
        assert_eq!(v["blocks"][0]["aggregation"], "sum");
        assert_eq!(v["readout"]["num_classes"], 5);
        let back: ModelConfig = serde_json::from_value(v).unwrap();
        assert_eq!(back, cfg);
    }
}
