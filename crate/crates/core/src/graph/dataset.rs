use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::io::{read_graph_json, write_graph_json};
use super::{FeatureDims, GraphSample};
use crate::error::{Error, Result};
use crate::json::to_string_precise;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    #[serde(flatten)]
    pub dims: FeatureDims,
    pub num_classes: usize,
    pub provenance: String,
    /// Generation parameters (transform family, mu, gamma range, seed, ...).
    #[serde(default)]
    pub details: BTreeMap<String, serde_json::Value>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub samples: Vec<GraphSample>,
    pub meta: DatasetMeta,
}

const META_FILE: &str = "metadata.json";

impl Dataset {
    /// Checks every sample against the metadata widths and class count.
    pub fn new(samples: Vec<GraphSample>, meta: DatasetMeta) -> Result<Self> {
        for (i, s) in samples.iter().enumerate() {
            if s.dims() != meta.dims {
                return Err(Error::Shape(format!(
                    "sample {i} has widths {:?}, metadata says {:?}",
                    s.dims(),
                    meta.dims
                )));
            }
            if let Some(c) = s.label().and_then(|l| l.class()) {
                if c >= meta.num_classes {
                    return Err(Error::Contract(format!(
                        "sample {i} label {c} >= {} classes",
                        meta.num_classes
                    )));
                }
            }
        }
        Ok(Self { samples, meta })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn labels(&self) -> Vec<Option<usize>> {
        self.samples.iter().map(|s| s.label().and_then(|l| l.class())).collect()
    }

    /// Writes `metadata.json` and one `graph_NNNNN.json` per sample.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(META_FILE), to_string_precise(&self.meta)?)?;
        for (i, s) in self.samples.iter().enumerate() {
            std::fs::write(dir.join(format!("graph_{i:05}.json")), write_graph_json(s)?)?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let meta_path = dir.join(META_FILE);
        let meta: DatasetMeta = serde_json::from_str(
            &std::fs::read_to_string(&meta_path)
                .map_err(|e| Error::parse(meta_path.display().to_string(), e.to_string()))?,
        )
        .map_err(|e| Error::parse(meta_path.display().to_string(), e.to_string()))?;
        let mut files: Vec<_> = std::fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.file_name()
                    .and_then(|n| n.to_str())
                    .is_some_and(|n| n.starts_with("graph_") && n.ends_with(".json"))
            })
            .collect();
        files.sort();
        let samples = files
            .iter()
            .map(|p| {
                let text = std::fs::read_to_string(p)?;
                read_graph_json(&text).map_err(|e| match e {
                    Error::Parse { location, message } => Error::parse(format!("{}: {location}", p.display()), message),
                    other => other,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Dataset::new(samples, meta)
    }
}
