//! One-sample-per-document JSON interchange.
//!
//! ```json
//! {"nodes":[{"coords":[0.0,0.0],"features":[]}],
//!  "edges":[{"src":0,"dst":1,"features":[]}],
//!  "global":[], "label":3, "angles":"auto"}
//! ```

use serde::{Deserialize, Serialize};

use super::{build_angle_set, AngleTriple, Angles, GraphSample, Label};
use crate::error::{Error, Result};
use crate::json::to_string_precise;
use crate::tensor::Tensor;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphDoc {
    nodes: Vec<NodeDoc>,
    #[serde(default)]
    edges: Vec<EdgeDoc>,
    #[serde(default)]
    global: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<Label>,
    #[serde(default)]
    angles: AnglesDoc,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    angle_features: Vec<Vec<f64>>,
    /// Feature widths that cannot be read off empty row lists.
    #[serde(default, skip_serializing_if = "EmptyWidths::is_unset")]
    empty_widths: EmptyWidths,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EmptyWidths {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    edge_features: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    angle_features: Option<usize>,
}

impl EmptyWidths {
    fn is_unset(&self) -> bool {
        self.edge_features.is_none() && self.angle_features.is_none()
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeDoc {
    coords: Vec<f64>,
    #[serde(default)]
    features: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EdgeDoc {
    src: usize,
    dst: usize,
    #[serde(default)]
    features: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum AnglesDoc {
    Keyword(String),
    List(Vec<AngleTriple>),
}

impl Default for AnglesDoc {
    fn default() -> Self {
        AnglesDoc::Keyword("auto".into())
    }
}

fn rows_to_matrix(rows: Vec<Vec<f64>>, what: &str, field: &str) -> Result<Tensor> {
    rows_to_matrix_or(rows, what, field, 0)
}

fn rows_to_matrix_or(rows: Vec<Vec<f64>>, what: &str, field: &str, empty_width: usize) -> Result<Tensor> {
    let width = rows.first().map_or(empty_width, Vec::len);
    if let Some(bad) = rows.iter().position(|r| r.len() != width) {
        return Err(Error::parse(
            format!("{what}[{bad}].{field}"),
            format!("width {} differs from {what}[0] width {width}", rows[bad].len()),
        ));
    }
    Ok(Tensor::matrix(rows.len(), width, rows.into_iter().flatten().collect()))
}

/// Parses one graph document.
pub fn read_graph_json(text: &str) -> Result<GraphSample> {
    let doc: GraphDoc = serde_json::from_str(text)
        .map_err(|e| Error::parse(format!("line {} column {}", e.line(), e.column()), e.to_string()))?;
    let n = doc.nodes.len();
    for (e, edge) in doc.edges.iter().enumerate() {
        for (name, v) in [("src", edge.src), ("dst", edge.dst)] {
            if v >= n {
                return Err(Error::parse(
                    format!("edges[{e}].{name}"),
                    format!("node {v} out of range for {n} nodes"),
                ));
            }
        }
        if edge.src == edge.dst {
            return Err(Error::parse(format!("edges[{e}]"), "self-loop"));
        }
    }
    let angles = match doc.angles {
        AnglesDoc::Keyword(k) if k == "auto" => Angles::Auto,
        AnglesDoc::Keyword(k) => {
            return Err(Error::parse(
                "angles",
                format!("expected \"auto\" or a list, got {k:?}"),
            ))
        }
        AnglesDoc::List(list) => {
            if let Some(a) = list.iter().position(|t| t.iter().any(|&v| v >= n)) {
                return Err(Error::parse(
                    format!("angles[{a}]"),
                    format!("node out of range for {n} nodes"),
                ));
            }
            Angles::Explicit(list)
        }
    };
    let (coords, features): (Vec<_>, Vec<_>) = doc.nodes.into_iter().map(|n| (n.coords, n.features)).unzip();
    let coords = rows_to_matrix(coords, "nodes", "coords")?;
    let node_features = rows_to_matrix(features, "nodes", "features")?;
    let edges: Vec<_> = doc.edges.iter().map(|e| (e.src, e.dst)).collect();
    let edge_features = rows_to_matrix_or(
        doc.edges.into_iter().map(|e| e.features).collect(),
        "edges",
        "features",
        doc.empty_widths.edge_features.unwrap_or(0),
    )?;
    let mut builder = GraphSample::builder(coords, edges)
        .node_features(node_features)
        .edge_features(edge_features)
        .angles(angles)
        .global(doc.global);
    let angle_width = doc.empty_widths.angle_features.unwrap_or(0);
    if !doc.angle_features.is_empty() || angle_width > 0 {
        builder = builder.angle_features(rows_to_matrix_or(
            doc.angle_features,
            "angle_features",
            "row",
            angle_width,
        )?);
    }
    if let Some(label) = doc.label {
        builder = builder.label(label);
    }
    builder.build().map_err(|e| Error::parse("document", e.to_string()))
}

/// Serializes a sample. Angles are written as `"auto"` when they equal the
/// automatically built set.
pub fn write_graph_json(g: &GraphSample) -> Result<String> {
    let nodes = (0..g.num_nodes())
        .map(|i| NodeDoc {
            coords: g.coords().row(i).to_vec(),
            features: g.node_features().row(i).to_vec(),
        })
        .collect();
    let edges = g
        .edges()
        .iter()
        .enumerate()
        .map(|(e, &(src, dst))| EdgeDoc {
            src,
            dst,
            features: g.edge_features().row(e).to_vec(),
        })
        .collect();
    let angles = if g.angles() == build_angle_set(g.edges(), g.num_nodes()).as_slice() {
        AnglesDoc::default()
    } else {
        AnglesDoc::List(g.angles().to_vec())
    };
    let angle_features = if g.angle_features().cols() == 0 {
        Vec::new()
    } else {
        (0..g.angles().len())
            .map(|a| g.angle_features().row(a).to_vec())
            .collect()
    };
    let doc = GraphDoc {
        nodes,
        edges,
        global: g.global().to_vec(),
        label: g.label().cloned(),
        angles,
        angle_features,
        empty_widths: EmptyWidths {
            edge_features: (g.num_edges() == 0 && g.edge_features().cols() > 0).then(|| g.edge_features().cols()),
            angle_features: (g.angles().is_empty() && g.angle_features().cols() > 0).then(|| g.angle_features().cols()),
        },
    };
    to_string_precise(&doc)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{"nodes":[{"coords":[0.0,0.0]},{"coords":[1.0,0.5]}],
        "edges":[{"src":0,"dst":1},{"src":1,"dst":0}], "label": 1, "angles": "auto"}"#;

    #[test]
    fn minimal_document() {
        let g = read_graph_json(MINIMAL).unwrap();
        assert_eq!(g.num_nodes(), 2);
        assert_eq!(g.num_edges(), 2);
        assert_eq!(g.label(), Some(&Label::Class(1)));
        assert!(g.angles().is_empty());
    }

    #[test]
    fn dst_out_of_range() {
        let doc = r#"{"nodes":[{"coords":[0.0]},{"coords":[1.0]}],"edges":[{"src":0,"dst":2}]}"#;
        match read_graph_json(doc) {
            Err(Error::Parse { location, .. }) => assert_eq!(location, "edges[0].dst"),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn ragged_features_report_location() {
        let doc = r#"{"nodes":[{"coords":[0.0],"features":[1.0]},{"coords":[1.0],"features":[1.0,2.0]}]}"#;
        match read_graph_json(doc) {
            Err(Error::Parse { location, .. }) => assert_eq!(location, "nodes[1].features"),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_angle_keyword() {
        let doc = r#"{"nodes":[{"coords":[0.0]}],"angles":"none"}"#;
        assert!(matches!(read_graph_json(doc), Err(Error::Parse { .. })));
    }

    #[test]
    fn explicit_angles_round_trip() {
        let doc = r#"{"nodes":[{"coords":[0.0,0.0]},{"coords":[1.0,0.0]},{"coords":[1.0,1.0]}],
            "edges":[{"src":0,"dst":1},{"src":1,"dst":0},{"src":1,"dst":2},{"src":2,"dst":1}],
            "angles":[[2,1,0],[0,1,2]], "angle_features":[[0.5],[0.25]]}"#;
        let g = read_graph_json(doc).unwrap();
        let back = read_graph_json(&write_graph_json(&g).unwrap()).unwrap();
        assert_eq!(back, g);
        assert_eq!(back.angles(), &[[2, 1, 0], [0, 1, 2]]);
    }
}
