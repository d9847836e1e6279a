use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use equigraph::blocks::{Aggregation, BlockKind};
use equigraph::polytopes::{base_graphs, PolytopeDatasetConfig};
use equigraph::tensor::Mode;
use equigraph::{Batch, GraphSample, Model, ModelConfig, PsiChoice, Tape, TransformFamily};

fn polytopes(dim: usize) -> Vec<GraphSample> {
    base_graphs(&PolytopeDatasetConfig::new(dim, TransformFamily::Orthogonal, 0)).unwrap()
}

const MODELS: [(&str, BlockKind, bool); 4] = [
    ("gn", BlockKind::Gn, false),
    ("dgn", BlockKind::Dgn, false),
    ("sdgn", BlockKind::Dgn, true),
    ("agn", BlockKind::Agn, false),
];

fn step(c: &mut Criterion) {
    for dim in [3, 4] {
        let graphs = polytopes(dim);
        let batch = Batch::new(&graphs.iter().collect::<Vec<_>>()).unwrap();
        let labels = batch.labels.clone().unwrap();
        let mut group = c.benchmark_group(format!("polytopes_n{dim}"));
        group.sample_size(10);
        for (name, kind, scaling) in MODELS {
            let cfg = ModelConfig::preset(kind, Aggregation::Sum, PsiChoice::Identity, scaling, graphs.len());
            let model = Model::new(cfg, graphs[0].dims()).unwrap();
            group.bench_function(BenchmarkId::new("forward", name), |b| {
                b.iter(|| model.predict(&batch).unwrap())
            });
            group.bench_function(BenchmarkId::new("forward_backward", name), |b| {
                b.iter(|| {
                    let mut tape = Tape::new();
                    let logits = model.forward(&mut tape, &batch, &mut Mode::Eval).unwrap();
                    let loss = tape.softmax_cross_entropy(logits, &labels).unwrap();
                    tape.backward(loss).unwrap()
                })
            });
        }
        group.finish();
    }
}

criterion_group!(benches, step);
criterion_main!(benches);
