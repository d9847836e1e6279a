use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn equigraph(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_equigraph"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn text(bytes: &[u8]) -> String {
    String::from_utf8_lossy(bytes).into_owned()
}

fn count_graphs(dir: &Path) -> usize {
    std::fs::read_dir(dir)
        .unwrap()
        .filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().starts_with("graph_"))
        .count()
}

fn metadata(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("metadata.json")).unwrap()).unwrap()
}

fn gen(dir: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["gen", "--out", dir.to_str().unwrap()];
    args.extend_from_slice(extra);
    equigraph(&args)
}

#[test]
fn gen_writes_five_train_and_hundred_test_graphs() {
    let tmp = TempDir::new().unwrap();
    let out = gen(tmp.path(), &["--dim", "3", "--family", "orthogonal", "--copies", "20"]);
    assert_eq!(code(&out), 0, "{}", text(&out.stderr));
    assert_eq!(count_graphs(&tmp.path().join("train")), 5);
    assert_eq!(count_graphs(&tmp.path().join("test")), 100);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "gen");
    assert_eq!(manifest["config"]["dataset"]["copies_per_class"], 20);
}

#[test]
fn gen_four_dimensions_has_six_classes() {
    let tmp = TempDir::new().unwrap();
    let out = gen(tmp.path(), &["--dim", "4", "--copies", "1"]);
    assert_eq!(code(&out), 0, "{}", text(&out.stderr));
    let meta = metadata(&tmp.path().join("test"));
    assert_eq!(meta["num_classes"], 6);
    assert_eq!(meta["details"]["classes"].as_array().unwrap().len(), 6);
}

#[test]
fn gen_augmentation_adds_training_copies() {
    let tmp = TempDir::new().unwrap();
    let out = gen(tmp.path(), &["--dim", "3", "--copies", "2", "--augment-k", "3"]);
    assert_eq!(code(&out), 0, "{}", text(&out.stderr));
    let classes = metadata(&tmp.path().join("train"))["num_classes"].as_u64().unwrap() as usize;
    assert_eq!(count_graphs(&tmp.path().join("train")), classes * 4);
}

#[test]
fn gen_rejects_bad_flags() {
    let tmp = TempDir::new().unwrap();
    for extra in [
        &["--dim", "3", "--family", "non-orthogonal", "--mu", "-1"][..],
        &["--dim", "3", "--family", "non-orthogonal"],
        &["--dim", "3", "--mu", "0.5"],
        &["--dim", "7"],
        &["--dim", "3", "--gamma-min", "2", "--gamma-max", "1"],
        &["--dim", "3", "--family", "spiral"],
    ] {
        let out = gen(tmp.path(), extra);
        assert_eq!(code(&out), 2, "{extra:?}: {}", text(&out.stderr));
    }
}

#[test]
fn gen_is_deterministic() {
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    let flags = [
        "--dim",
        "3",
        "--family",
        "non-orthogonal",
        "--mu",
        "1.5",
        "--copies",
        "2",
        "--seed",
        "9",
    ];
    assert_eq!(code(&gen(a.path(), &flags)), 0);
    assert_eq!(code(&gen(b.path(), &flags)), 0);
    for i in 0..10 {
        let name = format!("test/graph_{i:05}.json");
        assert_eq!(
            std::fs::read(a.path().join(&name)).unwrap(),
            std::fs::read(b.path().join(&name)).unwrap()
        );
    }
}

#[test]
fn train_without_data_fails() {
    let tmp = TempDir::new().unwrap();
    let missing = tmp.path().join("nope");
    let out = equigraph(&[
        "train",
        "--preset",
        "dgn",
        "--data",
        missing.to_str().unwrap(),
        "--out",
        tmp.path().join("run").to_str().unwrap(),
    ]);
    assert_ne!(code(&out), 0);
}

#[test]
fn train_rejects_class_count_mismatch() {
    let tmp = TempDir::new().unwrap();
    assert_eq!(
        code(&gen(&tmp.path().join("data"), &["--dim", "3", "--copies", "1"])),
        0
    );
    let cfg = tmp.path().join("model.json");
    // a three-class model against five-class data
    let model = serde_json::json!({
        "blocks": [{"kind": "gn", "aggregation": "sum", "hidden_width": 8, "n_e": 4, "n_v": 4, "n_u": 4, "n_alpha": 4, "psi": {"kind": "identity"}}],
        "readout": {"node_widths": [4], "pooling": "sum", "head_widths": [], "num_classes": 3}
    });
    std::fs::write(&cfg, model.to_string()).unwrap();
    let out = equigraph(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--data",
        tmp.path().join("data").to_str().unwrap(),
        "--out",
        tmp.path().join("run").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 3, "{}", text(&out.stderr));
    assert!(text(&out.stderr).contains("classes"), "{}", text(&out.stderr));
}

#[test]
fn train_check_and_rerun() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("data");
    let run = tmp.path().join("run");
    assert_eq!(code(&gen(&data, &["--dim", "3", "--copies", "4"])), 0);
    let out = equigraph(&[
        "train",
        "--preset",
        "dgn",
        "--rho",
        "sum",
        "--data",
        data.to_str().unwrap(),
        "--seeds",
        "2",
        "--epochs",
        "15",
        "--out",
        run.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", text(&out.stderr));
    let csv = std::fs::read_to_string(run.join("results.csv")).unwrap();
    assert!(
        csv.starts_with("block,rho,psi,dim,train_acc,test_orth,seed_count,augment_k"),
        "{csv}"
    );
    assert!(csv.contains("DGN,sum,identity,3,"), "{csv}");
    for seed in [0, 1] {
        assert!(run.join(format!("seed_{seed}/params.json")).is_file());
    }

    let checkpoint = run.join("seed_0");
    let check = |group: &str, trials: &str| {
        equigraph(&[
            "check",
            "--checkpoint",
            checkpoint.to_str().unwrap(),
            "--data",
            data.to_str().unwrap(),
            "--group",
            group,
            "--trials",
            trials,
        ])
    };
    let e3 = check("e3", "20");
    assert_eq!(code(&e3), 0, "{}{}", text(&e3.stdout), text(&e3.stderr));
    assert!(text(&e3.stdout).starts_with("PASS"));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(checkpoint.join("equivariance.json")).unwrap()).unwrap();
    assert_eq!(report[0]["group"], "e3");
    assert_eq!(report[0]["pass"], true);

    let conf = check("conf", "20");
    assert_eq!(code(&conf), 1, "{}", text(&conf.stdout));
    assert!(text(&conf.stdout).starts_with("FAIL"));
    assert!(text(&conf.stderr).contains("worst case"), "{}", text(&conf.stderr));

    assert_eq!(code(&check("e3", "0")), 2);
    assert_eq!(code(&check("spin", "5")), 2);

    let again = tmp.path().join("again");
    let out = equigraph(&[
        "rerun",
        "--manifest",
        run.join("manifest.json").to_str().unwrap(),
        "--out",
        again.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", text(&out.stderr));
    assert_eq!(
        std::fs::read(run.join("results.csv")).unwrap(),
        std::fs::read(again.join("results.csv")).unwrap()
    );
}

#[test]
fn gradcheck_default_passes() {
    let out = equigraph(&["gradcheck"]);
    assert_eq!(code(&out), 0, "{}{}", text(&out.stdout), text(&out.stderr));
    assert!(text(&out.stdout).contains("max_rel_err"));
}

#[test]
fn gradcheck_fails_above_tolerance() {
    let out = equigraph(&["gradcheck", "--preset", "agn", "--tol", "1e-14"]);
    assert_eq!(code(&out), 1, "{}", text(&out.stdout));
}

const RESULTS: &str = "block,rho,psi,dim,train_acc,test_orth,test_orth_dil,seed_count,augment_k
AGN,sum,identity,3,1.000000±0.000000,1.000000±0.000000,1.000000±0.000000,10,0
GN,sum,identity,3,1.000000±0.000000,0.400000±0.050000,,5,0
GN,sum,identity,3,1.000000±0.000000,0.900000±0.020000,,5,20
";

#[test]
fn report_renders_table_and_series() {
    let tmp = TempDir::new().unwrap();
    let csv = tmp.path().join("results.csv");
    std::fs::write(&csv, RESULTS).unwrap();
    let table = equigraph(&["report", "--in", csv.to_str().unwrap()]);
    assert_eq!(code(&table), 0, "{}", text(&table.stderr));
    let first_row = text(&table.stdout).lines().nth(1).unwrap().to_string();
    assert!(first_row.starts_with("AGN"));
    assert!(first_row.contains("1.00 ± 0.00"), "{first_row}");

    let json = equigraph(&["report", "--in", csv.to_str().unwrap(), "--format", "json"]);
    assert_eq!(code(&json), 0);
    let v: serde_json::Value = serde_json::from_slice(&json.stdout).unwrap();
    let gn = v["series"]
        .as_array()
        .unwrap()
        .iter()
        .find(|s| s["block"] == "GN" && s["column"] == "test_orth")
        .unwrap();
    let ks: Vec<u64> = gn["points"]
        .as_array()
        .unwrap()
        .iter()
        .map(|p| p["augment_k"].as_u64().unwrap())
        .collect();
    assert_eq!(ks, [0, 20]);
}

#[test]
fn report_rejects_malformed_csv() {
    let tmp = TempDir::new().unwrap();
    let csv = tmp.path().join("results.csv");
    std::fs::write(&csv, "block,rho\nAGN,sum\n").unwrap();
    let out = equigraph(&["report", "--in", csv.to_str().unwrap()]);
    assert_eq!(code(&out), 3);
    assert!(text(&out.stderr).contains("malformed"), "{}", text(&out.stderr));
}
