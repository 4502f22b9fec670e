use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::path::Path;
use std::process::{Command, Output, Stdio};

use cytopie::chart::{read_features_csv, read_labels_csv, FeatureTable, N_FEATURES};
use cytopie::dataset::{load_dataset, PlantedSpec};
use cytopie::{Dataset, FittedBaseline, Report, RuleSet};

fn cytopie(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cytopie")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = cytopie(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn end_to_end_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let art = root.join("artifacts");

    let spec = PlantedSpec::two_blobs(4, 6.0, [0.85, 0.15], [0.15, 0.85], 6, 80);
    let spec_path = root.join("spec.json");
    std::fs::write(&spec_path, serde_json::to_string(&spec).unwrap()).unwrap();
    ok(&["generate", "--spec", p(&spec_path), "--seed", "4", "--out", p(&art)]);
    let manifest = art.join("manifest.json");
    let ds: Dataset = load_dataset(&manifest).unwrap();
    assert_eq!(ds.slides.len(), 12);
    assert_eq!(ds.feature_dim, 4);

    // regenerating is byte-identical
    let again = root.join("again");
    ok(&["generate", "--spec", p(&spec_path), "--seed", "4", "--out", p(&again)]);
    assert_eq!(
        std::fs::read(&manifest).unwrap(),
        std::fs::read(again.join("manifest.json")).unwrap()
    );

    let model = art.join("model.json");
    ok(&[
        "fit-embed",
        "--manifest",
        p(&manifest),
        "--class",
        "1",
        "--out",
        p(&model),
        "--seed",
        "1",
    ]);
    let doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&model).unwrap()).unwrap();
    assert!(doc["train_coords"].is_array());
    assert!(doc["distortion"]["bin_max_radius"].is_array());

    let charts = root.join("charts.csv");
    let features = root.join("features.csv");
    let labels = root.join("labels.csv");
    let charts_json = root.join("charts.json");
    ok(&[
        "charts",
        "--manifest",
        p(&manifest),
        "--model",
        p(&model),
        "--out",
        p(&charts),
        "--json",
        p(&charts_json),
        "--features",
        p(&features),
        "--labels",
        p(&labels),
    ]);
    let chart_text = std::fs::read_to_string(&charts).unwrap();
    assert!(chart_text.starts_with("slide_id,D1,D2,D3,D4,D5,D6,D7,D8,D9,D10,D11,D12,count\n"));
    assert_eq!(chart_text.lines().count(), 13);
    let table: FeatureTable = read_features_csv(&features).unwrap();
    assert_eq!(table.rows.len(), 12);
    assert!(table.rows.iter().all(|r| r.len() == N_FEATURES));
    assert_eq!(read_labels_csv(&labels).unwrap().len(), 12);

    let rules = art.join("rules.json");
    let printed = ok(&[
        "learn-rules",
        "--features",
        p(&features),
        "--labels",
        p(&labels),
        "--seed",
        "3",
        "--iterations",
        "1500",
        "--out",
        p(&rules),
    ]);
    let rs: RuleSet = RuleSet::from_json(&std::fs::read_to_string(&rules).unwrap()).unwrap();
    assert!(printed.contains(&rs.to_string()));
    assert!(printed.contains("log posterior"));

    for kind in ["lr", "svm", "mlp"] {
        let out = root.join(format!("{kind}.json"));
        ok(&[
            "train-baseline",
            "--kind",
            kind,
            "--features",
            p(&features),
            "--labels",
            p(&labels),
            "--epochs",
            "100",
            "--out",
            p(&out),
        ]);
        let m: FittedBaseline = FittedBaseline::from_json(&std::fs::read_to_string(&out).unwrap()).unwrap();
        assert_eq!(m.kind.short_name(), kind);
    }

    let cfg = root.join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{"embedding":{"n_neighbors":10,"n_epochs":60},"synthesis":{"primary_fraction":0.3,"other_fraction":0.01,"count_per_class":10,"seed":0},"rules":{"schedule":{"iterations":800}},"baselines":{"epochs":80}}"#,
    )
    .unwrap();
    let report_path = root.join("report.json");
    let table_text = ok(&[
        "run-experiment",
        "--manifest",
        p(&manifest),
        "--config",
        p(&cfg),
        "--repeats",
        "2",
        "--seed",
        "5",
        "--report",
        p(&report_path),
    ]);
    let report = Report::from_json(&std::fs::read_to_string(&report_path).unwrap()).unwrap();
    assert_eq!(report.splits.len(), 2);
    assert_eq!(report.seed, 5);
    assert!(table_text.contains("Rule Set (class 1)"));
    assert!(table_text.contains("95% interval"));

    serve_health(&art);
}

fn serve_health(art: &Path) {
    let mut child = Command::new(env!("CARGO_BIN_EXE_cytopie"))
        .args(["serve", "--artifacts", p(art), "--bind", "127.0.0.1:0"])
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stderr.take().unwrap())
        .read_line(&mut line)
        .unwrap();
    let addr = line
        .trim()
        .strip_prefix("listening on http://")
        .expect(&line)
        .to_string();
    let mut stream = TcpStream::connect(&addr).unwrap();
    write!(
        stream,
        "GET /health HTTP/1.1\r\nHost: {addr}\r\nConnection: close\r\n\r\n"
    )
    .unwrap();
    let mut response = String::new();
    stream.read_to_string(&mut response).unwrap();
    child.kill().unwrap();
    child.wait().unwrap();
    assert!(response.starts_with("HTTP/1.1 200"), "{response}");
    assert!(response.contains(r#""status":"ok""#));
}

#[test]
fn bad_inputs_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let out = cytopie(&[
        "fit-embed",
        "--manifest",
        "/nonexistent/manifest.json",
        "--out",
        "x.json",
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));

    let out = cytopie(&["fit-embed", "--manifest", "m.json", "--class", "3", "--out", "x.json"]);
    assert!(!out.status.success());

    let out = cytopie(&["serve", "--artifacts", p(dir.path())]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("failed to load artifacts"));

    let out = cytopie(&[
        "train-baseline",
        "--kind",
        "tree",
        "--features",
        "f",
        "--labels",
        "l",
        "--out",
        "o",
    ]);
    assert!(!out.status.success());
}
