//! CLI contract tests: exit codes, diagnostics and config-file precedence.

use std::process::{Command, Output};

use clickchoice_core::io::ModelDocument;
use clickchoice_core::types::{GridSpec, ProbabilityTable, ShapeTag};

fn clickchoice(args: &[&str], dir: &std::path::Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_clickchoice"))
        .args(args)
        .current_dir(dir)
        .env("CLICKCHOICE_LOG", "error")
        .output()
        .unwrap()
}

fn write_tensor(dir: &std::path::Path, name: &str, ni: usize, nj: usize) -> String {
    let grid = GridSpec::new(ni, nj).unwrap();
    let n: Vec<Vec<Vec<u64>>> = vec![vec![vec![20; nj]; ni]; 2];
    let q: Vec<Vec<Vec<u64>>> = (0..2)
        .map(|k| {
            (0..ni)
                .map(|i| (0..nj).map(|j| (2 + i + j + 3 * k) as u64).collect())
                .collect()
        })
        .collect();
    let tensor =
        clickchoice_core::types::CountTensor::new(grid, vec!["a".into(), "b".into()], n, q)
            .unwrap();
    let doc = clickchoice_core::io::TensorDocument::new(tensor);
    let path = dir.join(name);
    clickchoice_core::io::write_json(&path, &doc).unwrap();
    path.display().to_string()
}

#[test]
fn missing_input_file_exits_1_and_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let out = clickchoice(
        &[
            "fit",
            "--model",
            "mcc",
            "--tensor",
            "no-such-tensor.json",
            "--out",
            "m.json",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("no-such-tensor.json"), "stderr: {stderr}");
}

#[test]
fn grid_mismatch_exits_1_naming_both_dims() {
    let dir = tempfile::tempdir().unwrap();
    let tensor = write_tensor(dir.path(), "tensor.json", 2, 2);
    let out = clickchoice(
        &[
            "fit",
            "--model",
            "mcc",
            "--tensor",
            &tensor,
            "--out",
            "model.json",
        ],
        dir.path(),
    );
    assert!(out.status.success());

    // samples on a 6x4 grid cannot be scored by a 2x2 model
    let sample = r#"{"base_date":"2015-10-01","customer_id":"c","product_id":"p","category_id":"a","recency":6,"frequency":4,"purchased":true}"#;
    std::fs::write(dir.path().join("samples.jsonl"), format!("{sample}\n")).unwrap();
    let out = clickchoice(
        &[
            "evaluate",
            "--model",
            "model.json",
            "--samples",
            "samples.jsonl",
            "--top-n",
            "3",
            "--out",
            "report.json",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(
        stderr.contains("(6, 4)") && stderr.contains("2x2"),
        "expected both dims in: {stderr}"
    );
}

#[test]
fn malformed_model_json_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("model.json"), "{").unwrap();
    std::fs::write(dir.path().join("samples.jsonl"), "").unwrap();
    let out = clickchoice(
        &[
            "evaluate",
            "--model",
            "model.json",
            "--samples",
            "samples.jsonl",
            "--out",
            "r.json",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn config_file_fills_in_missing_flags_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let tensor = write_tensor(dir.path(), "tensor.json", 3, 2);
    std::fs::write(
        dir.path().join("clickchoice.toml"),
        "[fit]\nmodel = \"lcmcc\"\nclasses = 3\nrestarts = 2\nmax_iter = 4\n",
    )
    .unwrap();

    // model and classes come from the file
    let out = clickchoice(
        &[
            "--config",
            "clickchoice.toml",
            "fit",
            "--tensor",
            &tensor,
            "--out",
            "from-file.json",
            "--seed",
            "1",
        ],
        dir.path(),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let doc: ModelDocument =
        clickchoice_core::io::read_model(&dir.path().join("from-file.json")).unwrap();
    assert_eq!(doc.classes.len(), 3);

    // an explicit flag overrides the file
    let out = clickchoice(
        &[
            "--config",
            "clickchoice.toml",
            "fit",
            "--tensor",
            &tensor,
            "--out",
            "from-flag.json",
            "--classes",
            "2",
            "--seed",
            "1",
        ],
        dir.path(),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let doc: ModelDocument =
        clickchoice_core::io::read_model(&dir.path().join("from-flag.json")).unwrap();
    assert_eq!(doc.classes.len(), 2);

    // without either source the latent fit has nothing to go on
    let out = clickchoice(
        &[
            "fit", "--model", "lcmcc", "--tensor", &tensor, "--out", "x.json",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--classes"));
}

#[test]
fn lclr_model_documents_carry_coefficients() {
    let dir = tempfile::tempdir().unwrap();
    let tensor = write_tensor(dir.path(), "tensor.json", 3, 2);
    let out = clickchoice(
        &[
            "fit",
            "--model",
            "lclr",
            "--tensor",
            &tensor,
            "--out",
            "lclr.json",
            "--classes",
            "2",
            "--restarts",
            "2",
            "--seed",
            "3",
        ],
        dir.path(),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let doc = clickchoice_core::io::read_model(&dir.path().join("lclr.json")).unwrap();
    assert!(doc.classes.iter().all(|c| c.beta.is_some()));
    // rendered logistic tables live inside the box
    for class in &doc.classes {
        assert!(class.table.box_violations().is_empty());
    }
}

#[test]
fn mono_fit_produces_a_monotone_single_class_model() {
    let dir = tempfile::tempdir().unwrap();
    let tensor = write_tensor(dir.path(), "tensor.json", 3, 2);
    let out = clickchoice(
        &[
            "fit",
            "--model",
            "mono",
            "--tensor",
            &tensor,
            "--out",
            "mono.json",
        ],
        dir.path(),
    );
    assert!(out.status.success());
    let doc = clickchoice_core::io::read_model(&dir.path().join("mono.json")).unwrap();
    assert_eq!(doc.classes.len(), 1);
    assert_eq!(doc.classes[0].pi, 1.0);
    assert_eq!(doc.classes[0].table.shape, ShapeTag::Monotone);
    let _table: &ProbabilityTable = &doc.classes[0].table;
}
