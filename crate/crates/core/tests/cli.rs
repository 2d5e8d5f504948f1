use std::fs;
use std::path::Path;
use std::process::Command;

use nonface::cli::{run_with, EXIT_OK, EXIT_USAGE};
use nonface::dataset::write_orl;
use nonface::synthetic::synthetic_faces;
use nonface::MlpClassifier;

fn fixture(dir: &Path) {
    // 3 subjects x 4 samples of 40x36 images
    write_orl(&synthetic_faces(3, 4, 40, 36, 11), dir).unwrap();
}

fn run(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("nonface").chain(args.iter().copied());
    let code = run_with(argv, &mut out, &mut err);
    (
        code,
        String::from_utf8(out).unwrap(),
        String::from_utf8(err).unwrap(),
    )
}

#[test]
fn extract_writes_one_row_per_image() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path().join("orl");
    fixture(&root);
    let out = tmp.path().join("f.csv");
    let (code, stdout, stderr) = run(&[
        "extract",
        root.to_str().unwrap(),
        "--block-size",
        "16",
        "--method",
        "m5",
        "--out",
        out.to_str().unwrap(),
        "--train-per-subject",
        "2",
    ]);
    assert_eq!(code, EXIT_OK, "{stderr}");
    assert!(stdout.contains("12 feature vectors of dimension 9"), "{stdout}");
    let csv = fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 13);
    assert!(lines[0].starts_with("subject_id,sample_index,f_1,"));
    assert!(lines[0].ends_with(",f_9"));
    assert!(lines[1].starts_with("1,1,"));
    assert!(lines[12].starts_with("3,4,"));
    for row in &lines[1..] {
        let fields: Vec<&str> = row.split(',').collect();
        assert_eq!(fields.len(), 11);
        for f in &fields[2..] {
            let v: f64 = f.parse().unwrap();
            assert!(v.is_finite() && v >= 0.0);
        }
    }
}

#[test]
fn bad_inputs_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("no-such-root");
    let out = tmp.path().join("f.csv");
    let (code, _, stderr) = run(&["extract", missing.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code, EXIT_USAGE);
    assert!(stderr.contains("no-such-root"), "{stderr}");

    let root = tmp.path().join("orl");
    fixture(&root);
    let (code, _, stderr) = run(&[
        "extract",
        root.to_str().unwrap(),
        "--block-size",
        "12",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, EXIT_USAGE);
    assert!(stderr.contains("block size must be a power of two ≥ 8"), "{stderr}");

    let model = tmp.path().join("m.bin");
    let (code, _, _) = run(&[
        "train",
        root.to_str().unwrap(),
        "--hidden",
        "0",
        "--model-out",
        model.to_str().unwrap(),
    ]);
    assert_eq!(code, EXIT_USAGE);

    let (code, _, stderr) = run(&["extract", root.to_str().unwrap(), "--bogus"]);
    assert_eq!(code, EXIT_USAGE);
    assert!(stderr.contains("Usage"), "{stderr}");

    let (code, _, _) = run(&["extract", root.to_str().unwrap(), "--method", "m9", "--out", "x"]);
    assert_eq!(code, EXIT_USAGE);
}

#[test]
fn train_is_deterministic_and_eval_agrees() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path().join("orl");
    fixture(&root);
    let (m1, m2) = (tmp.path().join("a.bin"), tmp.path().join("b.bin"));
    let train = |path: &Path| {
        run(&[
            "train",
            root.to_str().unwrap(),
            "--train-per-subject",
            "2",
            "--method",
            "m4",
            "--block-size",
            "8",
            "--hidden",
            "6",
            "--seed",
            "1",
            "--epochs",
            "60",
            "--model-out",
            path.to_str().unwrap(),
        ])
    };
    let (code, stdout, stderr) = train(&m1);
    assert_eq!(code, EXIT_OK, "{stderr}");
    let (code, stdout2, _) = train(&m2);
    assert_eq!(code, EXIT_OK);
    assert_eq!(fs::read(&m1).unwrap(), fs::read(&m2).unwrap());

    let error_line = stdout.lines().find(|l| l.starts_with("test error: ")).unwrap();
    assert!(error_line.ends_with('%'));
    assert!(stdout.contains("train mse: "));
    assert_eq!(
        stdout.lines().filter(|l| l.starts_with("test error")).collect::<Vec<_>>(),
        stdout2.lines().filter(|l| l.starts_with("test error")).collect::<Vec<_>>()
    );

    let model = MlpClassifier::load(&m1).unwrap();
    assert_eq!((model.input_dim(), model.hidden_dim(), model.output_dim(), model.seed()), (25, 6, 3, 1));

    let (code, eval_out, stderr) = run(&[
        "eval",
        root.to_str().unwrap(),
        "--train-per-subject",
        "2",
        "--method",
        "m4",
        "--block-size",
        "8",
        "--model",
        m1.to_str().unwrap(),
    ]);
    assert_eq!(code, EXIT_OK, "{stderr}");
    assert_eq!(eval_out.trim(), error_line);

    // wrong feature geometry for this model
    let (code, _, stderr) = run(&[
        "eval",
        root.to_str().unwrap(),
        "--train-per-subject",
        "2",
        "--block-size",
        "16",
        "--model",
        m1.to_str().unwrap(),
    ]);
    assert_eq!(code, EXIT_USAGE);
    assert!(stderr.contains("model is 25-6-3"), "{stderr}");
}

#[test]
fn reproduce_is_byte_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path().join("orl");
    fixture(&root);
    let reproduce = |out: &Path, format: &str, jobs: &str| {
        run(&[
            "reproduce",
            root.to_str().unwrap(),
            "--train-per-subject",
            "2",
            "--base-seed",
            "42",
            "--format",
            format,
            "--out",
            out.to_str().unwrap(),
            "--runs",
            "2",
            "--epochs",
            "20",
            "--hidden",
            "4,8",
            "--block-sizes",
            "8,16",
            "--jobs",
            jobs,
        ])
    };
    let a = tmp.path().join("a.md");
    let b = tmp.path().join("b.md");
    let (code, stdout, stderr) = reproduce(&a, "markdown", "1");
    assert_eq!(code, EXIT_OK, "{stderr}");
    assert!(stdout.contains("best: "), "{stdout}");
    assert!(stdout.contains("20 of 20 configurations"), "{stdout}");
    let (code, _, _) = reproduce(&b, "markdown", "4");
    assert_eq!(code, EXIT_OK);
    let md = fs::read_to_string(&a).unwrap();
    assert_eq!(md, fs::read_to_string(&b).unwrap());
    assert_eq!(md.matches("### Method").count(), 5);
    assert_eq!(md.lines().filter(|l| l.starts_with("| M") && !l.starts_with("| Method")).count(), 20);
    assert!(md.contains('†'));

    let manifest = tmp.path().join("a.manifest.json");
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&manifest).unwrap()).unwrap();
    assert_eq!(v["entries"].as_array().unwrap().len(), 20);
    assert_eq!(v["entries"][0]["seeds"], serde_json::json!([42, 43]));

    let c = tmp.path().join("c.csv");
    let (code, _, _) = reproduce(&c, "csv", "2");
    assert_eq!(code, EXIT_OK);
    let csv = fs::read_to_string(&c).unwrap();
    assert_eq!(csv.lines().count(), 21);
    assert!(csv.starts_with(
        "method,block_size,num_coefficients,num_hidden,run_errors,avg_error_pct,min_error_pct\n"
    ));
}

#[test]
fn binary_uses_env_root_and_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path().join("orl");
    fixture(&root);
    let out = tmp.path().join("f.csv");
    let status = Command::new(env!("CARGO_BIN_EXE_nonface"))
        .args(["extract", "--block-size", "32", "--train-per-subject", "2", "--out", out.to_str().unwrap()])
        .env("NON_ORL_ROOT", &root)
        .output()
        .unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    assert_eq!(fs::read_to_string(&out).unwrap().lines().count(), 13);

    let status = Command::new(env!("CARGO_BIN_EXE_nonface"))
        .args(["extract", "--block-size", "12", "--out", out.to_str().unwrap()])
        .env("NON_ORL_ROOT", &root)
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(2));

    let status = Command::new(env!("CARGO_BIN_EXE_nonface"))
        .args(["frobnicate"])
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(2));
}
