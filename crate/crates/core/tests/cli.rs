use std::path::Path;
use std::process::{Command, Output};

const TINY: &[&str] = &[
    "data.classes=3",
    "data.dim=5",
    "data.per_class=60",
    "data.spread=0.15",
    "net.hidden=10,8",
    "train.epochs=30",
    "attack.kind=fgsm",
    "attack.epsilon=0.3",
];

fn asdetect(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_asdetect"));
    cmd.args(args).env_remove("ASEED");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn with_tiny<'a>(mut args: Vec<&'a str>) -> Vec<&'a str> {
    for s in TINY {
        args.push("--set");
        args.push(s);
    }
    args
}

#[test]
fn usage_errors_exit_with_2() {
    assert_eq!(asdetect(&[], &[]).status.code(), Some(2));
    assert_eq!(asdetect(&["no-such-command"], &[]).status.code(), Some(2));
    assert_eq!(asdetect(&["gen-data", "--bogus"], &[]).status.code(), Some(2));
    assert_eq!(asdetect(&["score", "--net", "x"], &[]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_eq!(asdetect(&["gen-data", "-o", out, "--set", "no.such.key=1"], &[]).status.code(), Some(2));
    assert_eq!(asdetect(&["--help"], &[]).status.code(), Some(0));
}

#[test]
fn missing_inputs_exit_with_1() {
    let dir = tempfile::tempdir().unwrap();
    let p = |n: &str| dir.path().join(n).to_str().unwrap().to_string();
    let out = asdetect(&["score", "--net", &p("a"), "--detector", &p("b"), "--input", &p("c")], &[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
    // Training before data exists.
    let out = dir.path().to_str().unwrap();
    assert_eq!(asdetect(&with_tiny(vec!["train-net", "-o", out]), &[]).status.code(), Some(1));
}

#[test]
fn stages_then_score() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    for stage in ["gen-data", "train-net", "fit-detector", "attack", "report"] {
        let o = asdetect(&with_tiny(vec![stage, "-o", out]), &[]);
        assert!(o.status.success(), "{stage}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let summary = std::fs::read_to_string(dir.path().join("summary.txt")).unwrap();
    for key in ["test_accuracy", "auc", "filtered_auc", "pearson_ll_l2", "cutoff", "switch_probs"] {
        assert!(summary.lines().any(|l| l.starts_with(&format!("{key} ="))), "missing {key}");
    }

    // One sample as text: a single verdict line with a finite LL.
    let ds = asdetect::io::load_dataset(&dir.path().join("split_holdout.asdat")).unwrap();
    let row: Vec<String> = ds.features().row(0).iter().map(f64::to_string).collect();
    let sample = dir.path().join("sample.txt");
    std::fs::write(&sample, row.join(",")).unwrap();
    let net = dir.path().join("net.asmlp");
    let det = dir.path().join("detector.asdet");
    let o = asdetect(
        &["score", "--net", net.to_str().unwrap(), "--detector", det.to_str().unwrap(), "--input", sample.to_str().unwrap()],
        &[],
    );
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "sample,verdict,ll");
    assert_eq!(lines.len(), 2);
    let fields: Vec<&str> = lines[1].split(',').collect();
    assert!(fields[1] == "normal" || fields[1] == "adversarial");
    assert!(fields[2].parse::<f64>().unwrap().is_finite());

    // Re-running a stage with an unchanged config is a no-op.
    let o = asdetect(&with_tiny(vec!["train-net", "-o", out]), &[]);
    assert!(String::from_utf8_lossy(&o.stderr).contains("skipped"));
    // A changed training key invalidates the stage.
    let mut args = with_tiny(vec!["train-net", "-o", out]);
    args.extend(["--set", "train.epochs=31"]);
    let o = asdetect(&args, &[]);
    assert!(String::from_utf8_lossy(&o.stderr).contains("train-net: done"));
}

fn dataset_bytes(dir: &Path) -> Vec<u8> {
    std::fs::read(dir.join("dataset.asdat")).unwrap()
}

#[test]
fn seed_environment_variable_overrides_config() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let c = tempfile::tempdir().unwrap();
    let run = |dir: &Path, extra: &[&'static str], env: &[(&str, &str)]| {
        let mut args = with_tiny(vec!["gen-data", "-o", dir.to_str().unwrap()]);
        args.extend_from_slice(extra);
        assert!(asdetect(&args, env).status.success());
    };
    run(a.path(), &["--set", "seed=1"], &[("ASEED", "77")]);
    run(b.path(), &["--set", "seed=77"], &[]);
    run(c.path(), &["--set", "seed=1"], &[]);
    assert_eq!(dataset_bytes(a.path()), dataset_bytes(b.path()));
    assert_ne!(dataset_bytes(a.path()), dataset_bytes(c.path()));
}
