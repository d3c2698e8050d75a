use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn qhist(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qhist")).args(args).output().unwrap()
}

fn shipped(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Writes `text` as a config and runs it into `<dir>/out`.
fn run_text(dir: &Path, text: &str) -> (Output, PathBuf) {
    let cfg = dir.join("exp.toml");
    fs::write(&cfg, text).unwrap();
    let out = dir.join("out");
    let o = qhist(&["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    (o, out)
}

const QUBIT: &str = r#"
[system]
hamiltonian = [[[0.0, 0.0], [0.0, 0.0]], [[0.0, 0.0], [0.0, 0.0]]]
initial_state = [[[1.0, 0.0], [0.0, 0.0]], [[0.0, 0.0], [0.0, 0.0]]]

[operators]
p0 = [[[1.0, 0.0], [0.0, 0.0]], [[0.0, 0.0], [0.0, 0.0]]]
p1 = [[[0.0, 0.0], [0.0, 0.0]], [[0.0, 0.0], [1.0, 0.0]]]
"#;

#[test]
fn list_prints_every_kind() {
    let o = qhist(&["list"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    let kinds: Vec<&str> = text.lines().map(|l| l.split_whitespace().next().unwrap()).collect();
    assert_eq!(kinds.len(), 7);
    assert_eq!(kinds[0], "consistency");
    assert!(kinds.contains(&"ctp-correlators"));
}

#[test]
fn help_exits_zero() {
    let o = qhist(&["--help"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stdout).contains("Usage"));
}

#[test]
fn missing_subcommand_is_a_usage_error() {
    assert_eq!(qhist(&[]).status.code(), Some(2));
}

#[test]
fn unknown_kind_suggests_the_nearest() {
    let dir = tempfile::tempdir().unwrap();
    let (o, out) = run_text(dir.path(), &format!("kind = \"consistensy\"\n{QUBIT}"));
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("consistency"), "{}", stderr(&o));
    assert!(!out.exists());
}

#[test]
fn malformed_toml_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let (o, out) = run_text(dir.path(), "kind = \"consistency\"\n[system\n");
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn unknown_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!("kind = \"consistency\"\n{QUBIT}\n[consistency]\ntimes = [0.0]\npartitions = [[\"p0\", \"p1\"]]\ncolour = 3\n");
    let (o, out) = run_text(dir.path(), &text);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("colour"), "{}", stderr(&o));
    assert!(!out.exists());
}

#[test]
fn undefined_operator_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!("kind = \"consistency\"\n{QUBIT}\n[consistency]\ntimes = [0.0]\npartitions = [[\"p0\", \"p2\"]]\n");
    let (o, out) = run_text(dir.path(), &text);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("p2"), "{}", stderr(&o));
    assert!(!out.exists());
}

#[test]
fn incomplete_partition_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!("kind = \"consistency\"\n{QUBIT}\n[consistency]\ntimes = [0.0]\npartitions = [[\"p0\"]]\n");
    let (o, _) = run_text(dir.path(), &text);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn random_section_needs_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!(
        "kind = \"consistency\"\n{QUBIT}\n[consistency]\ntimes = [0.0]\npartitions = [[\"p0\", \"p1\"]]\n[consistency.random]\ninstances = 3\n"
    );
    let (o, out) = run_text(dir.path(), &text);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("seed"), "{}", stderr(&o));
    assert!(!out.exists());
}

#[test]
fn oversized_dimension_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let text = "kind = \"wigner-identities\"\n[limits]\nmax_dim = 16\n[oscillator]\nncut = 40\nomega = 1.0\n[wigner]\nfields = [\"vacuum\"]\n";
    let (o, out) = run_text(dir.path(), text);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("max_dim"), "{}", stderr(&o));
    assert!(!out.exists());
}

#[test]
fn runtime_cap_discards_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(shipped("wigner_identities.toml")).unwrap().replace("[oscillator]", "[limits]\nmax_seconds = 1e-6\n\n[oscillator]");
    let (o, out) = run_text(dir.path(), &text);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(!out.exists() || fs::read_dir(&out).unwrap().next().is_none());
}

#[test]
fn run_writes_header_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("berry");
    let o = qhist(&["run", shipped("berry_bloch.toml").to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("phases.csv")).unwrap();
    assert!(csv.starts_with("# tool = qhist"));
    assert!(csv.contains("# kind = berry"));
    assert!(csv.contains("# config_sha256 = "));
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["metadata"]["kind"], "berry");
    assert!(summary["results"]["final_error_vs_limit"].as_f64().unwrap() < 1e-3);
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let mut seen = Vec::new();
    for k in 0..2 {
        let out = dir.path().join(format!("run{k}"));
        let o = qhist(&["run", shipped("consistency_qubit.toml").to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", stderr(&o));
        let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(&out)
            .unwrap()
            .map(|e| {
                let e = e.unwrap();
                (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
            })
            .collect();
        files.sort();
        seen.push(files);
    }
    assert!(!seen[0].is_empty());
    assert_eq!(seen[0], seen[1]);
}
