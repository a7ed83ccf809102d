use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_jumpsense"))
}

#[test]
fn print_defaults_parses_back() {
    let out = bin().arg("--print-defaults").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(jumpsense_cli::ExperimentSpec::from_toml(&text).is_ok());
}

#[test]
fn bad_spec_exits_one_and_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("bad.toml");
    std::fs::write(&spec, "[master]\nduraton = 3.0\n").unwrap();
    let out_dir = dir.path().join("out");
    let out = bin().args(["master", "--spec"]).arg(&spec).arg("--out").arg(&out_dir).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(!out_dir.exists());
    assert!(String::from_utf8_lossy(&out.stderr).contains("duraton"));
}

#[test]
fn failing_run_leaves_no_partial_output() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.toml");
    // Site 3 does not exist on the two-qubit default code.
    std::fs::write(&spec, "[klcheck]\nerrors = [\"sigma_minus:3\"]\nnogo_codes = 10\nhomodyne_codes = 10\n").unwrap();
    let out_dir = dir.path().join("out");
    let out = bin().args(["klcheck", "--spec"]).arg(&spec).arg("--out").arg(&out_dir).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(!out_dir.exists());
}

#[test]
fn master_run_writes_csv_with_header() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.toml");
    std::fs::write(&spec, "[master]\nduration = 5.0\nn_records = 6\n[output]\nsvg = false\n").unwrap();
    let out_dir = dir.path().join("out");
    let out = bin().args(["master", "--seed", "3", "--spec"]).arg(&spec).arg("--out").arg(&out_dir).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(out_dir.join("master.csv")).unwrap();
    assert!(csv.starts_with("# jumpsense master\n# seed = 3\n"));
    let data: Vec<&str> = csv.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(data[0], "time,p,coherence_re,coherence_im,code_population,wrong_population");
    assert_eq!(data.len(), 7);
    assert!(!out_dir.join("master.svg").exists());
}
