use std::path::Path;
use std::process::{Command, Output};

fn derevkit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_derevkit"))
        .args(args)
        .env_remove("DEREVKIT_SEED")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn gradcheck_passes() {
    let out = derevkit(&["gradcheck"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("embed_proj.weight") && text.contains("mask_proj.bias"));
}

#[test]
fn impossible_gradcheck_tolerance_is_a_numeric_failure() {
    let out = derevkit(&["gradcheck", "--model", "baseline-blstm", "--tolerance", "0"]);
    assert_eq!(code(&out), 4);
}

#[test]
fn bad_arguments_and_configs_exit_2() {
    assert_eq!(code(&derevkit(&["simulate"])), 2);
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "[simulate]\nseed = 1\nbogus = 2\n").unwrap();
    let out = derevkit(&["simulate", "--config", path(&cfg), "--out", path(dir.path())]);
    assert_eq!(code(&out), 2);
    let out = derevkit(&["simulate", "--out", path(dir.path())]);
    assert_eq!(code(&out), 2, "no [simulate] section and no --toy");
}

#[test]
fn seed_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, seed_env: Option<&str>, flag: Option<&str>| -> Vec<u8> {
        let out_dir = dir.path().join(name);
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_derevkit"));
        cmd.args(["simulate", "--toy", "--manifest-only", "--out", path(&out_dir)]);
        cmd.env_remove("DEREVKIT_SEED");
        if let Some(s) = seed_env {
            cmd.env("DEREVKIT_SEED", s);
        }
        if let Some(s) = flag {
            cmd.args(["--seed", s]);
        }
        assert!(cmd.output().unwrap().status.success());
        std::fs::read(out_dir.join("manifest.jsonl")).unwrap()
    };
    let default = run("a", None, None);
    let env5 = run("b", Some("5"), None);
    let flag5 = run("c", Some("9"), Some("5"));
    assert_ne!(default, env5);
    assert_eq!(env5, flag5);
    assert_eq!(default, run("d", None, None));
    assert!(dir.path().join("a/resolved_config.toml").exists());
}

#[test]
fn end_to_end_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let enhanced = dir.path().join("enhanced");
    let models = dir.path().join("models");
    let report = dir.path().join("report");

    let out = derevkit(&["simulate", "--toy", "--out", path(&data)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    for sub in ["train/mixture", "test/target", "dev/reverberant", "test/noise", "rirs"] {
        assert!(data.join(sub).is_dir(), "{sub}");
    }

    let manifest = data.join("manifest.jsonl");
    let out = derevkit(&[
        "train", "--manifest", path(&manifest), "--out", path(&models), "--stage", "both", "--epochs", "1",
        "--hidden", "8", "--embed-dim", "4", "--batch", "10",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["stage1_dc.ckpt", "stage1_dc_log.csv", "stage2_joint.ckpt", "stage2_joint_log.csv"] {
        assert!(models.join(f).is_file(), "{f}");
    }
    let log = std::fs::read_to_string(models.join("stage2_joint_log.csv")).unwrap();
    assert!(log.starts_with("epoch,split,loss,lr\n"));

    let mixtures = data.join("test/mixture");
    let out = derevkit(&[
        "enhance", "--model", path(&models.join("stage2_joint.ckpt")), "--in", path(&mixtures), "--out",
        path(&enhanced.join("proposed")),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let out = derevkit(&["wpe", "--in", path(&mixtures), "--out", path(&enhanced.join("wpe")), "--taps", "8"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let count = |d: &Path| std::fs::read_dir(d).unwrap().count();
    assert_eq!(count(&enhanced.join("wpe")), count(&mixtures));

    let out = derevkit(&[
        "evaluate", "--manifest", path(&manifest), "--enhanced-dir", path(&enhanced), "--methods",
        "unprocessed,wpe,proposed", "--out", path(&report),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(report.join("report.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("id,method,condition,snr_db,rt60,cd_db,llr,si_sdr_db"));
    assert_eq!(lines.count(), 3 * count(&mixtures));
    let table = std::fs::read_to_string(report.join("report.txt")).unwrap();
    assert!(table.contains("wpe") && table.contains("proposed"));

    // Scoring a method with no outputs fails most rows.
    let out = derevkit(&[
        "evaluate", "--manifest", path(&manifest), "--enhanced-dir", path(&enhanced), "--methods", "missing",
        "--out", path(&report),
    ]);
    assert_eq!(code(&out), 3);
    assert!(std::fs::read_to_string(report.join("errors.csv")).unwrap().lines().count() > 1);

    // A joint stage cannot start from nothing, and a damaged checkpoint is rejected.
    let out = derevkit(&["train", "--manifest", path(&manifest), "--out", path(&models), "--stage", "joint"]);
    assert_eq!(code(&out), 2);
    let broken = dir.path().join("broken.ckpt");
    let mut bytes = std::fs::read(models.join("stage1_dc.ckpt")).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0xff;
    std::fs::write(&broken, bytes).unwrap();
    let out = derevkit(&["enhance", "--model", path(&broken), "--in", path(&mixtures), "--out", path(&enhanced.join("x"))]);
    assert_eq!(code(&out), 3);
}
