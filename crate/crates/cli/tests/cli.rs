use riskgrad_cli::manifest::{sha256_file, Manifest};
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const TINY: &str = r#"{
    "env": {"name": "point_hazard", "horizon": 20},
    "batch_episodes": 4,
    "policy_hidden": [4],
    "critic_hidden": [4],
    "policy_steps": 3,
    "critic_steps": 3,
    "entropy_samples": 50,
    "epochs": 3,
    "seeds": [0, 1],
    "checkpoint_every": 2
}"#;

fn riskgrad(args: &[&str], out_env: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_riskgrad"));
    cmd.args(args).env_remove("RISKGRAD_OUT");
    if let Some(p) = out_env {
        cmd.env("RISKGRAD_OUT", p);
    }
    cmd.output().expect("binary runs")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn with_key(key: &str, value: &str) -> String {
    TINY.replacen('{', &format!("{{\"{key}\": {value},"), 1)
}

fn train_into(tmp: &Path, cfg_text: &str, out: &str) -> PathBuf {
    let cfg = write_config(tmp, &format!("{out}.json"), cfg_text);
    let root = tmp.join(out);
    ok(&riskgrad(&["train", "--config", cfg.to_str().unwrap(), "--out", root.to_str().unwrap()], None));
    root
}

#[test]
fn train_writes_logs_checkpoints_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let root = train_into(tmp.path(), TINY, "run");
    for f in [
        "train_seed0.csv",
        "train_seed1.csv",
        "checkpoints/seed0_epoch2.json",
        "checkpoints/seed1_final.json",
        "config.json",
        "manifest.json",
    ] {
        assert!(root.join(f).is_file(), "missing {f}");
    }
    let csv = std::fs::read_to_string(root.join("train_seed0.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    assert!(csv.starts_with("epoch,env_steps,ep_reward_mean"));
    let m = Manifest::load(&root.join("manifest.json")).unwrap();
    assert_eq!(m.seeds, vec![0, 1]);
    assert_eq!(m.epochs, 3);
    assert_eq!(m.config_hash.len(), 64);
    assert!(!m.code_version.is_empty());
    for f in &m.files {
        assert_eq!(sha256_file(&root.join(&f.path)).unwrap(), f.sha256, "{}", f.path);
    }
}

#[test]
fn out_of_range_lambda_gae_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "bad.json", &with_key("lambda_gae", "1.5"));
    let out = riskgrad(&["train", "--config", cfg.to_str().unwrap(), "--out", tmp.path().to_str().unwrap()], None);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("lambda_gae") && err.contains("[0, 1]"), "{err}");
}

#[test]
fn unknown_key_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "bad.json", &with_key("batch_episode", "3"));
    let out = riskgrad(&["train", "--config", cfg.to_str().unwrap()], Some(tmp.path()));
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("batch_episode"));
}

#[test]
fn rerun_gives_byte_identical_csv_for_any_worker_count() {
    let tmp = tempfile::tempdir().unwrap();
    let a = train_into(tmp.path(), TINY, "a");
    let b = train_into(tmp.path(), TINY, "b");
    let c = train_into(tmp.path(), &with_key("workers", "3"), "c");
    for seed in [0, 1] {
        let name = format!("train_seed{seed}.csv");
        let bytes = std::fs::read(a.join(&name)).unwrap();
        assert_eq!(bytes, std::fs::read(b.join(&name)).unwrap());
        assert_eq!(bytes, std::fs::read(c.join(&name)).unwrap());
    }
    let ma = Manifest::load(&a.join("manifest.json")).unwrap();
    let mb = Manifest::load(&b.join("manifest.json")).unwrap();
    assert_eq!(ma, mb);
}

#[test]
fn parallel_seeds_match_sequential() {
    let tmp = tempfile::tempdir().unwrap();
    let a = train_into(tmp.path(), TINY, "seq");
    let cfg = write_config(tmp.path(), "par.json", TINY);
    let b = tmp.path().join("par");
    ok(&riskgrad(
        &["train", "--config", cfg.to_str().unwrap(), "--out", b.to_str().unwrap(), "--parallel-seeds", "2"],
        None,
    ));
    for seed in [0, 1] {
        let name = format!("train_seed{seed}.csv");
        assert_eq!(std::fs::read(a.join(&name)).unwrap(), std::fs::read(b.join(&name)).unwrap());
    }
}

#[test]
fn output_root_from_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", &with_key("output_dir", "\"ignored\""));
    let env_root = tmp.path().join("from_env");
    ok(&riskgrad(&["train", "--config", cfg.to_str().unwrap()], Some(&env_root)));
    assert!(env_root.join("manifest.json").is_file());
    assert!(!tmp.path().join("ignored").exists());
}

#[test]
fn eval_rejects_zero_episodes_and_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let root = train_into(tmp.path(), TINY, "run");
    let c0 = root.join("checkpoints/seed0_final.json");
    let c1 = root.join("checkpoints/seed1_final.json");
    let zero = riskgrad(&["eval", "--checkpoint", c0.to_str().unwrap(), "--episodes", "0"], Some(tmp.path()));
    assert_eq!(zero.status.code(), Some(2));
    let mut outputs = Vec::new();
    for k in 0..2 {
        let csv = tmp.path().join(format!("eval{k}.csv"));
        ok(&riskgrad(
            &[
                "eval",
                "--checkpoint",
                c0.to_str().unwrap(),
                "--checkpoint",
                c1.to_str().unwrap(),
                "--episodes",
                "6",
                "--sampling",
                "off",
                "--out",
                csv.to_str().unwrap(),
            ],
            None,
        ));
        outputs.push(std::fs::read_to_string(csv).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    let mut lines = outputs[0].lines();
    assert_eq!(
        lines.next().unwrap(),
        "checkpoint,episodes,mean_return,std_return,mean_cost,std_cost,obj_identity,obj_wang_0.5,obj_wang_-0.5,obj_cutoff_0.25"
    );
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[0].starts_with("seed0_final,6,"));
}

#[test]
fn eval_reports_env_mismatch() {
    use riskgrad::envs::EnvConfig;
    use riskgrad_cli::checkpoint::Checkpoint;
    use riskgrad_cli::eval::{evaluate, EvalOptions};
    let tmp = tempfile::tempdir().unwrap();
    let root = train_into(tmp.path(), TINY, "run");
    let ckpt = Checkpoint::load(&root.join("checkpoints/seed0_final.json")).unwrap();
    let opts = EvalOptions {
        episodes: 2,
        sampling: false,
        seed: 0,
        weights: None,
        env: Some(EnvConfig::Tabular),
    };
    let err = evaluate(&ckpt, "x", &opts).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    assert!(err.to_string().contains("mismatch"), "{err}");
}

fn svg_checks(path: &Path) -> (usize, usize) {
    let text = std::fs::read_to_string(path).unwrap();
    let doc = roxmltree::Document::parse(&text).expect("well-formed XML");
    let root = doc.root_element();
    assert_eq!(root.tag_name().name(), "svg");
    assert_eq!(root.tag_name().namespace(), Some("http://www.w3.org/2000/svg"));
    let vb: Vec<f64> = root
        .attribute("viewBox")
        .expect("viewBox")
        .split_whitespace()
        .map(|v| v.parse().unwrap())
        .collect();
    assert_eq!(vb.len(), 4);
    assert!(vb[2] > 0.0 && vb[3] > 0.0);
    let count = |tag: &str| doc.descendants().filter(|n| n.has_tag_name(tag)).count();
    assert!(text.contains(">epoch<"));
    (count("polyline"), count("polygon"))
}

#[test]
fn plot_emits_valid_svg_and_names_missing_columns() {
    let tmp = tempfile::tempdir().unwrap();
    let root = train_into(tmp.path(), TINY, "run");
    let s0 = root.join("train_seed0.csv");
    let s1 = root.join("train_seed1.csv");
    let one = tmp.path().join("one.svg");
    ok(&riskgrad(
        &["plot", "--csv", s0.to_str().unwrap(), "--column", "ep_reward_mean", "--out", one.to_str().unwrap()],
        None,
    ));
    assert_eq!(svg_checks(&one).0, 1);
    let two = tmp.path().join("two.svg");
    ok(&riskgrad(
        &[
            "plot",
            "--csv",
            s0.to_str().unwrap(),
            "--csv",
            s1.to_str().unwrap(),
            "--column",
            "ep_reward_mean",
            "--column",
            "ep_cost_mean",
            "--out",
            two.to_str().unwrap(),
        ],
        None,
    ));
    assert_eq!(svg_checks(&two), (2, 2));
    let bad = riskgrad(
        &["plot", "--csv", s0.to_str().unwrap(), "--column", "no_such_col", "--out", one.to_str().unwrap()],
        None,
    );
    assert!(!bad.status.success());
    assert!(String::from_utf8_lossy(&bad.stderr).contains("no_such_col"));
}

#[test]
fn study_gradcheck_passes_and_failed_verdicts_exit_4() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "s.json", r#"{"gradcheck_seeds": 3}"#);
    let out_dir = tmp.path().join("study");
    let out = riskgrad(
        &["study", "gradcheck", "--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()],
        None,
    );
    ok(&out);
    assert_eq!(String::from_utf8_lossy(&out.stdout).matches("[PASS]").count(), 3);
    assert!(out_dir.join("study_gradcheck.csv").is_file());

    let cfg = write_config(tmp.path(), "x.json", r#"{"pairs": 2000}"#);
    ok(&riskgrad(&["study", "crossterm", "--config", cfg.to_str().unwrap()], Some(&out_dir)));
    let z = std::fs::read_to_string(out_dir.join("study_crossterm.csv")).unwrap();
    assert_eq!(z.lines().next().unwrap(), "component,z");
    assert_eq!(z.lines().count(), 7);

    let cfg = write_config(tmp.path(), "f.json", r#"{"ns": [8, 16], "batches": 50, "n": 8, "cosine_min": 1.5}"#);
    let out = riskgrad(&["study", "bias", "--config", cfg.to_str().unwrap()], Some(&out_dir));
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stdout).contains("[FAIL]"));
    let bad = write_config(tmp.path(), "b.json", r#"{"ns": []}"#);
    assert_eq!(riskgrad(&["study", "bias", "--config", bad.to_str().unwrap()], Some(&out_dir)).status.code(), Some(2));
}

#[test]
fn sweep_eta_bookkeeping() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "s.json", &with_key("cost_limit", "2.0"));
    let single = tmp.path().join("single");
    ok(&riskgrad(
        &["sweep-eta", "--config", cfg.to_str().unwrap(), "--eta", "0", "--out", single.to_str().unwrap()],
        None,
    ));
    let text = std::fs::read_to_string(single.join("sweep.csv")).unwrap();
    assert_eq!(text.lines().count(), 2);
    assert!(single.join("eta_0/train_seed1.csv").is_file());

    let three = tmp.path().join("three");
    let out = riskgrad(
        &["sweep-eta", "--config", cfg.to_str().unwrap(), "--eta", "-0.5,0,0.5", "--out", three.to_str().unwrap()],
        None,
    );
    ok(&out);
    let text = std::fs::read_to_string(three.join("sweep.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "eta,runs,entropy,trunc_entropy,ep_reward_mean,ep_cost_mean,objective_est,epochs_to_cost_target");
    assert_eq!(lines.len(), 4);
    assert!(lines[1].starts_with("-0.5,2,"));
    for eta in ["-0.5", "0", "0.5"] {
        assert!(three.join(format!("eta_{eta}/manifest.json")).is_file());
    }
    let base = std::fs::read(single.join("eta_0/train_seed0.csv")).unwrap();
    assert_eq!(base, std::fs::read(three.join("eta_0/train_seed0.csv")).unwrap());
}
