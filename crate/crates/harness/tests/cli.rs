use std::fs;
use std::process::{Command, Output};

fn commex(args: &[&str], root: &std::path::Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_commex"))
        .args(args)
        .env("COMMEX_OUTPUT_ROOT", root)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn text(b: &[u8]) -> String {
    String::from_utf8_lossy(b).into_owned()
}

#[test]
fn run_replay_export_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("tiny.toml");
    fs::write(&cfg, "mode = \"evoc\"\n[world]\nwidth = 4\nheight = 4\niterations = 10\n").unwrap();
    let c = cfg.to_str().unwrap();

    let out = commex(&["run", c, "--set", "world.iterations=12", "--set", "seeds=[3]"], tmp.path());
    assert!(out.status.success(), "{}", text(&out.stderr));
    let dir = tmp.path().join("tiny");
    assert_eq!(text(&out.stdout).trim(), dir.display().to_string());
    assert_eq!(fs::read_to_string(dir.join("seed-3/metrics.jsonl")).unwrap().lines().count(), 12);

    let out = commex(&["replay", dir.to_str().unwrap()], tmp.path());
    assert!(out.status.success());
    assert!(text(&out.stdout).contains("\"identical\": true"));

    let out = commex(&["export", dir.to_str().unwrap()], tmp.path());
    assert!(text(&out.stdout).lines().any(|l| l == "mean_fitness"));
    let out = commex(&["export", dir.to_str().unwrap(), "mean_fitness"], tmp.path());
    assert!(out.status.success());
    assert!(dir.join("plots/seed-3/mean_fitness.csv").is_file());
    let out = commex(&["export", dir.to_str().unwrap(), "nope"], tmp.path());
    assert!(!out.status.success());
    assert!(text(&out.stderr).contains("available: ") && text(&out.stderr).contains("diversity"));

    let m = dir.join("seed-3/metrics.jsonl");
    let tampered = fs::read_to_string(&m).unwrap().replacen("\"iteration\":4,", "\"iteration\":40,", 1);
    fs::write(&m, tampered).unwrap();
    let out = commex(&["replay", dir.to_str().unwrap()], tmp.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(text(&out.stdout).contains("\"index\": 3"));

    let out = commex(&["run", c], tmp.path());
    assert!(!out.status.success());
    assert!(text(&out.stderr).contains("--force"));
}

#[test]
fn invalid_keys_are_named() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.toml");
    fs::write(&cfg, "mode = \"evoc\"\n").unwrap();
    let c = cfg.to_str().unwrap();
    let out = commex(&["run", c, "--set", "world.densty=0.5"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    let err = text(&out.stderr);
    assert!(err.contains("world.densty") && err.contains("density"), "{err}");

    let out = commex(&["run", c, "--set", "mode=evoc3"], tmp.path());
    let err = text(&out.stderr);
    assert!(err.contains("mode") && err.contains("cal-bench"), "{err}");

    let out = commex(&["run", c, "--set", "cf.mode=sideways"], tmp.path());
    assert!(text(&out.stderr).contains("cf.mode"));
}

#[test]
fn oracle_prints_reference_values() {
    let tmp = tempfile::tempdir().unwrap();
    let out = commex(&["oracle"], tmp.path());
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["gesture"]["space_size"], 729);
    assert_eq!(v["gesture"]["optimum"], 11.0);
    assert_eq!(v["gesture"]["maximizers"].as_array().unwrap().len(), 4);
    assert_eq!(v["recycling"]["role_restricted_optimum"], 2);
    assert_eq!(v["recycling"]["attribute_optimum"], 0);
    assert!(v["tire"]["p_default_waste"].as_f64().unwrap() > v["tire"]["p_default_useful"].as_f64().unwrap());
}
