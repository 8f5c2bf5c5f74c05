use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

fn evpinn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_evpinn"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn short_cycle(duration: f64) -> Value {
    json!({
        "duration_s": duration,
        "phases": [
            {"kind": "idle", "duration_s": 10},
            {"kind": "accelerate", "to_mps": 15, "rate_mps2": 1.5},
            {"kind": "cruise", "duration_s": 30},
            {"kind": "brake", "to_mps": 0, "rate_mps2": 1.5},
            {"kind": "idle", "duration_s": 10}
        ],
        "noise_sigma": 0.0,
        "seed": 1
    })
}

fn small_config(data: Value) -> Value {
    json!({
        "vehicle": "model3lr",
        "data": data,
        "pinn": {"epochs": 12, "layer_sizes": [2, 12, 12, 1], "seed": 3},
        "rknn": {"epochs": 12, "hidden": [6, 6], "seed": 3}
    })
}

fn write_config(dir: &Path, name: &str, v: &Value) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, serde_json::to_string_pretty(v).unwrap()).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn synth_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", &small_config(json!({"synthetic": {"cycle": short_cycle(120.0)}})));
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = evpinn(&["synth", "--config", s(&cfg), "--out", s(out)]);
        assert!(o.status.success(), "{}", stderr(&o));
        assert!(String::from_utf8_lossy(&o.stdout).contains("120 samples"));
    }
    let (x, y) = (fs::read(a.join("synthetic.csv")).unwrap(), fs::read(b.join("synthetic.csv")).unwrap());
    assert_eq!(x, y);
    assert!(String::from_utf8_lossy(&x).starts_with("t_s,v_mps,"));
    assert_eq!(fs::read_to_string(a.join("config.json")).unwrap(), fs::read_to_string(&cfg).unwrap());
}

#[test]
fn default_synthetic_cycle_has_900_samples() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", &json!({"data": {"synthetic": {}}}));
    let o = evpinn(&["synth", "--config", s(&cfg), "--out", s(&dir.path().join("o"))]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(dir.path().join("o/synthetic.csv")).unwrap();
    assert_eq!(text.lines().count(), 901);
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let zero = write_config(dir.path(), "zero.json", &small_config(json!({"synthetic": {"cycle": short_cycle(0.0)}})));
    let o = evpinn(&["synth", "--config", s(&zero), "--out", s(&dir.path().join("o"))]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));

    let mut unknown = small_config(json!({"synthetic": {}}));
    unknown["pinn"]["learning_rate"] = json!(0.1);
    let unknown = write_config(dir.path(), "unknown.json", &unknown);
    let o = evpinn(&["train", "--config", s(&unknown), "--out", s(&dir.path().join("o"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("learning_rate"));

    let missing = write_config(dir.path(), "missing.json", &small_config(json!({"path": "nowhere.csv"})));
    let o = evpinn(&["train", "--config", s(&missing), "--out", s(&dir.path().join("o"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("data not found"), "{}", stderr(&o));

    let no_out = write_config(dir.path(), "noout.json", &small_config(json!({"synthetic": {}})));
    let o = evpinn(&["synth", "--config", s(&no_out)]);
    assert_eq!(o.status.code(), Some(2));

    let o = evpinn(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn train_eval_predict_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let synth_cfg = write_config(dir.path(), "synth.json", &small_config(json!({"synthetic": {"cycle": short_cycle(120.0)}})));
    let data_dir = dir.path().join("data");
    assert!(evpinn(&["synth", "--config", s(&synth_cfg), "--out", s(&data_dir)]).status.success());

    // relative data path resolves against the config's directory
    let cfg = write_config(dir.path(), "train.json", &small_config(json!({"path": "data/synthetic.csv"})));
    let out = dir.path().join("run");
    let o = evpinn(&["train", "--config", s(&cfg), "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in [
        "pinn.model",
        "pinn.json",
        "rknn.model",
        "rknn.json",
        "pinn_loss.csv",
        "rknn_loss.csv",
        "params.csv",
        "config.json",
    ] {
        assert!(out.join(f).is_file(), "{f}");
    }
    let losses = fs::read_to_string(out.join("pinn_loss.csv")).unwrap();
    assert!(losses.starts_with("epoch,split,total,data,physics\n"));
    for m in ["\n1,train,", "\n1,val,", "\n10,train,", "\n10,val,"] {
        assert!(losses.contains(m), "{m}");
    }
    assert_eq!(losses.lines().count(), 1 + 2 * 12);
    let params = fs::read_to_string(out.join("params.csv")).unwrap();
    assert_eq!(params.lines().count(), 6);

    let o = evpinn(&["eval", "--config", s(&cfg), "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let metrics: Value = serde_json::from_str(&fs::read_to_string(out.join("metrics.json")).unwrap()).unwrap();
    assert!(metrics["power_mse_normalized"].as_f64().unwrap() >= 0.0);
    assert!(metrics["energy_terminal_rel_error"].as_f64().unwrap().is_finite());
    assert!(metrics["validation"]["energy_terminal_rel_error"].as_f64().is_some());
    let power = fs::read_to_string(out.join("power_pred.csv")).unwrap();
    assert_eq!(power.lines().next().unwrap(), "t_s,p_true_w,p_pred_w");
    assert_eq!(power.lines().count(), 121);
    let energy = fs::read_to_string(out.join("energy_pred.csv")).unwrap();
    assert_eq!(energy.lines().next().unwrap(), "t_s,e_rk4_true_j,e_pred_j");
    assert_eq!(energy.lines().count(), 121);

    // a log without power can be predicted on but not evaluated
    let speed_only = dir.path().join("speed.csv");
    let mut text = String::from("t_s,v_mps\n");
    for i in 0..120 {
        text.push_str(&format!("{i},{}\n", 5.0 + (i as f64 / 20.0).sin()));
    }
    fs::write(&speed_only, text).unwrap();
    let o = evpinn(&["eval", "--config", s(&cfg), "--out", s(&dir.path().join("e")), "--models", s(&out), "--log", s(&speed_only)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("cannot evaluate without P"), "{}", stderr(&o));

    let pred_out = dir.path().join("p");
    let o = evpinn(&["predict", "--config", s(&cfg), "--out", s(&pred_out), "--models", s(&out), "--log", s(&speed_only)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let energy = fs::read_to_string(pred_out.join("energy_pred.csv")).unwrap();
    assert!(energy.starts_with("t_s,e_j\n"));
    assert_eq!(energy.lines().count(), 121);

    // models missing
    let o = evpinn(&["eval", "--config", s(&cfg), "--out", s(&dir.path().join("none"))]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn training_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", &small_config(json!({"synthetic": {"cycle": short_cycle(120.0)}})));
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        assert!(evpinn(&["train", "--config", s(&cfg), "--out", s(out)]).status.success());
    }
    for f in ["pinn_loss.csv", "rknn_loss.csv", "params.csv", "pinn.model", "rknn.model"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn eval_rejects_out_of_range_log() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", &small_config(json!({"synthetic": {"cycle": short_cycle(120.0)}})));
    let out = dir.path().join("run");
    assert!(evpinn(&["train", "--config", s(&cfg), "--out", s(&out)]).status.success());
    let far = dir.path().join("far.csv");
    let mut text = String::from("t_s,v_mps,p_w\n");
    for i in 0..60 {
        text.push_str(&format!("{},{},{}\n", 5000 + i, 10.0, 8000.0));
    }
    fs::write(&far, text).unwrap();
    let o = evpinn(&["eval", "--config", s(&cfg), "--out", s(&dir.path().join("e")), "--models", s(&out), "--log", s(&far)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("scale mismatch"), "{}", stderr(&o));
}
