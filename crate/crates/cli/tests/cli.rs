use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn mlpipe(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mlpipe")).args(args).env("RUST_LOG", "warn").output().expect("spawn mlpipe")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn simulate_explore_run_predict_report() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("sim.csv");
    let o = mlpipe(&["simulate", "--out", p(&data), "--seed", "3", "--n", "200", "--features", "6"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let header = fs::read_to_string(&data).unwrap().lines().next().unwrap().to_string();
    assert_eq!(header, "M0P0,M0P1,M1P0,M1P1,N1,N2,Class");

    let ex = tmp.path().join("explore");
    let o = mlpipe(&["explore", "--data", p(&data), "--out", p(&ex)]);
    assert!(o.status.success());
    assert!(ex.join("univariate.csv").exists() && ex.join("cleaning_report.json").exists());

    let out = tmp.path().join("out");
    let cfg = tmp.path().join("run.toml");
    fs::write(&cfg, format!("data = {:?}\nk = 3\ntrials = 2\nlcs_iterations = 2000\nalgorithms = [\"NB\", \"DT\", \"LCS\"]\n", p(&data))).unwrap();
    let o = mlpipe(&["run", "--config", p(&cfg), "--out", p(&out), "--seed", "9"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let resolved: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("config.resolved.json")).unwrap()).unwrap();
    assert_eq!(resolved["seed"], 9);
    assert_eq!(resolved["k"], 3);
    assert!(String::from_utf8_lossy(&o.stdout).contains("LCS_QRF"));

    let preds = tmp.path().join("preds.csv");
    let o = mlpipe(&["predict", "--archive", p(&out.join("archive.json")), "--data", p(&data), "--fold", "1", "--out", p(&preds)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&preds).unwrap();
    assert!(text.starts_with("instance,class,DT_score,DT_pred,LCS_score"));
    assert_eq!(text.lines().count(), 201);

    fs::remove_dir_all(out.join("plots")).unwrap();
    let o = mlpipe(&["report", "--dir", p(&out)]);
    assert!(o.status.success());
    for f in ["cfibp_v1.svg", "cfibp_v2.svg", "cfibp_v3.svg", "cfibp_v4.svg", "roc_summary.svg", "prc_summary.svg"] {
        assert!(out.join("plots").join(f).exists(), "{f}");
    }
}

#[test]
fn exit_codes_follow_error_class() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("d.csv");
    fs::write(&data, "a,b,Class\n1,2,0\n2,3,1\n3,3,2\n").unwrap();
    let out = tmp.path().join("out");

    let o = mlpipe(&["run", "--data", p(&data), "--out", p(&out), "--cv", "matched"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("match ID"));

    let o = mlpipe(&["run", "--data", p(&data), "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("\"2\""));
    assert!(out.join("INCOMPLETE").exists());

    let o = mlpipe(&["run", "--data", p(&data), "--out", p(&out), "--class-label", "nope"]);
    assert_eq!(o.status.code(), Some(2));

    let o = mlpipe(&["predict", "--archive", p(&tmp.path().join("none.json")), "--data", p(&data), "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(2));

    let o = mlpipe(&["run", "--bogus"]);
    assert_eq!(o.status.code(), Some(2));
}
