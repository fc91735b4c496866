use std::fs;
use std::process::Command;

fn gfn() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gfn"))
}

#[test]
fn unknown_scenario_fails_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = gfn().args(["warp-drive", "--out"]).arg(&out).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("available scenarios"));
    assert!(!out.exists());
}

#[test]
fn bad_config_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    fs::write(&cfg, r#"{"scenario": "mollifier", "q": "two"}"#).unwrap();
    let o = gfn().arg("--config").arg(&cfg).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn mollifier_scenario_writes_tables() {
    let dir = tempfile::tempdir().unwrap();
    let o = gfn().args(["run", "mollifier", "--q", "3", "--out"]).arg(dir.path()).output().unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let moments = fs::read_to_string(dir.path().join("mollifier-moments.csv")).unwrap();
    let mut lines = moments.lines();
    assert_eq!(lines.next(), Some("alpha,value,error_estimate"));
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 5);
    assert!((rows[0][1] - 1.0).abs() <= 1e-12);
    for r in &rows[1..4] {
        assert!(r[1].abs() <= 1e-10);
    }
    let summary = fs::read_to_string(dir.path().join("mollifier-summary.csv")).unwrap();
    assert!(summary.lines().skip(1).all(|l| l.ends_with(",true")));
    // Empty sweep: header only.
    assert_eq!(
        fs::read_to_string(dir.path().join("mollifier-sweep.csv")).unwrap(),
        "epsilon,alpha,member_id,sup_value_or_log,local_slope\n"
    );
    assert!(fs::read_to_string(dir.path().join("run.log")).unwrap().contains("unix_time"));
}

#[test]
fn config_file_and_flags_combine() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    let out = dir.path().join("out");
    fs::write(&cfg, r#"{"scenario": "delta-scaling", "i_min": 3, "battery": {"count": 2}}"#).unwrap();
    let o = gfn().arg("--config").arg(&cfg).args(["--eps-min", "8", "--out"]).arg(&out).output().unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let sweep = fs::read_to_string(out.join("delta-scaling-sweep.csv")).unwrap();
    // 2 members, i = 3..=8, one derivative order.
    assert_eq!(sweep.lines().count(), 1 + 2 * 6);
    assert!(sweep.lines().nth(1).unwrap().starts_with("1.25e-1,0,"));
}
