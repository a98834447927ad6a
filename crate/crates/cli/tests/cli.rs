// SPDX-License-Identifier: Apache-2.0

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

struct Run {
    dir: TempDir,
}

impl Run {
    fn new(config: &str) -> Self {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("cfg.json"), config).unwrap();
        Run { dir }
    }

    fn exec(&self, cmd: &str, extra: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_qlan"))
            .arg(cmd)
            .arg("--config")
            .arg(self.dir.path().join("cfg.json"))
            .arg("--out")
            .arg(self.out())
            .args(extra)
            .output()
            .unwrap()
    }

    fn out(&self) -> PathBuf {
        self.dir.path().join("out")
    }

    fn csv(&self, name: &str) -> (Vec<String>, Vec<csv::StringRecord>) {
        read_csv(&self.out().join(name))
    }

    fn json(&self, name: &str) -> serde_json::Value {
        serde_json::from_slice(&std::fs::read(self.out().join(name)).unwrap()).unwrap()
    }
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<csv::StringRecord>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let headers = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.records().collect::<Result<Vec<_>, _>>().unwrap();
    (headers, rows)
}

fn col(headers: &[String], name: &str) -> usize {
    headers.iter().position(|h| h == name).unwrap_or_else(|| panic!("missing column {name}"))
}

fn num(row: &csv::StringRecord, i: usize) -> f64 {
    row[i].parse().unwrap()
}

const TWO_LEVEL: &str = r#"{"model":{"two_level":{"z_re":1.0,"z_im":0.0}},"theta0":2.0"#;

fn with(extra: &str) -> String {
    format!("{TWO_LEVEL}{extra}}}")
}

#[test]
fn fisher_sweep_carries_oracle_columns() {
    let run = Run::new(&with(r#","fisher":{"theta0_grid":[0.5,1,2],"phi_grid":[0.0,1.0]}"#));
    let out = run.exec("fisher", &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (h, rows) = run.csv("fisher_sweep.csv");
    assert_eq!(
        h,
        [
            "theta0", "phi", "channel", "F", "F_oracle", "X2_mean", "rate", "mu_c", "V_c", "I_c", "drift", "mu_h",
            "V_h", "I_h", "I_h_oracle", "gap", "min_eig"
        ]
    );
    assert_eq!(rows.len(), 6);
    let (f, fo, ih, iho) = (col(&h, "F"), col(&h, "F_oracle"), col(&h, "I_h"), col(&h, "I_h_oracle"));
    for r in &rows {
        assert!((num(r, f) - num(r, fo)).abs() <= 1e-8 * num(r, fo));
        assert!((num(r, ih) - num(r, iho)).abs() <= 1e-8 * num(r, iho));
    }
    let report = run.json("fisher_report.json");
    assert_eq!(report["reports"].as_array().unwrap().len(), 6);
    assert!(report["reports"][0]["F"].is_number());
}

#[test]
fn lan_overlap_deviation_decreases() {
    let run = Run::new(&with(r#","lan":{"kinds":["overlap"]}"#));
    assert!(run.exec("lan", &[]).status.success());
    let (h, rows) = run.csv("lan_overlap.csv");
    assert_eq!(h, ["kind", "t", "arg", "re_exact", "im_exact", "re_limit", "im_limit", "deviation"]);
    let (t, dev) = (col(&h, "t"), col(&h, "deviation"));
    let mut per_t: Vec<(f64, f64)> = rows.iter().map(|r| (num(r, t), num(r, dev))).collect();
    per_t.dedup();
    assert_eq!(per_t.len(), 3);
    assert!(per_t.windows(2).all(|w| w[1].0 > w[0].0 && w[1].1 < w[0].1));
    let summary = run.json("lan_summary.json");
    let e = summary[0]["decay_exponent"].as_f64().unwrap();
    assert!((-1.0..=-0.25).contains(&e));
}

#[test]
fn homodyne_limit_at_zero_shift_is_centered_gaussian() {
    let run = Run::new(&with(r#","lan":{"kinds":["homodyne"],"u":0.0,"arg_grid":[-1,0,0.5,2]}"#));
    assert!(run.exec("lan", &[]).status.success());
    let (h, rows) = run.csv("lan_homodyne.csv");
    let v_h = 17.0 / 9.0;
    for r in &rows {
        let p = num(r, col(&h, "arg"));
        assert!((num(r, col(&h, "re_limit")) - (-p * p * v_h / 2.0).exp()).abs() < 1e-12);
        assert_eq!(num(r, col(&h, "im_limit")), 0.0);
    }
}

#[test]
fn exit_codes() {
    let run = Run::new(&with(r#","lan":{"t_grid":[1e4,1e3,1e2]}"#));
    assert_eq!(run.exec("lan", &[]).status.code(), Some(3));

    let reducible = r#"{"model":{"custom":{"dim":2,"H":{"value":[[0,0],[0,0]]},
        "L":[{"value":[[1,0],[0,-1]],"first":[[1,0],[0,0]]}]}},"theta0":0.3}"#;
    let run = Run::new(reducible);
    let out = run.exec("fisher", &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("gap certificate"));

    let decaying = r#"{"model":{"custom":{"dim":2,"H":{"value":[[0,0],[0,0]]},
        "L":[{"value":[[0,0],[1,0]],"first":[[0,0],[1,0]]}]}},"theta0":0.3}"#;
    let out = Run::new(decaying).exec("validate", &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("rank certificate"));

    let run = Run::new(&with(
        r#","simulate":{"scheme":"diffusive","t_final":1,"dt":0.005,"n_traj":0}"#,
    ));
    assert_eq!(run.exec("simulate", &[]).status.code(), Some(3));

    let run = Run::new(&with(r#","figdata":{"preset":""}"#));
    assert_eq!(run.exec("figdata", &[]).status.code(), Some(3));

    let run = Run::new("{not json");
    assert_eq!(run.exec("validate", &[]).status.code(), Some(3));

    let run = Run::new(&with(""));
    assert_eq!(run.exec("validate", &[]).status.code(), Some(0));
    assert_eq!(run.json("validation.json")["dim"], 2);
    assert_eq!(run.exec("validate", &["--jobs", "0"]).status.code(), Some(3));
}

#[test]
fn simulate_is_deterministic_and_warns_on_degenerate_mean() {
    let run = Run::new(&with(
        r#","seed":3,"simulate":{"scheme":"jump","u":1.0,"t_final":5,"dt":0.005,"n_traj":40,"dump":true}"#,
    ));
    assert!(run.exec("simulate", &["--jobs", "1"]).status.success());
    let first = std::fs::read(run.out().join("trajectories.csv")).unwrap();
    let summary = run.json("simulate_summary.json");
    let warnings = summary["warnings"].as_array().unwrap();
    assert!(warnings.iter().any(|w| w.as_str().unwrap().contains("degenerate")));
    assert!(summary["plug_in"].is_null());
    assert!(run.exec("simulate", &["--jobs", "3"]).status.success());
    assert_eq!(first, std::fs::read(run.out().join("trajectories.csv")).unwrap());

    let (h, rows) = run.csv("trajectories.csv");
    assert_eq!(h, ["traj_id", "n_counts_or_current", "y_centered"]);
    assert_eq!(rows.len(), 40);
    // counts minus t·rate with rate 1
    for r in &rows {
        assert!((num(r, 1) - 5.0 - num(r, 2)).abs() < 1e-9);
    }

    assert!(run.exec("simulate", &["--seed", "4"]).status.success());
    assert_ne!(first, std::fs::read(run.out().join("trajectories.csv")).unwrap());
}

#[test]
fn fig2_curve_has_period_pi() {
    let run = Run::new(&with(r#","figdata":{"preset":"fig2"}"#));
    assert!(run.exec("figdata", &[]).status.success());
    let (h, rows) = run.csv("fig2_phi.csv");
    let ih: Vec<f64> = rows.iter().map(|r| num(r, col(&h, "I_h"))).collect();
    // 72 steps over 2π
    for k in 0..36 {
        assert!((ih[k] - ih[k + 36]).abs() < 1e-12);
    }
    let best = (0..ih.len()).max_by(|&a, &b| ih[a].total_cmp(&ih[b])).unwrap();
    assert!(best == 0 || best == 36 || best == 72);
    let (h, rows) = run.csv("fig2_theta.csv");
    for r in &rows {
        assert!((num(r, col(&h, "F")) - num(r, col(&h, "F_oracle"))).abs() < 1e-8 * num(r, col(&h, "F_oracle")));
    }
}
