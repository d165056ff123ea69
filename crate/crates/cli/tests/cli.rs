use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn vanetlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vanetlab"))
        .args(args)
        .output()
        .expect("vanetlab runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn mac_model_eval_prints_one_row() {
    let out = vanetlab(&["mac-model", "eval", "--p", "0.5", "--q", "2", "--tau-slot", "1", "--tau-pack", "5", "--tau-difs", "1", "--slots"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("p,Q,p_none"));
    let row: Vec<f64> = lines.next().unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    // p, Q, p_none, p_one, p_any, p_s, p_c, then the time terms.
    let want = [0.5, 2.0, 0.25, 0.5, 0.75, 2.0 / 3.0, 1.0 / 3.0];
    assert!(row.iter().zip(want).all(|(a, b)| (a - b).abs() < 1e-12), "{row:?}");
    assert!((row[10] - 9.5).abs() < 1e-12);
    assert!(lines.next().is_none());
}

#[test]
fn mac_model_sweep_and_bad_input() {
    let out = vanetlab(&["mac-model", "sweep", "--cw", "15", "--over", "q", "--from", "1", "--to", "30", "--step", "1"]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(stdout(&out).lines().count(), 31);

    let out = vanetlab(&["mac-model", "eval", "--p", "1.5"]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("error"));
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn cost_eval_emits_formula_rows() {
    let dir = tempfile::tempdir().unwrap();
    let graph = write(dir.path(), "path.txt", "0 1\n1 2\n2 3\n");
    let params = write(
        dir.path(),
        "cost.toml",
        r#"
        [dsr]
        src = 0
        rings = [1, 255]

        [scoped]
        d_avg_in = 4.0
        d_avg_out = 4.0
        n_in = 2
        n_out = 1
        p_err = 0.5
        d_f = [3.0]
        d_f_mpr = [2.0]
        p_c_mpr = 1.0
        h = 2
        horizon = 1.0
        intervals = { intra = 1.0, inter = 10.0, hello = 1.0, tc = 1.0 }
        "#,
    );
    let out = vanetlab(&["cost", "eval", "--graph", &graph, "--params", &params]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    let cost = |formula: &str| -> f64 {
        text.lines()
            .find(|l| l.starts_with(&format!("{formula},")))
            .unwrap_or_else(|| panic!("{formula} missing in\n{text}"))
            .rsplit(',')
            .next()
            .unwrap()
            .parse()
            .unwrap()
    };
    assert_eq!(cost("dsr_discovery:no_reply"), 5.0);
    assert_eq!(cost("dsr_discovery:reply_ring0"), 1.0);
    assert_eq!(cost("fsr"), 3.0);
    assert_eq!(cost("olsr_update_c"), 5.0);
    assert_eq!(cost("olsr_update_nc"), 2.0);
}

#[test]
fn cost_oracle_agrees() {
    let out = vanetlab(&["cost", "oracle", "--graphs", "20", "--max-nodes", "30", "--seed", "5"]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stderr(&out).contains("agreement"));
    assert_eq!(stdout(&out).lines().count(), 21);
}

const SMALL: &str = r#"
[scenario]
duration = 5.0
nodes = 8
connections = 2
arena = [500.0, 500.0]

[protocol]
name = "olsr"
mode = "mod"

[matrix]
mode = ["orig", "mod"]
seeds = [1, 2]
"#;

#[test]
fn sim_run_matrix_and_compare() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(dir.path(), "small.toml", SMALL);
    let trace = dir.path().join("trace.tsv");

    let out = vanetlab(&["sim", "run", "--config", &config, "--trace", trace.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    let first = stdout(&out);
    assert!(first.starts_with("schema_version,"));
    assert!(fs::metadata(&trace).unwrap().len() > 0);
    let again = vanetlab(&["sim", "run", "--config", &config]);
    assert_eq!(stdout(&again), first);

    let results = dir.path().join("out");
    let out = vanetlab(&["sim", "matrix", "--config", &config, "--jobs", "2", "--out", results.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    let csv = fs::read_to_string(results.join("results.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);

    let out = vanetlab(&["sim", "compare", "--in", results.to_str().unwrap(), "--by", "pause_time"]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("# throughput_kbps"));
    assert!(results.join("comparison_pause_time.csv").exists());
    assert!(results.join("plot_e2ed_s_by_pause_time.tsv").exists());
}

#[test]
fn bad_configs_fail_with_a_message() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(dir.path(), "bad.toml", "[scenario]\nnodez = 4\n");
    let out = vanetlab(&["sim", "run", "--config", &config]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("nodez"), "{}", stderr(&out));

    let out = vanetlab(&["sim", "run", "--config", "/nonexistent/file.toml"]);
    assert!(!out.status.success());

    let results = write(dir.path(), "results.csv", "a,b\n1,2\n");
    let out = vanetlab(&["sim", "compare", "--in", &results]);
    assert!(!out.status.success());
}
