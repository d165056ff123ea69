use vanet_core::harness::compare::{compare, Axis, Metric};
use vanet_core::harness::matrix::{read_rows, write_rows, RESULTS_FILE};
use vanet_core::harness::{expand_matrix, RunRow};
use vanet_core::protocols::{Mode, ProtocolKind};
use vanet_core::{run_matrix, Error, ScenarioConfig};

fn small_matrix() -> ScenarioConfig {
    ScenarioConfig::parse(
        r#"
        [scenario]
        duration = 10.0
        nodes = 10
        connections = 3
        arena = [600.0, 600.0]

        [protocol]
        name = "dsr"
        mode = "orig"

        [matrix]
        protocol = ["dsr", "fsr", "olsr"]
        mode = ["orig", "mod"]
        pause_time = [0.0, 5.0]
        seeds = [1, 2]
        "#,
    )
    .unwrap()
}

#[test]
fn matrix_rows_round_trip_through_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_matrix();
    let summary = run_matrix(&cfg, 2, Some(dir.path())).unwrap();
    assert_eq!(summary.rows.len(), 24);
    assert_eq!(summary.failed, 0);
    let mut back = read_rows(dir.path()).unwrap();
    back.sort_by_key(RunRow::sort_key);
    assert_eq!(back, summary.rows);

    let copy = dir.path().join("copy.csv");
    write_rows(&copy, &back).unwrap();
    assert_eq!(read_rows(&copy).unwrap(), back);
}

#[test]
fn job_count_does_not_change_results() {
    let mut cfg = small_matrix();
    cfg.matrix.protocol = vec![ProtocolKind::Olsr, ProtocolKind::Dsr];
    cfg.matrix.pause_time = vec![0.0];
    let one = run_matrix(&cfg, 1, None).unwrap();
    let three = run_matrix(&cfg, 3, None).unwrap();
    assert_eq!(one.rows, three.rows);
    assert!(one.rows.iter().all(|r| r.digest.len() == 16));
}

#[test]
fn failing_points_keep_the_matrix_going() {
    let mut cfg = small_matrix();
    cfg.matrix.protocol = vec![ProtocolKind::Fsr];
    cfg.matrix.mode = vec![Mode::Mod];
    cfg.matrix.pause_time = vec![];
    // Two nodes cannot host three distinct connections.
    cfg.matrix.nodes = vec![2, 10];
    let summary = run_matrix(&cfg, 1, None).unwrap();
    assert_eq!(summary.rows.len(), 4);
    assert_eq!(summary.failed, 2);
    let failed: Vec<&RunRow> = summary.rows.iter().filter(|r| !r.is_ok()).collect();
    assert!(failed.iter().all(|r| r.nodes == 2 && r.error.contains("connections")));
}

#[test]
fn comparison_covers_every_group() {
    let summary = run_matrix(&small_matrix(), 1, None).unwrap();
    let report = compare(&summary.rows, Axis::PauseTime);
    for kind in ProtocolKind::ALL {
        for pause in [0.0, 5.0] {
            let g = report.find(Metric::Throughput, kind.label(), pause).unwrap();
            assert_eq!((g.orig_n, g.mod_n), (2, 2));
        }
    }
    let dir = tempfile::tempdir().unwrap();
    report.write(dir.path()).unwrap();
    assert!(dir.path().join("comparison_pause_time.csv").exists());
    let table = std::fs::read_to_string(dir.path().join("plot_nrl_by_pause_time.tsv")).unwrap();
    assert_eq!(table.lines().count(), 3);
}

#[test]
fn other_schema_versions_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_matrix();
    cfg.matrix = Default::default();
    let summary = run_matrix(&cfg, 1, Some(dir.path())).unwrap();
    let mut rows = summary.rows;
    rows[0].schema_version = 99;
    let path = dir.path().join(RESULTS_FILE);
    write_rows(&path, &rows).unwrap();
    match read_rows(&path) {
        Err(Error::Schema { found: 99, expected: 1 }) => {}
        other => panic!("unexpected {other:?}"),
    }
    std::fs::write(&path, "a,b\n1,2\n").unwrap();
    assert!(matches!(read_rows(&path), Err(Error::Config(_))));
}

#[test]
fn config_errors_are_reported() {
    for text in [
        "[scenario]\nduration = -1.0",
        "[scenario]\nspeed = -3.0",
        "[matrix]\nnodes = [1]",
        "[protocol]\nname = \"fsr\"\nmode = \"mod\"\nintra_interval = 9.0",
        "[protocol]\nname = \"olsr\"\nmode = \"fast\"",
        "[mac]\ncontention_window = 0.0",
        "not toml at all [",
    ] {
        assert!(ScenarioConfig::parse(text).is_err(), "{text}");
    }
}

#[test]
fn presets_expand_to_the_documented_sizes() {
    assert_eq!(expand_matrix(&ScenarioConfig::desk_preset()).len(), 240);
    assert_eq!(expand_matrix(&ScenarioConfig::full_preset()).len(), 120);
}
