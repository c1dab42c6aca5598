use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use csi_core::io::files::{read_event_log, write_json};
use csi_core::sim::single_origin_ring;

fn csi(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_csi"))
        .args(args)
        .env_remove("CSI_LISTEN")
        .env_remove("CSI_DISTILLER_URL")
        .output()
        .expect("run csi")
}

fn fixture() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/synthetic"))
}

#[test]
fn help_documents_every_flag() {
    let cases: [(&str, &[&str]); 4] = [
        ("serve", &["--config", "--listen", "--distiller-url", "CSI_LISTEN", "CSI_DISTILLER_URL"]),
        ("simulate", &["--scenario", "--seed", "--out"]),
        ("analyze", &["--data", "--out", "--resamples", "--confidence", "--seed", "--one-sided"]),
        ("synth", &["--out", "--sessions", "--bots", "--seed"]),
    ];
    for (cmd, flags) in cases {
        let out = csi(&[cmd, "--help"]);
        assert!(out.status.success());
        let text = String::from_utf8(out.stdout).unwrap();
        for flag in flags {
            assert!(text.contains(flag), "{cmd} --help lacks {flag}:\n{text}");
        }
    }
}

#[test]
fn simulate_twice_gives_identical_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("s.json");
    write_json(&scenario, &single_origin_ring(6, 1, 3).unwrap()).unwrap();
    let s = scenario.to_str().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let o = csi(&["simulate", "--scenario", s, "--seed", "7", "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for file in ["events.ndjson", "report.json"] {
        let x = fs::read(a.join(file)).unwrap();
        assert!(!x.is_empty());
        assert_eq!(x, fs::read(b.join(file)).unwrap(), "{file} differs");
    }
    assert!(!read_event_log(&a.join("events.ndjson")).unwrap().is_empty());
}

#[test]
fn simulate_rejects_a_missing_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let o = csi(&["simulate", "--scenario", "/nonexistent/s.json", "--out", dir.path().to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("/nonexistent/s.json"));
}

#[test]
fn analyze_bundled_fixture_has_both_table_shapes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report.json");
    let o = csi(&[
        "analyze",
        "--data",
        fixture().to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--resamples",
        "2000",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let report: serde_json::Value = serde_json::from_slice(&fs::read(&out).unwrap()).unwrap();
    let sessions = report["sessions"].as_array().unwrap();
    assert_eq!(sessions.len(), 11);
    for s in sessions {
        for field in [
            "csi_score",
            "woc_score",
            "median_individual_score",
            "csi_percentile",
            "woc_percentile",
            "median_percentile",
            "pairwise",
        ] {
            assert!(!s[field].is_null(), "session lacks {field}");
        }
    }
    let summary = &report["summary"];
    for field in [
        "mean_csi_score",
        "mean_woc_score",
        "mean_median_individual_score",
        "mean_csi_percentile",
        "csi_percentile_ci",
        "t_test_vs_median",
        "pairwise",
    ] {
        assert!(!summary[field].is_null(), "summary lacks {field}: {summary}");
    }
    let p = &summary["pairwise"];
    let total = p["better"].as_u64().unwrap() + p["worse"].as_u64().unwrap() + p["same"].as_u64().unwrap();
    // 5 picked positions per session
    assert_eq!(total, 55);
    assert!(p["sign_test_p"].as_f64().is_some());

    let table = fs::read_to_string(out.with_extension("txt")).unwrap();
    for row in ["Group (CSI)", "Survey (WoC)", "Median Individual", "Same Score", "Sign test"] {
        assert!(table.contains(row), "table lacks {row}:\n{table}");
    }
}

#[test]
fn serve_refuses_an_incompletable_budget() {
    let dir = tempfile::tempdir().unwrap();
    let spec = serde_json::json!({
        "session_id": "s",
        "budget": 50,
        "positions": [
            {"id": "A", "label": "A", "options": [{"id": "a1", "label": "a1", "salary": 40}]},
            {"id": "B", "label": "B", "options": [{"id": "b1", "label": "b1", "salary": 20}]}
        ]
    });
    fs::write(dir.path().join("spec.json"), spec.to_string()).unwrap();
    let config = dir.path().join("serve.json");
    fs::write(&config, r#"{"spec": "spec.json", "listen": "127.0.0.1:0"}"#).unwrap();
    let o = csi(&["serve", "--config", config.to_str().unwrap()]);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("IncompletableBudget"), "{err}");
}

#[test]
fn bundled_configs_load() {
    let dir = Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs"));
    let c = csi_gateway::ServeConfig::load(&dir.join("serve.json"), &Default::default()).unwrap();
    assert_eq!(c.spec.starting_budget(), csi_core::model::Money(32_500));
    for s in ["scenario-reference.json", "scenario-ring.json", "scenario-asymmetry.json"] {
        csi_core::io::files::load_scenario(&dir.join(s)).unwrap().validate().unwrap();
    }

    let out = tempfile::tempdir().unwrap();
    let o = csi(&[
        "simulate",
        "--scenario",
        dir.join("scenario-reference.json").to_str().unwrap(),
        "--out",
        out.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_slice(&fs::read(out.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["finished"], true);
    assert_eq!(report["final_roster"]["picks"].as_object().unwrap().len(), 9);
}
