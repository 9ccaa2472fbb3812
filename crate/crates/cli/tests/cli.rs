use clap::Parser;
use lme_cli::{emit, run, Cli, CliError, Outcome};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

fn data(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../data")
        .join(name)
        .display()
        .to_string()
}

fn invoke(args: &[&str]) -> Result<Outcome, CliError> {
    let cli = Cli::try_parse_from(std::iter::once("lme").chain(args.iter().copied())).expect("arguments parse");
    run(&cli)
}

fn ok(args: &[&str]) -> Outcome {
    invoke(args).unwrap_or_else(|e| panic!("{args:?} failed: {e}"))
}

fn artifact<'a>(o: &'a Outcome, name: &str) -> &'a str {
    &o.artifacts
        .iter()
        .find(|a| a.name == name)
        .unwrap_or_else(|| panic!("no artifact {name}"))
        .csv
}

/// `(key, value)` per data row; the key joins the first `key_fields` fields.
fn column(csv: &str, key_fields: usize, value_field: usize) -> Vec<(String, f64)> {
    csv.lines()
        .skip(1)
        .filter(|l| !l.is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[..key_fields].join(","), f[value_field].parse().unwrap())
        })
        .collect()
}

fn lookup(rows: &[(String, f64)], key: &str) -> f64 {
    rows.iter()
        .find(|(k, _)| k == key)
        .unwrap_or_else(|| panic!("no row {key}"))
        .1
}

fn temp_file(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p.display().to_string()
}

fn exe() -> Command {
    Command::new(env!("CARGO_BIN_EXE_lme"))
}

const TRANS: &str = "two_bus_transmission.json";

#[test]
fn validate_accepts_golden_network() {
    let o = ok(&["validate", "--network", &data(TRANS)]);
    assert_eq!(o.exit_code, 0);
    assert!(artifact(&o, "validation").contains("ok,network,bus1"));
}

#[test]
fn validate_names_dangling_generator() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(data(TRANS))
        .unwrap()
        .replace("\"node\": \"bus2\"", "\"node\": \"bus7\"");
    let path = temp_file(dir.path(), "bad.json", &text);
    let out = exe().args(["validate", "--network", &path]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("error,generator,G2"), "{stdout}");
    assert!(stdout.contains("bus7"), "{stdout}");
}

#[test]
fn validate_reports_disconnected_graph() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(data(TRANS)).unwrap().replace(
        "{\n      \"id\": \"bus2\"",
        "{\n      \"id\": \"island\",\n      \"demand\": 0\n    },\n    {\n      \"id\": \"bus2\"",
    );
    let path = temp_file(dir.path(), "island.json", &text);
    let out = exe()
        .args(["validate", "--network", &path, "--format", "json"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["validation"]["valid"], false);
    assert!(v["validation"]["message"].as_str().unwrap().contains("disconnected"));
}

#[test]
fn accounts_on_transmission_example() {
    let o = ok(&["accounts", "--network", &data(TRANS)]);
    assert_eq!(o.exit_code, 0);
    let rows = column(artifact(&o, "ledger"), 2, 3);
    assert!((lookup(&rows, "load,bus2") - 250.0).abs() < 1e-9);
    assert!((lookup(&rows, "line,L1") + 100.0).abs() < 1e-9);
    let fp = column(artifact(&o, "footprint"), 1, 2);
    assert!(fp[0].1 < 1e-6);
    assert!(o.notes.iter().any(|n| n.starts_with("footprint residual")));
}

#[test]
fn lme_on_generation_example() {
    let o = ok(&["lme", "--network", &data("two_bus_generation.json")]);
    let rows = column(artifact(&o, "lme"), 1, 1);
    assert_eq!(rows.len(), 2);
    for (_, v) in rows {
        assert!((v - 1.0).abs() < 1e-9);
    }
}

#[test]
fn zero_demand_dispatch_is_all_zero() {
    let dir = tempfile::tempdir().unwrap();
    let demand = temp_file(dir.path(), "d.csv", "node_id,demand_mw\nbus1,0\nbus2,0\n");
    let o = ok(&["dispatch", "--network", &data(TRANS), "--demand", &demand]);
    for line in artifact(&o, "dispatch").lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        assert_eq!(f[3], "0", "{line}");
    }
}

#[test]
fn demand_file_rejects_unknown_node() {
    let dir = tempfile::tempdir().unwrap();
    let demand = temp_file(dir.path(), "d.csv", "node_id,demand_mw\nbus9,1\n");
    let e = invoke(&["dispatch", "--network", &data(TRANS), "--demand", &demand]).unwrap_err();
    assert_eq!(e.exit_code(), 2);
}

#[test]
fn infeasible_demand_is_a_solver_failure() {
    let dir = tempfile::tempdir().unwrap();
    let demand = temp_file(dir.path(), "d.csv", "node_id,demand_mw\nbus2,1000\n");
    let out = exe()
        .args(["lme", "--network", &data(TRANS), "--demand", &demand])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8(out.stderr).unwrap().contains("infeasible"));
}

#[test]
fn missing_network_is_an_input_error() {
    let out = exe()
        .args(["lme", "--network", "/nonexistent/net.json"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_reference_override_is_rejected() {
    let e = invoke(&["lme", "--network", &data(TRANS), "--ref-node", "nowhere"]).unwrap_err();
    assert_eq!(e.exit_code(), 2);
    let o = ok(&["lme", "--network", &data(TRANS), "--ref-node", "bus2"]);
    let rows = column(artifact(&o, "lme"), 1, 1);
    assert!(lookup(&rows, "bus1").abs() < 1e-9 && (lookup(&rows, "bus2") - 1.0).abs() < 1e-9);
}

fn constant_scenario(dir: &Path, periods: usize, bad: Option<usize>) -> String {
    let mut body = String::from("period,entity_id,kind,value\n");
    for t in 0..periods {
        let scale = if Some(t) == bad { 10.0 } else { 1.0 };
        body.push_str(&format!("{t},bus2,load_scale,{scale}\n"));
    }
    temp_file(dir, "scenario.csv", &body)
}

#[test]
fn scenario_constant_series() {
    let dir = tempfile::tempdir().unwrap();
    let sc = constant_scenario(dir.path(), 24, None);
    let o = ok(&["scenario", "--network", &data(TRANS), "--demand", &sc]);
    let mean = column(artifact(&o, "mean_lme"), 1, 1);
    assert!(lookup(&mean, "bus1").abs() < 1e-9 && (lookup(&mean, "bus2") - 1.0).abs() < 1e-9);
    let hourly = column(artifact(&o, "hourly_lme"), 2, 2);
    assert_eq!(hourly.len(), 48);
    for h in 0..24 {
        assert_eq!(lookup(&hourly, &format!("{h},bus1")), lookup(&hourly, "0,bus1"));
        assert_eq!(lookup(&hourly, &format!("{h},bus2")), lookup(&hourly, "0,bus2"));
    }
}

#[test]
fn scenario_lists_infeasible_period() {
    let dir = tempfile::tempdir().unwrap();
    let sc = constant_scenario(dir.path(), 6, Some(3));
    let o = ok(&["scenario", "--network", &data(TRANS), "--demand", &sc]);
    assert_eq!(o.exit_code, 0);
    let failures = artifact(&o, "failures");
    assert_eq!(failures.lines().count(), 2, "{failures}");
    assert!(failures.lines().nth(1).unwrap().starts_with("3,"));
}

#[test]
fn scenario_solar_midday_is_cleaner_than_night() {
    let o = ok(&[
        "scenario",
        "--network",
        &data("solar_diurnal.json"),
        "--demand",
        &data("solar_diurnal_scenario.csv"),
    ]);
    let hourly = column(artifact(&o, "hourly_lme"), 2, 2);
    let mean =
        |hours: &[u32]| hours.iter().map(|h| lookup(&hourly, &format!("{h},load"))).sum::<f64>() / hours.len() as f64;
    assert!(mean(&[11, 12, 13]) < mean(&[0, 1, 2, 3, 4]));
}

#[test]
fn scenario_files_are_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let outs: Vec<PathBuf> = ["1", "3"]
        .iter()
        .enumerate()
        .map(|(k, workers)| {
            let out = dir.path().join(format!("run{k}"));
            let status = exe()
                .args([
                    "scenario",
                    "--network",
                    &data("solar_diurnal.json"),
                    "--demand",
                    &data("solar_diurnal_scenario.csv"),
                    "--workers",
                    workers,
                    "--out",
                ])
                .arg(&out)
                .output()
                .unwrap()
                .status;
            assert!(status.success());
            out
        })
        .collect();
    let mut names: Vec<_> = fs::read_dir(&outs[0])
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    assert_eq!(names.len(), 8);
    for name in names {
        assert_eq!(
            fs::read(outs[0].join(&name)).unwrap(),
            fs::read(outs[1].join(&name)).unwrap(),
            "{name:?}"
        );
    }
}

#[test]
fn storage_golden_horizon() {
    let o = ok(&[
        "storage",
        "--network",
        &data("two_bus_storage.json"),
        "--demand",
        &data("two_bus_storage_demand.csv"),
        "--capacity-factors",
        &data("two_bus_storage_capacity.csv"),
    ]);
    assert_eq!(o.exit_code, 0);
    let rows = column(artifact(&o, "lme"), 2, 2);
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|(_, v)| (v - 1.0).abs() < 1e-9), "{rows:?}");
}

#[test]
fn storage_baseline_without_units() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(data("two_bus_storage.json")).unwrap();
    let mut doc: serde_json::Value = serde_json::from_str(&text).unwrap();
    doc["storages"] = serde_json::json!([]);
    let net = temp_file(dir.path(), "nostore.json", &doc.to_string());
    let o = ok(&[
        "storage",
        "--network",
        &net,
        "--demand",
        &data("two_bus_storage_demand.csv"),
        "--capacity-factors",
        &data("two_bus_storage_capacity.csv"),
    ]);
    let rows = column(artifact(&o, "lme"), 2, 2);
    assert!(lookup(&rows, "1,bus1").abs() < 1e-9);
    assert!((lookup(&rows, "1,bus2") - 1.0).abs() < 1e-9);
}

#[test]
fn storage_efficiency_defaults_when_omitted() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(data("two_bus_storage.json")).unwrap();
    let mut doc: serde_json::Value = serde_json::from_str(&text).unwrap();
    doc["storages"][0].as_object_mut().unwrap().remove("efficiency");
    let net = temp_file(dir.path(), "lossy.json", &doc.to_string());
    let args = [
        "storage",
        "--network",
        &net,
        "--demand",
        &data("two_bus_storage_demand.csv"),
        "--capacity-factors",
        &data("two_bus_storage_capacity.csv"),
    ];
    let o = ok(&args);
    // Efficiency applies on both legs, so 1 MWh charged returns 0.81² MWh.
    let store = artifact(&o, "storage");
    let c = lookup(&column(store, 2, 2), "1,S1");
    let d = lookup(&column(store, 2, 3), "2,S1");
    assert!(d > 0.0);
    assert!((c * 0.81 * 0.81 - d).abs() < 1e-6, "charge {c} discharge {d}");
    let explicit = ok(&[&args[..], &["--efficiency", "1"]].concat());
    let store = artifact(&explicit, "storage");
    let c1 = lookup(&column(store, 2, 2), "1,S1");
    let d1 = lookup(&column(store, 2, 3), "2,S1");
    assert!(d1 > 0.0 && (c1 - d1).abs() < 1e-6);
}

#[test]
fn storage_windows_carry_state_of_charge() {
    let args = [
        "storage",
        "--network",
        &data("two_bus_storage.json"),
        "--demand",
        &data("two_bus_storage_demand.csv"),
        "--capacity-factors",
        &data("two_bus_storage_capacity.csv"),
    ];
    let one = ok(&[&args[..], &["--window", "1"]].concat());
    assert_eq!(one.exit_code, 0);
    // A one-period window cannot anticipate the second period, so the
    // first-period clean energy is not stored.
    let soc = column(artifact(&one, "storage"), 2, 4);
    assert!(lookup(&soc, "1,S1").abs() < 1e-9);
    let rows = column(artifact(&one, "lme"), 2, 2);
    assert!(lookup(&rows, "1,bus1").abs() < 1e-9);
}

#[test]
fn verify_passes_on_golden_networks() {
    for name in [TRANS, "two_bus_generation.json", "solar_diurnal.json"] {
        let o = ok(&["verify", "--network", &data(name)]);
        assert_eq!(o.exit_code, 0, "{name}: {:?}", o.notes);
    }
}

#[test]
fn verify_detects_corrupted_dual() {
    let out = exe()
        .args(["verify", "--network", &data(TRANS), "--inject-dual-offset", "0.5"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("footprint_identity FAILED, residual"), "{stderr}");
}

#[test]
fn verify_random_sweep() {
    let o = ok(&["verify", "--random", "50"]);
    assert_eq!(o.exit_code, 0, "{:?}", o.notes);
    assert!(o.notes.last().unwrap().starts_with("50/50"));
}

#[test]
fn env_overrides_flags() {
    let out = exe()
        .env("LME_NETWORK", data("two_bus_generation.json"))
        .env("LME_FORMAT", "json")
        .arg("lme")
        .output()
        .unwrap();
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["lme"]["lme"]["bus1"], 1.0);
}

#[test]
fn out_directory_receives_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let cli = Cli::try_parse_from(
        [
            "lme",
            "accounts",
            "--network",
            &data(TRANS),
            "--format",
            "json",
            "--out",
        ]
        .iter()
        .map(|s| s.to_string())
        .chain([dir.path().display().to_string()]),
    )
    .unwrap();
    let o = run(&cli).unwrap();
    emit(&cli.config, &o, &mut Vec::new()).unwrap();
    let ledger: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("ledger.json")).unwrap()).unwrap();
    assert_eq!(ledger["load"][0][1], 250.0);
    assert!(dir.path().join("footprint.json").exists());
}
