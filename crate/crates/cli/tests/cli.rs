use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn burstsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_burstsim"))
        .args(args)
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn bundled_doc() -> serde_json::Value {
    serde_json::from_str(burstsim_core::scenario::PAPER_FEB_RUN).unwrap()
}

fn write_doc(dir: &Path, name: &str, doc: &serde_json::Value) -> String {
    let p = dir.join(name);
    fs::write(&p, serde_json::to_vec_pretty(doc).unwrap()).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn validate_accepts_the_bundled_scenario() {
    let o = burstsim(&["validate"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("ok"));
}

#[test]
fn validate_lists_every_problem() {
    let dir = tempfile::tempdir().unwrap();
    let mut doc = bundled_doc();
    doc["catalog"]["instance_types"][0]["spot_fraction"] = serde_json::json!(1.5);
    doc["catalog"]["regions"][0]["preemption_rate"] = serde_json::json!(-0.1);
    let path = write_doc(dir.path(), "bad.json", &doc);
    let o = burstsim(&["validate", "--config", &path]);
    assert_eq!(code(&o), 1);
    let out = String::from_utf8_lossy(&o.stdout);
    assert!(out.contains("spot_fraction"), "{out}");
    assert!(out.contains("preemption"), "{out}");
}

#[test]
fn config_problems_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let broken = dir.path().join("broken.json");
    fs::write(&broken, "{\n  \"name\": ").unwrap();
    let o = burstsim(&[
        "run",
        "--config",
        broken.to_str().unwrap(),
        "--out",
        dir.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("line"), "{}", stderr(&o));
    assert!(!dir.path().join("o").exists());

    let o = burstsim(&["run", "--config", "no-such-scenario"]);
    assert_eq!(code(&o), 1);

    let o = burstsim(&[
        "sweep",
        "--param",
        "catalog.regions.*.nope",
        "--values",
        "1",
        "--out",
        dir.path().join("s").to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 1);
    assert!(
        !dir.path().join("s").exists(),
        "nothing runs before the path resolves"
    );

    let mut batch: serde_json::Value =
        serde_json::from_str(burstsim_photon::batch::DESK_BATCH).unwrap();
    batch["ice"]["g"] = serde_json::json!(1.2);
    let path = write_doc(dir.path(), "batch.json", &batch);
    let o = burstsim(&[
        "photon",
        "--config",
        &path,
        "--out",
        dir.path().join("p").to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 1);
}

#[test]
fn unwritable_output_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("file");
    fs::write(&file, "x").unwrap();
    let o = burstsim(&[
        "run",
        "--scale",
        "0.01",
        "--out",
        file.join("sub").to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("I/O error"), "{}", stderr(&o));
}

#[test]
fn run_writes_all_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = burstsim(&[
        "run",
        "--scale",
        "0.02",
        "--seed",
        "5",
        "--event-log",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for f in ["timeseries.csv", "jobs.csv", "summary.json", "events.log"] {
        assert!(out.join(f).is_file(), "{f}");
    }
    let ts = fs::read_to_string(out.join("timeseries.csv")).unwrap();
    assert!(ts.starts_with(
        "t_sec,gpu_model,provider,geo_group,n_instances,pflops32,active_fetches,queue_depth"
    ));
    let jobs = fs::read_to_string(out.join("jobs.csv")).unwrap();
    assert!(jobs.starts_with(
        "job_id,gpu_model,provider,region,submit_s,fetch_s,runtime_s,n_attempts,wasted_s,outcome\n"
    ));
    let summary: serde_json::Value =
        serde_json::from_slice(&fs::read(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["seed"], 5);

    // sample times strictly increase and span the horizon on the period grid
    let mut times: Vec<f64> = ts
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap().parse().unwrap())
        .collect();
    times.dedup();
    assert!(times.windows(2).all(|w| w[0] < w[1]));
    assert_eq!(times[0], 0.0);
    assert_eq!(
        *times.last().unwrap(),
        summary["horizon_s"].as_f64().unwrap()
    );
    assert!(times.windows(2).all(|w| w[1] - w[0] <= 60.0));
}

#[test]
fn sweep_writes_points_and_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sw");
    let o = burstsim(&[
        "sweep",
        "--param",
        "catalog.regions.*.preemption_rate",
        "--values",
        "0,0.2",
        "--seeds",
        "1,2",
        "--scale",
        "0.01",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let dirs = fs::read_dir(&out)
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().is_dir())
        .count();
    assert_eq!(dirs, 4);
    assert_eq!(
        fs::read_to_string(out.join("sweep.csv"))
            .unwrap()
            .lines()
            .count(),
        5
    );
}

#[test]
fn photon_batch_writes_result_and_paths() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("ph");
    let o = burstsim(&[
        "photon",
        "--photons",
        "2000",
        "--seed",
        "3",
        "--paths",
        "5",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r: serde_json::Value =
        serde_json::from_slice(&fs::read(out.join("photon_result.json")).unwrap()).unwrap();
    assert_eq!(r["n_emitted"], 2000);
    let paths = fs::read_to_string(out.join("paths.csv")).unwrap();
    let ids: std::collections::BTreeSet<&str> = paths
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap())
        .collect();
    assert_eq!(ids.len(), 5);
}
