use std::fs;
use std::path::Path;

use tolcone_bench::config::ScheduleSpec;
use tolcone_bench::runner::{load_grid_dir, read_trace, MANIFEST_FILE, TRACE_FILE};
use tolcone_bench::{execute, run_grid, ProblemKind, RunConfig, RunManifest, RunStatus};
use tolcone_core::SolverKind;

fn quad(solver: SolverKind, seed: u64) -> RunConfig {
    let mut c = RunConfig::new(solver, ProblemKind::Quadratic, seed);
    c.max_steps = 300;
    c.schedules.alpha = ScheduleSpec::Constant(0.01);
    c
}

fn read(p: &Path) -> Vec<u8> {
    fs::read(p).unwrap()
}

#[test]
fn two_solvers_give_two_traces_and_two_manifests() {
    let dir = tempfile::tempdir().unwrap();
    let configs = [quad(SolverKind::Implicit, 1), quad(SolverKind::Explicit, 1)];
    let entries = run_grid(&configs, dir.path(), 2).unwrap();
    assert_eq!(entries.len(), 2);
    for (c, e) in configs.iter().zip(&entries) {
        assert_eq!(e.name, c.run_name());
        let m = e.result.as_ref().unwrap();
        assert_eq!(m.status, RunStatus::Complete);
        assert_eq!(m.steps_completed, 300);
        assert_eq!(m.config_hash, c.hash());
        let run = dir.path().join(&e.name);
        assert!(run.join(TRACE_FILE).is_file());
        assert_eq!(&RunManifest::read(&run).unwrap(), m);
    }
    let traces = fs::read_dir(dir.path())
        .unwrap()
        .filter(|d| d.as_ref().unwrap().path().join(TRACE_FILE).is_file());
    assert_eq!(traces.count(), 2);
}

#[test]
fn reruns_and_worker_counts_give_identical_files() {
    let configs: Vec<RunConfig> = [
        SolverKind::Implicit,
        SolverKind::PcGrad,
        SolverKind::Mgda,
        SolverKind::Linear { lambda: 0.1 },
    ]
    .into_iter()
    .map(|s| quad(s, 4))
    .collect();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_grid(&configs, a.path(), 1).unwrap();
    let mut reversed = configs.clone();
    reversed.reverse();
    run_grid(&reversed, b.path(), 3).unwrap();
    for c in &configs {
        let name = c.run_name();
        for f in [TRACE_FILE, "config.toml"] {
            assert_eq!(
                read(&a.path().join(&name).join(f)),
                read(&b.path().join(&name).join(f)),
                "{name}/{f}"
            );
        }
    }
}

#[test]
fn flow_runs_are_deterministic() {
    let mut c = RunConfig::new(SolverKind::Implicit, ProblemKind::ToyflowImage, 3);
    c.max_steps = 20;
    c.eval.samples = 20;
    c.pretrain.steps = 200;
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    execute(&c, a.path()).unwrap();
    execute(&c, b.path()).unwrap();
    let name = c.run_name();
    for f in [TRACE_FILE, "samples.csv", "samples_base.csv"] {
        assert_eq!(
            read(&a.path().join(&name).join(f)),
            read(&b.path().join(&name).join(f)),
            "{f}"
        );
    }
}

#[test]
fn one_failing_run_does_not_stop_the_grid() {
    let dir = tempfile::tempdir().unwrap();
    let good = quad(SolverKind::Implicit, 1);
    let blocked = quad(SolverKind::Explicit, 2);
    // a plain file where the run directory should go
    fs::write(dir.path().join(blocked.run_name()), b"not a directory").unwrap();
    let mut diverging = quad(SolverKind::Implicit, 3);
    diverging.schedules.alpha = ScheduleSpec::Constant(10.0);
    let entries = run_grid(&[good.clone(), blocked, diverging.clone()], dir.path(), 2).unwrap();
    assert_eq!(entries[0].result.as_ref().unwrap().status, RunStatus::Complete);
    assert!(entries[1].result.is_err());
    let m = entries[2].result.as_ref().unwrap();
    assert_eq!(m.status, RunStatus::Aborted);
    assert!(m.steps_completed < 300);
    assert!(m.error.as_deref().unwrap().contains("step"), "{:?}", m.error);
    let t = read_trace(&dir.path().join(diverging.run_name()).join(TRACE_FILE)).unwrap();
    assert_eq!(t.len(), m.steps_completed);
    assert!(dir.path().join(good.run_name()).join(MANIFEST_FILE).is_file());
}

#[test]
fn duplicate_names_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let c = quad(SolverKind::Implicit, 1);
    assert!(run_grid(&[c.clone(), c], dir.path(), 1).is_err());
}

#[test]
fn traces_round_trip_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = quad(SolverKind::Implicit, 5);
    c.instrumentation = tolcone_core::Instrumentation::Full;
    execute(&c, dir.path()).unwrap();
    let path = dir.path().join(c.run_name()).join(TRACE_FILE);
    let text = fs::read_to_string(&path).unwrap();
    let header = text.lines().find(|l| !l.starts_with('#')).unwrap();
    for col in [
        "step",
        "loss_e",
        "loss_p",
        "lambda",
        "grad_norm_e",
        "grad_norm_p",
        "dir_norm",
        "stationarity",
        "delta",
    ] {
        assert!(header.split(',').any(|h| h == col), "missing column {col} in {header}");
    }
    let t = read_trace(&path).unwrap();
    assert_eq!(t.len(), 300);
    assert!(t.is_instrumented());
    assert_eq!(t.to_csv_string().unwrap(), text);
}

#[test]
fn grid_directories_load_sorted() {
    let dir = tempfile::tempdir().unwrap();
    for (f, s) in [("b.toml", "pcgrad"), ("a.toml", "mgda")] {
        fs::write(
            dir.path().join(f),
            format!("solver = \"{s}\"\nproblem = \"quadratic\"\nseed = 1\n"),
        )
        .unwrap();
    }
    fs::write(dir.path().join("notes.txt"), "ignored").unwrap();
    let configs = load_grid_dir(dir.path()).unwrap();
    let solvers: Vec<String> = configs.iter().map(|c| c.solver().to_string()).collect();
    assert_eq!(solvers, ["mgda", "pcgrad"]);
    fs::write(
        dir.path().join("c.toml"),
        "solver = \"pcgrad\"\nproblem = \"quadratic\"\n",
    )
    .unwrap();
    let err = load_grid_dir(dir.path()).unwrap_err().to_string();
    assert!(err.contains("c.toml") && err.contains("seed"), "{err}");
}
