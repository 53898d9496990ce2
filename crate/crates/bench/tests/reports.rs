use std::fs;
use std::path::{Path, PathBuf};

use tolcone_bench::config::ScheduleSpec;
use tolcone_bench::plot::{cone_diagram, plot, PlotKind};
use tolcone_bench::problem::{flow_samples, Problem};
use tolcone_bench::runner::{read_trace, CONFIG_FILE, SAMPLES_FILE, TRACE_FILE};
use tolcone_bench::summary::{render_table, summarize, summarize_one, write_summary_csv};
use tolcone_bench::{execute, ProblemKind, RunConfig};
use tolcone_core::{Instrumentation, SolverKind};
use tolcone_toyzoo::{write_samples, ConceptScores, FlowWorld, SampleRecord};

fn quad_run(dir: &Path, solver: SolverKind) -> PathBuf {
    let mut c = RunConfig::new(solver, ProblemKind::Quadratic, 2);
    c.max_steps = 200;
    c.schedules.alpha = ScheduleSpec::Constant(0.01);
    c.instrumentation = Instrumentation::Full;
    execute(&c, dir).unwrap();
    dir.join(c.run_name()).join(TRACE_FILE)
}

/// `hits` of 10 samples at `mode`, the rest far away.
fn records(concept: &str, mode: [f64; 2], hits: usize) -> Vec<SampleRecord> {
    (0..10)
        .map(|i| {
            let x = if i < hits { mode } else { [9.0, 9.0] };
            SampleRecord {
                concept: concept.into(),
                frame: 0,
                x1: x[0],
                x2: x[1],
                diverged: false,
            }
        })
        .collect()
}

#[test]
fn summary_computes_h_a_from_samples() {
    let dir = tempfile::tempdir().unwrap();
    let trace = quad_run(dir.path(), SolverKind::Implicit);
    let run = trace.parent().unwrap();
    let row = summarize_one(&trace);
    assert!(!row.complete);
    assert!(row.note.starts_with("incomplete"), "{}", row.note);
    assert_eq!(row.h_a, None);

    let mut r = records("target", [2.0, 0.0], 2);
    r.extend(records("irrelevant0", [0.0, 2.0], 9));
    r.extend(records("irrelevant1", [-2.0, 0.0], 9));
    r.extend(records("irrelevant2", [0.0, -2.0], 9));
    write_samples(&run.join(SAMPLES_FILE), &r).unwrap();
    let row = summarize_one(&trace);
    assert!(row.complete, "{}", row.note);
    assert_eq!(row.acc_e, Some(0.2));
    assert!((row.acc_ir.unwrap() - 0.9).abs() < 1e-12);
    assert!((row.h_a.unwrap() - 0.7).abs() < 1e-12);
    assert_eq!(row.steps, 200);
    assert_eq!(row.solver, "implicit");

    let table = render_table(std::slice::from_ref(&row));
    assert!(table.contains("0.700") && table.contains(&row.name));
    let csv = dir.path().join("summary.csv");
    write_summary_csv(&csv, &[row]).unwrap();
    let text = fs::read_to_string(csv).unwrap();
    assert!(text.starts_with("name,solver,steps"));
    assert_eq!(text.lines().count(), 2);
}

#[test]
fn unchanged_model_scores_match_the_base_model() {
    let mut c = RunConfig::new(SolverKind::Implicit, ProblemKind::ToyflowImage, 6);
    c.eval.samples = 30;
    c.pretrain.steps = 300;
    let Problem::Flow(pair) = Problem::build(&c).unwrap() else {
        panic!("flow problem expected")
    };
    let base = flow_samples(&pair, &pair.model().weights, &c).unwrap();
    let tuned = flow_samples(&pair, &pair.tuned_weights(&pair.theta0()).unwrap(), &c).unwrap();
    let world = FlowWorld::default();
    let a = ConceptScores::from_records(&base, &world, c.eval.radius).unwrap();
    let b = ConceptScores::from_records(&tuned, &world, c.eval.radius).unwrap();
    assert_eq!(a, b);
}

#[test]
fn unreadable_traces_are_marked() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("x").join(TRACE_FILE);
    fs::create_dir_all(bad.parent().unwrap()).unwrap();
    fs::write(&bad, "garbage\n1,2\n").unwrap();
    let rows = summarize(&[bad, dir.path().join("missing.csv")]);
    assert!(rows.iter().all(|r| !r.complete && !r.note.is_empty()));
}

#[test]
fn summary_reads_the_eval_radius_from_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let trace = quad_run(dir.path(), SolverKind::Explicit);
    let run = trace.parent().unwrap();
    // every sample 0.7 from its mode
    let mut r = Vec::new();
    for (c, m) in [("target", [2.0, 0.0]), ("irrelevant0", [0.0, 2.0])] {
        r.extend(records(c, [m[0] + 0.7, m[1]], 10));
    }
    write_samples(&run.join(SAMPLES_FILE), &r).unwrap();
    assert_eq!(summarize_one(&trace).acc_e, Some(0.0));
    let mut cfg = tolcone_bench::load_config(&run.join(CONFIG_FILE)).unwrap();
    cfg.eval.radius = 1.0;
    fs::write(run.join(CONFIG_FILE), cfg.to_toml_string()).unwrap();
    assert_eq!(summarize_one(&trace).acc_e, Some(1.0));
}

#[test]
fn plots_are_written_and_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = quad_run(dir.path(), SolverKind::Implicit);
    let b = quad_run(dir.path(), SolverKind::Mgda);
    let traces = vec![
        ("a".to_string(), read_trace(&a).unwrap()),
        ("b".to_string(), read_trace(&b).unwrap()),
    ];
    let out = dir.path().join("plots");

    let files = plot(&traces[..1], PlotKind::LossCurves, &out).unwrap();
    assert_eq!(files.len(), 1);
    let svg = fs::read_to_string(&files[0]).unwrap();
    assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    assert_eq!(svg.matches("<polyline").count(), 2);
    assert!(svg.contains(">step<") && svg.contains(">loss<"));
    let again = plot(&traces[..1], PlotKind::LossCurves, &out).unwrap();
    assert_eq!(fs::read_to_string(&again[0]).unwrap(), svg);

    let files = plot(&traces, PlotKind::ParetoScatter, &out).unwrap();
    let svg = fs::read_to_string(&files[0]).unwrap();
    assert_eq!(svg.matches("<circle").count(), 2);

    assert_eq!(plot(&traces, PlotKind::LambdaTrace, &out).unwrap().len(), 2);
    assert_eq!(plot(&traces, PlotKind::Stationarity, &out).unwrap().len(), 2);
    assert_eq!(plot(&[], PlotKind::ConeDiagram, &out).unwrap().len(), 1);
    assert!(plot(&[], PlotKind::LossCurves, &out).is_err());
    assert!(plot(&[], PlotKind::ParetoScatter, &out).is_err());
}

#[test]
fn empty_traces_cannot_be_plotted() {
    let dir = tempfile::tempdir().unwrap();
    let mut t = read_trace(&quad_run(dir.path(), SolverKind::Implicit)).unwrap();
    t.rows.clear();
    for kind in [PlotKind::LossCurves, PlotKind::LambdaTrace, PlotKind::Stationarity] {
        assert!(plot(&[("e".into(), t.clone())], kind, dir.path()).is_err());
    }
}

#[test]
fn cone_diagram_shows_the_surgered_direction() {
    let svg = cone_diagram([1.0, 0.0], [-1.0, 1.0], &[0.0, 0.3]).unwrap();
    assert_eq!(svg.matches("<polygon").count(), 2);
    // λ = (−ε − g_e·g_p)/‖g_p‖² = (1 − ε)/2
    assert!(svg.contains("tolerance 0: lambda = 0.5"), "{svg}");
    assert!(svg.contains("tolerance 0.3: lambda = 0.35"), "{svg}");
    assert!(cone_diagram([1.0, 0.0], [-1.0, 1.0], &[]).is_err());
}
