use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tolcone_toyzoo::{read_samples, ConceptScores, FlowWorld, SampleRecord};

use crate::config::{load_config, RunConfig};
use crate::runner::{read_trace, BASE_SAMPLES_FILE, CONFIG_FILE, SAMPLES_FILE};
use crate::Result;

/// One summarized run. Accuracies are pooled over frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub name: String,
    pub solver: String,
    pub steps: usize,
    pub final_loss_e: f64,
    pub final_loss_p: f64,
    pub final_lambda: f64,
    pub acc_e: Option<f64>,
    pub acc_ir: Option<f64>,
    pub h_a: Option<f64>,
    pub base_acc_e: Option<f64>,
    pub base_acc_ir: Option<f64>,
    /// False when the trace or its samples are missing or unreadable.
    pub complete: bool,
    pub note: String,
}

/// Scores per frame index.
pub fn per_frame_scores(
    records: &[SampleRecord],
    world: &FlowWorld,
    radius: f64,
) -> Result<BTreeMap<usize, ConceptScores>> {
    let mut frames: BTreeMap<usize, Vec<SampleRecord>> = BTreeMap::new();
    for r in records {
        frames.entry(r.frame).or_default().push(r.clone());
    }
    frames
        .into_iter()
        .map(|(f, rs)| Ok((f, ConceptScores::from_records(&rs, world, radius)?)))
        .collect()
}

fn run_dir(trace: &Path) -> PathBuf {
    trace.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn scores(dir: &Path, file: &str, radius: f64) -> std::result::Result<ConceptScores, String> {
    let records = read_samples(&dir.join(file)).map_err(|e| format!("{file}: {e}"))?;
    ConceptScores::from_records(&records, &FlowWorld::default(), radius).map_err(|e| format!("{file}: {e}"))
}

/// Summarizes one trace file, reading `config.toml` and the sample tables
/// from the same directory when present.
pub fn summarize_one(trace_path: &Path) -> SummaryRow {
    let dir = run_dir(trace_path);
    let name = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| trace_path.display().to_string());
    let mut row = SummaryRow {
        name,
        solver: String::new(),
        steps: 0,
        final_loss_e: f64::NAN,
        final_loss_p: f64::NAN,
        final_lambda: f64::NAN,
        acc_e: None,
        acc_ir: None,
        h_a: None,
        base_acc_e: None,
        base_acc_ir: None,
        complete: false,
        note: String::new(),
    };
    let trace = match read_trace(trace_path) {
        Ok(t) => t,
        Err(e) => {
            row.note = e.to_string();
            return row;
        }
    };
    row.solver = trace.solver.clone();
    row.steps = trace.len();
    row.final_loss_e = trace.final_loss_e;
    row.final_loss_p = trace.final_loss_p;
    row.final_lambda = trace.rows.last().map_or(f64::NAN, |r| r.lambda);
    let cfg: Option<RunConfig> = load_config(&dir.join(CONFIG_FILE)).ok();
    let radius = cfg
        .as_ref()
        .map_or(crate::config::EvalSettings::default().radius, |c| c.eval.radius);
    match scores(&dir, SAMPLES_FILE, radius) {
        Ok(s) => {
            row.acc_e = Some(s.acc_e);
            row.acc_ir = Some(s.acc_ir);
            row.h_a = Some(s.h_a());
            row.complete = trace.final_loss_e.is_finite();
        }
        Err(e) => row.note = format!("incomplete: {e}"),
    }
    if let Ok(b) = scores(&dir, BASE_SAMPLES_FILE, radius) {
        row.base_acc_e = Some(b.acc_e);
        row.base_acc_ir = Some(b.acc_ir);
    }
    row
}

pub fn summarize(traces: &[PathBuf]) -> Vec<SummaryRow> {
    traces.iter().map(|p| summarize_one(p)).collect()
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.3}"))
}

/// Fixed-width text table, one line per run.
pub fn render_table(rows: &[SummaryRow]) -> String {
    let mut s = format!(
        "{:<32} {:<12} {:>6} {:>12} {:>12} {:>9} {:>7} {:>7} {:>7}  note\n",
        "run", "solver", "steps", "L_e", "L_p", "lambda", "Acc_e", "Acc_ir", "H_a"
    );
    for r in rows {
        s.push_str(&format!(
            "{:<32} {:<12} {:>6} {:>12.5e} {:>12.5e} {:>9.4} {:>7} {:>7} {:>7}  {}\n",
            r.name,
            r.solver,
            r.steps,
            r.final_loss_e,
            r.final_loss_p,
            r.final_lambda,
            opt(r.acc_e),
            opt(r.acc_ir),
            opt(r.h_a),
            r.note
        ));
    }
    s
}

/// The same rows as CSV.
pub fn write_summary_csv(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| crate::BenchError::Input(e.to_string()))?;
    for r in rows {
        w.serialize(r).map_err(|e| crate::BenchError::Input(e.to_string()))?;
    }
    w.flush().map_err(|e| crate::BenchError::io(path, e))
}
