//! Per-step run records and their delimited-text form.
//!
//! File layout (one trace per file):
//!
//! ```text
//! # tolcone-trace v1
//! # solver=<label>
//! # final_loss_e=<f64>
//! # final_loss_p=<f64>
//! # counts=loss_e:<n>,loss_p:<n>,grad_e:<n>,grad_p:<n>,grad_composite:<n>,instrumentation:<n>
//! step,loss_e,loss_p,lambda,grad_norm_e,grad_norm_p,dir_norm,stationarity,delta,alpha,epsilon,grad_dot
//! 0,...
//! ```
//!
//! Losses are measured at `θ_t` before the step; `lambda` is the weight the
//! step actually used; `delta` is the drift estimate `δ̃_t` for solvers that
//! only form the composite gradient (implicit, linear) and the exact dual
//! slope `∇L_p·d_t + ε_t` for the others.
//! Columns that need both gradients separately (`grad_norm_e`,
//! `grad_norm_p`, `stationarity`, `grad_dot`) are empty unless the solver
//! computed them or full instrumentation was on. Floats are written in
//! shortest round-trip form, so parsing recovers the exact values.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::objective::OracleCounts;
use crate::{Error, Result};

pub const TRACE_MAGIC: &str = "# tolcone-trace v1";

pub const TRACE_COLUMNS: [&str; 12] = [
    "step",
    "loss_e",
    "loss_p",
    "lambda",
    "grad_norm_e",
    "grad_norm_p",
    "dir_norm",
    "stationarity",
    "delta",
    "alpha",
    "epsilon",
    "grad_dot",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: usize,
    pub loss_e: f64,
    pub loss_p: f64,
    pub lambda: f64,
    pub grad_norm_e: Option<f64>,
    pub grad_norm_p: Option<f64>,
    pub dir_norm: f64,
    pub stationarity: Option<f64>,
    pub delta: f64,
    pub alpha: f64,
    pub epsilon: f64,
    /// `∇L_e · ∇L_p`
    pub grad_dot: Option<f64>,
}

impl TraceRow {
    fn values(&self) -> [Option<f64>; 11] {
        [
            Some(self.loss_e),
            Some(self.loss_p),
            Some(self.lambda),
            self.grad_norm_e,
            self.grad_norm_p,
            Some(self.dir_norm),
            self.stationarity,
            Some(self.delta),
            Some(self.alpha),
            Some(self.epsilon),
            self.grad_dot,
        ]
    }

    /// Gram entries `(‖g_e‖², g_e·g_p, ‖g_p‖²)` when instrumented.
    pub fn gram(&self) -> Option<(f64, f64, f64)> {
        let ne = self.grad_norm_e?;
        let np = self.grad_norm_p?;
        Some((ne * ne, self.grad_dot?, np * np))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterateTrace {
    pub solver: String,
    pub rows: Vec<TraceRow>,
    pub counts: OracleCounts,
    /// Losses at `θ_M`, after the last step.
    pub final_loss_e: f64,
    pub final_loss_p: f64,
}

impl IterateTrace {
    pub fn new(solver: impl Into<String>) -> Self {
        Self {
            solver: solver.into(),
            rows: Vec::new(),
            counts: OracleCounts::default(),
            final_loss_e: f64::NAN,
            final_loss_p: f64::NAN,
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// `L_p(θ_t)` for `t = 0..=M`.
    pub fn preservation_losses(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.rows.iter().map(|r| r.loss_p).collect();
        v.push(self.final_loss_p);
        v
    }

    /// `L_e(θ_t)` for `t = 0..=M`.
    pub fn erasure_losses(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.rows.iter().map(|r| r.loss_e).collect();
        v.push(self.final_loss_e);
        v
    }

    pub fn is_instrumented(&self) -> bool {
        !self.rows.is_empty() && self.rows.iter().all(|r| r.gram().is_some())
    }

    /// Checks the record invariants: steps numbered `0..M`, every present
    /// value finite, and `λ ≥ 0` on every row.
    pub fn validate(&self) -> Result<()> {
        for (i, row) in self.rows.iter().enumerate() {
            if row.step != i {
                return Err(Error::TraceFormat(format!("row {i} carries step index {}", row.step)));
            }
            if let Some(v) = row.values().into_iter().flatten().find(|v| !v.is_finite()) {
                return Err(Error::TraceFormat(format!("non-finite value {v} at step {i}")));
            }
            if row.lambda < 0.0 {
                return Err(Error::TraceFormat(format!(
                    "negative lambda {} at step {i}",
                    row.lambda
                )));
            }
        }
        Ok(())
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        let c = &self.counts;
        writeln!(out, "{TRACE_MAGIC}")?;
        writeln!(out, "# solver={}", self.solver)?;
        writeln!(out, "# final_loss_e={}", self.final_loss_e)?;
        writeln!(out, "# final_loss_p={}", self.final_loss_p)?;
        writeln!(
            out,
            "# counts=loss_e:{},loss_p:{},grad_e:{},grad_p:{},grad_composite:{},instrumentation:{}",
            c.loss_e, c.loss_p, c.grad_e, c.grad_p, c.grad_composite, c.instrumentation
        )?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(TRACE_COLUMNS)?;
        for row in &self.rows {
            let mut rec = vec![row.step.to_string()];
            rec.extend(
                row.values()
                    .iter()
                    .map(|v| v.map(|x| x.to_string()).unwrap_or_default()),
            );
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        String::from_utf8(buf).map_err(|e| Error::TraceFormat(e.to_string()))
    }

    pub fn read_from<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = Vec::new();
        let mut body = String::new();
        for line in input.lines() {
            let line = line?;
            if line.starts_with('#') {
                lines.push(line);
            } else {
                body.push_str(&line);
                body.push('\n');
            }
        }
        if lines.first().map(String::as_str) != Some(TRACE_MAGIC) {
            return Err(Error::TraceFormat("missing trace header line".into()));
        }
        let meta = |key: &str| -> Result<String> {
            let prefix = format!("# {key}=");
            lines
                .iter()
                .find_map(|l| l.strip_prefix(&prefix).map(str::to_owned))
                .ok_or_else(|| Error::TraceFormat(format!("missing metadata `{key}`")))
        };
        let parse_f = |s: &str| -> Result<f64> {
            s.trim()
                .parse::<f64>()
                .map_err(|e| Error::TraceFormat(format!("bad number `{s}`: {e}")))
        };

        let mut trace = IterateTrace::new(meta("solver")?);
        trace.final_loss_e = parse_f(&meta("final_loss_e")?)?;
        trace.final_loss_p = parse_f(&meta("final_loss_p")?)?;
        trace.counts = parse_counts(&meta("counts")?)?;

        let mut reader = csv::Reader::from_reader(body.as_bytes());
        let headers = reader.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != TRACE_COLUMNS {
            return Err(Error::TraceFormat(format!("unexpected columns: {headers:?}")));
        }
        for rec in reader.records() {
            let rec = rec?;
            let opt = |i: usize| -> Result<Option<f64>> {
                let s = &rec[i];
                if s.is_empty() {
                    Ok(None)
                } else {
                    parse_f(s).map(Some)
                }
            };
            let req = |i: usize| -> Result<f64> {
                opt(i)?.ok_or_else(|| Error::TraceFormat(format!("empty `{}`", TRACE_COLUMNS[i])))
            };
            trace.rows.push(TraceRow {
                step: rec[0]
                    .parse()
                    .map_err(|e| Error::TraceFormat(format!("bad step: {e}")))?,
                loss_e: req(1)?,
                loss_p: req(2)?,
                lambda: req(3)?,
                grad_norm_e: opt(4)?,
                grad_norm_p: opt(5)?,
                dir_norm: req(6)?,
                stationarity: opt(7)?,
                delta: req(8)?,
                alpha: req(9)?,
                epsilon: req(10)?,
                grad_dot: opt(11)?,
            });
        }
        Ok(trace)
    }

    pub fn from_csv_str(s: &str) -> Result<Self> {
        Self::read_from(s.as_bytes())
    }
}

fn parse_counts(s: &str) -> Result<OracleCounts> {
    let mut c = OracleCounts::default();
    for part in s.split(',') {
        let (k, v) = part
            .split_once(':')
            .ok_or_else(|| Error::TraceFormat(format!("bad counts entry `{part}`")))?;
        let n: u64 = v
            .parse()
            .map_err(|e| Error::TraceFormat(format!("bad count `{v}`: {e}")))?;
        match k {
            "loss_e" => c.loss_e = n,
            "loss_p" => c.loss_p = n,
            "grad_e" => c.grad_e = n,
            "grad_p" => c.grad_p = n,
            "grad_composite" => c.grad_composite = n,
            "instrumentation" => c.instrumentation = n,
            _ => return Err(Error::TraceFormat(format!("unknown counter `{k}`"))),
        }
    }
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn arb_row(step: usize) -> impl Strategy<Value = TraceRow> {
        let f = || prop_oneof![any::<f64>().prop_filter("finite", |v| v.is_finite()), -1e3f64..1e3];
        let o = move || proptest::option::of(f());
        (f(), f(), 0.0f64..1e6, o(), o(), f(), o(), f(), f(), f(), o()).prop_map(
            move |(le, lp, lam, ne, np, dn, st, de, al, ep, gd)| TraceRow {
                step,
                loss_e: le,
                loss_p: lp,
                lambda: lam,
                grad_norm_e: ne,
                grad_norm_p: np,
                dir_norm: dn,
                stationarity: st,
                delta: de,
                alpha: al,
                epsilon: ep,
                grad_dot: gd,
            },
        )
    }

    proptest! {
        #[test]
        fn csv_round_trip_is_lossless(rows in proptest::collection::vec(arb_row(0), 1..20), fe in -1e9f64..1e9, n in 0u64..1000) {
            let mut t = IterateTrace::new("implicit");
            t.rows = rows.into_iter().enumerate().map(|(i, mut r)| { r.step = i; r }).collect();
            t.final_loss_e = fe;
            t.final_loss_p = -fe;
            t.counts.grad_composite = n;
            t.counts.loss_p = 2 * n;
            let text = t.to_csv_string().unwrap();
            let back = IterateTrace::from_csv_str(&text).unwrap();
            prop_assert_eq!(back, t);
        }
    }

    #[test]
    fn validate_catches_negative_lambda_and_nan() {
        let row = TraceRow {
            step: 0,
            loss_e: 1.0,
            loss_p: 1.0,
            lambda: 0.0,
            grad_norm_e: None,
            grad_norm_p: None,
            dir_norm: 0.0,
            stationarity: None,
            delta: 0.0,
            alpha: 0.1,
            epsilon: 0.0,
            grad_dot: None,
        };
        let mut t = IterateTrace::new("x");
        t.rows.push(row.clone());
        assert!(t.validate().is_ok());
        t.rows[0].lambda = -1e-3;
        assert!(t.validate().is_err());
        t.rows[0].lambda = 0.0;
        t.rows[0].loss_p = f64::NAN;
        assert!(t.validate().is_err());
    }

    #[test]
    fn rejects_foreign_files() {
        assert!(IterateTrace::from_csv_str("step,loss_e\n0,1\n").is_err());
    }
}
