//! Checks that recorded traces respect the dual, utility, and rate bounds
//! of the method, plus the brute-force oracles those checks are tested
//! against.
//!
//! Every check is a pure function of a trace (and, where needed, a
//! smoothness estimate), so re-running analysis on a saved trace is
//! bit-identical.

mod checks;
mod qp;
mod smoothness;

pub use checks::{
    convex_rate_check, dual_gap_check, dual_gap_series, norm_bound_check, running_average, running_min,
    stationarity_rate_check, utility_bound_check, DualGapWindow, GAP_FLOOR,
};
pub use qp::{qp_oracle, QpSolution};
pub use smoothness::{estimate_smoothness, SmoothnessEstimate};

use serde::{Deserialize, Serialize};

use crate::baselines::{convex_combination, min_norm_weight};
use crate::vector::{norm, GradientPair, Gram};
use crate::Scalar;

/// Pareto stationarity: the norm of the min-norm point of the convex hull of
/// `{∇L_e, ∇L_p}`.
pub fn stationarity_measure<T: Scalar>(grads: &GradientPair<T>) -> T {
    if grads.e() == grads.p() {
        return norm(grads.e());
    }
    norm(&convex_combination(grads, min_norm_weight(grads.gram())))
}

pub(crate) fn stationarity_from_grads<T: Scalar>(grads: &GradientPair<T>) -> T {
    stationarity_measure(grads)
}

/// The same measure from Gram entries alone, as stored in traces.
pub fn stationarity_from_gram(gram: Gram<f64>) -> f64 {
    let g = min_norm_weight(gram);
    let h = 1.0 - g;
    (g * g * gram.ee + 2.0 * g * h * gram.ep + h * h * gram.pp)
        .max(0.0)
        .sqrt()
}

/// Least-squares slope of `ln y` against `ln x`. Points with non-positive
/// coordinates are dropped; `None` if fewer than two remain.
pub fn loglog_slope(points: &[(f64, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        None
    } else {
        Some(sxy / sxx)
    }
}

/// About `n` distinct integers spaced geometrically over `[lo, hi]`.
pub fn log_spaced(lo: usize, hi: usize, n: usize) -> Vec<usize> {
    let lo = lo.max(1);
    if hi <= lo || n < 2 {
        return vec![lo];
    }
    let (a, b) = ((lo as f64).ln(), (hi as f64).ln());
    let mut v: Vec<usize> = (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp().round() as usize)
        .map(|x| x.clamp(lo, hi))
        .collect();
    v.dedup();
    v
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckStatus {
    Pass,
    Fail,
    Skipped,
}

/// Outcome of one check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub status: CheckStatus,
    /// The measured quantity the check compares.
    pub statistic: Option<f64>,
    /// What it is compared against.
    pub bound: Option<f64>,
    pub slope: Option<f64>,
    pub window: Option<(usize, usize)>,
    pub detail: String,
}

impl CheckResult {
    pub fn new(name: impl Into<String>, status: CheckStatus) -> Self {
        Self {
            name: name.into(),
            status,
            statistic: None,
            bound: None,
            slope: None,
            window: None,
            detail: String::new(),
        }
    }

    pub fn passed(&self) -> bool {
        self.status == CheckStatus::Pass
    }

    fn with(mut self, statistic: f64, bound: f64) -> Self {
        self.statistic = Some(statistic);
        self.bound = Some(bound);
        self
    }

    fn detail(mut self, d: impl Into<String>) -> Self {
        self.detail = d.into();
        self
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6e}")).unwrap_or_else(|| "-".into())
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TheoremReport {
    pub checks: Vec<CheckResult>,
}

impl TheoremReport {
    pub fn push(&mut self, c: CheckResult) {
        self.checks.push(c);
    }

    /// No check failed. Skipped checks do not count against the report.
    pub fn ok(&self) -> bool {
        self.checks.iter().all(|c| c.status != CheckStatus::Fail)
    }

    /// One line per check:
    /// `STATUS name statistic=… bound=… slope=… window=[a,b] detail`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for c in &self.checks {
            let status = match c.status {
                CheckStatus::Pass => "PASS",
                CheckStatus::Fail => "FAIL",
                CheckStatus::Skipped => "SKIP",
            };
            let window = c
                .window
                .map(|(a, b)| format!("[{a},{b}]"))
                .unwrap_or_else(|| "-".into());
            s.push_str(&format!(
                "{status} {} statistic={} bound={} slope={} window={}",
                c.name,
                fmt_opt(c.statistic),
                fmt_opt(c.bound),
                fmt_opt(c.slope),
                window
            ));
            if !c.detail.is_empty() {
                s.push_str("  ");
                s.push_str(&c.detail);
            }
            s.push('\n');
        }
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(e: &[f64], p: &[f64]) -> GradientPair<f64> {
        GradientPair::from_f64(e, p).unwrap()
    }

    fn grid(g: &GradientPair<f64>) -> f64 {
        (0..=100_000)
            .map(|i| {
                let mu = i as f64 * 1e-5;
                norm(&convex_combination(g, mu))
            })
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn stationarity_examples() {
        assert_eq!(stationarity_measure(&pair(&[1.0, -2.0], &[-1.0, 2.0])), 0.0);
        assert_eq!(stationarity_measure(&pair(&[3.0, 4.0], &[3.0, 4.0])), 5.0);
        let g = pair(&[1.0, 0.0], &[0.0, 1.0]);
        assert!((stationarity_measure(&g) - 0.5f64.sqrt()).abs() < 1e-15);
        assert!((stationarity_measure(&g) - grid(&g)).abs() < 1e-6);
        assert!((stationarity_from_gram(g.gram()) - 0.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn slope_of_power_law() {
        let pts: Vec<(f64, f64)> = (1..100).map(|t| (t as f64, 3.0 * (t as f64).powf(-0.5))).collect();
        assert!((loglog_slope(&pts).unwrap() + 0.5).abs() < 1e-12);
        assert_eq!(loglog_slope(&[(1.0, 1.0)]), None);
    }

    #[test]
    fn log_spacing_covers_window() {
        let v = log_spaced(100, 10_000, 50);
        assert_eq!(v[0], 100);
        assert_eq!(*v.last().unwrap(), 10_000);
        assert!(v.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn report_rendering() {
        let mut r = TheoremReport::default();
        r.push(CheckResult::new("a", CheckStatus::Pass).with(1.0, 2.0));
        r.push(CheckResult::new("b", CheckStatus::Skipped).detail("precondition"));
        assert!(r.ok());
        let text = r.to_text();
        assert!(text.starts_with("PASS a statistic=1.000000e0 bound=2.000000e0"));
        assert!(text.contains("SKIP b"));
        let back: TheoremReport = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(back, r);
        r.push(CheckResult::new("c", CheckStatus::Fail));
        assert!(!r.ok());
    }
}
