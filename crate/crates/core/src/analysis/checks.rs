use super::{log_spaced, loglog_slope, CheckResult, CheckStatus};
use crate::trace::IterateTrace;
use crate::{Error, Result};

/// Composite suboptimality below this counts as converged to round-off.
pub const GAP_FLOOR: f64 = 1e-14;

/// `r_t = (1/t) Σ_{i<t} x_i` for `t = 1..=n`.
pub fn running_average(xs: &[f64]) -> Vec<f64> {
    let mut sum = 0.0;
    xs.iter()
        .enumerate()
        .map(|(i, x)| {
            sum += x;
            sum / (i + 1) as f64
        })
        .collect()
}

/// `m_t = min_{i<t} x_i` for `t = 1..=n`.
pub fn running_min(xs: &[f64]) -> Vec<f64> {
    let mut m = f64::INFINITY;
    xs.iter()
        .map(|&x| {
            m = m.min(x);
            m
        })
        .collect()
}

/// Degradation of `L_p` against its tolerance budget:
///
/// ```text
/// L_p(θ_t) − L_p(θ_0) ≤ c Σ_{i<t} α_i ε_i + (G/2) Σ_{i<t} α_i² ‖d_i‖²
/// ```
///
/// for every `t = 1..=M`, plus an absolute round-off allowance of
/// `1e-12 (1 + |L_p(θ_0)|)`. The statistic is the worst excess of
/// degradation over budget (negative when the check passes).
pub fn utility_bound_check(trace: &IterateTrace, slack: f64, smoothness: f64) -> CheckResult {
    let name = "utility-bound";
    let losses = trace.preservation_losses();
    if trace.is_empty() || losses.iter().any(|v| !v.is_finite()) {
        return CheckResult::new(name, CheckStatus::Skipped).detail("incomplete trace");
    }
    let l0 = losses[0];
    let tiny = 1e-12 * (1.0 + l0.abs());
    let (mut budget, mut second) = (0.0, 0.0);
    let mut worst = f64::NEG_INFINITY;
    let (mut worst_deg, mut worst_bound, mut worst_t) = (0.0, 0.0, 0);
    let mut max_deg = f64::NEG_INFINITY;
    for (i, row) in trace.rows.iter().enumerate() {
        budget += row.alpha * row.epsilon;
        second += row.alpha * row.alpha * row.dir_norm * row.dir_norm;
        let bound = slack * budget + 0.5 * smoothness * second + tiny;
        let deg = losses[i + 1] - l0;
        max_deg = max_deg.max(deg);
        if deg - bound > worst {
            worst = deg - bound;
            worst_deg = deg;
            worst_bound = bound;
            worst_t = i + 1;
        }
    }
    let status = if worst <= 0.0 {
        CheckStatus::Pass
    } else {
        CheckStatus::Fail
    };
    let mut c = CheckResult::new(name, status).with(worst, 0.0).detail(format!(
        "max degradation {max_deg:.6e}; tightest at t={worst_t}: degradation {worst_deg:.6e} vs budget {worst_bound:.6e} (c={slack}, G={smoothness:.6e})"
    ));
    c.window = Some((1, trace.len()));
    c
}

/// Per-step `L_t(λ_t) − min_{λ≥0} L_t(λ)` where `L_t` is the dual of step
/// `t` built from the recorded Gram entries and `ε_t`.
pub fn dual_gap_series(trace: &IterateTrace) -> Result<Vec<f64>> {
    trace
        .rows
        .iter()
        .map(|r| {
            let (ee, ep, pp) = r
                .gram()
                .ok_or(Error::MissingInstrumentation("dual gap needs per-step gradients"))?;
            let dual = |l: f64| 0.5 * (ee + 2.0 * l * ep + l * l * pp) + l * r.epsilon;
            let best = if pp > 0.0 {
                ((-ep - r.epsilon) / pp).max(0.0)
            } else {
                0.0
            };
            Ok((dual(r.lambda) - dual(best)).max(0.0))
        })
        .collect()
}

/// Window `[lo, hi]` (1-based step counts) for the running-average gap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualGapWindow {
    pub lo: usize,
    pub hi: usize,
    /// Fitted log-log slope must not exceed this.
    pub max_slope: f64,
}

impl Default for DualGapWindow {
    fn default() -> Self {
        Self {
            lo: 100,
            hi: 10_000,
            max_slope: -0.2,
        }
    }
}

/// Running-average dual gap decays over the window: its value at `hi` is
/// strictly below its value at `lo`, and the log-log slope fitted on
/// geometrically spaced points of the window is at most `max_slope`.
pub fn dual_gap_check(trace: &IterateTrace, w: DualGapWindow) -> Result<CheckResult> {
    let gaps = dual_gap_series(trace)?;
    let name = "dual-gap";
    if gaps.len() < w.hi || w.lo < 1 || w.lo >= w.hi {
        return Ok(CheckResult::new(name, CheckStatus::Skipped).detail(format!(
            "trace has {} steps, window needs {}",
            gaps.len(),
            w.hi
        )));
    }
    let avg = running_average(&gaps);
    let (a_lo, a_hi) = (avg[w.lo - 1], avg[w.hi - 1]);
    let pts: Vec<(f64, f64)> = log_spaced(w.lo, w.hi, 60)
        .into_iter()
        .map(|t| (t as f64, avg[t - 1]))
        .collect();
    let slope = loglog_slope(&pts);
    let ok = a_hi < a_lo && slope.is_some_and(|s| s <= w.max_slope);
    let mut c = CheckResult::new(name, if ok { CheckStatus::Pass } else { CheckStatus::Fail })
        .with(a_hi, a_lo)
        .detail(format!(
            "running-average gap {a_lo:.6e} at t={} -> {a_hi:.6e} at t={}; slope threshold {}",
            w.lo, w.hi, w.max_slope
        ));
    c.slope = slope;
    c.window = Some((w.lo, w.hi));
    Ok(c)
}

/// Composite suboptimality `C(θ_t) − C*` with `C = L_e + λ̄ L_p` decays at
/// least like `t^(−0.8)` on the tail window `[⌈M/10⌉, M]`, or reaches
/// [`GAP_FLOOR`]. A negative gap or a series that grows over the window
/// means `C*` does not match the trace and fails the check.
pub fn convex_rate_check(trace: &IterateTrace, weight: f64, optimum: f64, max_slope: f64) -> CheckResult {
    let name = "convex-rate";
    let le = trace.erasure_losses();
    let lp = trace.preservation_losses();
    let gap: Vec<f64> = le.iter().zip(&lp).map(|(e, p)| e + weight * p - optimum).collect();
    let m = gap.len() - 1;
    if m < 10 {
        return CheckResult::new(name, CheckStatus::Skipped).detail("trace too short");
    }
    // round-off in C itself
    let noise = 4.0 * f64::EPSILON * (optimum.abs() + 1.0);
    let lo = m.div_ceil(10).max(1);
    let window = &gap[lo..=m];
    let last = gap[m];
    let mut c = CheckResult::new(name, CheckStatus::Fail).with(last, GAP_FLOOR);
    c.window = Some((lo, m));
    if let Some(neg) = window.iter().position(|g| *g < -noise) {
        return c.detail(format!(
            "negative suboptimality at t={}; optimum inconsistent",
            lo + neg
        ));
    }
    if let Some(t) = gap.iter().position(|g| g.abs() <= GAP_FLOOR.max(noise)) {
        c.status = CheckStatus::Pass;
        return c.detail(format!("numerical floor reached at t={t}"));
    }
    if window.last() > window.first() {
        return c.detail("suboptimality grows over the window; non-monotone");
    }
    let pts: Vec<(f64, f64)> = log_spaced(lo, m, 60).into_iter().map(|t| (t as f64, gap[t])).collect();
    c.slope = loglog_slope(&pts);
    if c.slope.is_some_and(|s| s <= max_slope) {
        c.status = CheckStatus::Pass;
    }
    let slope = c.slope.unwrap_or(f64::NAN);
    c.detail(format!("tail slope {slope:.4} vs threshold {max_slope}"))
}

/// Running-min stationarity obeys `m_t ≤ c / √t`. `c` is fitted as
/// `max_{t ∈ [fit_lo, fit_hi]} m_t √t`; the bound is then asserted on
/// `[fit_hi, M]`, together with `m_M < m_{fit_hi}`.
pub fn stationarity_rate_check(trace: &IterateTrace, fit_lo: usize, fit_hi: usize) -> Result<CheckResult> {
    let s: Vec<f64> = trace
        .rows
        .iter()
        .map(|r| {
            r.stationarity
                .ok_or(Error::MissingInstrumentation("stationarity needs per-step gradients"))
        })
        .collect::<Result<_>>()?;
    let name = "stationarity-rate";
    let m = s.len();
    if fit_lo < 1 || fit_hi <= fit_lo || m <= fit_hi {
        return Ok(CheckResult::new(name, CheckStatus::Skipped).detail("trace shorter than fit window"));
    }
    let rm = running_min(&s);
    let c = (fit_lo..=fit_hi)
        .map(|t| rm[t - 1] * (t as f64).sqrt())
        .fold(0.0, f64::max);
    let worst = (fit_hi..=m)
        .map(|t| rm[t - 1] * (t as f64).sqrt() / c)
        .fold(0.0, f64::max);
    let decreased = rm[m - 1] < rm[fit_hi - 1];
    let ok = c.is_finite() && (worst <= 1.0 || c == 0.0) && (decreased || rm[fit_hi - 1] == 0.0);
    let mut r = CheckResult::new(name, if ok { CheckStatus::Pass } else { CheckStatus::Fail })
        .with(rm[m - 1], c / (m as f64).sqrt())
        .detail(format!(
            "fitted c={c:.6e}; running min {:.6e} at t={fit_hi} -> {:.6e} at t={m}; max m_t*sqrt(t)/c on tail {worst:.4}",
            rm[fit_hi - 1],
            rm[m - 1]
        ));
    r.window = Some((fit_hi, m));
    Ok(r)
}

/// Per-step norm bound
///
/// ```text
/// ‖d_i‖² ≤ (2/α_i)(L_e(θ_i) − L_e(θ_{i+1})) + 2 λ_i ε_i
/// ```
///
/// within `1e-9 (1 + ‖d_i‖²)`, which needs `α_i ≤ 1/G`; the check is
/// skipped otherwise.
pub fn norm_bound_check(trace: &IterateTrace, smoothness: f64) -> CheckResult {
    let name = "norm-bound";
    if trace.is_empty() {
        return CheckResult::new(name, CheckStatus::Skipped).detail("empty trace");
    }
    if !(smoothness > 0.0) {
        return CheckResult::new(name, CheckStatus::Skipped).detail("no smoothness estimate");
    }
    let amax = trace.rows.iter().map(|r| r.alpha).fold(0.0, f64::max);
    if amax > 1.0 / smoothness {
        return CheckResult::new(name, CheckStatus::Skipped)
            .detail(format!("step size {amax:.6e} exceeds 1/G = {:.6e}", 1.0 / smoothness));
    }
    let le = trace.erasure_losses();
    let mut worst = f64::NEG_INFINITY;
    let mut worst_t = 0;
    let mut violations = 0;
    for (i, r) in trace.rows.iter().enumerate() {
        let lhs = r.dir_norm * r.dir_norm;
        let rhs = 2.0 / r.alpha * (le[i] - le[i + 1]) + 2.0 * r.lambda * r.epsilon;
        let excess = (lhs - rhs) / (1.0 + lhs);
        if excess > 1e-9 {
            violations += 1;
        }
        if excess > worst {
            worst = excess;
            worst_t = i;
        }
    }
    let status = if violations == 0 {
        CheckStatus::Pass
    } else {
        CheckStatus::Fail
    };
    let mut c = CheckResult::new(name, status).with(worst, 1e-9).detail(format!(
        "{violations} violating steps; worst relative excess at step {worst_t}"
    ));
    c.window = Some((0, trace.len() - 1));
    c
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::TraceRow;

    fn row(step: usize, le: f64, lp: f64) -> TraceRow {
        TraceRow {
            step,
            loss_e: le,
            loss_p: lp,
            lambda: 0.0,
            grad_norm_e: None,
            grad_norm_p: None,
            dir_norm: 0.0,
            stationarity: None,
            delta: 0.0,
            alpha: 0.1,
            epsilon: 0.0,
            grad_dot: None,
        }
    }

    fn trace_of(le: &[f64], lp: &[f64]) -> IterateTrace {
        let mut t = IterateTrace::new("test");
        for i in 0..le.len() - 1 {
            t.rows.push(row(i, le[i], lp[i]));
        }
        t.final_loss_e = *le.last().unwrap();
        t.final_loss_p = *lp.last().unwrap();
        t
    }

    #[test]
    fn running_helpers() {
        assert_eq!(running_average(&[1.0, 3.0, 5.0]), vec![1.0, 2.0, 3.0]);
        assert_eq!(running_min(&[3.0, 1.0, 2.0, 0.5]), vec![3.0, 1.0, 1.0, 0.5]);
    }

    #[test]
    fn utility_bound_flags_growth() {
        let lp: Vec<f64> = (0..20).map(|i| i as f64 * 0.01).collect();
        let t = trace_of(&[0.0; 20], &lp);
        assert_eq!(utility_bound_check(&t, 2.0, 1.0).status, CheckStatus::Fail);
        let mut t = t;
        for r in &mut t.rows {
            r.epsilon = 0.1;
        }
        // budget per step 2·0.1·0.1 = 0.02 ≥ 0.01 per step growth
        assert_eq!(utility_bound_check(&t, 2.0, 1.0).status, CheckStatus::Pass);
    }

    #[test]
    fn dual_gap_zero_at_optimum_and_needs_instrumentation() {
        let mut t = trace_of(&[1.0, 1.0], &[1.0, 1.0]);
        assert!(dual_gap_series(&t).is_err());
        // g_e=(1,0), g_p=(−1,1): λ* = 0.5
        t.rows[0].grad_norm_e = Some(1.0);
        t.rows[0].grad_norm_p = Some(2f64.sqrt());
        t.rows[0].grad_dot = Some(-1.0);
        t.rows[0].lambda = 0.5;
        assert!(dual_gap_series(&t).unwrap()[0].abs() < 1e-15);
        t.rows[0].lambda = 1.5;
        // ½·pp·(1)² = 1
        assert!((dual_gap_series(&t).unwrap()[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn convex_rate_cases() {
        let le: Vec<f64> = (0..2000).map(|t| 1.0 / (t as f64 + 1.0)).collect();
        let t = trace_of(&le, &vec![0.0; 2000]);
        let c = convex_rate_check(&t, 1.0, 0.0, -0.8);
        assert!(c.passed(), "{c:?}");
        // already optimal
        let t0 = trace_of(&[2.0; 50], &[0.0; 50]);
        assert!(convex_rate_check(&t0, 1.0, 2.0, -0.8).passed());
        // a wrong optimum above the limit shows up as negative gaps
        let c = convex_rate_check(&t, 1.0, 0.01, -0.8);
        assert_eq!(c.status, CheckStatus::Fail);
        // and one below it flattens the slope
        let c = convex_rate_check(&t, 1.0, -0.01, -0.8);
        assert_eq!(c.status, CheckStatus::Fail);
    }

    #[test]
    fn stationarity_rate_cases() {
        let mut t = trace_of(&vec![0.0; 1001], &vec![0.0; 1001]);
        for (i, r) in t.rows.iter_mut().enumerate() {
            r.stationarity = Some(1.0 / ((i + 1) as f64));
        }
        assert!(stationarity_rate_check(&t, 10, 100).unwrap().passed());
        for r in &mut t.rows {
            r.stationarity = Some(0.3);
        }
        assert!(!stationarity_rate_check(&t, 10, 100).unwrap().passed());
        t.rows[5].stationarity = None;
        assert!(stationarity_rate_check(&t, 10, 100).is_err());
    }

    #[test]
    fn norm_bound_gate_and_zero_steps() {
        let t = trace_of(&[1.0; 10], &[1.0; 10]);
        assert!(norm_bound_check(&t, 1.0).passed());
        let c = norm_bound_check(&t, 100.0);
        assert_eq!(c.status, CheckStatus::Skipped);
    }
}
