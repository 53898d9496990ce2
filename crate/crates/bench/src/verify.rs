//! The verification suite: thirteen numbered criteria, each reduced to a
//! [`TheoremReport`]. `tolcone verify` and the acceptance test both run
//! it.
//!
//! Every criterion also yields a fingerprint (SHA-256 over its report and
//! any files it produced) so that determinism can be checked by running a
//! criterion twice.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DMatrix;
use sha2::{Digest, Sha256};
use tolcone_core::analysis::{
    convex_rate_check, dual_gap_check, estimate_smoothness, norm_bound_check, qp_oracle, stationarity_rate_check,
    utility_bound_check, CheckResult, CheckStatus, DualGapWindow, TheoremReport,
};
use tolcone_core::fd::{finite_difference_gradient, relative_error, FdStep};
use tolcone_core::surgery::{closed_form_lambda, explicit_direction};
use tolcone_core::vector::{dot, max_abs_diff};
use tolcone_core::{
    run, GradientPair, Instrumentation, IterateTrace, ObjectivePair, ParamVec, Schedule, SeededRng, SolverKind,
    SurgeryConfig,
};
use tolcone_toyzoo::{
    attention_regularizer, esd_velocity_loss, lora_preservation_loss, rsc_grad_fe, rsc_loss,
    volumetric_attention_regularizer, AttentionToyPair, Concept, ConceptFeatures, ErasureSettings, FlowErasurePair,
    FlowWorld, Frame, Lora, LossWeights, NonconvexPair, Probe, QuadraticPair, ToyAttention, ToyFlowModel,
};

use crate::config::{ProblemKind, RunConfig};
use crate::runner::{run_grid, RunStatus, BASE_SAMPLES_FILE, SAMPLES_FILE, TRACE_FILE};
use crate::summary::{per_frame_scores, summarize_one};
use crate::{BenchError, Result};

/// Criterion ids in order.
pub const CRITERIA: [u8; 13] = [1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13];

/// Solvers of the ablation grid; the first is the method under test.
pub const ABLATION_SOLVERS: [&str; 6] = ["implicit", "explicit", "pcgrad", "mgda", "linear(0.1)", "linear(10)"];
pub const ABLATION_SEEDS: [u64; 3] = [0, 1, 2];

/// Where grid-backed criteria write their runs.
#[derive(Debug, Clone)]
pub struct VerifyContext {
    pub out_dir: PathBuf,
    pub workers: usize,
}

#[derive(Debug, Clone)]
pub struct CriterionOutcome {
    pub id: u8,
    pub title: &'static str,
    pub report: TheoremReport,
    pub seconds: f64,
    /// Wall-clock limit, when the criterion has one.
    pub limit_seconds: Option<f64>,
    pub fingerprint: String,
}

impl CriterionOutcome {
    pub fn within_limit(&self) -> bool {
        self.limit_seconds.is_none_or(|l| self.seconds < l)
    }

    pub fn passed(&self) -> bool {
        !self.report.checks.is_empty() && self.report.ok() && self.within_limit()
    }

    /// `PASS criterion  3: title [12.3 s]  (first failing check, if any)`
    pub fn line(&self) -> String {
        let status = if self.passed() { "PASS" } else { "FAIL" };
        let time = match self.limit_seconds {
            Some(l) => format!("{:.1} s, limit {l} s", self.seconds),
            None => format!("{:.1} s", self.seconds),
        };
        let mut s = format!("{status} criterion {:>2}: {} [{time}]", self.id, self.title);
        if let Some(c) = self.report.checks.iter().find(|c| c.status == CheckStatus::Fail) {
            s.push_str(&format!("  first failure: {} ({})", c.name, c.detail));
        }
        s
    }
}

pub fn title(id: u8) -> &'static str {
    match id {
        1 => "closed-form dual weight and direction match the numeric oracle",
        2 => "active-constraint identity",
        3 => "preservation degradation stays within the tolerance budget",
        4 => "running-average dual gap decays",
        5 => "composite suboptimality rate on convex pairs",
        6 => "running-min Pareto stationarity decays like t^-1/2",
        7 => "per-step direction norm bound",
        8 => "gradient evaluations per step: implicit 1, explicit 2",
        9 => "toy loss gradients match finite differences",
        10 => "contrastive loss identities",
        11 => "ablation ordering of H_a on the toy flow task",
        12 => "anchor-and-propagate reductions and per-frame erasure",
        13 => "byte-identical reruns",
        _ => "unknown criterion",
    }
}

fn limit(id: u8) -> Option<f64> {
    match id {
        1 => Some(10.0),
        3 => Some(30.0),
        11 => Some(300.0),
        _ => None,
    }
}

fn check(name: impl Into<String>, ok: bool, statistic: f64, bound: f64, detail: impl Into<String>) -> CheckResult {
    let mut c = CheckResult::new(name, if ok { CheckStatus::Pass } else { CheckStatus::Fail });
    c.statistic = Some(statistic);
    c.bound = Some(bound);
    c.detail = detail.into();
    c
}

fn renamed(mut c: CheckResult, name: String) -> CheckResult {
    c.name = name;
    c
}

/// Accumulates report text and artifact bytes into a fingerprint.
#[derive(Default)]
struct Fingerprint(Sha256);

impl Fingerprint {
    fn add(&mut self, bytes: &[u8]) {
        self.0.update((bytes.len() as u64).to_le_bytes());
        self.0.update(bytes);
    }

    fn add_trace(&mut self, t: &IterateTrace) {
        self.add(t.to_csv_string().expect("trace renders").as_bytes());
    }

    fn finish(self, report: &TheoremReport) -> String {
        let mut h = self.0;
        h.update(report.to_json().as_bytes());
        hex::encode(h.finalize())
    }
}

/// Runs one criterion.
pub fn run_criterion(id: u8, ctx: &VerifyContext) -> Result<CriterionOutcome> {
    let start = Instant::now();
    let mut fp = Fingerprint::default();
    let report = match id {
        1 => closed_form_vs_oracle(),
        2 => active_constraint(),
        3 => utility_bound(&mut fp)?,
        4 => dual_gap(&mut fp)?,
        5 => convex_rate(&mut fp)?,
        6 => stationarity(&mut fp)?,
        7 => norm_bound(&mut fp)?,
        8 => oracle_counts(&mut fp)?,
        9 => gradient_checks()?,
        10 => rsc_identities()?,
        11 => ablation(ctx, &mut fp)?,
        12 => anchor_and_propagate(ctx, &mut fp)?,
        13 => determinism(ctx)?,
        _ => return Err(BenchError::Input(format!("no criterion {id}; expected 1..=13"))),
    };
    Ok(CriterionOutcome {
        id,
        title: title(id),
        seconds: start.elapsed().as_secs_f64(),
        limit_seconds: limit(id),
        fingerprint: fp.finish(&report),
        report,
    })
}

// ---------------------------------------------------------------- 1, 2

fn random_instances(seed: u64) -> Vec<(GradientPair<f64>, f64)> {
    let mut rng = SeededRng::new(seed);
    (0..1000)
        .map(|i| {
            let dim = 2 + rng.below(63);
            let g = GradientPair::new(rng.normal_vec(dim), rng.normal_vec(dim)).expect("finite gradients");
            (g, [0.0, 0.1, 1.0][i % 3])
        })
        .collect()
}

const INSTANCE_SEED: u64 = 20_240_601;

fn closed_form_vs_oracle() -> TheoremReport {
    let mut report = TheoremReport::default();
    let (mut worst_l, mut worst_d) = (0.0f64, 0.0f64);
    let mut failures = 0;
    for (g, eps) in random_instances(INSTANCE_SEED) {
        match qp_oracle(&g, eps) {
            Ok(o) => {
                let s = explicit_direction(&g, eps);
                worst_l = worst_l.max((s.weight() - o.lambda).abs());
                worst_d = worst_d.max(max_abs_diff(&s.direction, &o.direction));
            }
            Err(_) => failures += 1,
        }
    }
    report.push(check(
        "oracle-converged",
        failures == 0,
        failures as f64,
        0.0,
        format!("{failures} of 1000 oracle solves failed"),
    ));
    report.push(check(
        "lambda-agreement",
        worst_l <= 1e-6,
        worst_l,
        1e-6,
        "max |lambda - oracle|",
    ));
    report.push(check(
        "direction-agreement",
        worst_d <= 1e-6,
        worst_d,
        1e-6,
        "max |d - oracle| (sup norm)",
    ));
    report
}

fn active_constraint() -> TheoremReport {
    let mut report = TheoremReport::default();
    let (mut worst, mut active, mut inactive_mismatch) = (0.0f64, 0, 0);
    for (g, eps) in random_instances(INSTANCE_SEED) {
        let lambda = closed_form_lambda(&g, eps).expect("valid tolerance");
        let s = explicit_direction(&g, eps);
        if lambda > 0.0 {
            active += 1;
            worst = worst.max((dot(g.p(), &s.direction) + eps).abs());
        } else if s.direction != g.e() {
            inactive_mismatch += 1;
        }
    }
    report.push(check(
        "active-identity",
        worst <= 1e-10,
        worst,
        1e-10,
        format!("max |grad_p . d + eps| over {active} active instances"),
    ));
    report.push(check(
        "inactive-identity",
        inactive_mismatch == 0,
        inactive_mismatch as f64,
        0.0,
        format!(
            "{inactive_mismatch} of {} inactive instances changed the direction",
            1000 - active
        ),
    ));
    report
}

// ---------------------------------------------------------------- 3–7

const QUAD_SEEDS: [u64; 3] = [11, 12, 13];
const THEOREM_STEPS: usize = 10_000;
const QUAD_ALPHA: f64 = 0.01;
const NONCONVEX_ALPHA: f64 = 0.03;

fn quadratic(seed: u64) -> Result<QuadraticPair> {
    Ok(QuadraticPair::random_conflicting(
        8,
        4.0,
        4.0,
        &mut SeededRng::new(seed),
    )?)
}

fn config(alpha: Schedule, beta: Schedule, epsilon: Schedule, full: bool) -> SurgeryConfig {
    SurgeryConfig {
        alpha,
        beta,
        epsilon,
        max_steps: THEOREM_STEPS,
        instrumentation: if full {
            Instrumentation::Full
        } else {
            Instrumentation::Light
        },
        ..SurgeryConfig::default()
    }
}

fn solve<P: ObjectivePair<f64>>(
    kind: SolverKind,
    theta0: Vec<f64>,
    pair: P,
    cfg: &SurgeryConfig,
) -> Result<IterateTrace> {
    let out = run(kind, ParamVec::new(theta0)?, pair, cfg).map_err(|a| BenchError::Input(a.to_string()))?;
    Ok(out.trace)
}

fn quad_run(q: &QuadraticPair, kind: SolverKind, eps: f64, full: bool) -> Result<IterateTrace> {
    let cfg = config(
        Schedule::constant(QUAD_ALPHA),
        Schedule::constant(0.1),
        Schedule::constant(eps),
        full,
    );
    solve(kind, q.center_p().as_slice().to_vec(), q, &cfg)
}

fn utility_bound(fp: &mut Fingerprint) -> Result<TheoremReport> {
    let mut report = TheoremReport::default();
    for seed in QUAD_SEEDS {
        let q = quadratic(seed)?;
        for eps in [0.0, 0.01, 0.1] {
            let t = quad_run(&q, SolverKind::Explicit, eps, false)?;
            fp.add_trace(&t);
            let c = utility_bound_check(&t, 2.0, q.smoothness());
            report.push(renamed(c, format!("utility-bound pair={seed} eps={eps}")));
        }
        // plain descent on L_e must break the same budget
        let t = quad_run(&q, SolverKind::Linear { lambda: 0.0 }, 0.01, false)?;
        fp.add_trace(&t);
        let c = utility_bound_check(&t, 2.0, q.smoothness());
        let violated = c.status == CheckStatus::Fail;
        report.push(check(
            format!("negative-control pair={seed}"),
            violated,
            c.statistic.unwrap_or(f64::NAN),
            0.0,
            format!("plain descent must exceed the budget: {}", c.detail),
        ));
    }
    Ok(report)
}

/// Summable schedules for the dual-gap run: `α_t = 0.2 (t+1)^(−1.01)`,
/// `ε_t = 0.01 (t+1)^(−1.01)` and `β_t = α_t (t+1)^(−1/3)`.
pub fn dual_gap_config() -> SurgeryConfig {
    const DECAY: f64 = 1.01;
    config(
        Schedule::power_decay(0.2, DECAY),
        Schedule::power_decay(0.2, DECAY + 1.0 / 3.0),
        Schedule::power_decay(0.01, DECAY),
        true,
    )
}

fn dual_gap(fp: &mut Fingerprint) -> Result<TheoremReport> {
    let mut report = TheoremReport::default();
    let cfg = dual_gap_config();
    for seed in QUAD_SEEDS {
        let q = quadratic(seed)?;
        let t = solve(SolverKind::Implicit, q.center_p().as_slice().to_vec(), &q, &cfg)?;
        fp.add_trace(&t);
        let c = dual_gap_check(&t, DualGapWindow::default())?;
        report.push(renamed(c, format!("dual-gap pair={seed}")));
    }
    Ok(report)
}

fn convex_rate(fp: &mut Fingerprint) -> Result<TheoremReport> {
    let mut report = TheoremReport::default();
    for seed in QUAD_SEEDS {
        let q = quadratic(seed)?;
        let t = quad_run(&q, SolverKind::Explicit, 0.01, false)?;
        fp.add_trace(&t);
        let weight = t.rows.last().map_or(0.0, |r| r.lambda);
        let (_, optimum) = q.composite_minimum(weight)?;
        let c = convex_rate_check(&t, weight, optimum, -0.8);
        report.push(renamed(c, format!("convex-rate pair={seed}")));
    }
    Ok(report)
}

fn stationarity(fp: &mut Fingerprint) -> Result<TheoremReport> {
    let mut report = TheoremReport::default();
    for seed in QUAD_SEEDS {
        let n = NonconvexPair::random(8, 2.0, 0.5, &mut SeededRng::new(seed));
        for kind in [SolverKind::Explicit, SolverKind::Implicit] {
            let cfg = config(
                Schedule::constant(NONCONVEX_ALPHA),
                Schedule::constant(0.1),
                Schedule::constant(0.01),
                true,
            );
            let t = solve(kind, vec![0.0; 8], &n, &cfg)?;
            fp.add_trace(&t);
            let c = stationarity_rate_check(&t, 10, 100)?;
            report.push(renamed(c, format!("stationarity-rate pair={seed} solver={kind}")));
        }
    }
    Ok(report)
}

fn norm_bound(fp: &mut Fingerprint) -> Result<TheoremReport> {
    let mut report = TheoremReport::default();
    for seed in QUAD_SEEDS {
        let q = quadratic(seed)?;
        let center = q.center_p().as_slice().to_vec();
        let est = estimate_smoothness(&q, &center, 4.0, 200, &mut SeededRng::new(seed ^ 0x5eed));
        for eps in [0.0, 0.01, 0.1] {
            let t = quad_run(&q, SolverKind::Explicit, eps, false)?;
            fp.add_trace(&t);
            let mut c = norm_bound_check(&t, est.smoothness);
            c.name = format!("norm-bound pair={seed} eps={eps}");
            if c.status == CheckStatus::Skipped {
                c.status = CheckStatus::Fail;
                c.detail = format!("precondition not met: {}", c.detail);
            }
            c.detail = format!("{}; fitted G={:.4}", c.detail, est.smoothness);
            report.push(c);
        }
    }
    Ok(report)
}

// ---------------------------------------------------------------- 8

fn oracle_counts(fp: &mut Fingerprint) -> Result<TheoremReport> {
    let mut report = TheoremReport::default();
    let cfg = SurgeryConfig {
        alpha: Schedule::constant(QUAD_ALPHA),
        max_steps: 1000,
        ..SurgeryConfig::default()
    };
    let q = quadratic(QUAD_SEEDS[0])?;
    let a = AttentionToyPair::random(&mut SeededRng::new(5));
    for name in ["quadratic", "attention-toy"] {
        for (kind, per_step) in [(SolverKind::Implicit, 1u64), (SolverKind::Explicit, 2)] {
            let t = match name {
                "quadratic" => solve(kind, q.center_p().as_slice().to_vec(), &q, &cfg)?,
                _ => solve(kind, a.theta0(), &a, &cfg)?,
            };
            fp.add_trace(&t);
            let evals = t.counts.gradient_evaluations();
            report.push(check(
                format!("gradient-evaluations {name} {kind}"),
                evals == per_step * 1000 && t.len() == 1000,
                evals as f64,
                (per_step * 1000) as f64,
                format!(
                    "composite {} + erasure {} + preservation {} over {} steps",
                    t.counts.grad_composite,
                    t.counts.grad_e,
                    t.counts.grad_p,
                    t.len()
                ),
            ));
        }
    }
    Ok(report)
}

// ---------------------------------------------------------------- 9, 10

const FD_PROBES: usize = 100;

fn fd_settings() -> ErasureSettings {
    ErasureSettings {
        esd_probes: 2,
        preserve_probes: 1,
        feature_probes: 3,
        ..ErasureSettings::default()
    }
}

/// Worst relative error between `analytic(θ)` and central differences of
/// `loss` over `FD_PROBES` perturbations of `theta0`.
struct FdTally {
    name: String,
    worst: f64,
    count: usize,
}

impl FdTally {
    fn new(name: &str) -> Self {
        Self {
            name: name.into(),
            worst: 0.0,
            count: 0,
        }
    }

    fn probe<F: Fn(&[f64]) -> f64>(&mut self, loss: F, analytic: &[f64], theta: &[f64]) -> Result<()> {
        let fd = finite_difference_gradient(&loss, theta, FdStep::default())?;
        self.worst = self.worst.max(relative_error(analytic, &fd));
        self.count += 1;
        Ok(())
    }

    fn result(self) -> CheckResult {
        let ok = self.worst < 1e-5 && self.count == FD_PROBES;
        check(
            format!("fd {}", self.name),
            ok,
            self.worst,
            1e-5,
            format!("worst relative error over {} probes", self.count),
        )
    }
}

fn perturbed(theta0: &[f64], rng: &mut SeededRng) -> Vec<f64> {
    theta0.iter().map(|x| x + 0.1 * rng.normal()).collect()
}

fn gradient_checks() -> Result<TheoremReport> {
    let mut report = TheoremReport::default();
    let model = ToyFlowModel::random(FlowWorld::default(), &mut SeededRng::new(21));
    let mut rng = SeededRng::new(9);
    let theta0 = Lora::init(&mut rng).to_vec();

    let (mut esd, mut lora) = (
        FdTally::new("esd_velocity_loss"),
        FdTally::new("lora_preservation_loss"),
    );
    for i in 0..FD_PROBES {
        let theta = perturbed(&theta0, &mut rng);
        let phase = rng.uniform(0.0, 1.0);
        let probe = Probe::draw(&model, Concept::Target, 0.0, 1.0, phase, &mut rng);
        let eta = [0.0, 1.0, 2.0][i % 3];
        let (_, g) = esd_velocity_loss(&model, &theta, &probe, eta)?;
        esd.probe(
            |t| esd_velocity_loss(&model, t, &probe, eta).map_or(f64::NAN, |v| v.0),
            &g,
            &theta,
        )?;
        let c = Concept::IRRELEVANT[i % 3];
        let (_, g) = lora_preservation_loss(&model, &theta, &probe, c)?;
        lora.probe(
            |t| lora_preservation_loss(&model, t, &probe, c).map_or(f64::NAN, |v| v.0),
            &g,
            &theta,
        )?;
    }
    report.push(esd.result());
    report.push(lora.result());

    let frame = Frame::new(&model, &fd_settings(), 0.25, &mut rng)?;
    let s = fd_settings();
    let components: [(&str, LossWeights); 4] = [
        ("attention_regularizer", LossWeights::only("attn").expect("component")),
        ("rsc_loss", LossWeights::only("rsc").expect("component")),
        ("composite erasure", LossWeights::erasure(s.gamma1)),
        ("composite preservation", LossWeights::preservation(s.gamma2)),
    ];
    for (name, w) in components {
        let mut tally = FdTally::new(name);
        for _ in 0..FD_PROBES {
            let theta = perturbed(&theta0, &mut rng);
            let (_, g) = frame.loss_and_grad(&model, &theta, &w)?;
            tally.probe(|t| frame.loss(&model, t, &w).unwrap_or(f64::NAN), &g, &theta)?;
        }
        report.push(tally.result());
    }

    // attention layer toy: L_e is the target-mass regularizer
    let att = AttentionToyPair::random(&mut SeededRng::new(4));
    let mut tally = FdTally::new("attention toy erasure");
    let a0 = att.theta0();
    for _ in 0..FD_PROBES {
        let theta = perturbed(&a0, &mut rng);
        tally.probe(|t| att.loss_e(t), &att.grad_e(&theta), &theta)?;
    }
    report.push(tally.result());

    // volumetric variants on a two-frame video
    let video = FlowErasurePair::video(model.clone(), &s, 2)?;
    let v0 = video.theta0();
    let volumetric: [(&str, LossWeights); 6] = [
        ("volumetric esd", LossWeights::only("esd").expect("component")),
        ("volumetric attention", LossWeights::only("attn").expect("component")),
        ("volumetric lora", LossWeights::only("lora").expect("component")),
        ("volumetric rsc", LossWeights::only("rsc").expect("component")),
        ("video erasure objective", LossWeights::erasure(s.gamma1)),
        ("video preservation objective", LossWeights::preservation(s.gamma2)),
    ];
    for (name, w) in volumetric {
        let mut tally = FdTally::new(name);
        for _ in 0..FD_PROBES {
            let theta = perturbed(&v0, &mut rng);
            let (_, g) = video.evaluate(&theta, &w, true)?;
            let g = g.expect("gradient requested");
            tally.probe(|t| video.evaluate(t, &w, false).map_or(f64::NAN, |v| v.0), &g, &theta)?;
        }
        report.push(tally.result());
    }
    Ok(report)
}

fn rsc_identities() -> Result<TheoremReport> {
    let mut report = TheoremReport::default();
    let mut rng = SeededRng::new(10);
    let (mut equal, mut zero, mut perm) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..100 {
        let dim = 2 + rng.below(15);
        let f_e = rng.normal_vec(dim);
        let f_syn = rng.normal_vec(dim);
        let tau = rng.uniform(0.05, 2.0);
        // all irrelevant similarities equal the synonym similarity
        for k in 1..=4 {
            let f = ConceptFeatures::new(f_e.clone(), f_syn.clone(), vec![f_syn.clone(); k], tau)?;
            equal = equal.max((rsc_loss(&f) - (k as f64).ln()).abs());
        }
        let f = ConceptFeatures::new(f_e.clone(), f_syn.clone(), vec![f_syn.clone()], tau)?;
        zero = zero.max(rsc_loss(&f).abs());
        let ir: Vec<Vec<f64>> = (0..4).map(|_| rng.normal_vec(dim)).collect();
        let base = ConceptFeatures::new(f_e.clone(), f_syn.clone(), ir.clone(), tau)?;
        let mut order: Vec<usize> = (0..4).collect();
        for _ in 0..6 {
            for i in (1..order.len()).rev() {
                order.swap(i, rng.below(i + 1));
            }
            let shuffled = order.iter().map(|&i| ir[i].clone()).collect();
            let f = ConceptFeatures::new(f_e.clone(), f_syn.clone(), shuffled, tau)?;
            perm = perm.max((rsc_loss(&f) - rsc_loss(&base)).abs());
            perm = perm.max(max_abs_diff(&rsc_grad_fe(&f), &rsc_grad_fe(&base)));
        }
    }
    report.push(check(
        "rsc equal similarities give ln K",
        equal <= 1e-9,
        equal,
        1e-9,
        "K = 1..4",
    ));
    report.push(check(
        "rsc numerator equals denominator",
        zero <= 1e-9,
        zero,
        1e-9,
        "single irrelevant = synonym",
    ));
    report.push(check(
        "rsc permutation invariance",
        perm <= 1e-9,
        perm,
        1e-9,
        "loss and gradient",
    ));
    Ok(report)
}

// ---------------------------------------------------------------- 11

/// The ablation grid: every solver on `toyflow-image` for each seed.
pub fn ablation_configs() -> Vec<RunConfig> {
    let mut out = Vec::new();
    for seed in ABLATION_SEEDS {
        for s in ABLATION_SOLVERS {
            let mut c = RunConfig::new(s.parse().expect("known solver"), ProblemKind::ToyflowImage, seed);
            c.name = Some(format!("ablation-{}-s{seed}", s.replace(['(', ')'], "")));
            out.push(c);
        }
    }
    out
}

fn add_run_files(fp: &mut Fingerprint, dir: &Path) -> Result<()> {
    for f in [TRACE_FILE, SAMPLES_FILE, BASE_SAMPLES_FILE] {
        let p = dir.join(f);
        if p.exists() {
            fp.add(&std::fs::read(&p).map_err(|e| BenchError::io(&p, e))?);
        }
    }
    Ok(())
}

fn ablation(ctx: &VerifyContext, fp: &mut Fingerprint) -> Result<TheoremReport> {
    let root = ctx.out_dir.join("ablation");
    let configs = ablation_configs();
    let entries = run_grid(&configs, &root, ctx.workers)?;
    let mut report = TheoremReport::default();
    // H_a by solver, then seed
    let mut h: BTreeMap<&str, Vec<Option<f64>>> = BTreeMap::new();
    for (cfg, entry) in configs.iter().zip(&entries) {
        let dir = root.join(cfg.run_name());
        add_run_files(fp, &dir)?;
        let solver = ABLATION_SOLVERS
            .iter()
            .find(|s| s.parse::<SolverKind>().ok() == Some(cfg.solver()))
            .copied()
            .expect("grid solver");
        let value = match &entry.result {
            Ok(m) if m.status == RunStatus::Complete => summarize_one(&dir.join(TRACE_FILE)).h_a,
            _ => None,
        };
        h.entry(solver).or_default().push(value);
    }
    let table: Vec<String> = ABLATION_SOLVERS
        .iter()
        .map(|s| {
            let vals: Vec<String> = h[s]
                .iter()
                .map(|v| v.map_or("n/a".into(), |x| format!("{x:.3}")))
                .collect();
            format!("{s}=[{}]", vals.join(","))
        })
        .collect();
    let ours = &h[ABLATION_SOLVERS[0]];
    for other in ["pcgrad", "mgda", "linear(0.1)", "linear(10)"] {
        let wins = ours
            .iter()
            .zip(&h[other])
            .filter(|(a, b)| match (a, b) {
                (Some(a), Some(b)) => a > b,
                (Some(_), None) => true,
                _ => false,
            })
            .count();
        report.push(check(
            format!("H_a implicit > {other}"),
            2 * wins > ABLATION_SEEDS.len(),
            wins as f64,
            2.0,
            format!(
                "wins on {wins} of {} seeds; H_a by seed: {}",
                ABLATION_SEEDS.len(),
                table.join(" ")
            ),
        ));
    }
    Ok(report)
}

// ---------------------------------------------------------------- 12

fn anchor_and_propagate(ctx: &VerifyContext, fp: &mut Fingerprint) -> Result<TheoremReport> {
    let mut report = TheoremReport::default();
    let model = ToyFlowModel::random(FlowWorld::default(), &mut SeededRng::new(21));
    let settings = fd_settings();

    let single = FlowErasurePair::video(model.clone(), &settings, 1)?;
    let frame = Frame::new(&model, &settings, 0.0, &mut SeededRng::new(settings.seed).substream(0))?;
    let erase = LossWeights::erasure(settings.gamma1);
    let keep = LossWeights::preservation(settings.gamma2);
    let mut rng = SeededRng::new(12);
    let mut mismatches = 0;
    for _ in 0..20 {
        let theta = perturbed(&single.theta0(), &mut rng);
        let (le, ge) = frame.loss_and_grad(&model, &theta, &erase)?;
        let (lp, gp) = frame.loss_and_grad(&model, &theta, &keep)?;
        let same = single.loss_e(&theta).to_bits() == le.to_bits()
            && single.loss_p(&theta).to_bits() == lp.to_bits()
            && single.grad_e(&theta) == ge
            && single.grad_p(&theta) == gp;
        if !same {
            mismatches += 1;
        }
    }
    report.push(check(
        "single-frame video equals image objective",
        mismatches == 0,
        mismatches as f64,
        0.0,
        "bitwise losses and gradients on 20 points",
    ));

    let video = FlowErasurePair::video(model.clone(), &settings, 8)?;
    let maps = video.volume().attention_maps(&model, &model.weights)?;
    let mean = maps.iter().map(attention_regularizer).sum::<f64>() / maps.len() as f64;
    let vol = volumetric_attention_regularizer(&maps)?;
    let w = |a: f64| DMatrix::from_row_slice(2, 2, &[1.0 - a, a, 1.0 - a, a]);
    let pair = [
        ToyAttention::new(vec![w(0.0)], 1, 2)?,
        ToyAttention::new(vec![DMatrix::from_row_slice(2, 2, &[0.3, 0.7, 0.6, 0.4])], 1, 2)?,
    ];
    let example = volumetric_attention_regularizer(&pair)?;
    report.push(check(
        "volumetric regularizer is the frame mean",
        vol == mean && (example - 0.55).abs() < 1e-15,
        (vol - mean).abs(),
        0.0,
        format!("8 frames: {vol} vs mean {mean}; two-frame example {example}"),
    ));

    // erasure on an 8-frame toy video
    let mut cfg = RunConfig::new(SolverKind::Implicit, ProblemKind::ToyflowVideo, 0);
    cfg.name = Some("video-implicit-s0".into());
    let root = ctx.out_dir.join("video");
    let entry = run_grid(std::slice::from_ref(&cfg), &root, ctx.workers)?.remove(0);
    let dir = root.join(cfg.run_name());
    add_run_files(fp, &dir)?;
    let manifest = entry.result?;
    if manifest.status != RunStatus::Complete {
        report.push(check(
            "video erasure run",
            false,
            0.0,
            0.0,
            manifest.error.unwrap_or_default(),
        ));
        return Ok(report);
    }
    let world = FlowWorld::default();
    let pre = per_frame_scores(
        &tolcone_toyzoo::read_samples(&dir.join(BASE_SAMPLES_FILE))?,
        &world,
        cfg.eval.radius,
    )?;
    let post = per_frame_scores(
        &tolcone_toyzoo::read_samples(&dir.join(SAMPLES_FILE))?,
        &world,
        cfg.eval.radius,
    )?;
    let per_frame: Vec<String> = pre
        .iter()
        .map(|(f, s)| format!("{f}:{:.3}->{:.3}", s.acc_e, post.get(f).map_or(f64::NAN, |p| p.acc_e)))
        .collect();
    let lower = pre.len() == 8 && pre.iter().all(|(f, s)| post.get(f).is_some_and(|p| p.acc_e < s.acc_e));
    let worst = pre
        .iter()
        .map(|(f, s)| post.get(f).map_or(f64::INFINITY, |p| p.acc_e - s.acc_e))
        .fold(f64::NEG_INFINITY, f64::max);
    report.push(check(
        "erased concept accuracy drops on every frame",
        lower,
        worst,
        0.0,
        format!("Acc_e per frame {}", per_frame.join(" ")),
    ));
    Ok(report)
}

// ---------------------------------------------------------------- 13

fn determinism(ctx: &VerifyContext) -> Result<TheoremReport> {
    let mut report = TheoremReport::default();
    for id in 1..=12u8 {
        let a = run_criterion(
            id,
            &VerifyContext {
                out_dir: ctx.out_dir.join("rerun-a"),
                workers: ctx.workers,
            },
        )?;
        let b = run_criterion(
            id,
            &VerifyContext {
                out_dir: ctx.out_dir.join("rerun-b"),
                workers: ctx.workers,
            },
        )?;
        let same = a.fingerprint == b.fingerprint;
        report.push(check(
            format!("rerun criterion {id}"),
            same,
            if same { 0.0 } else { 1.0 },
            0.0,
            format!("fingerprint {}", &a.fingerprint[..16]),
        ));
    }
    Ok(report)
}

/// Runs the listed criteria in order.
pub fn run_suite(ids: &[u8], ctx: &VerifyContext) -> Result<Vec<CriterionOutcome>> {
    ids.iter().map(|&id| run_criterion(id, ctx)).collect()
}
