use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{drift_estimate, explicit_direction, implicit_lambda_update};
use crate::analysis::stationarity_from_grads;
use crate::baselines::{mgda_direction, min_norm_weight, pcgrad_direction};
use crate::objective::{ObjectivePair, Oracle};
use crate::schedule::Schedule;
use crate::trace::{IterateTrace, TraceRow};
use crate::vector::{dot, norm, GradientPair, ParamVec};
use crate::{Error, Result, Scalar};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SolverKind {
    Explicit,
    Implicit,
    Linear { lambda: f64 },
    PcGrad,
    Mgda,
}

impl SolverKind {
    /// Backward passes one step charges to the solver.
    pub fn gradient_calls_per_step(&self) -> u64 {
        match self {
            SolverKind::Implicit | SolverKind::Linear { .. } => 1,
            _ => 2,
        }
    }
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SolverKind::Explicit => write!(f, "explicit"),
            SolverKind::Implicit => write!(f, "implicit"),
            SolverKind::Linear { lambda } => write!(f, "linear({lambda})"),
            SolverKind::PcGrad => write!(f, "pcgrad"),
            SolverKind::Mgda => write!(f, "mgda"),
        }
    }
}

impl FromStr for SolverKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "explicit" => Ok(SolverKind::Explicit),
            "implicit" => Ok(SolverKind::Implicit),
            "pcgrad" => Ok(SolverKind::PcGrad),
            "mgda" => Ok(SolverKind::Mgda),
            other => {
                let inner = other
                    .strip_prefix("linear(")
                    .and_then(|r| r.strip_suffix(')'))
                    .ok_or_else(|| Error::Config(format!("unknown solver `{other}`")))?;
                let lambda: f64 = inner
                    .parse()
                    .map_err(|_| Error::Config(format!("bad linear weight `{inner}`")))?;
                if !(lambda.is_finite() && lambda >= 0.0) {
                    return Err(Error::Config(format!("linear weight must be >= 0, got {lambda}")));
                }
                Ok(SolverKind::Linear { lambda })
            }
        }
    }
}

/// Where the implicit solver reads its preservation-loss drift.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DriftMode {
    /// `(L_p(θ_{t−1}) − L_p(θ_t)) / α_{t−1} + ε_{t−1}`; free, lags one step.
    #[default]
    Trailing,
    /// Probes `θ_t − α_t d_{t−1}` with one extra loss evaluation, reusing
    /// the previous direction so no gradient is spent.
    LookAhead,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Instrumentation {
    /// Record only what the solver computes anyway.
    #[default]
    Light,
    /// Also query both gradients separately on every step (charged to the
    /// `instrumentation` counter) so dual-gap and stationarity checks can run.
    Full,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurgeryConfig {
    pub alpha: Schedule,
    pub beta: Schedule,
    pub epsilon: Schedule,
    /// Apply `max(0, ·)` to the dual update.
    pub clamp_lambda: bool,
    pub max_steps: usize,
    pub lambda_init: f64,
    pub drift: DriftMode,
    pub instrumentation: Instrumentation,
}

impl Default for SurgeryConfig {
    fn default() -> Self {
        Self {
            alpha: Schedule::constant(1e-3),
            beta: Schedule::constant(0.1),
            epsilon: Schedule::constant(0.01),
            clamp_lambda: true,
            max_steps: 1000,
            lambda_init: 0.0,
            drift: DriftMode::Trailing,
            instrumentation: Instrumentation::Light,
        }
    }
}

impl SurgeryConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, s) in [("alpha", &self.alpha), ("beta", &self.beta), ("epsilon", &self.epsilon)] {
            s.validate().map_err(|e| Error::Config(format!("{name}: {e}")))?;
        }
        if !(self.alpha.base > 0.0) {
            return Err(Error::Config("alpha: step size must be > 0".into()));
        }
        if self.max_steps == 0 {
            return Err(Error::Config("max_steps must be >= 1".into()));
        }
        if !(self.lambda_init.is_finite() && self.lambda_init >= 0.0) {
            return Err(Error::Config(format!(
                "lambda_init must be finite and >= 0, got {}",
                self.lambda_init
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurgeryState<T> {
    /// Weight the next step starts from.
    pub lambda: T,
    pub prev_loss_p: Option<T>,
    /// Only kept in look-ahead mode.
    pub prev_direction: Option<Vec<T>>,
    pub step: usize,
}

impl<T: Scalar> SurgeryState<T> {
    pub fn new(config: &SurgeryConfig) -> Self {
        Self {
            lambda: T::lit(config.lambda_init),
            prev_loss_p: None,
            prev_direction: None,
            step: 0,
        }
    }
}

pub struct RunOutput<T> {
    pub trace: IterateTrace,
    pub theta: ParamVec<T>,
}

/// A run that stopped early; `trace` holds every completed step.
#[derive(Debug, thiserror::Error)]
#[error("run aborted at step {step}: {error}")]
pub struct RunAbort {
    pub trace: IterateTrace,
    pub step: usize,
    #[source]
    pub error: Error,
}

fn finite<T: Scalar>(what: &'static str, step: usize, v: T) -> Result<T> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFiniteLoss {
            what,
            step,
            value: v.as_f64(),
        })
    }
}

struct Losses<T> {
    e: T,
    p: T,
}

fn measure<T: Scalar, P: ObjectivePair<T>>(
    theta: &ParamVec<T>,
    oracle: &Oracle<T, P>,
    step: usize,
) -> Result<Losses<T>> {
    Ok(Losses {
        e: finite("erasure loss", step, oracle.loss_e(theta.as_slice()))?,
        p: finite("preservation loss", step, oracle.loss_p(theta.as_slice()))?,
    })
}

fn fill_gram<T: Scalar>(row: &mut TraceRow, grads: &GradientPair<T>) {
    row.grad_norm_e = Some(norm(grads.e()).as_f64());
    row.grad_norm_p = Some(norm(grads.p()).as_f64());
    row.grad_dot = Some(dot(grads.e(), grads.p()).as_f64());
    row.stationarity = Some(stationarity_from_grads(grads).as_f64());
}

fn base_row<T: Scalar>(step: usize, l: &Losses<T>, alpha: T, epsilon: T) -> TraceRow {
    TraceRow {
        step,
        loss_e: l.e.as_f64(),
        loss_p: l.p.as_f64(),
        lambda: 0.0,
        grad_norm_e: None,
        grad_norm_p: None,
        dir_norm: 0.0,
        stationarity: None,
        delta: 0.0,
        alpha: alpha.as_f64(),
        epsilon: epsilon.as_f64(),
        grad_dot: None,
    }
}

fn direction_checked<T: Scalar>(step: usize, d: &[T]) -> Result<()> {
    match crate::vector::find_non_finite(d) {
        Some((_, v)) => Err(Error::NonFiniteLoss {
            what: "update direction",
            step,
            value: v.as_f64(),
        }),
        None => Ok(()),
    }
}

/// One step of the single-backprop solver: refresh `λ` from loss drift,
/// backpropagate `L_e + λ L_p` once, descend.
pub fn implicit_step<T: Scalar, P: ObjectivePair<T>>(
    theta: &mut ParamVec<T>,
    oracle: &Oracle<T, P>,
    config: &SurgeryConfig,
    state: &mut SurgeryState<T>,
) -> Result<TraceRow> {
    let t = state.step;
    let alpha = T::lit(config.alpha.at(t));
    let beta = T::lit(config.beta.at(t));
    let eps = T::lit(config.epsilon.at(t));
    let losses = measure(theta, oracle, t)?;

    let delta = match config.drift {
        DriftMode::Trailing => match state.prev_loss_p {
            None => eps,
            Some(prev) => drift_estimate(
                prev,
                losses.p,
                T::lit(config.alpha.at(t - 1)),
                T::lit(config.epsilon.at(t - 1)),
            )?,
        },
        DriftMode::LookAhead => match &state.prev_direction {
            None => eps,
            Some(d) => {
                let probe: Vec<T> = theta.as_slice().iter().zip(d).map(|(&x, &g)| x - alpha * g).collect();
                let ahead = finite("look-ahead preservation loss", t, oracle.loss_p(&probe))?;
                drift_estimate(losses.p, ahead, alpha, eps)?
            }
        },
    };
    let lambda = implicit_lambda_update(state.lambda, delta, beta, config.clamp_lambda);
    finite("composite loss", t, losses.e + lambda * losses.p)?;

    let dir = oracle.grad_composite(theta.as_slice(), lambda);
    direction_checked(t, &dir)?;

    let mut row = base_row(t, &losses, alpha, eps);
    row.lambda = lambda.as_f64();
    row.delta = delta.as_f64();
    row.dir_norm = norm(&dir).as_f64();
    if config.instrumentation == Instrumentation::Full {
        fill_gram(&mut row, &oracle.instrument(theta.as_slice())?);
    }

    theta.descend(alpha, &dir)?;
    state.lambda = lambda;
    state.prev_loss_p = Some(losses.p);
    if config.drift == DriftMode::LookAhead {
        state.prev_direction = Some(dir);
    }
    state.step += 1;
    Ok(row)
}

/// One step of closed-form surgery; spends two backward passes.
pub fn explicit_step<T: Scalar, P: ObjectivePair<T>>(
    theta: &mut ParamVec<T>,
    oracle: &Oracle<T, P>,
    config: &SurgeryConfig,
    state: &mut SurgeryState<T>,
) -> Result<TraceRow> {
    let t = state.step;
    let alpha = T::lit(config.alpha.at(t));
    let eps = T::lit(config.epsilon.at(t));
    let losses = measure(theta, oracle, t)?;
    let grads = oracle.gradients(theta.as_slice())?;
    let s = explicit_direction(&grads, eps);

    let mut row = base_row(t, &losses, alpha, eps);
    row.lambda = s.weight().as_f64();
    row.delta = (dot(grads.p(), &s.direction) + eps).as_f64();
    row.dir_norm = norm(&s.direction).as_f64();
    fill_gram(&mut row, &grads);

    theta.descend(alpha, &s.direction)?;
    state.lambda = s.weight();
    state.prev_loss_p = Some(losses.p);
    state.step += 1;
    Ok(row)
}

/// One step of a comparison solver. The `lambda` column holds the weight
/// placed on `∇L_p`: the fixed weight for linear, 1 for PCGrad, `1 − γ*`
/// for MGDA.
pub fn baseline_step<T: Scalar, P: ObjectivePair<T>>(
    kind: SolverKind,
    theta: &mut ParamVec<T>,
    oracle: &Oracle<T, P>,
    config: &SurgeryConfig,
    state: &mut SurgeryState<T>,
) -> Result<TraceRow> {
    let t = state.step;
    let alpha = T::lit(config.alpha.at(t));
    let eps = T::lit(config.epsilon.at(t));
    let losses = measure(theta, oracle, t)?;
    let mut row = base_row(t, &losses, alpha, eps);

    let dir = match kind {
        SolverKind::Linear { lambda } => {
            let lambda = T::lit(lambda);
            if !(lambda >= T::zero()) {
                return Err(Error::Config(format!("linear weight must be >= 0, got {lambda}")));
            }
            let dir = oracle.grad_composite(theta.as_slice(), lambda);
            row.lambda = lambda.as_f64();
            // only the composite gradient exists, so the slope is read from drift
            row.delta = match state.prev_loss_p {
                None => eps,
                Some(prev) => drift_estimate(
                    prev,
                    losses.p,
                    T::lit(config.alpha.at(t - 1)),
                    T::lit(config.epsilon.at(t - 1)),
                )?,
            }
            .as_f64();
            if config.instrumentation == Instrumentation::Full {
                fill_gram(&mut row, &oracle.instrument(theta.as_slice())?);
            }
            dir
        }
        SolverKind::PcGrad | SolverKind::Mgda => {
            let grads = oracle.gradients(theta.as_slice())?;
            let dir = if kind == SolverKind::PcGrad {
                row.lambda = 1.0;
                pcgrad_direction(&grads)
            } else {
                row.lambda = (T::one() - min_norm_weight(grads.gram())).as_f64();
                mgda_direction(&grads)
            };
            row.delta = (dot(grads.p(), &dir) + eps).as_f64();
            fill_gram(&mut row, &grads);
            dir
        }
        SolverKind::Explicit | SolverKind::Implicit => {
            return Err(Error::Config(format!("{kind} is not a baseline")));
        }
    };
    direction_checked(t, &dir)?;
    row.dir_norm = norm(&dir).as_f64();
    theta.descend(alpha, &dir)?;
    state.prev_loss_p = Some(losses.p);
    state.step += 1;
    Ok(row)
}

/// Runs `config.max_steps` steps of `kind` from `theta0`.
///
/// The pair is wrapped in a fresh [`Oracle`], so the counts stored in the
/// trace cover exactly this run, including the two loss evaluations at
/// `θ_M`.
#[allow(clippy::result_large_err)]
pub fn run<T: Scalar, P: ObjectivePair<T>>(
    kind: SolverKind,
    theta0: ParamVec<T>,
    pair: P,
    config: &SurgeryConfig,
) -> std::result::Result<RunOutput<T>, RunAbort> {
    let mut trace = IterateTrace::new(kind.to_string());
    let abort = |trace: IterateTrace, step: usize, error: Error| RunAbort { trace, step, error };
    if let Err(e) = config.validate() {
        return Err(abort(trace, 0, e));
    }
    let oracle = Oracle::new(pair);
    if oracle.dim() != theta0.dim() {
        let e = Error::DimensionMismatch {
            expected: oracle.dim(),
            found: theta0.dim(),
        };
        return Err(abort(trace, 0, e));
    }

    let mut theta = theta0;
    let mut state = SurgeryState::new(config);
    for t in 0..config.max_steps {
        let row = match kind {
            SolverKind::Implicit => implicit_step(&mut theta, &oracle, config, &mut state),
            SolverKind::Explicit => explicit_step(&mut theta, &oracle, config, &mut state),
            _ => baseline_step(kind, &mut theta, &oracle, config, &mut state),
        };
        match row {
            Ok(row) => trace.rows.push(row),
            Err(e) => {
                trace.counts = oracle.counts();
                return Err(abort(trace, t, e));
            }
        }
    }

    let m = config.max_steps;
    let fin = measure(&theta, &oracle, m);
    trace.counts = oracle.counts();
    match fin {
        Ok(l) => {
            trace.final_loss_e = l.e.as_f64();
            trace.final_loss_p = l.p.as_f64();
            Ok(RunOutput { trace, theta })
        }
        Err(e) => Err(abort(trace, m, e)),
    }
}
