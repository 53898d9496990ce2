use tolcone_core::surgery::{run, SolverKind, SurgeryConfig};
use tolcone_core::{FnPair, IterateTrace, ObjectivePair, ParamVec, Schedule};

/// `L_e = ½‖θ − (1, 0)‖²`, `L_p = ½(θ_0 + 1)² + 2 θ_1²`: convex and in
/// conflict along the first axis.
fn convex_pair() -> impl ObjectivePair<f64> {
    FnPair::new(
        2,
        |t: &[f64]| 0.5 * ((t[0] - 1.0).powi(2) + t[1] * t[1]),
        |t: &[f64]| 0.5 * (t[0] + 1.0).powi(2) + 2.0 * t[1] * t[1],
        |t: &[f64]| vec![t[0] - 1.0, t[1]],
        |t: &[f64]| vec![t[0] + 1.0, 4.0 * t[1]],
    )
}

fn cfg(steps: usize) -> SurgeryConfig {
    SurgeryConfig {
        alpha: Schedule::constant(0.01),
        beta: Schedule::constant(0.5),
        epsilon: Schedule::constant(0.01),
        max_steps: steps,
        ..SurgeryConfig::default()
    }
}

fn theta0() -> ParamVec<f64> {
    ParamVec::new(vec![-0.5, 0.5]).unwrap()
}

#[test]
fn explicit_and_implicit_agree_on_convex_pair() {
    let ex = run(SolverKind::Explicit, theta0(), convex_pair(), &cfg(5000)).unwrap();
    let im = run(SolverKind::Implicit, theta0(), convex_pair(), &cfg(5000)).unwrap();
    // composite weight fixed from the explicit run before comparing
    let w = ex.trace.rows.last().unwrap().lambda;
    let c = |t: &IterateTrace| t.final_loss_e + w * t.final_loss_p;
    let (ce, ci) = (c(&ex.trace), c(&im.trace));
    assert!(
        (ce - ci).abs() <= 0.05 * ce.abs(),
        "explicit {ce} implicit {ci} (λ̄ = {w})"
    );
}

#[test]
fn identical_inputs_give_identical_traces() {
    for kind in [SolverKind::Explicit, SolverKind::Implicit, SolverKind::Mgda] {
        let a = run(kind, theta0(), convex_pair(), &cfg(500)).unwrap();
        let b = run(kind, theta0(), convex_pair(), &cfg(500)).unwrap();
        assert_eq!(a.trace.to_csv_string().unwrap(), b.trace.to_csv_string().unwrap());
        assert_eq!(a.theta, b.theta);
    }
}

#[test]
fn oracle_accounting_over_a_thousand_steps() {
    let im = run(SolverKind::Implicit, theta0(), convex_pair(), &cfg(1000)).unwrap();
    let ex = run(SolverKind::Explicit, theta0(), convex_pair(), &cfg(1000)).unwrap();
    assert_eq!(im.trace.counts.gradient_evaluations(), 1000);
    assert_eq!(im.trace.counts.grad_composite, 1000);
    assert_eq!(ex.trace.counts.gradient_evaluations(), 2000);
    // two loss-only calls per step plus the final pair
    assert_eq!(im.trace.counts.loss_evaluations(), 2 * 1000 + 2);
}

#[test]
fn implicit_lambda_tracks_closed_form_and_stays_feasible() {
    let out = run(SolverKind::Implicit, theta0(), convex_pair(), &cfg(3000)).unwrap();
    assert!(out.trace.validate().is_ok());
    let ex = run(SolverKind::Explicit, theta0(), convex_pair(), &cfg(3000)).unwrap();
    let li = out.trace.rows.last().unwrap().lambda;
    let le = ex.trace.rows.last().unwrap().lambda;
    assert!((li - le).abs() < 0.1 * le, "implicit λ {li} vs explicit {le}");
}

#[test]
fn f32_and_f64_runs_agree_loosely() {
    let p32 = FnPair::new(
        2,
        |t: &[f32]| 0.5 * ((t[0] - 1.0).powi(2) + t[1] * t[1]),
        |t: &[f32]| 0.5 * (t[0] + 1.0).powi(2) + 2.0 * t[1] * t[1],
        |t: &[f32]| vec![t[0] - 1.0, t[1]],
        |t: &[f32]| vec![t[0] + 1.0, 4.0 * t[1]],
    );
    let a = run(
        SolverKind::Explicit,
        ParamVec::<f32>::from_f64(&[-0.5, 0.5]).unwrap(),
        p32,
        &cfg(500),
    )
    .unwrap();
    let b = run(SolverKind::Explicit, theta0(), convex_pair(), &cfg(500)).unwrap();
    for (x, y) in a.theta.to_f64().iter().zip(b.theta.as_slice()) {
        assert!((x - y).abs() < 1e-4);
    }
}
