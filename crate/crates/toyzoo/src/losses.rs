//! Erasure and preservation losses on the toy flow model. Every function
//! that takes `theta` reads it as a [`Lora`] vector and returns the loss
//! together with its gradient with respect to `theta`; frozen-model terms
//! carry no gradient.

use crate::erasure::{Frame, LossWeights, Probe};
use crate::flow::{AttnMap, Concept, FlowPass, FlowWeights, Lora, Prompt, ToyFlowModel, SEQ};
use crate::{Result, ToyError};

/// `v_∅ − η (v_e − v_∅)`.
pub fn esd_target(v_cond: [f64; 2], v_null: [f64; 2], eta: f64) -> [f64; 2] {
    [
        v_null[0] - eta * (v_cond[0] - v_null[0]),
        v_null[1] - eta * (v_cond[1] - v_null[1]),
    ]
}

pub(crate) fn sq_dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

fn check_eta(eta: f64) -> Result<()> {
    if eta >= 0.0 && eta.is_finite() {
        Ok(())
    } else {
        Err(ToyError::Config(format!("negative guidance must be >= 0, got {eta}")))
    }
}

/// `‖v_tuned − target‖²` and its gradient.
fn match_velocity(
    model: &ToyFlowModel,
    theta: &[f64],
    prompt: &Prompt,
    probe: &Probe,
    target: [f64; 2],
) -> Result<(f64, Vec<f64>)> {
    let lora = Lora::from_slice(theta)?;
    let tuned = lora.apply(&model.weights);
    let pass = model.pass(&tuned, prompt, probe.x, probe.t, probe.phase);
    let v = pass.velocity;
    let mut dw = FlowWeights::zeros();
    tuned.backward(
        &pass,
        [2.0 * (v[0] - target[0]), 2.0 * (v[1] - target[1])],
        None,
        1.0,
        &mut dw,
    );
    Ok((sq_dist(v, target), lora.pull_back(&dw)))
}

/// `‖v_{θ+Δθ}(x, c_e, t) − [v_θ(x, ∅, t) − η (v_θ(x, c_e, t) − v_θ(x, ∅, t))]‖²`.
pub fn esd_velocity_loss(model: &ToyFlowModel, theta: &[f64], probe: &Probe, eta: f64) -> Result<(f64, Vec<f64>)> {
    check_eta(eta)?;
    let prompt = Prompt::new(Concept::Target);
    let v_e = model.velocity(&model.weights, &prompt, probe.x, probe.t, probe.phase);
    let v_null = model.velocity(
        &model.weights,
        &Prompt::new(Concept::Null),
        probe.x,
        probe.t,
        probe.phase,
    );
    match_velocity(model, theta, &prompt, probe, esd_target(v_e, v_null, eta))
}

/// `‖v_θ(x, c_p, t) − v_{θ+Δθ}(x, c_p, t)‖²` for an irrelevant concept.
pub fn lora_preservation_loss(
    model: &ToyFlowModel,
    theta: &[f64],
    probe: &Probe,
    concept: Concept,
) -> Result<(f64, Vec<f64>)> {
    if !matches!(concept, Concept::Irrelevant(_)) {
        return Err(ToyError::Config(format!("{concept} is not in the preservation set")));
    }
    let prompt = Prompt::new(concept);
    let frozen = model.velocity(&model.weights, &prompt, probe.x, probe.t, probe.phase);
    match_velocity(model, theta, &prompt, probe, frozen)
}

/// Attention features of the target concept and its contrast set.
#[derive(Debug, Clone, PartialEq)]
pub struct ConceptFeatures {
    pub f_e: Vec<f64>,
    pub f_syn: Vec<f64>,
    pub f_ir: Vec<Vec<f64>>,
    pub tau: f64,
}

impl ConceptFeatures {
    pub fn new(f_e: Vec<f64>, f_syn: Vec<f64>, f_ir: Vec<Vec<f64>>, tau: f64) -> Result<Self> {
        if f_ir.is_empty() {
            return Err(ToyError::Config("at least one irrelevant feature is required".into()));
        }
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(ToyError::Config(format!("temperature must be > 0, got {tau}")));
        }
        for f in f_ir.iter().chain([&f_syn]) {
            if f.len() != f_e.len() {
                return Err(ToyError::DimensionMismatch {
                    expected: f_e.len(),
                    found: f.len(),
                });
            }
        }
        Ok(Self { f_e, f_syn, f_ir, tau })
    }

    fn sim(&self, other: &[f64]) -> f64 {
        self.f_e.iter().zip(other).map(|(a, b)| a * b).sum::<f64>() / self.tau
    }

    fn irrelevant_sims(&self) -> Vec<f64> {
        self.f_ir.iter().map(|f| self.sim(f)).collect()
    }
}

/// `log Σ_k exp(F_e·F_k/τ) − F_e·F_syn/τ`, with the max subtracted inside
/// the sum.
pub fn rsc_loss(features: &ConceptFeatures) -> f64 {
    let sims = features.irrelevant_sims();
    let m = sims.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + sims.iter().map(|s| (s - m).exp()).sum::<f64>().ln();
    lse - features.sim(&features.f_syn)
}

/// `∂ rsc_loss / ∂F_e = (Σ_k softmax_k F_k − F_syn) / τ`.
pub fn rsc_grad_fe(features: &ConceptFeatures) -> Vec<f64> {
    let sims = features.irrelevant_sims();
    let m = sims.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = sims.iter().map(|s| (s - m).exp()).collect();
    let z: f64 = w.iter().sum();
    (0..features.f_e.len())
        .map(|i| {
            let mix: f64 = features.f_ir.iter().zip(&w).map(|(f, wk)| wk * f[i]).sum::<f64>() / z;
            (mix - features.f_syn[i]) / features.tau
        })
        .collect()
}

/// Query-pooled attention maps of `prompt` over the probes, concatenated
/// and L2-normalized. Returns the feature, the passes, and the raw norm.
pub(crate) fn attention_feature(
    model: &ToyFlowModel,
    weights: &FlowWeights,
    prompt: &Prompt,
    probes: &[Probe],
) -> (Vec<f64>, Vec<FlowPass>, f64) {
    let passes: Vec<FlowPass> = probes
        .iter()
        .map(|p| model.pass(weights, prompt, p.x, p.t, p.phase))
        .collect();
    let mut raw = Vec::with_capacity(probes.len() * SEQ);
    for pass in &passes {
        for c in 0..SEQ {
            raw.push(pass.attn.p.column(c).sum() / SEQ as f64);
        }
    }
    let n = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
    (raw.iter().map(|x| x / n).collect(), passes, n)
}

/// `∂L/∂P` for each probe given `∂L/∂F` on the normalized feature.
pub(crate) fn feature_pull_back(feature: &[f64], raw_norm: f64, grad: &[f64]) -> Vec<AttnMap> {
    let dot: f64 = feature.iter().zip(grad).map(|(y, g)| y * g).sum();
    let draw: Vec<f64> = feature
        .iter()
        .zip(grad)
        .map(|(y, g)| (g - y * dot) / raw_norm)
        .collect();
    draw.chunks(SEQ)
        .map(|chunk| AttnMap::from_fn(|_, c| chunk[c] / SEQ as f64))
        .collect()
}

/// `L_esd + γ1 L_attn` on one frame.
pub fn composite_erasure_loss(
    model: &ToyFlowModel,
    theta: &[f64],
    frame: &Frame,
    gamma1: f64,
) -> Result<(f64, Vec<f64>)> {
    if !(gamma1 >= 0.0) {
        return Err(ToyError::Config(format!("attention weight must be >= 0, got {gamma1}")));
    }
    frame.loss_and_grad(model, theta, &LossWeights::erasure(gamma1))
}

/// `L_lora + γ2 L_rsc` on one frame.
pub fn composite_preservation_loss(
    model: &ToyFlowModel,
    theta: &[f64],
    frame: &Frame,
    gamma2: f64,
) -> Result<(f64, Vec<f64>)> {
    if !(gamma2 >= 0.0) {
        return Err(ToyError::Config(format!(
            "contrastive weight must be >= 0, got {gamma2}"
        )));
    }
    frame.loss_and_grad(model, theta, &LossWeights::preservation(gamma2))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(f: &ConceptFeatures) -> f64 {
        let num: f64 = f.f_ir.iter().map(|k| f.sim(k).exp()).sum();
        (num / f.sim(&f.f_syn).exp()).ln()
    }

    #[test]
    fn esd_scalar_probe() {
        // v_e = 2, v_∅ = 1, η = 2 → target −1; tuned 2 → (2 − (−1))² = 9
        let t = esd_target([2.0, 0.0], [1.0, 0.0], 2.0);
        assert_eq!(t, [-1.0, 0.0]);
        assert_eq!(sq_dist([2.0, 0.0], t), 9.0);
        assert_eq!(esd_target([3.0, 1.0], [0.5, -1.0], 0.0), [0.5, -1.0]);
        assert_eq!(esd_target([0.5, 0.5], [0.5, 0.5], 7.0), [0.5, 0.5]);
    }

    #[test]
    fn rsc_examples() {
        let f = ConceptFeatures::new(vec![1.0, 0.0], vec![1.0, 0.0], vec![vec![0.0, 1.0]], 1.0).unwrap();
        assert!((rsc_loss(&f) + 1.0).abs() < 1e-15);
        let f = ConceptFeatures::new(vec![0.6, 0.8], vec![0.8, 0.6], vec![vec![0.8, 0.6]], 0.07).unwrap();
        assert!(rsc_loss(&f).abs() < 1e-12);
        let f = ConceptFeatures::new(vec![1.0, 0.0], vec![0.5, 0.1], vec![vec![0.5, 0.3]; 3], 0.07).unwrap();
        assert!((rsc_loss(&f) - 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn rsc_validation() {
        assert!(ConceptFeatures::new(vec![1.0], vec![1.0], vec![], 1.0).is_err());
        assert!(ConceptFeatures::new(vec![1.0], vec![1.0], vec![vec![1.0]], 0.0).is_err());
        assert!(ConceptFeatures::new(vec![1.0], vec![1.0, 2.0], vec![vec![1.0]], 1.0).is_err());
    }

    #[test]
    fn stable_form_matches_naive() {
        let mut rng = tolcone_core::SeededRng::new(3);
        for _ in 0..100 {
            let v = |rng: &mut tolcone_core::SeededRng| rng.normal_vec(6);
            let f = ConceptFeatures::new(
                v(&mut rng),
                v(&mut rng),
                vec![v(&mut rng), v(&mut rng), v(&mut rng)],
                0.5,
            )
            .unwrap();
            assert!((rsc_loss(&f) - naive(&f)).abs() < 1e-9);
        }
        // naive overflows here, the stable form does not
        let f = ConceptFeatures::new(vec![1.0], vec![0.0], vec![vec![100.0], vec![99.0]], 0.07).unwrap();
        assert!(naive(&f).is_infinite() || naive(&f).is_nan());
        let expected = 100.0 / 0.07 + (1.0 + (-1.0f64 / 0.07).exp()).ln();
        assert!((rsc_loss(&f) - expected).abs() < 1e-9);
    }
}
