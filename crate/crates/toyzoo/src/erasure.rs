//! Concept erasure on the toy flow model as an [`ObjectivePair`] over the
//! LoRA vector, for single images and frame sequences.

use serde::{Deserialize, Serialize};
use tolcone_core::{ObjectivePair, SeededRng};

use crate::attention::{attention_regularizer, ToyAttention};
use crate::flow::{AttnMap, Concept, FlowWeights, Lora, Prompt, ToyFlowModel, SEQ};
use crate::losses::{
    attention_feature, esd_target, feature_pull_back, rsc_grad_fe, rsc_loss, sq_dist, ConceptFeatures,
};
use crate::{Result, ToyError};

/// Frame `f` of a video sees phase `f / VIDEO_PHASES` in its pixel token.
pub const VIDEO_PHASES: f64 = 8.0;

/// A point on a noising path: location, time, and frame phase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub x: [f64; 2],
    pub t: f64,
    pub phase: f64,
}

impl Probe {
    /// `x_t = t·n + (1−t)·x₀` with `x₀` drawn from `concept` and `t` uniform
    /// on `[t_lo, t_hi]`.
    pub fn draw(model: &ToyFlowModel, concept: Concept, t_lo: f64, t_hi: f64, phase: f64, rng: &mut SeededRng) -> Self {
        let x0 = model.world.sample_data(concept, rng);
        let n = [rng.normal(), rng.normal()];
        let t = rng.uniform(t_lo, t_hi);
        Self {
            x: [t * n[0] + (1.0 - t) * x0[0], t * n[1] + (1.0 - t) * x0[1]],
            t,
            phase,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ErasureSettings {
    /// Negative guidance magnitude.
    pub eta: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    /// Contrastive temperature.
    pub tau: f64,
    /// Irrelevant concepts used for preservation and in the contrast set.
    pub irrelevant: usize,
    pub esd_probes: usize,
    /// Per irrelevant concept.
    pub preserve_probes: usize,
    pub feature_probes: usize,
    pub seed: u64,
}

impl Default for ErasureSettings {
    fn default() -> Self {
        Self {
            eta: 2.0,
            gamma1: 0.01,
            gamma2: 1.0,
            tau: 0.07,
            irrelevant: 3,
            esd_probes: 16,
            preserve_probes: 8,
            feature_probes: 8,
            seed: 0,
        }
    }
}

impl ErasureSettings {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str, v: f64| Err(ToyError::Config(format!("{what} out of range: {v}")));
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return bad("eta", self.eta);
        }
        if !(self.gamma1 >= 0.0 && self.gamma1.is_finite()) {
            return bad("gamma1", self.gamma1);
        }
        if !(self.gamma2 >= 0.0 && self.gamma2.is_finite()) {
            return bad("gamma2", self.gamma2);
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return bad("tau", self.tau);
        }
        if !(1..=3).contains(&self.irrelevant) {
            return bad("irrelevant", self.irrelevant as f64);
        }
        if self.esd_probes == 0 || self.preserve_probes == 0 || self.feature_probes == 0 {
            return Err(ToyError::Config("probe counts must be >= 1".into()));
        }
        Ok(())
    }
}

/// Weights of the four loss components in one evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub esd: f64,
    pub attn: f64,
    pub lora: f64,
    pub rsc: f64,
}

impl LossWeights {
    pub fn erasure(gamma1: f64) -> Self {
        Self {
            esd: 1.0,
            attn: gamma1,
            lora: 0.0,
            rsc: 0.0,
        }
    }

    pub fn preservation(gamma2: f64) -> Self {
        Self {
            esd: 0.0,
            attn: 0.0,
            lora: 1.0,
            rsc: gamma2,
        }
    }

    /// `L_e + λ L_p`.
    pub fn composite(gamma1: f64, gamma2: f64, lambda: f64) -> Self {
        Self {
            esd: 1.0,
            attn: gamma1,
            lora: lambda,
            rsc: lambda * gamma2,
        }
    }

    pub fn only(component: &str) -> Option<Self> {
        let z = Self {
            esd: 0.0,
            attn: 0.0,
            lora: 0.0,
            rsc: 0.0,
        };
        match component {
            "esd" => Some(Self { esd: 1.0, ..z }),
            "attn" => Some(Self { attn: 1.0, ..z }),
            "lora" => Some(Self { lora: 1.0, ..z }),
            "rsc" => Some(Self { rsc: 1.0, ..z }),
            _ => None,
        }
    }
}

/// Component values from one evaluation. Components with zero weight are
/// not evaluated and read 0, except `attn`, which comes free with `esd`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossParts {
    pub esd: f64,
    pub attn: f64,
    pub lora: f64,
    pub rsc: f64,
}

impl LossParts {
    pub fn total(&self, w: &LossWeights) -> f64 {
        w.esd * self.esd + w.attn * self.attn + w.lora * self.lora + w.rsc * self.rsc
    }
}

/// Probes and frozen-model references for one image or video frame.
#[derive(Debug, Clone)]
pub struct Frame {
    pub phase: f64,
    esd: Vec<(Probe, [f64; 2])>,
    preserve: Vec<(Concept, Probe, [f64; 2])>,
    features: Vec<Probe>,
    f_syn: Vec<f64>,
    f_ir: Vec<Vec<f64>>,
    tau: f64,
}

impl Frame {
    pub fn new(model: &ToyFlowModel, settings: &ErasureSettings, phase: f64, rng: &mut SeededRng) -> Result<Self> {
        settings.validate()?;
        let base = &model.weights;
        let target = Prompt::new(Concept::Target);
        let null = Prompt::new(Concept::Null);
        let esd = (0..settings.esd_probes)
            .map(|_| {
                let p = Probe::draw(model, Concept::Target, 0.0, 1.0, phase, rng);
                let v_e = model.velocity(base, &target, p.x, p.t, p.phase);
                let v_null = model.velocity(base, &null, p.x, p.t, p.phase);
                (p, esd_target(v_e, v_null, settings.eta))
            })
            .collect();
        let mut preserve = Vec::new();
        for &c in &Concept::IRRELEVANT[..settings.irrelevant] {
            for _ in 0..settings.preserve_probes {
                let p = Probe::draw(model, c, 0.0, 1.0, phase, rng);
                preserve.push((c, p, model.velocity(base, &Prompt::new(c), p.x, p.t, p.phase)));
            }
        }
        // high-noise probes shared by every concept's feature
        let features: Vec<Probe> = (0..settings.feature_probes)
            .map(|_| Probe::draw(model, Concept::Null, 0.8, 1.0, phase, rng))
            .collect();
        let f_syn = attention_feature(model, base, &Prompt::new(Concept::Synonym), &features).0;
        let f_ir = Concept::IRRELEVANT[..settings.irrelevant]
            .iter()
            .map(|&c| attention_feature(model, base, &Prompt::new(c), &features).0)
            .collect();
        Ok(Self {
            phase,
            esd,
            preserve,
            features,
            f_syn,
            f_ir,
            tau: settings.tau,
        })
    }

    /// The target-prompt feature of `weights` against the frozen contrast set.
    pub fn features(&self, model: &ToyFlowModel, weights: &FlowWeights) -> ConceptFeatures {
        let f_e = attention_feature(model, weights, &Prompt::new(Concept::Target), &self.features).0;
        ConceptFeatures {
            f_e,
            f_syn: self.f_syn.clone(),
            f_ir: self.f_ir.clone(),
            tau: self.tau,
        }
    }

    /// Probe-averaged attention map of the target prompt under `weights`,
    /// with the concept token as the target key.
    pub fn attention(&self, model: &ToyFlowModel, weights: &FlowWeights) -> Result<ToyAttention> {
        let prompt = Prompt::new(Concept::Target);
        let mut mean = AttnMap::zeros();
        for (p, _) in &self.esd {
            mean += model.pass(weights, &prompt, p.x, p.t, p.phase).attn.p;
        }
        mean /= self.esd.len() as f64;
        ToyAttention::from_static(&mean, prompt.target.0, prompt.target.1)
    }

    /// Loss components under `tuned`, accumulating `∂(Σ w·part)/∂W` into
    /// `grads` when given.
    pub fn evaluate(
        &self,
        model: &ToyFlowModel,
        tuned: &FlowWeights,
        w: &LossWeights,
        mut grads: Option<&mut FlowWeights>,
    ) -> Result<LossParts> {
        let mut parts = LossParts::default();
        if w.esd != 0.0 || w.attn != 0.0 {
            let prompt = Prompt::new(Concept::Target);
            let n = self.esd.len() as f64;
            let (start, end) = prompt.target;
            let mut mean = AttnMap::zeros();
            let mut dp = AttnMap::zeros();
            for r in 0..SEQ {
                for c in start..end {
                    dp[(r, c)] = w.attn / n;
                }
            }
            for (p, target) in &self.esd {
                let pass = model.pass(tuned, &prompt, p.x, p.t, p.phase);
                let v = pass.velocity;
                parts.esd += sq_dist(v, *target);
                mean += pass.attn.p;
                if let Some(g) = grads.as_deref_mut() {
                    let s = 2.0 * w.esd / n;
                    tuned.backward(
                        &pass,
                        [s * (v[0] - target[0]), s * (v[1] - target[1])],
                        Some(&dp),
                        1.0,
                        g,
                    );
                }
            }
            parts.esd /= n;
            mean /= n;
            parts.attn = attention_regularizer(&ToyAttention::from_static(&mean, start, end)?);
        }
        if w.lora != 0.0 {
            let n = self.preserve.len() as f64;
            for (c, p, frozen) in &self.preserve {
                let pass = model.pass(tuned, &Prompt::new(*c), p.x, p.t, p.phase);
                let v = pass.velocity;
                parts.lora += sq_dist(v, *frozen);
                if let Some(g) = grads.as_deref_mut() {
                    let s = 2.0 * w.lora / n;
                    tuned.backward(&pass, [s * (v[0] - frozen[0]), s * (v[1] - frozen[1])], None, 1.0, g);
                }
            }
            parts.lora /= n;
        }
        if w.rsc != 0.0 {
            let (f_e, passes, raw_norm) =
                attention_feature(model, tuned, &Prompt::new(Concept::Target), &self.features);
            let cf = ConceptFeatures {
                f_e,
                f_syn: self.f_syn.clone(),
                f_ir: self.f_ir.clone(),
                tau: self.tau,
            };
            parts.rsc = rsc_loss(&cf);
            if let Some(g) = grads {
                let dfe: Vec<f64> = rsc_grad_fe(&cf).iter().map(|x| w.rsc * x).collect();
                for (pass, dp) in passes.iter().zip(feature_pull_back(&cf.f_e, raw_norm, &dfe)) {
                    tuned.backward(pass, [0.0, 0.0], Some(&dp), 1.0, g);
                }
            }
        }
        Ok(parts)
    }

    pub fn loss(&self, model: &ToyFlowModel, theta: &[f64], w: &LossWeights) -> Result<f64> {
        let tuned = Lora::from_slice(theta)?.apply(&model.weights);
        Ok(self.evaluate(model, &tuned, w, None)?.total(w))
    }

    pub fn loss_and_grad(&self, model: &ToyFlowModel, theta: &[f64], w: &LossWeights) -> Result<(f64, Vec<f64>)> {
        let lora = Lora::from_slice(theta)?;
        let tuned = lora.apply(&model.weights);
        let mut dw = FlowWeights::zeros();
        let parts = self.evaluate(model, &tuned, w, Some(&mut dw))?;
        Ok((parts.total(w), lora.pull_back(&dw)))
    }
}

/// A sequence of frames; frame 0 is the anchor.
#[derive(Debug, Clone)]
pub struct VideoVolume {
    frames: Vec<Frame>,
    seed: u64,
}

impl VideoVolume {
    /// Frame `f` draws its probes from substream `f` of `settings.seed`, so
    /// frame 0 of any video is the single-image frame.
    pub fn generate(model: &ToyFlowModel, settings: &ErasureSettings, frames: usize) -> Result<Self> {
        if frames == 0 {
            return Err(ToyError::Config("a video needs at least one frame".into()));
        }
        let root = SeededRng::new(settings.seed);
        let frames = (0..frames)
            .map(|f| Frame::new(model, settings, f as f64 / VIDEO_PHASES, &mut root.substream(f as u64)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            frames,
            seed: settings.seed,
        })
    }

    pub fn from_frames(frames: Vec<Frame>, seed: u64) -> Result<Self> {
        if frames.is_empty() {
            return Err(ToyError::Config("a video needs at least one frame".into()));
        }
        Ok(Self { frames, seed })
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Per-frame attention maps under `weights`.
    pub fn attention_maps(&self, model: &ToyFlowModel, weights: &FlowWeights) -> Result<Vec<ToyAttention>> {
        self.frames.iter().map(|f| f.attention(model, weights)).collect()
    }
}

/// Mean of the per-frame attention penalties.
pub fn volumetric_attention_regularizer(frames: &[ToyAttention]) -> Result<f64> {
    if frames.is_empty() {
        return Err(ToyError::Config("a video needs at least one frame".into()));
    }
    Ok(frames.iter().map(attention_regularizer).sum::<f64>() / frames.len() as f64)
}

/// `L_e`, `L_p` over a LoRA vector: each is `½ (anchor frame + frame mean)`
/// of the per-frame objective.
#[derive(Debug, Clone)]
pub struct FlowErasurePair {
    model: ToyFlowModel,
    video: VideoVolume,
    gamma1: f64,
    gamma2: f64,
}

/// Full image suite on the anchor frame plus the volumetric average over
/// all frames. With one frame this is the image objective exactly.
pub fn anchor_and_propagate_objectives(
    video: VideoVolume,
    model: ToyFlowModel,
    gamma1: f64,
    gamma2: f64,
) -> Result<FlowErasurePair> {
    if !(gamma1 >= 0.0 && gamma2 >= 0.0) {
        return Err(ToyError::Config(format!(
            "loss weights must be >= 0, got {gamma1}, {gamma2}"
        )));
    }
    Ok(FlowErasurePair {
        model,
        video,
        gamma1,
        gamma2,
    })
}

impl FlowErasurePair {
    pub fn image(model: ToyFlowModel, settings: &ErasureSettings) -> Result<Self> {
        Self::video(model, settings, 1)
    }

    pub fn video(model: ToyFlowModel, settings: &ErasureSettings, frames: usize) -> Result<Self> {
        let video = VideoVolume::generate(&model, settings, frames)?;
        anchor_and_propagate_objectives(video, model, settings.gamma1, settings.gamma2)
    }

    pub fn model(&self) -> &ToyFlowModel {
        &self.model
    }

    pub fn volume(&self) -> &VideoVolume {
        &self.video
    }

    /// Starting LoRA vector: zero delta, nonzero gradient.
    pub fn theta0(&self) -> Vec<f64> {
        Lora::init(&mut SeededRng::new(self.video.seed).substream(u64::MAX)).to_vec()
    }

    pub fn tuned_weights(&self, theta: &[f64]) -> Result<FlowWeights> {
        Ok(Lora::from_slice(theta)?.apply(&self.model.weights))
    }

    /// Components per frame, for reporting.
    pub fn parts(&self, theta: &[f64]) -> Result<Vec<LossParts>> {
        let tuned = self.tuned_weights(theta)?;
        let all = LossWeights {
            esd: 1.0,
            attn: 1.0,
            lora: 1.0,
            rsc: 1.0,
        };
        self.video
            .frames
            .iter()
            .map(|f| f.evaluate(&self.model, &tuned, &all, None))
            .collect()
    }

    pub fn evaluate(&self, theta: &[f64], w: &LossWeights, want_grad: bool) -> Result<(f64, Option<Vec<f64>>)> {
        let lora = Lora::from_slice(theta)?;
        let tuned = lora.apply(&self.model.weights);
        let t = self.video.len() as f64;
        let mut sum = 0.0;
        let mut anchor = 0.0;
        let mut grad_sum = FlowWeights::zeros();
        let mut grad_anchor = FlowWeights::zeros();
        for (i, frame) in self.video.frames.iter().enumerate() {
            let mut g = FlowWeights::zeros();
            let parts = frame.evaluate(&self.model, &tuned, w, want_grad.then_some(&mut g))?;
            let l = parts.total(w);
            sum += l;
            if want_grad {
                grad_sum.axpy(1.0, &g);
            }
            if i == 0 {
                anchor = l;
                grad_anchor = g;
            }
        }
        let loss = 0.5 * (anchor + sum / t);
        if !want_grad {
            return Ok((loss, None));
        }
        let mut total = FlowWeights::zeros();
        total.axpy(0.5, &grad_anchor);
        total.axpy(0.5 / t, &grad_sum);
        Ok((loss, Some(lora.pull_back(&total))))
    }

    fn value(&self, theta: &[f64], w: &LossWeights) -> f64 {
        self.evaluate(theta, w, false).expect("theta has the LoRA dimension").0
    }

    fn gradient(&self, theta: &[f64], w: &LossWeights) -> Vec<f64> {
        self.evaluate(theta, w, true)
            .expect("theta has the LoRA dimension")
            .1
            .expect("gradient requested")
    }
}

impl ObjectivePair<f64> for FlowErasurePair {
    fn dim(&self) -> usize {
        crate::flow::LORA_PARAMS
    }

    fn loss_e(&self, theta: &[f64]) -> f64 {
        self.value(theta, &LossWeights::erasure(self.gamma1))
    }

    fn loss_p(&self, theta: &[f64]) -> f64 {
        self.value(theta, &LossWeights::preservation(self.gamma2))
    }

    fn grad_e(&self, theta: &[f64]) -> Vec<f64> {
        self.gradient(theta, &LossWeights::erasure(self.gamma1))
    }

    fn grad_p(&self, theta: &[f64]) -> Vec<f64> {
        self.gradient(theta, &LossWeights::preservation(self.gamma2))
    }

    fn grad_composite(&self, theta: &[f64], lambda: f64) -> Vec<f64> {
        self.gradient(theta, &LossWeights::composite(self.gamma1, self.gamma2, lambda))
    }
}
