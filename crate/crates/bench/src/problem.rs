use tolcone_core::{ObjectivePair, SeededRng};
use tolcone_toyzoo::{
    generate_samples, AttentionToyPair, FlowErasurePair, FlowWeights, FlowWorld, NonconvexPair, QuadraticPair,
    SampleRecord, ToyFlowModel, VIDEO_PHASES,
};

use crate::config::{derive_seed, ProblemKind, RunConfig};
use crate::Result;

/// An objective pair built from a config, with its starting point.
#[allow(clippy::large_enum_variant)]
pub enum Problem {
    Quadratic(QuadraticPair),
    Nonconvex(NonconvexPair),
    Attention(AttentionToyPair),
    Flow(Box<FlowErasurePair>),
}

impl Problem {
    pub fn build(cfg: &RunConfig) -> Result<Self> {
        let mut rng = SeededRng::new(derive_seed(cfg.seed, 3));
        Ok(match cfg.problem {
            ProblemKind::Quadratic => {
                let q = &cfg.quadratic;
                Problem::Quadratic(QuadraticPair::random_conflicting(
                    q.dim,
                    q.condition,
                    q.separation,
                    &mut rng,
                )?)
            }
            ProblemKind::Nonconvex => {
                let n = &cfg.nonconvex;
                Problem::Nonconvex(NonconvexPair::random(n.dim, n.spread, n.ripple, &mut rng))
            }
            ProblemKind::AttentionToy => Problem::Attention(AttentionToyPair::random(&mut rng)),
            ProblemKind::ToyflowImage | ProblemKind::ToyflowVideo => {
                let model = ToyFlowModel::pretrained(FlowWorld::default(), &cfg.pretrain_config());
                let settings = cfg.erasure_settings();
                let pair = if cfg.problem == ProblemKind::ToyflowImage {
                    FlowErasurePair::image(model, &settings)?
                } else {
                    FlowErasurePair::video(model, &settings, cfg.video.frames)?
                };
                Problem::Flow(Box::new(pair))
            }
        })
    }

    /// Quadratics start at the preservation minimizer, so any erasure
    /// progress costs preservation.
    pub fn theta0(&self) -> Vec<f64> {
        match self {
            Problem::Quadratic(q) => q.center_p().as_slice().to_vec(),
            Problem::Nonconvex(n) => vec![0.0; n.dim()],
            Problem::Attention(a) => a.theta0(),
            Problem::Flow(f) => f.theta0(),
        }
    }

    pub fn pair(&self) -> &dyn ObjectivePair<f64> {
        match self {
            Problem::Quadratic(q) => q,
            Problem::Nonconvex(n) => n,
            Problem::Attention(a) => a,
            Problem::Flow(f) => f.as_ref(),
        }
    }
}

/// Samples of every generative concept on every frame of a flow problem.
pub fn flow_samples(pair: &FlowErasurePair, weights: &FlowWeights, cfg: &RunConfig) -> Result<Vec<SampleRecord>> {
    let model = pair.model();
    let mut out = Vec::new();
    for frame in 0..pair.volume().len() {
        let phase = frame as f64 / VIDEO_PHASES;
        let seed = derive_seed(cfg.eval_seed(), frame as u64);
        let samples = generate_samples(model, weights, phase, cfg.eval.samples, cfg.eval.euler_steps, seed)?;
        for (concept, list) in samples {
            for s in list {
                out.push(SampleRecord {
                    concept: concept.to_string(),
                    frame,
                    x1: s.x[0],
                    x2: s.x[1],
                    diverged: s.diverged,
                });
            }
        }
    }
    Ok(out)
}
