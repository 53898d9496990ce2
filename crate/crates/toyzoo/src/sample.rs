use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use tolcone_core::SeededRng;

use crate::flow::{Concept, FlowWeights, FlowWorld, Prompt, ToyFlowModel};
use crate::{Result, ToyError};

const DIVERGENCE: f64 = 1e6;

/// Endpoint of one generation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub x: [f64; 2],
    pub diverged: bool,
}

/// Forward Euler on `field(x, t)` from `t = 1` to `t = 0` in `steps` equal
/// steps. Stops early and flags the sample if `‖x‖` exceeds 1e6 or turns
/// non-finite.
pub fn euler_sample<F>(field: F, x_start: [f64; 2], steps: usize) -> Result<Sample>
where
    F: Fn([f64; 2], f64) -> [f64; 2],
{
    if steps == 0 {
        return Err(ToyError::Config("euler sampling needs at least one step".into()));
    }
    let dt = 1.0 / steps as f64;
    let mut x = x_start;
    for k in 0..steps {
        let t = 1.0 - k as f64 * dt;
        let v = field(x, t);
        x = [x[0] + dt * v[0], x[1] + dt * v[1]];
        let r = x[0].hypot(x[1]);
        if !(r <= DIVERGENCE) {
            return Ok(Sample { x, diverged: true });
        }
    }
    Ok(Sample { x, diverged: false })
}

/// Fraction of samples within `radius` of `mode`; diverged samples miss.
pub fn concept_accuracy(samples: &[Sample], mode: [f64; 2], radius: f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(ToyError::EmptySamples);
    }
    if !(radius > 0.0) {
        return Err(ToyError::Config(format!("radius must be > 0, got {radius}")));
    }
    let hits = samples
        .iter()
        .filter(|s| !s.diverged && (s.x[0] - mode[0]).hypot(s.x[1] - mode[1]) <= radius)
        .count();
    Ok(hits as f64 / samples.len() as f64)
}

/// Per-concept accuracy at each concept's own mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptScores {
    pub per_concept: BTreeMap<String, f64>,
    pub acc_e: f64,
    /// Mean over the irrelevant concepts.
    pub acc_ir: f64,
}

impl ConceptScores {
    pub fn h_a(&self) -> f64 {
        self.acc_ir - self.acc_e
    }

    /// Scores from a sample table; frames are pooled.
    pub fn from_records(records: &[SampleRecord], world: &FlowWorld, radius: f64) -> Result<Self> {
        let mut by_concept: BTreeMap<Concept, Vec<Sample>> = BTreeMap::new();
        for r in records {
            let c: Concept = r.concept.parse()?;
            by_concept.entry(c).or_default().push(Sample {
                x: [r.x1, r.x2],
                diverged: r.diverged,
            });
        }
        Self::from_samples(&by_concept, world, radius)
    }

    pub fn from_samples(samples: &BTreeMap<Concept, Vec<Sample>>, world: &FlowWorld, radius: f64) -> Result<Self> {
        let mut per_concept = BTreeMap::new();
        for (c, s) in samples {
            if let Some(mode) = world.mode(*c) {
                per_concept.insert(c.to_string(), concept_accuracy(s, mode, radius)?);
            }
        }
        let acc_e = *per_concept
            .get(&Concept::Target.to_string())
            .ok_or(ToyError::EmptySamples)?;
        let ir: Vec<f64> = Concept::IRRELEVANT
            .iter()
            .filter_map(|c| per_concept.get(&c.to_string()).copied())
            .collect();
        if ir.is_empty() {
            return Err(ToyError::EmptySamples);
        }
        let acc_ir = ir.iter().sum::<f64>() / ir.len() as f64;
        Ok(Self {
            per_concept,
            acc_e,
            acc_ir,
        })
    }
}

/// Row of the sample table: `concept,frame,x1,x2,diverged`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub concept: String,
    pub frame: usize,
    pub x1: f64,
    pub x2: f64,
    pub diverged: bool,
}

/// Generates `n` samples per generative concept at frame phase `phase`.
/// Starting noise depends only on `seed` and the concept, so two weight
/// sets are compared on identical noise.
pub fn generate_samples(
    model: &ToyFlowModel,
    weights: &FlowWeights,
    phase: f64,
    n: usize,
    steps: usize,
    seed: u64,
) -> Result<BTreeMap<Concept, Vec<Sample>>> {
    let root = SeededRng::new(seed);
    let mut out = BTreeMap::new();
    for (i, &c) in Concept::GENERATIVE.iter().enumerate() {
        let mut rng = root.substream(i as u64);
        let prompt = Prompt::new(c);
        let samples = (0..n)
            .map(|_| {
                let start = [rng.normal(), rng.normal()];
                euler_sample(|x, t| model.velocity(weights, &prompt, x, t, phase), start, steps)
            })
            .collect::<Result<Vec<_>>>()?;
        out.insert(c, samples);
    }
    Ok(out)
}

/// Generates samples and scores them.
pub fn evaluate_concepts(
    model: &ToyFlowModel,
    weights: &FlowWeights,
    phase: f64,
    n: usize,
    steps: usize,
    seed: u64,
    radius: f64,
) -> Result<ConceptScores> {
    let samples = generate_samples(model, weights, phase, n, steps, seed)?;
    ConceptScores::from_samples(&samples, &model.world, radius)
}

pub fn write_samples(path: &Path, records: &[SampleRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_samples(path: &Path) -> Result<Vec<SampleRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    let rows = r.deserialize().collect::<std::result::Result<Vec<SampleRecord>, _>>()?;
    if rows.is_empty() {
        return Err(ToyError::EmptySamples);
    }
    Ok(rows)
}
