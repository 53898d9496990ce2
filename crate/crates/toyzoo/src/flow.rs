//! Conditional rectified-flow toy: a prompt of three text tokens and one
//! pixel token passes through a single attention head, and the pixel row's
//! attention output feeds a one-hidden-layer MLP that predicts a velocity
//! in `R²`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{SMatrix, SVector};
use serde::{Deserialize, Serialize};
use tolcone_core::SeededRng;

use crate::attention::{attention_backward, attention_forward, scramble_tokens, AttnForward};
use crate::{Result, ToyError};

pub const TOKEN_DIM: usize = 8;
/// Three text tokens and the pixel token.
pub const SEQ: usize = 4;
pub const HIDDEN: usize = 32;
/// `[x1, x2, t, phase]` followed by the attention output.
pub const MLP_IN: usize = 4 + TOKEN_DIM;
pub const RANK: usize = 2;
pub const LORA_PARAMS: usize = 3 * RANK * 2 * TOKEN_DIM + RANK * (HIDDEN + MLP_IN) + RANK * (2 + HIDDEN);

const TEXT: usize = SEQ - 1;
const PIXEL: usize = SEQ - 1;

pub type Tokens = SMatrix<f64, SEQ, TOKEN_DIM>;
pub type AttnMap = SMatrix<f64, SEQ, SEQ>;
type MatD = SMatrix<f64, TOKEN_DIM, TOKEN_DIM>;
type MatW1 = SMatrix<f64, HIDDEN, MLP_IN>;
type MatW2 = SMatrix<f64, 2, HIDDEN>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Concept {
    Target,
    Synonym,
    Irrelevant(u8),
    Null,
}

impl Concept {
    pub const IRRELEVANT: [Concept; 3] = [Concept::Irrelevant(0), Concept::Irrelevant(1), Concept::Irrelevant(2)];

    /// Every concept that has its own mixture component.
    pub const GENERATIVE: [Concept; 5] = [
        Concept::Target,
        Concept::Synonym,
        Concept::Irrelevant(0),
        Concept::Irrelevant(1),
        Concept::Irrelevant(2),
    ];

    fn slot(self) -> usize {
        match self {
            Concept::Target => 0,
            Concept::Synonym => 1,
            Concept::Irrelevant(k) => 2 + k as usize,
            Concept::Null => 5,
        }
    }
}

impl fmt::Display for Concept {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Concept::Target => write!(f, "target"),
            Concept::Synonym => write!(f, "synonym"),
            Concept::Irrelevant(k) => write!(f, "irrelevant{k}"),
            Concept::Null => write!(f, "null"),
        }
    }
}

impl FromStr for Concept {
    type Err = ToyError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "target" => Ok(Concept::Target),
            "synonym" => Ok(Concept::Synonym),
            "null" => Ok(Concept::Null),
            _ => s
                .strip_prefix("irrelevant")
                .and_then(|k| k.parse::<u8>().ok())
                .filter(|&k| k < 3)
                .map(Concept::Irrelevant)
                .ok_or_else(|| ToyError::Samples(format!("unknown concept {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TokenId {
    Concept(Concept),
    Filler(u8),
}

impl TokenId {
    fn slot(self) -> usize {
        match self {
            TokenId::Concept(c) => c.slot(),
            TokenId::Filler(i) => 6 + i as usize % 2,
        }
    }
}

/// Three text tokens; `target` is the key range of the concept token.
#[derive(Debug, Clone, PartialEq)]
pub struct Prompt {
    pub tokens: [TokenId; TEXT],
    pub target: (usize, usize),
}

impl Prompt {
    pub fn new(concept: Concept) -> Self {
        Self {
            tokens: [TokenId::Filler(0), TokenId::Concept(concept), TokenId::Filler(1)],
            target: (1, 2),
        }
    }

    pub fn concept(&self) -> Concept {
        self.tokens
            .iter()
            .find_map(|t| match t {
                TokenId::Concept(c) => Some(*c),
                TokenId::Filler(_) => None,
            })
            .unwrap_or(Concept::Null)
    }

    /// Random permutation of the text tokens with the target range remapped.
    pub fn scrambled(&self, rng: &mut SeededRng) -> Self {
        let s = scramble_tokens(&self.tokens, self.target.0, self.target.1, rng)
            .expect("prompt target range is valid by construction");
        let start = s.target.first().copied().unwrap_or(0);
        Self {
            tokens: [s.tokens[0], s.tokens[1], s.tokens[2]],
            target: (start, start + s.target.len()),
        }
    }
}

/// 2D Gaussian mixture with one component per concept. The synonym shares
/// the target's mode; the null prompt generates the whole mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowWorld {
    pub target_mode: [f64; 2],
    pub irrelevant_modes: [[f64; 2]; 3],
    pub sigma: f64,
    /// Weight of the target embedding inside each irrelevant concept's
    /// embedding; 0 makes them independent.
    pub entanglement: f64,
}

impl Default for FlowWorld {
    fn default() -> Self {
        Self {
            target_mode: [2.0, 0.0],
            irrelevant_modes: [[0.0, 2.0], [-2.0, 0.0], [0.0, -2.0]],
            sigma: 0.15,
            entanglement: 0.0,
        }
    }
}

impl FlowWorld {
    pub fn mode(&self, concept: Concept) -> Option<[f64; 2]> {
        match concept {
            Concept::Target | Concept::Synonym => Some(self.target_mode),
            Concept::Irrelevant(k) => self.irrelevant_modes.get(k as usize).copied(),
            Concept::Null => None,
        }
    }

    pub fn sample_data(&self, concept: Concept, rng: &mut SeededRng) -> [f64; 2] {
        let c = match concept {
            Concept::Null => Concept::GENERATIVE[rng.below(Concept::GENERATIVE.len())],
            c => c,
        };
        let m = self.mode(c).expect("generative concept has a mode");
        [m[0] + self.sigma * rng.normal(), m[1] + self.sigma * rng.normal()]
    }
}

/// Dense weights of the toy model.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowWeights {
    pub wq: MatD,
    pub wk: MatD,
    pub wv: MatD,
    pub w1: MatW1,
    pub b1: SVector<f64, HIDDEN>,
    pub w2: MatW2,
    pub b2: SVector<f64, 2>,
}

/// Cached activations of one forward pass.
#[derive(Debug, Clone)]
pub struct FlowPass {
    pub x: Tokens,
    pub attn: AttnForward<SEQ, TOKEN_DIM>,
    values: Tokens,
    h: SVector<f64, MLP_IN>,
    a: SVector<f64, HIDDEN>,
    pub velocity: [f64; 2],
}

impl FlowWeights {
    pub const PARAMS: usize = 3 * TOKEN_DIM * TOKEN_DIM + HIDDEN * MLP_IN + HIDDEN + 2 * HIDDEN + 2;

    pub fn zeros() -> Self {
        Self {
            wq: MatD::zeros(),
            wk: MatD::zeros(),
            wv: MatD::zeros(),
            w1: MatW1::zeros(),
            b1: SVector::zeros(),
            w2: MatW2::zeros(),
            b2: SVector::zeros(),
        }
    }

    pub fn random(rng: &mut SeededRng) -> Self {
        let sd = 1.0 / (TOKEN_DIM as f64).sqrt();
        let mut w = Self::zeros();
        w.wq = MatD::from_fn(|_, _| sd * rng.normal());
        w.wk = MatD::from_fn(|_, _| sd * rng.normal());
        w.wv = MatD::from_fn(|_, _| sd * rng.normal());
        let sd1 = 1.0 / (MLP_IN as f64).sqrt();
        w.w1 = MatW1::from_fn(|_, _| sd1 * rng.normal());
        let sd2 = 1.0 / (HIDDEN as f64).sqrt();
        w.w2 = MatW2::from_fn(|_, _| sd2 * rng.normal());
        w
    }

    fn parts(&self) -> [&[f64]; 7] {
        [
            self.wq.as_slice(),
            self.wk.as_slice(),
            self.wv.as_slice(),
            self.w1.as_slice(),
            self.b1.as_slice(),
            self.w2.as_slice(),
            self.b2.as_slice(),
        ]
    }

    fn parts_mut(&mut self) -> [&mut [f64]; 7] {
        [
            self.wq.as_mut_slice(),
            self.wk.as_mut_slice(),
            self.wv.as_mut_slice(),
            self.w1.as_mut_slice(),
            self.b1.as_mut_slice(),
            self.w2.as_mut_slice(),
            self.b2.as_mut_slice(),
        ]
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.parts().concat()
    }

    pub fn from_slice(v: &[f64]) -> Result<Self> {
        if v.len() != Self::PARAMS {
            return Err(ToyError::DimensionMismatch {
                expected: Self::PARAMS,
                found: v.len(),
            });
        }
        let mut w = Self::zeros();
        let mut at = 0;
        for part in w.parts_mut() {
            part.copy_from_slice(&v[at..at + part.len()]);
            at += part.len();
        }
        Ok(w)
    }

    /// `self += s · other`.
    pub fn axpy(&mut self, s: f64, other: &FlowWeights) {
        for (dst, src) in self.parts_mut().into_iter().zip(other.parts()) {
            for (d, x) in dst.iter_mut().zip(src) {
                *d += s * x;
            }
        }
    }

    pub fn forward(&self, x: Tokens) -> FlowPass {
        let attn = attention_forward(&x, &self.wq, &self.wk);
        let values = x * self.wv.transpose();
        let o = attn.p.row(PIXEL) * values;
        let mut h = SVector::<f64, MLP_IN>::zeros();
        h[0] = x[(PIXEL, 0)];
        h[1] = x[(PIXEL, 1)];
        h[2] = x[(PIXEL, 2)];
        h[3] = x[(PIXEL, 4)];
        for j in 0..TOKEN_DIM {
            h[4 + j] = o[j];
        }
        let a = (self.w1 * h + self.b1).map(f64::tanh);
        let v = self.w2 * a + self.b2;
        FlowPass {
            x,
            attn,
            values,
            h,
            a,
            velocity: [v[0], v[1]],
        }
    }

    /// Accumulates `scale · ∂L/∂W` into `grads`, given `∂L/∂v` and an
    /// optional direct `∂L/∂P` on the attention map.
    pub fn backward(&self, pass: &FlowPass, dv: [f64; 2], dp: Option<&AttnMap>, scale: f64, grads: &mut FlowWeights) {
        let dv = SVector::<f64, 2>::new(scale * dv[0], scale * dv[1]);
        grads.w2 += dv * pass.a.transpose();
        grads.b2 += dv;
        let dz = (self.w2.transpose() * dv).component_mul(&pass.a.map(|a| 1.0 - a * a));
        grads.w1 += dz * pass.h.transpose();
        grads.b1 += dz;
        let dh = self.w1.transpose() * dz;
        let d_out = SMatrix::<f64, 1, TOKEN_DIM>::from_fn(|_, j| dh[4 + j]);
        let mut d_p = match dp {
            Some(dp) => dp * scale,
            None => AttnMap::zeros(),
        };
        let row = d_out * pass.values.transpose();
        for c in 0..SEQ {
            d_p[(PIXEL, c)] += row[c];
        }
        let d_values = pass.attn.p.row(PIXEL).transpose() * d_out;
        grads.wv += d_values.transpose() * pass.x;
        let (dq, dk) = attention_backward(&pass.x, &pass.attn, &d_p);
        grads.wq += dq;
        grads.wk += dk;
    }
}

/// Rank-`RANK` delta on every dense matrix: `ΔW = U·D` with `U` (out×r)
/// and `D` (r×in). Biases are not adapted.
#[derive(Debug, Clone, PartialEq)]
pub struct Lora {
    pub q: (SMatrix<f64, TOKEN_DIM, RANK>, SMatrix<f64, RANK, TOKEN_DIM>),
    pub k: (SMatrix<f64, TOKEN_DIM, RANK>, SMatrix<f64, RANK, TOKEN_DIM>),
    pub v: (SMatrix<f64, TOKEN_DIM, RANK>, SMatrix<f64, RANK, TOKEN_DIM>),
    pub w1: (SMatrix<f64, HIDDEN, RANK>, SMatrix<f64, RANK, MLP_IN>),
    pub w2: (SMatrix<f64, 2, RANK>, SMatrix<f64, RANK, HIDDEN>),
}

impl Lora {
    /// `U = 0` and Gaussian `D`, so the delta starts at exactly zero while
    /// its gradient does not vanish.
    pub fn init(rng: &mut SeededRng) -> Self {
        let mut l = Self::from_slice(&[0.0; LORA_PARAMS]).expect("length matches");
        let s = 1.0 / (RANK as f64).sqrt();
        l.q.1 = SMatrix::from_fn(|_, _| s * rng.normal());
        l.k.1 = SMatrix::from_fn(|_, _| s * rng.normal());
        l.v.1 = SMatrix::from_fn(|_, _| s * rng.normal());
        l.w1.1 = SMatrix::from_fn(|_, _| s * rng.normal());
        l.w2.1 = SMatrix::from_fn(|_, _| s * rng.normal());
        l
    }

    fn parts(&self) -> [&[f64]; 10] {
        [
            self.q.0.as_slice(),
            self.q.1.as_slice(),
            self.k.0.as_slice(),
            self.k.1.as_slice(),
            self.v.0.as_slice(),
            self.v.1.as_slice(),
            self.w1.0.as_slice(),
            self.w1.1.as_slice(),
            self.w2.0.as_slice(),
            self.w2.1.as_slice(),
        ]
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.parts().concat()
    }

    pub fn from_slice(v: &[f64]) -> Result<Self> {
        if v.len() != LORA_PARAMS {
            return Err(ToyError::DimensionMismatch {
                expected: LORA_PARAMS,
                found: v.len(),
            });
        }
        let mut at = 0;
        let mut take = |n: usize| {
            let s = &v[at..at + n];
            at += n;
            s
        };
        let q = (
            SMatrix::from_column_slice(take(TOKEN_DIM * RANK)),
            SMatrix::from_column_slice(take(RANK * TOKEN_DIM)),
        );
        let k = (
            SMatrix::from_column_slice(take(TOKEN_DIM * RANK)),
            SMatrix::from_column_slice(take(RANK * TOKEN_DIM)),
        );
        let vv = (
            SMatrix::from_column_slice(take(TOKEN_DIM * RANK)),
            SMatrix::from_column_slice(take(RANK * TOKEN_DIM)),
        );
        let w1 = (
            SMatrix::from_column_slice(take(HIDDEN * RANK)),
            SMatrix::from_column_slice(take(RANK * MLP_IN)),
        );
        let w2 = (
            SMatrix::from_column_slice(take(2 * RANK)),
            SMatrix::from_column_slice(take(RANK * HIDDEN)),
        );
        Ok(Self { q, k, v: vv, w1, w2 })
    }

    /// `W + ΔW`.
    pub fn apply(&self, base: &FlowWeights) -> FlowWeights {
        let mut w = base.clone();
        w.wq += self.q.0 * self.q.1;
        w.wk += self.k.0 * self.k.1;
        w.wv += self.v.0 * self.v.1;
        w.w1 += self.w1.0 * self.w1.1;
        w.w2 += self.w2.0 * self.w2.1;
        w
    }

    /// Chain rule from `∂L/∂W` to the factors: `∂U = ∂W·Dᵀ`, `∂D = Uᵀ·∂W`.
    pub fn pull_back(&self, dw: &FlowWeights) -> Vec<f64> {
        let g = Lora {
            q: (dw.wq * self.q.1.transpose(), self.q.0.transpose() * dw.wq),
            k: (dw.wk * self.k.1.transpose(), self.k.0.transpose() * dw.wk),
            v: (dw.wv * self.v.1.transpose(), self.v.0.transpose() * dw.wv),
            w1: (dw.w1 * self.w1.1.transpose(), self.w1.0.transpose() * dw.w1),
            w2: (dw.w2 * self.w2.1.transpose(), self.w2.0.transpose() * dw.w2),
        };
        g.to_vec()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PretrainConfig {
    pub steps: usize,
    pub batch: usize,
    pub learning_rate: f64,
    /// Probability of training on the null prompt.
    pub null_prob: f64,
    /// Probability of a nonzero frame phase; otherwise phase is 0.
    pub phase_prob: f64,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            steps: 2500,
            batch: 64,
            learning_rate: 1e-2,
            null_prob: 0.2,
            phase_prob: 0.5,
            seed: 0,
        }
    }
}

/// Frozen base model plus its token table and data world.
#[derive(Debug, Clone)]
pub struct ToyFlowModel {
    pub weights: FlowWeights,
    embeddings: [SVector<f64, TOKEN_DIM>; 8],
    pub world: FlowWorld,
}

impl ToyFlowModel {
    /// Random weights and token table. The synonym embedding is a small
    /// perturbation of the target's; irrelevant embeddings lean toward the
    /// target by `world.entanglement`.
    pub fn random(world: FlowWorld, rng: &mut SeededRng) -> Self {
        let mut embeddings = [SVector::<f64, TOKEN_DIM>::zeros(); 8];
        for e in embeddings.iter_mut() {
            *e = SVector::from_fn(|_, _| rng.normal());
        }
        let noise = SVector::<f64, TOKEN_DIM>::from_fn(|_, _| rng.normal());
        let syn = embeddings[0] * 0.9 + noise * 0.3;
        embeddings[1] = syn * (embeddings[0].norm() / syn.norm());
        let rho = world.entanglement.clamp(0.0, 1.0);
        for k in 2..5 {
            let mixed = embeddings[0] * rho + embeddings[k] * (1.0 - rho * rho).sqrt();
            embeddings[k] = mixed * (embeddings[0].norm() / mixed.norm());
        }
        let weights = FlowWeights::random(rng);
        Self {
            weights,
            embeddings,
            world,
        }
    }

    /// Random init followed by rectified-flow training with Adam.
    pub fn pretrained(world: FlowWorld, config: &PretrainConfig) -> Self {
        let rng = SeededRng::new(config.seed);
        let mut model = Self::random(world, &mut rng.substream(0));
        model.train(config, &mut rng.substream(1));
        model
    }

    pub fn embedding(&self, token: TokenId) -> SVector<f64, TOKEN_DIM> {
        self.embeddings[token.slot()]
    }

    pub fn tokens(&self, prompt: &Prompt, x: [f64; 2], t: f64, phase: f64) -> Tokens {
        let mut m = Tokens::zeros();
        for (i, tok) in prompt.tokens.iter().enumerate() {
            m.set_row(i, &self.embedding(*tok).transpose());
        }
        m[(PIXEL, 0)] = x[0];
        m[(PIXEL, 1)] = x[1];
        m[(PIXEL, 2)] = t;
        m[(PIXEL, 3)] = 1.0;
        m[(PIXEL, 4)] = phase;
        m
    }

    pub fn pass(&self, weights: &FlowWeights, prompt: &Prompt, x: [f64; 2], t: f64, phase: f64) -> FlowPass {
        weights.forward(self.tokens(prompt, x, t, phase))
    }

    pub fn velocity(&self, weights: &FlowWeights, prompt: &Prompt, x: [f64; 2], t: f64, phase: f64) -> [f64; 2] {
        self.pass(weights, prompt, x, t, phase).velocity
    }

    /// Flow-matching loss on one draw: `x_t = t·n + (1−t)·x₀`, target
    /// velocity `x₀ − n`.
    fn train(&mut self, config: &PretrainConfig, rng: &mut SeededRng) {
        let n = FlowWeights::PARAMS;
        let (mut m, mut v) = (vec![0.0; n], vec![0.0; n]);
        let (b1, b2) = (0.9f64, 0.999f64);
        let mut params = self.weights.to_vec();
        for step in 0..config.steps {
            let mut grads = FlowWeights::zeros();
            for _ in 0..config.batch {
                let concept = if rng.uniform(0.0, 1.0) < config.null_prob {
                    Concept::Null
                } else {
                    Concept::GENERATIVE[rng.below(Concept::GENERATIVE.len())]
                };
                let x0 = self.world.sample_data(concept, rng);
                let noise = [rng.normal(), rng.normal()];
                let t = rng.uniform(0.0, 1.0);
                let phase = if rng.uniform(0.0, 1.0) < config.phase_prob {
                    rng.uniform(0.0, 1.0)
                } else {
                    0.0
                };
                let xt = [t * noise[0] + (1.0 - t) * x0[0], t * noise[1] + (1.0 - t) * x0[1]];
                let pass = self.pass(&self.weights, &Prompt::new(concept), xt, t, phase);
                let r = [
                    pass.velocity[0] - (x0[0] - noise[0]),
                    pass.velocity[1] - (x0[1] - noise[1]),
                ];
                self.weights.backward(
                    &pass,
                    [2.0 * r[0], 2.0 * r[1]],
                    None,
                    1.0 / config.batch as f64,
                    &mut grads,
                );
            }
            let g = grads.to_vec();
            // cosine decay to 5% of the base rate
            let frac = step as f64 / config.steps.max(1) as f64;
            let lr = config.learning_rate * (0.05 + 0.95 * 0.5 * (1.0 + (std::f64::consts::PI * frac).cos()));
            let k = (step + 1) as i32;
            for i in 0..n {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                let mh = m[i] / (1.0 - b1.powi(k));
                let vh = v[i] / (1.0 - b2.powi(k));
                params[i] -= lr * mh / (vh.sqrt() + 1e-8);
            }
            self.weights = FlowWeights::from_slice(&params).expect("length matches");
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use tolcone_core::fd::{finite_difference_gradient, relative_error, FdStep};

    fn small_model() -> ToyFlowModel {
        ToyFlowModel::random(FlowWorld::default(), &mut SeededRng::new(3))
    }

    #[test]
    fn sizes() {
        assert_eq!(FlowWeights::PARAMS, 674);
        assert_eq!(LORA_PARAMS, 252);
        let w = FlowWeights::random(&mut SeededRng::new(1));
        assert_eq!(FlowWeights::from_slice(&w.to_vec()).unwrap(), w);
        let l = Lora::init(&mut SeededRng::new(1));
        assert_eq!(Lora::from_slice(&l.to_vec()).unwrap(), l);
    }

    #[test]
    fn zero_delta_is_exact() {
        let model = small_model();
        let lora = Lora::init(&mut SeededRng::new(5));
        let tuned = lora.apply(&model.weights);
        assert_eq!(tuned, model.weights);
        let p = Prompt::new(Concept::Target);
        assert_eq!(
            model.velocity(&tuned, &p, [0.3, -0.2], 0.5, 0.0),
            model.velocity(&model.weights, &p, [0.3, -0.2], 0.5, 0.0)
        );
    }

    #[test]
    fn outputs_are_finite_on_unit_box() {
        let model = small_model();
        for i in 0..=10 {
            for j in 0..=10 {
                let x = [i as f64 / 10.0, j as f64 / 10.0];
                let v = model.velocity(&model.weights, &Prompt::new(Concept::Null), x, x[0], x[1]);
                assert!(v.iter().all(|c| c.is_finite()));
            }
        }
    }

    #[test]
    fn weight_gradients_match_finite_differences() {
        let model = small_model();
        let mut rng = SeededRng::new(11);
        let prompt = Prompt::new(Concept::Irrelevant(1));
        let dp = AttnMap::from_fn(|_, _| rng.normal());
        let dv = [rng.normal(), rng.normal()];
        let x = [0.4, -1.1];
        let loss = |w: &[f64]| {
            let weights = FlowWeights::from_slice(w).unwrap();
            let pass = model.pass(&weights, &prompt, x, 0.7, 0.25);
            dv[0] * pass.velocity[0] + dv[1] * pass.velocity[1] + pass.attn.p.component_mul(&dp).sum()
        };
        let mut grads = FlowWeights::zeros();
        let pass = model.pass(&model.weights, &prompt, x, 0.7, 0.25);
        model.weights.backward(&pass, dv, Some(&dp), 1.0, &mut grads);
        let fd = finite_difference_gradient(loss, &model.weights.to_vec(), FdStep::default()).unwrap();
        assert!(relative_error(&grads.to_vec(), &fd) < 1e-6);
    }

    #[test]
    fn lora_gradients_match_finite_differences() {
        let model = small_model();
        let mut rng = SeededRng::new(12);
        let lora = Lora::init(&mut rng);
        let theta: Vec<f64> = lora.to_vec().iter().map(|x| x + 0.1 * rng.normal()).collect();
        let prompt = Prompt::new(Concept::Target);
        let loss = |th: &[f64]| {
            let w = Lora::from_slice(th).unwrap().apply(&model.weights);
            let v = model.velocity(&w, &prompt, [1.0, 0.5], 0.3, 0.0);
            v[0] * v[0] - 3.0 * v[1]
        };
        let l = Lora::from_slice(&theta).unwrap();
        let w = l.apply(&model.weights);
        let pass = model.pass(&w, &prompt, [1.0, 0.5], 0.3, 0.0);
        let mut dw = FlowWeights::zeros();
        w.backward(&pass, [2.0 * pass.velocity[0], -3.0], None, 1.0, &mut dw);
        let fd = finite_difference_gradient(loss, &theta, FdStep::default()).unwrap();
        assert!(relative_error(&l.pull_back(&dw), &fd) < 1e-6);
    }

    #[test]
    fn concept_labels_round_trip() {
        for c in Concept::GENERATIVE.iter().chain([&Concept::Null]) {
            assert_eq!(c.to_string().parse::<Concept>().unwrap(), *c);
        }
        assert!("irrelevant7".parse::<Concept>().is_err());
    }

    #[test]
    fn scrambled_prompt_gives_same_velocity() {
        let model = small_model();
        let p = Prompt::new(Concept::Synonym);
        let mut rng = SeededRng::new(2);
        let base = model.velocity(&model.weights, &p, [0.1, 0.2], 0.6, 0.0);
        for _ in 0..10 {
            let s = p.scrambled(&mut rng);
            assert_eq!(s.tokens[s.target.0], TokenId::Concept(Concept::Synonym));
            let v = model.velocity(&model.weights, &s, [0.1, 0.2], 0.6, 0.0);
            assert!((v[0] - base[0]).abs() < 1e-12 && (v[1] - base[1]).abs() < 1e-12);
        }
    }
}
