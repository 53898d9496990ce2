use nalgebra::{DMatrix, SMatrix};
use rand::seq::SliceRandom;
use tolcone_core::{ObjectivePair, SeededRng};

use crate::{Result, ToyError};

/// Cached single-head attention pass: `Q = X W_qᵀ`, `K = X W_kᵀ`,
/// `P = softmax_rows(Q Kᵀ / √D)`.
#[derive(Debug, Clone)]
pub struct AttnForward<const S: usize, const D: usize> {
    pub q: SMatrix<f64, S, D>,
    pub k: SMatrix<f64, S, D>,
    pub p: SMatrix<f64, S, S>,
}

pub fn attention_forward<const S: usize, const D: usize>(
    x: &SMatrix<f64, S, D>,
    wq: &SMatrix<f64, D, D>,
    wk: &SMatrix<f64, D, D>,
) -> AttnForward<S, D> {
    let q = x * wq.transpose();
    let k = x * wk.transpose();
    let mut p = q * k.transpose() / (D as f64).sqrt();
    for r in 0..S {
        let m = (0..S).map(|c| p[(r, c)]).fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for c in 0..S {
            let e = (p[(r, c)] - m).exp();
            p[(r, c)] = e;
            z += e;
        }
        for c in 0..S {
            p[(r, c)] /= z;
        }
    }
    AttnForward { q, k, p }
}

/// Pulls `∂L/∂P` back to `(∂L/∂W_q, ∂L/∂W_k)`.
pub fn attention_backward<const S: usize, const D: usize>(
    x: &SMatrix<f64, S, D>,
    fwd: &AttnForward<S, D>,
    dp: &SMatrix<f64, S, S>,
) -> (SMatrix<f64, D, D>, SMatrix<f64, D, D>) {
    let p = &fwd.p;
    let mut ds = SMatrix::<f64, S, S>::zeros();
    for r in 0..S {
        let inner: f64 = (0..S).map(|c| dp[(r, c)] * p[(r, c)]).sum();
        for c in 0..S {
            ds[(r, c)] = p[(r, c)] * (dp[(r, c)] - inner);
        }
    }
    let scale = 1.0 / (D as f64).sqrt();
    let dq = ds * fwd.k * scale;
    let dk = ds.transpose() * fwd.q * scale;
    (dq.transpose() * x, dk.transpose() * x)
}

/// Row-stochastic attention weights `(heads, queries, keys)` with a target
/// key range `[start, end)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyAttention {
    heads: Vec<DMatrix<f64>>,
    start: usize,
    end: usize,
}

impl ToyAttention {
    pub fn new(heads: Vec<DMatrix<f64>>, start: usize, end: usize) -> Result<Self> {
        let first = heads
            .first()
            .ok_or_else(|| ToyError::Config("attention needs a head".into()))?;
        let (rows, cols) = first.shape();
        for (h, w) in heads.iter().enumerate() {
            if w.shape() != (rows, cols) {
                return Err(ToyError::DimensionMismatch {
                    expected: cols,
                    found: w.ncols(),
                });
            }
            for r in 0..rows {
                let sum: f64 = w.row(r).iter().sum();
                let bad_entry = w.row(r).iter().any(|v| !(-1e-12..=1.0 + 1e-12).contains(v));
                if (sum - 1.0).abs() > 1e-9 || bad_entry {
                    return Err(ToyError::NotStochastic { head: h, row: r, sum });
                }
            }
        }
        if start > end || end > cols {
            return Err(ToyError::InvalidRange { start, end, len: cols });
        }
        Ok(Self { heads, start, end })
    }

    pub fn from_static<const S: usize>(p: &SMatrix<f64, S, S>, start: usize, end: usize) -> Result<Self> {
        Self::new(vec![DMatrix::from_column_slice(S, S, p.as_slice())], start, end)
    }

    pub fn heads(&self) -> &[DMatrix<f64>] {
        &self.heads
    }

    pub fn range(&self) -> (usize, usize) {
        (self.start, self.end)
    }

    /// `∂/∂W` of [`attention_regularizer`]: ones on the target columns.
    pub fn regularizer_gradient(&self) -> Vec<DMatrix<f64>> {
        self.heads
            .iter()
            .map(|w| {
                DMatrix::from_fn(w.nrows(), w.ncols(), |_, c| {
                    if (self.start..self.end).contains(&c) {
                        1.0
                    } else {
                        0.0
                    }
                })
            })
            .collect()
    }
}

/// Total attention mass on the target keys: the sum over heads, query rows,
/// and key columns in `[start, end)`. An empty range contributes 0 and logs
/// a warning.
pub fn attention_regularizer(attn: &ToyAttention) -> f64 {
    if attn.start == attn.end {
        log::warn!("attention regularizer called with an empty target range");
        return 0.0;
    }
    attn.heads
        .iter()
        .map(|w| (attn.start..attn.end).map(|c| w.column(c).sum()).sum::<f64>())
        .sum()
}

/// A permuted prompt. `perm[i]` is the original position of the token now
/// at position `i`; `target` lists the new positions of the original target
/// range, ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct Scrambled<T> {
    pub tokens: Vec<T>,
    pub perm: Vec<usize>,
    pub target: Vec<usize>,
}

/// Uniformly random token permutation with the target range remapped.
pub fn scramble_tokens<T: Clone>(tokens: &[T], start: usize, end: usize, rng: &mut SeededRng) -> Result<Scrambled<T>> {
    if start > end || end > tokens.len() {
        return Err(ToyError::InvalidRange {
            start,
            end,
            len: tokens.len(),
        });
    }
    let mut perm: Vec<usize> = (0..tokens.len()).collect();
    perm.shuffle(rng);
    let mut target: Vec<usize> = (0..perm.len()).filter(|&i| (start..end).contains(&perm[i])).collect();
    target.sort_unstable();
    Ok(Scrambled {
        tokens: perm.iter().map(|&i| tokens[i].clone()).collect(),
        perm,
        target,
    })
}

pub const ATT_TOKENS: usize = 5;
pub const ATT_DIM: usize = 6;

type AttX = SMatrix<f64, ATT_TOKENS, ATT_DIM>;
type AttW = SMatrix<f64, ATT_DIM, ATT_DIM>;

/// One attention layer with trainable `W_q, W_k` (θ = both, column-major).
///
/// `L_e` is the attention mass on a target token in one prompt; `L_p` is
/// the squared drift of another prompt's attention pattern from its value
/// at the initial weights. The two prompts share every other token, so
/// reducing one moves the other.
#[derive(Debug, Clone)]
pub struct AttentionToyPair {
    erase_x: AttX,
    keep_x: AttX,
    target: usize,
    wq0: AttW,
    wk0: AttW,
    keep_ref: SMatrix<f64, ATT_TOKENS, ATT_TOKENS>,
}

impl AttentionToyPair {
    pub fn random(rng: &mut SeededRng) -> Self {
        let scale = 1.0 / (ATT_DIM as f64).sqrt();
        let shared = AttX::from_fn(|_, _| rng.normal());
        let target = 2;
        let mut erase_x = shared;
        let mut keep_x = shared;
        for c in 0..ATT_DIM {
            erase_x[(target, c)] = rng.normal();
            keep_x[(target, c)] = rng.normal();
        }
        let wq0 = AttW::from_fn(|_, _| scale * rng.normal());
        let wk0 = AttW::from_fn(|_, _| scale * rng.normal());
        let keep_ref = attention_forward(&keep_x, &wq0, &wk0).p;
        Self {
            erase_x,
            keep_x,
            target,
            wq0,
            wk0,
            keep_ref,
        }
    }

    pub fn theta0(&self) -> Vec<f64> {
        let mut v = self.wq0.as_slice().to_vec();
        v.extend_from_slice(self.wk0.as_slice());
        v
    }

    fn split(theta: &[f64]) -> (AttW, AttW) {
        let n = ATT_DIM * ATT_DIM;
        (
            AttW::from_column_slice(&theta[..n]),
            AttW::from_column_slice(&theta[n..]),
        )
    }

    fn join(a: AttW, b: AttW) -> Vec<f64> {
        let mut v = a.as_slice().to_vec();
        v.extend_from_slice(b.as_slice());
        v
    }

    /// Attention of the erasure prompt at `θ`.
    pub fn erase_attention(&self, theta: &[f64]) -> Result<ToyAttention> {
        let (wq, wk) = Self::split(theta);
        ToyAttention::from_static(
            &attention_forward(&self.erase_x, &wq, &wk).p,
            self.target,
            self.target + 1,
        )
    }
}

impl ObjectivePair<f64> for AttentionToyPair {
    fn dim(&self) -> usize {
        2 * ATT_DIM * ATT_DIM
    }

    fn loss_e(&self, theta: &[f64]) -> f64 {
        let (wq, wk) = Self::split(theta);
        let p = attention_forward(&self.erase_x, &wq, &wk).p;
        p.column(self.target).sum()
    }

    fn loss_p(&self, theta: &[f64]) -> f64 {
        let (wq, wk) = Self::split(theta);
        let p = attention_forward(&self.keep_x, &wq, &wk).p;
        (p - self.keep_ref).norm_squared()
    }

    fn grad_e(&self, theta: &[f64]) -> Vec<f64> {
        let (wq, wk) = Self::split(theta);
        let f = attention_forward(&self.erase_x, &wq, &wk);
        let mut dp = SMatrix::<f64, ATT_TOKENS, ATT_TOKENS>::zeros();
        dp.column_mut(self.target).fill(1.0);
        let (a, b) = attention_backward(&self.erase_x, &f, &dp);
        Self::join(a, b)
    }

    fn grad_p(&self, theta: &[f64]) -> Vec<f64> {
        let (wq, wk) = Self::split(theta);
        let f = attention_forward(&self.keep_x, &wq, &wk);
        let dp = (f.p - self.keep_ref) * 2.0;
        let (a, b) = attention_backward(&self.keep_x, &f, &dp);
        Self::join(a, b)
    }
}
