//! Multi-head attention over the three modality embeddings.

use std::sync::Arc;

use rand_chacha::ChaCha8Rng;

use super::layers::{head_blocks, Ctx, Linear};
use super::params::ParamStore;
use crate::diffkernel::{Tape, Var};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Fusion {
    pub w_q: usize,
    pub w_k: usize,
    pub phi: Linear,
    pub dim: usize,
    pub heads: usize,
}

pub struct FusionOutput {
    pub fused: Var,
    /// Modality weights `N × M`, rows summing to 1.
    pub alpha: Var,
}

impl Fusion {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize, heads: usize, modalities: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        if heads == 0 || dim % heads != 0 {
            return Err(Error::config(format!("fusion width {dim} not divisible by {heads} heads")));
        }
        Ok(Fusion {
            w_q: store.glorot(format!("{name}.w_q"), dim, dim, rng),
            w_k: store.glorot(format!("{name}.w_k"), dim, dim, rng),
            phi: Linear::new(store, &format!("{name}.phi"), modalities * dim, dim, rng),
            dim,
            heads,
        })
    }

    /// Attention weights only: the query is the mean token, keys are per-modality
    /// projections, and each head's softmax runs across modalities.
    pub fn attention(&self, tape: &mut Tape, ctx: &Ctx, tokens: &[Var]) -> Result<Var> {
        let (n, d) = tape.shape(tokens[0]);
        for &t in tokens {
            if tape.shape(t) != (n, d) || d != self.dim {
                return Err(Error::Shape {
                    op: "fusion",
                    lhs: (n, self.dim),
                    rhs: tape.shape(t),
                });
            }
        }
        let m = tokens.len();
        let mut mean = tokens[0];
        for &t in &tokens[1..] {
            mean = tape.add(mean, t)?;
        }
        let mean = tape.scale(mean, 1.0 / m as f64)?;
        let q = tape.matmul(mean, ctx.vars[self.w_q])?;
        let blocks = tape.constant(head_blocks(self.dim, self.heads))?;
        let inv_sqrt = 1.0 / ((self.dim / self.heads) as f64).sqrt();
        let mut scores = Vec::with_capacity(m);
        for &t in tokens {
            let k = tape.matmul(t, ctx.vars[self.w_k])?;
            let qk = tape.mul(q, k)?;
            let s = tape.matmul(qk, blocks)?;
            scores.push(tape.scale(s, inv_sqrt)?);
        }
        let stacked = tape.concat_rows(&scores)?;
        let seg: Arc<[usize]> = (0..m * n).map(|r| r % n).collect();
        let probs = tape.segment_softmax(stacked, &seg, n)?;
        let mut cols = Vec::with_capacity(m);
        for j in 0..m {
            let rows: Arc<[usize]> = (j * n..(j + 1) * n).collect();
            let block = tape.gather_rows(probs, &rows)?;
            cols.push(tape.mean_axis(block, 1)?);
        }
        tape.concat_cols(&cols)
    }

    /// `Φ(α_1·h_1 ⊕ … ⊕ α_M·h_M)` with `Φ` a linear layer followed by ELU.
    pub fn forward(&self, tape: &mut Tape, ctx: &Ctx, tokens: &[Var]) -> Result<FusionOutput> {
        let alpha = self.attention(tape, ctx, tokens)?;
        let mut scaled = Vec::with_capacity(tokens.len());
        for (j, &t) in tokens.iter().enumerate() {
            let a = tape.slice_cols(alpha, j, j + 1)?;
            scaled.push(tape.mul(t, a)?);
        }
        let cat = tape.concat_cols(&scaled)?;
        let y = self.phi.forward(tape, ctx, cat)?;
        let fused = tape.elu(y)?;
        Ok(FusionOutput { fused, alpha })
    }
}
