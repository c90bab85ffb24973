//! GATv2, GIN and the two-layer encoder stack.

use std::sync::Arc;

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::data::LayerEdges;
use super::params::ParamStore;
use crate::diffkernel::{Tape, Var};
use crate::{Error, Result};

/// Per-forward state: parameter handles plus the dropout stream.
pub struct Ctx<'a> {
    pub vars: &'a [Var],
    pub dropout: Option<(f64, &'a mut ChaCha8Rng)>,
}

impl Ctx<'_> {
    fn p(&self, idx: usize) -> Var {
        self.vars[idx]
    }

    fn dropout(&mut self, tape: &mut Tape, x: Var) -> Result<Var> {
        let Some((p, rng)) = self.dropout.as_mut() else {
            return Ok(x);
        };
        if *p <= 0.0 {
            return Ok(x);
        }
        let keep = 1.0 / (1.0 - *p);
        let (r, c) = tape.shape(x);
        let mask = Array2::from_shape_fn((r, c), |_| if rng.random::<f64>() < *p { 0.0 } else { keep });
        tape.dropout(x, &Arc::new(mask))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Linear {
    pub w: usize,
    pub b: usize,
}

impl Linear {
    pub fn new(store: &mut ParamStore, name: &str, fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) -> Self {
        Linear {
            w: store.glorot(format!("{name}.w"), fan_in, fan_out, rng),
            b: store.zeros(format!("{name}.b"), 1, fan_out),
        }
    }

    pub fn forward(&self, tape: &mut Tape, ctx: &Ctx, x: Var) -> Result<Var> {
        let y = tape.matmul(x, ctx.p(self.w))?;
        tape.add(y, ctx.p(self.b))
    }
}

/// `D × H` matrix summing each head's column block.
pub fn head_blocks(dim: usize, heads: usize) -> Array2<f64> {
    let dh = dim / heads;
    Array2::from_shape_fn((dim, heads), |(i, h)| if i / dh == h { 1.0 } else { 0.0 })
}

/// Fails when some node receives no messages (possible only without self-loops).
pub fn check_incoming(dst: &[usize], n: usize) -> Result<()> {
    let mut seen = vec![false; n];
    for &d in dst {
        seen[d] = true;
    }
    match seen.iter().position(|s| !s) {
        Some(i) => Err(Error::invalid(format!("node {i} has no incoming edges"))),
        None => Ok(()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GatV2 {
    pub w_src: usize,
    pub w_dst: usize,
    pub w_edge: usize,
    pub att: usize,
    pub w_val: usize,
    pub bias: usize,
    pub dim: usize,
    pub heads: usize,
    pub slope: f64,
}

pub struct GatOutput {
    pub h: Var,
    /// Attention per edge and head (`E × H`).
    pub alpha: Var,
}

impl GatV2 {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        fan_in: usize,
        edge_dim: usize,
        dim: usize,
        heads: usize,
        slope: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        if heads == 0 || dim % heads != 0 {
            return Err(Error::config(format!("hidden width {dim} not divisible by {heads} heads")));
        }
        Ok(GatV2 {
            w_src: store.glorot(format!("{name}.w_src"), fan_in, dim, rng),
            w_dst: store.glorot(format!("{name}.w_dst"), fan_in, dim, rng),
            w_edge: store.glorot(format!("{name}.w_edge"), edge_dim.max(1), dim, rng),
            att: store.glorot(format!("{name}.att"), 1, dim, rng),
            w_val: store.glorot(format!("{name}.w_val"), fan_in, dim, rng),
            bias: store.zeros(format!("{name}.bias"), 1, dim),
            dim,
            heads,
            slope,
        })
    }

    pub fn forward(&self, tape: &mut Tape, ctx: &Ctx, h: Var, edges: &LayerEdges) -> Result<GatOutput> {
        let n = tape.shape(h).0;
        check_incoming(&edges.dst, n)?;
        let hs = tape.matmul(h, ctx.p(self.w_src))?;
        let hs = tape.gather_rows(hs, &edges.src)?;
        let hd = tape.matmul(h, ctx.p(self.w_dst))?;
        let hd = tape.gather_rows(hd, &edges.dst)?;
        let mut z = tape.add(hs, hd)?;
        if edges.attr.ncols() > 0 {
            let attr = tape.constant(edges.attr.clone())?;
            let he = tape.matmul(attr, ctx.p(self.w_edge))?;
            z = tape.add(z, he)?;
        }
        let z = tape.leaky_relu(z, self.slope)?;
        let za = tape.mul(z, ctx.p(self.att))?;
        let blocks = tape.constant(head_blocks(self.dim, self.heads))?;
        let scores = tape.matmul(za, blocks)?;
        let alpha = tape.segment_softmax(scores, &edges.dst, n)?;
        let blocks_t = tape.constant(head_blocks(self.dim, self.heads).t().to_owned())?;
        let alpha_wide = tape.matmul(alpha, blocks_t)?;
        let v = tape.matmul(h, ctx.p(self.w_val))?;
        let v = tape.gather_rows(v, &edges.src)?;
        let msg = tape.mul(alpha_wide, v)?;
        let agg = tape.segment_sum(msg, &edges.dst, n)?;
        let out = tape.add(agg, ctx.p(self.bias))?;
        Ok(GatOutput { h: out, alpha })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Gin {
    pub eps: usize,
    pub mlp1: Linear,
    pub mlp2: Linear,
}

impl Gin {
    pub fn new(store: &mut ParamStore, name: &str, fan_in: usize, dim: usize, rng: &mut ChaCha8Rng) -> Self {
        Gin {
            eps: store.zeros(format!("{name}.eps"), 1, 1),
            mlp1: Linear::new(store, &format!("{name}.mlp1"), fan_in, dim, rng),
            mlp2: Linear::new(store, &format!("{name}.mlp2"), dim, dim, rng),
        }
    }

    /// `MLP((1 + ε)·h_i + Σ_j w_ij·h_j)`.
    pub fn forward(&self, tape: &mut Tape, ctx: &Ctx, h: Var, edges: &LayerEdges) -> Result<Var> {
        let n = tape.shape(h).0;
        let one_eps = tape.add_scalar(ctx.p(self.eps), 1.0)?;
        let mut pre = tape.mul(h, one_eps)?;
        if !edges.is_empty() {
            let nb = tape.gather_rows(h, &edges.src)?;
            let w = tape.constant(edges.weight.clone())?;
            let nb = tape.mul(nb, w)?;
            let agg = tape.segment_sum(nb, &edges.dst, n)?;
            pre = tape.add(pre, agg)?;
        }
        let x = self.mlp1.forward(tape, ctx, pre)?;
        let x = tape.elu(x)?;
        self.mlp2.forward(tape, ctx, x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum Conv {
    Gat(GatV2),
    Gin(Gin),
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct NormedConv {
    pub conv: Conv,
    pub gamma: usize,
    pub beta: usize,
}

pub const LAYERS_PER_ENCODER: usize = 2;

/// Two stacked convolutions, each followed by graph normalization, ELU and dropout.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Encoder {
    pub layers: Vec<NormedConv>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum EncoderKind {
    Attention,
    Isomorphism,
}

impl Encoder {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        kind: EncoderKind,
        fan_in: usize,
        edge_dim: usize,
        dim: usize,
        heads: usize,
        slope: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let mut layers = Vec::with_capacity(LAYERS_PER_ENCODER);
        for l in 0..LAYERS_PER_ENCODER {
            let input = if l == 0 { fan_in } else { dim };
            let lname = format!("{name}.{l}");
            let conv = match kind {
                EncoderKind::Attention => Conv::Gat(GatV2::new(store, &lname, input, edge_dim, dim, heads, slope, rng)?),
                EncoderKind::Isomorphism => Conv::Gin(Gin::new(store, &lname, input, dim, rng)),
            };
            layers.push(NormedConv {
                conv,
                gamma: store.ones(format!("{lname}.norm_gamma"), 1, dim),
                beta: store.zeros(format!("{lname}.norm_beta"), 1, dim),
            });
        }
        Ok(Encoder { layers })
    }

    pub fn forward(&self, tape: &mut Tape, ctx: &mut Ctx, x: Var, edges: &LayerEdges) -> Result<Var> {
        let mut h = x;
        for layer in &self.layers {
            h = match &layer.conv {
                Conv::Gat(g) => g.forward(tape, ctx, h, edges)?.h,
                Conv::Gin(g) => g.forward(tape, ctx, h, edges)?,
            };
            h = tape.graph_norm(h, ctx.p(layer.gamma), ctx.p(layer.beta), 1e-5)?;
            h = tape.elu(h)?;
            h = ctx.dropout(tape, h)?;
        }
        Ok(h)
    }
}
