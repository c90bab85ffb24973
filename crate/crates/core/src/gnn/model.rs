//! Shared three-encoder backbone and the maintenance classifier built on it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::data::GraphInputs;
use super::fusion::Fusion;
use super::layers::{Ctx, Encoder, EncoderKind, Linear};
use super::params::ParamStore;
use crate::diffkernel::{Tape, Var};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    pub hidden_dim: usize,
    pub heads: usize,
    pub fusion_heads: usize,
    pub dropout_rate: f64,
    pub leaky_slope: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            hidden_dim: 64,
            heads: 4,
            fusion_heads: 4,
            dropout_rate: 0.3,
            leaky_slope: 0.2,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_dim == 0 || self.heads == 0 || self.fusion_heads == 0 {
            return Err(Error::config("hidden_dim and head counts must be positive"));
        }
        if self.hidden_dim % self.heads != 0 || self.hidden_dim % self.fusion_heads != 0 {
            return Err(Error::config("hidden_dim must be divisible by head counts"));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::config("dropout_rate must lie in [0, 1)"));
        }
        Ok(())
    }
}

/// Which edge layers feed the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LayerMode {
    Full,
    SpatialOnly,
    TemporalOnly,
    CausalOnly,
}

impl LayerMode {
    pub const ALL: [LayerMode; 4] = [LayerMode::Full, LayerMode::SpatialOnly, LayerMode::TemporalOnly, LayerMode::CausalOnly];

    pub fn uses(self, layer: usize) -> bool {
        match self {
            LayerMode::Full => true,
            LayerMode::SpatialOnly => layer == 0,
            LayerMode::TemporalOnly => layer == 1,
            LayerMode::CausalOnly => layer == 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LayerMode::Full => "full",
            LayerMode::SpatialOnly => "spatial-only",
            LayerMode::TemporalOnly => "temporal-only",
            LayerMode::CausalOnly => "causal-only",
        }
    }
}

pub const ENCODER_NAMES: [&str; 3] = ["spatial", "temporal", "causal"];

/// Encoders for the active layers, followed by fusion (or a single `Φ` when one layer is active).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Backbone {
    pub config: EncoderConfig,
    pub mode: LayerMode,
    pub encoders: [Option<Encoder>; 3],
    pub fusion: Option<Fusion>,
    pub phi: Option<Linear>,
}

pub struct BackboneOutput {
    pub fused: Var,
    /// Per-node modality weights (`N × 3`) in full mode.
    pub alpha: Option<Var>,
    pub per_layer: Vec<Var>,
}

/// Independent RNG stream per component so that shared components start
/// identically whichever layers are enabled.
fn component_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

impl Backbone {
    pub fn new(store: &mut ParamStore, cfg: &EncoderConfig, mode: LayerMode, input: &GraphInputs, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let f = input.feature_dim();
        let edge_dims = [input.spatial.attr.ncols(), input.temporal.attr.ncols(), 0];
        let kinds = [EncoderKind::Attention, EncoderKind::Attention, EncoderKind::Isomorphism];
        let mut encoders: [Option<Encoder>; 3] = [None, None, None];
        for l in 0..3 {
            if mode.uses(l) {
                let mut rng = component_rng(seed, l as u64 + 1);
                encoders[l] = Some(Encoder::new(
                    store,
                    ENCODER_NAMES[l],
                    kinds[l],
                    f,
                    edge_dims[l],
                    cfg.hidden_dim,
                    cfg.heads,
                    cfg.leaky_slope,
                    &mut rng,
                )?);
            }
        }
        let mut rng = component_rng(seed, 10);
        let (fusion, phi) = if mode == LayerMode::Full {
            (Some(Fusion::new(store, "fusion", cfg.hidden_dim, cfg.fusion_heads, 3, &mut rng)?), None)
        } else {
            (None, Some(Linear::new(store, "phi", cfg.hidden_dim, cfg.hidden_dim, &mut rng)))
        };
        Ok(Backbone {
            config: cfg.clone(),
            mode,
            encoders,
            fusion,
            phi,
        })
    }

    pub fn forward(&self, tape: &mut Tape, ctx: &mut Ctx, x: Var, input: &GraphInputs) -> Result<BackboneOutput> {
        let layers = [&input.spatial, &input.temporal, &input.causal];
        let mut per_layer = Vec::with_capacity(3);
        for (enc, edges) in self.encoders.iter().zip(layers) {
            if let Some(enc) = enc {
                per_layer.push(enc.forward(tape, ctx, x, edges)?);
            }
        }
        match (&self.fusion, &self.phi) {
            (Some(f), _) => {
                let out = f.forward(tape, ctx, &per_layer)?;
                Ok(BackboneOutput {
                    fused: out.fused,
                    alpha: Some(out.alpha),
                    per_layer,
                })
            }
            (None, Some(phi)) => {
                let y = phi.forward(tape, ctx, per_layer[0])?;
                Ok(BackboneOutput {
                    fused: tape.elu(y)?,
                    alpha: None,
                    per_layer,
                })
            }
            (None, None) => Err(Error::invalid("backbone has neither fusion nor projection")),
        }
    }
}

/// Backbone plus a two-class log-softmax head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdmModel {
    pub store: ParamStore,
    pub backbone: Backbone,
    pub head: Linear,
}

pub struct ModelOutput {
    pub log_probs: Var,
    pub fused: Var,
    pub alpha: Option<Var>,
}

impl PdmModel {
    pub fn new(cfg: &EncoderConfig, mode: LayerMode, input: &GraphInputs, seed: u64) -> Result<Self> {
        let mut store = ParamStore::default();
        let backbone = Backbone::new(&mut store, cfg, mode, input, seed)?;
        let mut rng = component_rng(seed, 20);
        let head = Linear::new(&mut store, "head", cfg.hidden_dim, 2, &mut rng);
        Ok(PdmModel { store, backbone, head })
    }

    pub fn forward(&self, tape: &mut Tape, ctx: &mut Ctx, x: Var, input: &GraphInputs) -> Result<ModelOutput> {
        let b = self.backbone.forward(tape, ctx, x, input)?;
        let logits = self.head.forward(tape, ctx, b.fused)?;
        Ok(ModelOutput {
            log_probs: tape.log_softmax(logits)?,
            fused: b.fused,
            alpha: b.alpha,
        })
    }
}
