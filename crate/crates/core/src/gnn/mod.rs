//! Layer-specific graph encoders, attention fusion and the maintenance classifier.

pub mod ablation;
pub mod data;
pub mod folds;
pub mod fusion;
pub mod layers;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod params;
pub mod train;

pub use ablation::{cross_validate, run_ablation, AblationReport, CvReport, FoldResult};
pub use data::{GraphInputs, LayerEdges};
pub use folds::{stratified_folds, stratified_splits, temporal_split, FoldStrategy, Split, View};
pub use loss::focal_loss;
pub use metrics::{evaluate_classifier, ClassifierMetrics, MeanSd, MetricSummary};
pub use model::{Backbone, EncoderConfig, LayerMode, PdmModel};
pub use params::{AdamW, ParamStore};
pub use train::{evaluate, predict_log_probs, train, EpochRecord, Evaluation, ModelState, TrainConfig};

#[cfg(test)]
mod tests {
    use super::layers::Ctx;
    use super::*;
    use crate::diffkernel::gradcheck::max_relative_error;
    use crate::diffkernel::Tape;
    use ndarray::Array2;
    use std::sync::Arc;

    pub(crate) fn toy_inputs() -> GraphInputs {
        let n = 6;
        let x = Array2::from_shape_fn((n, 3), |(i, j)| ((i * 5 + j * 3) % 7) as f64 / 3.0 - 1.0);
        let spatial = data::layer_from_rows(
            n,
            vec![(0, 1, vec![1.0, 0.3], 1.0), (1, 0, vec![1.0, 0.3], 1.0), (2, 3, vec![0.0, 1.2], 0.5), (3, 4, vec![1.0, -0.4], 0.2)],
            2,
            true,
        );
        let temporal = data::layer_from_rows(n, vec![(4, 5, vec![0.9], 0.9), (5, 0, vec![0.4], 0.4), (1, 2, vec![0.7], 0.7)], 1, true);
        let causal = data::layer_from_rows(n, vec![(0, 3, vec![1.0], 1.0), (3, 0, vec![1.0], 1.0), (2, 5, vec![0.5], 0.5), (5, 2, vec![0.5], 0.5)], 1, false);
        GraphInputs {
            n,
            x,
            continuous: vec![true; 3],
            spatial,
            temporal,
            causal,
        }
    }

    fn small_cfg() -> EncoderConfig {
        EncoderConfig {
            hidden_dim: 4,
            heads: 2,
            fusion_heads: 2,
            dropout_rate: 0.0,
            leaky_slope: 0.2,
        }
    }

    #[test]
    fn full_model_gradient_matches_finite_differences() {
        let input = toy_inputs();
        let model = PdmModel::new(&small_cfg(), LayerMode::Full, &input, 7).unwrap();
        let rows: Arc<[usize]> = (0..6).collect();
        let targets: Arc<[usize]> = vec![0, 1, 0, 1, 1, 0].into();
        let err = max_relative_error(&model.store.values, 1e-5, |tape, vars| {
            let mut ctx = Ctx { vars, dropout: None };
            let x = tape.constant(input.x.clone())?;
            let out = model.forward(tape, &mut ctx, x, &input)?;
            focal_loss(tape, out.log_probs, &rows, &targets, 0.75, 2.0)
        })
        .unwrap();
        assert!(err < 1e-4, "relative error {err}");
    }

    fn permute_layer(e: &LayerEdges, perm: &[usize]) -> LayerEdges {
        LayerEdges {
            src: e.src.iter().map(|&s| perm[s]).collect(),
            dst: e.dst.iter().map(|&d| perm[d]).collect(),
            attr: e.attr.clone(),
            weight: e.weight.clone(),
        }
    }

    fn run(model: &PdmModel, input: &GraphInputs) -> Array2<f64> {
        let mut tape = Tape::new();
        let vars = model.store.bind(&mut tape, false).unwrap();
        let mut ctx = Ctx { vars: &vars, dropout: None };
        let x = tape.constant(input.x.clone()).unwrap();
        let out = model.forward(&mut tape, &mut ctx, x, input).unwrap();
        tape.value(out.log_probs).clone()
    }

    #[test]
    fn permutation_equivariance() {
        let input = toy_inputs();
        let model = PdmModel::new(&small_cfg(), LayerMode::Full, &input, 3).unwrap();
        // perm[old] = new
        let perm = [3, 5, 0, 1, 4, 2];
        let mut x = Array2::zeros(input.x.raw_dim());
        for (old, &new) in perm.iter().enumerate() {
            x.row_mut(new).assign(&input.x.row(old));
        }
        let permuted = GraphInputs {
            n: input.n,
            x,
            continuous: input.continuous.clone(),
            spatial: permute_layer(&input.spatial, &perm),
            temporal: permute_layer(&input.temporal, &perm),
            causal: permute_layer(&input.causal, &perm),
        };
        let a = run(&model, &input);
        let b = run(&model, &permuted);
        for (old, &new) in perm.iter().enumerate() {
            for c in 0..2 {
                assert!((a[[old, c]] - b[[new, c]]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn ablation_keeps_encoder_parameter_counts() {
        let input = toy_inputs();
        let cfg = EncoderConfig::default();
        let full = PdmModel::new(&cfg, LayerMode::Full, &input, 1).unwrap();
        for (mode, name) in [(LayerMode::SpatialOnly, "spatial."), (LayerMode::TemporalOnly, "temporal."), (LayerMode::CausalOnly, "causal.")] {
            let single = PdmModel::new(&cfg, mode, &input, 1).unwrap();
            assert_eq!(single.store.scalar_count_with_prefix(name), full.store.scalar_count_with_prefix(name));
            assert!(single.store.scalar_count_with_prefix(name) > 0);
            for other in model::ENCODER_NAMES.iter().filter(|o| !name.starts_with(**o)) {
                assert_eq!(single.store.scalar_count_with_prefix(&format!("{other}.")), 0);
            }
        }
    }

    #[test]
    fn shared_encoders_start_identically_across_modes() {
        let input = toy_inputs();
        let cfg = small_cfg();
        let full = PdmModel::new(&cfg, LayerMode::Full, &input, 9).unwrap();
        let single = PdmModel::new(&cfg, LayerMode::CausalOnly, &input, 9).unwrap();
        let pick = |m: &PdmModel| -> Vec<Array2<f64>> {
            m.store.names.iter().zip(&m.store.values).filter(|(n, _)| n.starts_with("causal.")).map(|(_, v)| v.clone()).collect()
        };
        assert_eq!(pick(&full), pick(&single));
    }
}
