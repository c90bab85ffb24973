//! Risk-aware embeddings, density clustering and cluster validation.

pub mod embed;
pub mod hdbscan;
pub mod profile;
pub mod reduce;
pub mod validate;

pub use embed::{train_risk_embedder, EmbedConfig, EmbeddingResult, RiskModel, RiskTargets};
pub use hdbscan::{hdbscan, HdbscanParams, HdbscanResult, NOISE};
pub use profile::{boxplot_svg, priority_score, profile_and_prioritize, ClusterProfile, ClusterReport};
pub use reduce::{reduce_dim, Pca, Reducer, Reduction};
pub use validate::{anova_f, davies_bouldin, intra_cluster_edge_ratio, kaplan_meier, silhouette, Anova, EdgeRatio, Silhouette, SurvivalCurve};
