//! Flexible neural tree regression.
//!
//! A flexible neural tree is a regression model shaped as a tree: leaves read
//! input features and each computational node applies a Gaussian to the
//! weighted sum of its children. The topology is evolved by genetic
//! programming ([`gp`]) and the node arguments and edge weights are fitted
//! by differential evolution ([`de`]).
//!
//! ```
//! use fntree::{FntModel, Node};
//!
//! let root = Node::comp(0.5, 0.8, vec![(0.3, Node::leaf(0)), (-0.7, Node::leaf(1))]);
//! let model = FntModel::new(root, 2).unwrap();
//! assert_eq!(model.complexity(), 3);
//! let y = model.evaluate(&[0.2, 0.9]).unwrap();
//! assert!(y > 0.0 && y <= 1.0);
//! ```
//!
//! Around the core sit a cross-validation harness ([`cv`]), ensemble feature
//! analysis ([`analysis`]), a multilayer perceptron baseline ([`mlp`]) and a
//! synthetic die-filling data generator ([`data`]). Every stochastic
//! component draws from seeds derived in [`seed`], so results are a pure
//! function of the inputs and seeds regardless of thread count.

pub mod analysis;
pub mod cv;
pub mod data;
pub mod de;
pub mod gp;
pub mod metrics;
pub mod mlp;
pub mod seed;
pub mod tree;

pub use analysis::{AnalysisOptions, AnalysisResult, Mode, ModelRecord};
pub use cv::{CvReport, FoldPlan, Scheme, StructureMode};
pub use data::{Dataset, NormalizationParams, Sample, SynthConfig};
pub use de::{DeConfig, DeVariant, SearchRanges};
pub use gp::{GpConfig, TrainedFnt};
pub use metrics::PairedSeries;
pub use mlp::{MlpConfig, MlpModel};
pub use tree::{Activation, FntModel, Node, OutputMap, ParamVector};
