#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bandwidth;
pub mod dataset;
pub mod decorrelation;
pub mod error;
pub mod estimation;
pub mod inference;
pub mod kernels;
pub mod quadrature;
pub mod risk;
pub mod rng;
pub mod simulation;
pub mod stats;

pub use bandwidth::{BandwidthConfig, BandwidthSelection};
pub use dataset::{Dataset, FoldPair, WeightFn, WeightMode};
pub use decorrelation::{DantzigSolver, DecorrelationVector};
pub use error::{Error, Result};
pub use estimation::{FittedModel, PathConfig};
pub use inference::{DeltaRule, LambdaRule, TestConfig, TestResult, VarianceMode};
pub use kernels::{Kernel, KernelMoments};
pub use risk::RiskContext;
pub use simulation::{DgpConfig, Scenario, SimulationReport};
