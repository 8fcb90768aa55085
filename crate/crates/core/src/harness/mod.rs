//! Scenario fixtures, synthetic scenario generation, kinematic replay,
//! tracking metrics and the end-to-end pipeline.

pub mod config;
pub mod generate;
pub mod metrics;
pub mod pipeline;
pub mod replay;
pub mod scenario;

pub use config::{PipelineConfig, Sigma};
pub use generate::{build_scenario, generate_scenario, ChainKind, GeneratedScenario, ScenarioSpec};
pub use metrics::{tracking_error, trajectory_csv, TrackingError};
pub use pipeline::{run_pipeline, PipelineReport};
pub use replay::{replay, OdomNoise};
pub use scenario::{PointCloud, Scenario, ScenarioKind, ScenarioManifest};
