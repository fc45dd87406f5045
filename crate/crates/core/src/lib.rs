//! Benchmark harness for click-based interactive video object segmentation.
//!
//! The pieces, bottom up:
//!
//! * [`mask`]: label and binary masks, components, distance transforms.
//! * [`metrics`]: J, F, J&F and the round and time based curve integrals.
//! * [`interactions`]: clicks, scribbles and the click strategies.
//! * [`backends`]: segmentation contracts and reference backends.
//! * [`robot`]: the simulated annotator.
//! * [`scheduler`]: per-round propagation planning and execution.
//! * [`dataset`] and [`harness`]: DAVIS-layout I/O, synthetic sequences,
//!   multi-sequence runs and reports.

pub mod backends;
pub mod dataset;
pub mod harness;
pub mod interactions;
pub mod mask;
pub mod metrics;
pub mod robot;
pub mod scheduler;

pub use backends::{
    BackendConfig, BackendError, BackendSet, Backends, FusionKind, InteractionKind, ProbMask, PropagatorKind,
    RgbFrame,
};
pub use dataset::{generate_synthetic, load_dataset, SequenceDataset, SynthSpec};
pub use harness::{run_evaluation, EvaluationReport, RunConfig};
pub use interactions::{Click, Polarity, Scribble};
pub use mask::{BinaryMask, Connectivity, LabelMask, MaskError, ObjectId, PixelCoord, Region, BACKGROUND};
pub use metrics::{auc_time, jf_at, r_auc, FrameScore, MetricError, RoundCurve, RoundSample};
pub use robot::{BudgetConfig, GroundTruth, RobotConfig, RoundAnnotation, Strategy};
pub use scheduler::{run_round, PropagationPlan, RoundContext, SchedulerError, SessionState};
