//! Grid-world embodied question answering: scenes, exploration maps, frontier and
//! goal-directed exploration, an oracle interface for model judgments, and
//! exploration-answer consistency metrics.

pub mod batch;
pub mod controller;
pub mod dataio;
pub mod frontier;
pub mod goal;
pub mod mapping;
pub mod metrics;
pub mod oracle;
pub mod render;
pub mod scene;
pub mod synth;

pub use controller::{run_episode, EpisodeResult, Params, Strategy};
pub use dataio::{QAItem, QuestionType};
pub use metrics::{aggregate, GradedItem, MetricsReport};
pub use oracle::{Oracle, RemoteOracle, ScriptedOracle};
pub use scene::{load_scene, Point, Pose, Scene};
