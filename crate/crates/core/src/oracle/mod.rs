//! One interface for every model judgment the agent and the evaluator need.
//!
//! [`ScriptedOracle`] answers from ground truth with fixed rules and is what tests and
//! offline runs use. [`RemoteOracle`] speaks the HTTP wire protocol (see
//! `docs/FORMATS.md`) to a bridge or to the mock server in [`server`].

mod remote;
mod scripted;
pub mod server;
pub mod wire;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scene::{Point, Pose};

pub use remote::{RemoteConfig, RemoteOracle, TOKEN_ENV};
pub use scripted::{normalize, token_f1, Rulebook, RuleEntry, ScriptedOracle};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("oracle transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("oracle rejected request ({status} {code}): {message}")]
    Rejected {
        status: u16,
        code: String,
        message: String,
    },
    #[error("oracle protocol error: {0}")]
    Protocol(String),
    #[error("observation payload has no {0}")]
    MissingField(&'static str),
}

/// Grounding score: the answer is unrelated to what was seen (0), the observation is
/// relevant but the description wrong (0.5), or both are right (1).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Delta {
    Zero,
    Half,
    One,
}

impl Delta {
    pub fn value(self) -> f64 {
        match self {
            Delta::Zero => 0.0,
            Delta::Half => 0.5,
            Delta::One => 1.0,
        }
    }

    pub fn from_value(v: f64) -> Option<Self> {
        if v == 0.0 {
            Some(Delta::Zero)
        } else if v == 0.5 {
            Some(Delta::Half)
        } else if v == 1.0 {
            Some(Delta::One)
        } else {
            None
        }
    }
}

/// Correctness σ ∈ 1..=5 and grounding δ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grade {
    sigma: u8,
    pub delta: Delta,
}

impl Grade {
    pub fn new(sigma: i64, delta: f64) -> Result<Self, OracleError> {
        if !(1..=5).contains(&sigma) {
            return Err(OracleError::Protocol("sigma out of range".into()));
        }
        let delta =
            Delta::from_value(delta).ok_or_else(|| OracleError::Protocol("delta out of range".into()))?;
        Ok(Self {
            sigma: sigma as u8,
            delta,
        })
    }

    pub fn sigma(&self) -> u8 {
        self.sigma
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemanticScores {
    pub v_l: Vec<f64>,
    pub v_g: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionGuess {
    pub region_type: String,
    pub confidence: f64,
    pub rep_point: Point,
}

/// Ground-truth count of visible cells of one region type.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VisibleRegion {
    pub cells: usize,
    pub region_type: String,
}

/// What the simulator knows about one observation. Scripted oracles read it directly;
/// remote oracles receive it packed into an `image_ref` data URI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundTruthView {
    /// Agent position at observation time.
    pub agent: Point,
    pub sample_points: Vec<Point>,
    pub sample_regions: Vec<Option<String>>,
    pub target_answer: String,
    pub target_visible: bool,
    pub visible_free_cells: usize,
    pub visible_regions: Vec<VisibleRegion>,
}

pub const OBSERVATION_MEDIA_TYPE: &str = "application/vnd.eqa.observation+json";

impl GroundTruthView {
    pub fn to_image_ref(&self) -> String {
        use base64::Engine;
        let json = serde_json::to_vec(self).expect("view serializes");
        format!(
            "data:{OBSERVATION_MEDIA_TYPE};base64,{}",
            base64::engine::general_purpose::STANDARD.encode(json)
        )
    }

    pub fn from_image_ref(image_ref: &str) -> Result<Self, OracleError> {
        use base64::Engine;
        let prefix = format!("data:{OBSERVATION_MEDIA_TYPE};base64,");
        let encoded = image_ref
            .strip_prefix(&prefix)
            .ok_or_else(|| OracleError::Protocol("image_ref is not an observation data URI".into()))?;
        let bytes = base64::engine::general_purpose::STANDARD
            .decode(encoded)
            .map_err(|e| OracleError::Protocol(format!("image_ref base64: {e}")))?;
        serde_json::from_slice(&bytes)
            .map_err(|e| OracleError::Protocol(format!("image_ref payload: {e}")))
    }
}

/// One observation as handed to an oracle. Exactly one of `ground_truth` and
/// `image_ref` is set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationPayload {
    pub question: String,
    pub pose: Pose,
    pub sample_points: Vec<Point>,
    pub ground_truth: Option<GroundTruthView>,
    pub image_ref: Option<String>,
}

impl ObservationPayload {
    /// The same observation with the ground truth packed into `image_ref`.
    pub fn to_image_ref_mode(&self) -> Self {
        match &self.ground_truth {
            Some(view) => Self {
                ground_truth: None,
                image_ref: Some(view.to_image_ref()),
                ..self.clone()
            },
            None => self.clone(),
        }
    }

    pub fn image_ref(&self) -> Result<String, OracleError> {
        match (&self.image_ref, &self.ground_truth) {
            (Some(r), _) => Ok(r.clone()),
            (None, Some(view)) => Ok(view.to_image_ref()),
            (None, None) => Err(OracleError::MissingField("image_ref")),
        }
    }

    /// Ground truth from either representation.
    pub fn view(&self) -> Result<GroundTruthView, OracleError> {
        match (&self.ground_truth, &self.image_ref) {
            (Some(v), _) => Ok(v.clone()),
            (None, Some(r)) => GroundTruthView::from_image_ref(r),
            (None, None) => Err(OracleError::MissingField("ground truth")),
        }
    }
}

/// Every model judgment used by exploration and grading. Implementations must be safe
/// to call from parallel episodes.
pub trait Oracle: Send + Sync {
    /// Region types relevant to the question, most important first.
    fn prioritize_regions(&self, question: &str) -> Result<Vec<String>, OracleError>;
    /// Local value per sample point and a global exploration confidence.
    fn semantic_scores(&self, payload: &ObservationPayload) -> Result<SemanticScores, OracleError>;
    fn classify_region(&self, payload: &ObservationPayload) -> Result<RegionGuess, OracleError>;
    fn should_stop(&self, payload: &ObservationPayload) -> Result<bool, OracleError>;
    fn answer(&self, payload: &ObservationPayload) -> Result<String, OracleError>;
    fn grade(
        &self,
        question: &str,
        gold: &str,
        answer: &str,
        payload: &ObservationPayload,
    ) -> Result<Grade, OracleError>;
}
