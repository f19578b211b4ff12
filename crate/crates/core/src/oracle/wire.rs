//! Request and response bodies of the oracle HTTP protocol.
//!
//! Fields are declared in alphabetical order so that serializing any body yields the
//! canonical form: compact JSON with sorted keys. `assets/wire/schema.json` is the
//! JSON Schema for the same bodies, for implementers outside this crate.

use serde::{Deserialize, Serialize};

use super::{Grade, OracleError, RegionGuess, SemanticScores};
use crate::scene::Point;

pub const HEALTH: &str = "/v1/health";
pub const PRIORITIZE_REGIONS: &str = "/v1/prioritize_regions";
pub const SEMANTIC_SCORES: &str = "/v1/semantic_scores";
pub const CLASSIFY_REGION: &str = "/v1/classify_region";
pub const SHOULD_STOP: &str = "/v1/should_stop";
pub const ANSWER: &str = "/v1/answer";
pub const GRADE: &str = "/v1/grade";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Xy {
    pub x: f64,
    pub y: f64,
}

impl From<Point> for Xy {
    fn from(p: Point) -> Self {
        Self { x: p.x, y: p.y }
    }
}

impl From<Xy> for Point {
    fn from(p: Xy) -> Self {
        Point::new(p.x, p.y)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrioritizeRequest {
    pub question: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrioritizeResponse {
    pub regions: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SemanticScoresRequest {
    pub image_ref: String,
    pub question: String,
    pub sample_points: Vec<Xy>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SemanticScoresResponse {
    pub v_g: f64,
    pub v_l: Vec<f64>,
}

/// Body shared by `classify_region`, `should_stop` and `answer`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservationRequest {
    pub image_ref: String,
    pub question: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifyRegionResponse {
    pub confidence: f64,
    pub region_type: String,
    pub rep_point: Xy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShouldStopResponse {
    pub stop: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnswerResponse {
    pub answer: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GradeRequest {
    pub answer: String,
    pub gold: String,
    pub image_ref: String,
    pub question: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GradeResponse {
    pub delta: f64,
    pub sigma: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErrorDetail {
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErrorBody {
    pub error: ErrorDetail,
}

impl ErrorBody {
    pub fn new(code: &str, message: impl Into<String>) -> Self {
        Self {
            error: ErrorDetail {
                code: code.into(),
                message: message.into(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HealthResponse {
    pub status: String,
}

fn unit(name: &str, v: f64) -> Result<f64, OracleError> {
    if v.is_finite() && (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(OracleError::Protocol(format!("{name} out of range")))
    }
}

impl SemanticScoresResponse {
    pub fn validate(self, expected_points: usize) -> Result<SemanticScores, OracleError> {
        if self.v_l.len() != expected_points {
            return Err(OracleError::Protocol(format!(
                "v_l has {} values for {expected_points} sample points",
                self.v_l.len()
            )));
        }
        let v_l = self
            .v_l
            .into_iter()
            .map(|v| unit("v_l", v))
            .collect::<Result<_, _>>()?;
        Ok(SemanticScores {
            v_l,
            v_g: unit("v_g", self.v_g)?,
        })
    }
}

impl ClassifyRegionResponse {
    pub fn validate(self) -> Result<RegionGuess, OracleError> {
        if !(self.rep_point.x.is_finite() && self.rep_point.y.is_finite()) {
            return Err(OracleError::Protocol("rep_point not finite".into()));
        }
        Ok(RegionGuess {
            confidence: unit("confidence", self.confidence)?,
            region_type: self.region_type,
            rep_point: self.rep_point.into(),
        })
    }
}

impl GradeResponse {
    pub fn validate(self) -> Result<Grade, OracleError> {
        Grade::new(self.sigma, self.delta)
    }
}

impl From<Grade> for GradeResponse {
    fn from(g: Grade) -> Self {
        Self {
            delta: g.delta.value(),
            sigma: g.sigma() as i64,
        }
    }
}
