use std::thread;
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::wire::{self, ErrorBody, Xy};
use super::{Grade, ObservationPayload, Oracle, OracleError, RegionGuess, SemanticScores};

/// Environment variable holding the bearer token sent to the remote oracle.
pub const TOKEN_ENV: &str = "EQA_ORACLE_TOKEN";

#[derive(Debug, Clone)]
pub struct RemoteConfig {
    pub base_url: String,
    pub token: Option<String>,
    pub retry_max: u32,
    pub backoff_base: Duration,
    pub timeout: Duration,
    pub max_idle_connections: usize,
}

impl RemoteConfig {
    pub fn new(base_url: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            token: std::env::var(TOKEN_ENV).ok().filter(|t| !t.is_empty()),
            retry_max: 3,
            backoff_base: Duration::from_millis(500),
            timeout: Duration::from_secs(60),
            max_idle_connections: 8,
        }
    }
}

/// HTTP client for the oracle wire protocol. Cloning shares the connection pool.
#[derive(Clone)]
pub struct RemoteOracle {
    config: RemoteConfig,
    agent: ureq::Agent,
}

impl std::fmt::Debug for RemoteOracle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteOracle")
            .field("base_url", &self.config.base_url)
            .finish()
    }
}

impl RemoteOracle {
    pub fn new(config: RemoteConfig) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(false)
            .max_idle_connections(config.max_idle_connections)
            .max_idle_connections_per_host(config.max_idle_connections)
            .build()
            .into();
        Self { config, agent }
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.config
    }

    /// Posts a raw body and returns `(status, body)`. Transport failures and 5xx/429
    /// responses are retried with exponential backoff, `retry_max` times.
    pub fn post_raw(&self, path: &str, body: &str) -> Result<(u16, String), OracleError> {
        let url = format!("{}{}", self.config.base_url, path);
        let mut attempt = 0u32;
        loop {
            attempt += 1;
            let mut req = self.agent.post(&url).header("Content-Type", "application/json");
            if let Some(token) = &self.config.token {
                req = req.header("Authorization", &format!("Bearer {token}"));
            }
            let outcome = req.send(body).and_then(|mut resp| {
                let status = resp.status().as_u16();
                resp.body_mut().read_to_string().map(|text| (status, text))
            });
            let retryable = match &outcome {
                Ok((status, _)) => *status >= 500 || *status == 429,
                Err(_) => true,
            };
            if !retryable || attempt > self.config.retry_max {
                return match outcome {
                    Ok(ok) => Ok(ok),
                    Err(e) => Err(OracleError::Transport {
                        attempts: attempt,
                        message: e.to_string(),
                    }),
                };
            }
            thread::sleep(self.config.backoff_base * 2u32.pow(attempt - 1));
        }
    }

    fn call<Req: Serialize, Resp: DeserializeOwned>(
        &self,
        path: &str,
        request: &Req,
    ) -> Result<Resp, OracleError> {
        let body = serde_json::to_string(request)
            .map_err(|e| OracleError::Protocol(format!("request encoding: {e}")))?;
        let (status, text) = self.post_raw(path, &body)?;
        if status != 200 {
            return Err(match serde_json::from_str::<ErrorBody>(&text) {
                Ok(err) => OracleError::Rejected {
                    status,
                    code: err.error.code,
                    message: err.error.message,
                },
                Err(_) => OracleError::Rejected {
                    status,
                    code: "unknown".into(),
                    message: text,
                },
            });
        }
        serde_json::from_str(&text)
            .map_err(|e| OracleError::Protocol(format!("{path} response schema: {e}")))
    }

    fn observation(payload: &ObservationPayload) -> Result<wire::ObservationRequest, OracleError> {
        Ok(wire::ObservationRequest {
            image_ref: payload.image_ref()?,
            question: payload.question.clone(),
        })
    }
}

impl Oracle for RemoteOracle {
    fn prioritize_regions(&self, question: &str) -> Result<Vec<String>, OracleError> {
        let resp: wire::PrioritizeResponse = self.call(
            wire::PRIORITIZE_REGIONS,
            &wire::PrioritizeRequest {
                question: question.to_string(),
            },
        )?;
        Ok(resp.regions)
    }

    fn semantic_scores(&self, payload: &ObservationPayload) -> Result<SemanticScores, OracleError> {
        let req = wire::SemanticScoresRequest {
            image_ref: payload.image_ref()?,
            question: payload.question.clone(),
            sample_points: payload.sample_points.iter().map(|p| Xy::from(*p)).collect(),
        };
        let resp: wire::SemanticScoresResponse = self.call(wire::SEMANTIC_SCORES, &req)?;
        resp.validate(payload.sample_points.len())
    }

    fn classify_region(&self, payload: &ObservationPayload) -> Result<RegionGuess, OracleError> {
        let resp: wire::ClassifyRegionResponse =
            self.call(wire::CLASSIFY_REGION, &Self::observation(payload)?)?;
        resp.validate()
    }

    fn should_stop(&self, payload: &ObservationPayload) -> Result<bool, OracleError> {
        let resp: wire::ShouldStopResponse =
            self.call(wire::SHOULD_STOP, &Self::observation(payload)?)?;
        Ok(resp.stop)
    }

    fn answer(&self, payload: &ObservationPayload) -> Result<String, OracleError> {
        let resp: wire::AnswerResponse = self.call(wire::ANSWER, &Self::observation(payload)?)?;
        Ok(resp.answer)
    }

    fn grade(
        &self,
        question: &str,
        gold: &str,
        answer: &str,
        payload: &ObservationPayload,
    ) -> Result<Grade, OracleError> {
        let req = wire::GradeRequest {
            answer: answer.to_string(),
            gold: gold.to_string(),
            image_ref: payload.image_ref()?,
            question: question.to_string(),
        };
        let resp: wire::GradeResponse = self.call(wire::GRADE, &req)?;
        resp.validate()
    }
}
