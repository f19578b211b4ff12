//! Mock oracle server: the wire protocol answered by a [`ScriptedOracle`].
//!
//! An optional replay set maps exact `(endpoint, request body)` pairs to recorded
//! responses, so recorded fixtures (including deliberately invalid ones) can be served
//! back verbatim to exercise client-side validation.

use std::collections::HashMap;
use std::io;
use std::path::Path;
use std::sync::Arc;
use std::thread::{self, JoinHandle};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::wire::{self, ErrorBody};
use super::{GroundTruthView, ObservationPayload, Oracle, ScriptedOracle};
use crate::scene::{Point, Pose};

/// One recorded exchange, as listed in a fixture manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureCase {
    pub name: String,
    pub endpoint: String,
    pub status: u16,
    /// Serve the recorded response verbatim instead of computing one.
    #[serde(default)]
    pub replay: bool,
    /// Expected client-side outcome: `"ok"` or the expected error message fragment.
    pub expect: String,
}

#[derive(Debug, Clone, Default)]
pub struct ReplaySet {
    entries: HashMap<(String, String), (u16, String)>,
}

impl ReplaySet {
    pub fn insert(&mut self, endpoint: &str, request: &str, status: u16, response: &str) {
        self.entries.insert(
            (endpoint.to_string(), request.trim_end().to_string()),
            (status, response.trim_end().to_string()),
        );
    }

    /// Loads `manifest.json` plus `<name>.request.json` / `<name>.response.json` files,
    /// keeping the cases marked `replay`.
    pub fn load_dir(dir: &Path) -> io::Result<Self> {
        let mut set = Self::default();
        for case in load_manifest(dir)? {
            if !case.replay {
                continue;
            }
            let req = std::fs::read_to_string(dir.join(format!("{}.request.json", case.name)))?;
            let resp = std::fs::read_to_string(dir.join(format!("{}.response.json", case.name)))?;
            set.insert(&case.endpoint, &req, case.status, &resp);
        }
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

pub fn load_manifest(dir: &Path) -> io::Result<Vec<FixtureCase>> {
    let text = std::fs::read_to_string(dir.join("manifest.json"))?;
    serde_json::from_str(&text).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
}

fn json<T: Serialize>(status: u16, body: &T) -> (u16, String) {
    (status, serde_json::to_string(body).expect("response serializes"))
}

fn error(status: u16, code: &str, message: impl Into<String>) -> (u16, String) {
    json(status, &ErrorBody::new(code, message))
}

fn parse<T: DeserializeOwned>(body: &str) -> Result<T, (u16, String)> {
    serde_json::from_str(body).map_err(|e| error(400, "bad_request", e.to_string()))
}

fn payload(question: String, image_ref: &str, points: Vec<Point>) -> Result<ObservationPayload, (u16, String)> {
    let view = GroundTruthView::from_image_ref(image_ref)
        .map_err(|e| error(400, "bad_image_ref", e.to_string()))?;
    Ok(ObservationPayload {
        question,
        pose: Pose::new(Point::new(0.0, 0.0), 0.0),
        sample_points: points,
        ground_truth: Some(view),
        image_ref: None,
    })
}

/// Computes the `(status, body)` reply for one request.
pub fn handle(
    oracle: &ScriptedOracle,
    replay: &ReplaySet,
    method: &str,
    path: &str,
    body: &str,
) -> (u16, String) {
    if let Some((status, resp)) = replay
        .entries
        .get(&(path.to_string(), body.trim_end().to_string()))
    {
        return (*status, resp.clone());
    }
    let result = match (method, path) {
        ("GET", wire::HEALTH) => Ok(json(
            200,
            &wire::HealthResponse {
                status: "ok".into(),
            },
        )),
        ("POST", wire::PRIORITIZE_REGIONS) => parse::<wire::PrioritizeRequest>(body).map(|req| {
            let regions = oracle.prioritize_regions(&req.question).unwrap_or_default();
            json(200, &wire::PrioritizeResponse { regions })
        }),
        ("POST", wire::SEMANTIC_SCORES) => parse::<wire::SemanticScoresRequest>(body)
            .and_then(|req| {
                let points = req.sample_points.iter().map(|p| Point::from(*p)).collect();
                let p = payload(req.question, &req.image_ref, points)?;
                let s = oracle
                    .semantic_scores(&p)
                    .map_err(|e| error(400, "bad_request", e.to_string()))?;
                Ok(json(200, &wire::SemanticScoresResponse { v_g: s.v_g, v_l: s.v_l }))
            }),
        ("POST", wire::CLASSIFY_REGION) => parse::<wire::ObservationRequest>(body).and_then(|req| {
            let p = payload(req.question, &req.image_ref, Vec::new())?;
            let g = oracle
                .classify_region(&p)
                .map_err(|e| error(400, "bad_request", e.to_string()))?;
            Ok(json(
                200,
                &wire::ClassifyRegionResponse {
                    confidence: g.confidence,
                    region_type: g.region_type,
                    rep_point: g.rep_point.into(),
                },
            ))
        }),
        ("POST", wire::SHOULD_STOP) => parse::<wire::ObservationRequest>(body).and_then(|req| {
            let p = payload(req.question, &req.image_ref, Vec::new())?;
            let stop = oracle
                .should_stop(&p)
                .map_err(|e| error(400, "bad_request", e.to_string()))?;
            Ok(json(200, &wire::ShouldStopResponse { stop }))
        }),
        ("POST", wire::ANSWER) => parse::<wire::ObservationRequest>(body).and_then(|req| {
            let p = payload(req.question, &req.image_ref, Vec::new())?;
            let answer = oracle
                .answer(&p)
                .map_err(|e| error(400, "bad_request", e.to_string()))?;
            Ok(json(200, &wire::AnswerResponse { answer }))
        }),
        ("POST", wire::GRADE) => parse::<wire::GradeRequest>(body).and_then(|req| {
            let p = payload(req.question.clone(), &req.image_ref, Vec::new())?;
            let g = oracle
                .grade(&req.question, &req.gold, &req.answer, &p)
                .map_err(|e| error(400, "bad_request", e.to_string()))?;
            Ok(json(200, &wire::GradeResponse::from(g)))
        }),
        (_, p) if p.starts_with("/v1/") => Err(error(405, "method_not_allowed", format!("{method} {p}"))),
        (_, p) => Err(error(404, "not_found", format!("no route for {p}"))),
    };
    result.unwrap_or_else(|e| e)
}

/// A running mock server.
pub struct MockServer {
    server: Arc<tiny_http::Server>,
    workers: Vec<JoinHandle<()>>,
    port: u16,
}

impl MockServer {
    /// Binds `addr` (use port 0 for an ephemeral port) and starts `workers` threads.
    pub fn start(
        addr: &str,
        oracle: ScriptedOracle,
        replay: ReplaySet,
        workers: usize,
    ) -> io::Result<Self> {
        let server = tiny_http::Server::http(addr).map_err(io::Error::other)?;
        let port = server
            .server_addr()
            .to_ip()
            .map(|a| a.port())
            .ok_or_else(|| io::Error::other("server is not bound to an IP socket"))?;
        let server = Arc::new(server);
        let shared = Arc::new((oracle, replay));
        let workers = (0..workers.max(1))
            .map(|_| {
                let server = Arc::clone(&server);
                let shared = Arc::clone(&shared);
                thread::spawn(move || {
                    while let Ok(mut request) = server.recv() {
                        let mut body = String::new();
                        let (status, reply) = match request.as_reader().read_to_string(&mut body) {
                            Ok(_) => handle(
                                &shared.0,
                                &shared.1,
                                request.method().as_str(),
                                request.url(),
                                &body,
                            ),
                            Err(e) => error(400, "bad_request", format!("unreadable body: {e}")),
                        };
                        let header = tiny_http::Header::from_bytes("Content-Type", "application/json")
                            .expect("static header");
                        let response = tiny_http::Response::from_string(reply)
                            .with_status_code(status)
                            .with_header(header);
                        let _ = request.respond(response);
                    }
                })
            })
            .collect();
        Ok(Self {
            server,
            workers,
            port,
        })
    }

    pub fn port(&self) -> u16 {
        self.port
    }

    pub fn url(&self) -> String {
        format!("http://127.0.0.1:{}", self.port)
    }

    /// Blocks until every worker exits.
    pub fn wait(self) {
        for w in self.workers {
            let _ = w.join();
        }
    }

    pub fn shutdown(self) {
        for _ in &self.workers {
            self.server.unblock();
        }
        self.wait();
    }
}
