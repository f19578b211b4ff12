use std::path::PathBuf;
use std::time::Duration;

use eqa_core::oracle::server::{load_manifest, FixtureCase, MockServer, ReplaySet};
use eqa_core::oracle::wire::{self, Xy};
use eqa_core::oracle::{
    GroundTruthView, ObservationPayload, Oracle, OracleError, RemoteConfig, RemoteOracle,
    ScriptedOracle,
};
use eqa_core::scene::{Point, Pose};
use serde_json::Value;

fn fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/wire")
}

fn read(case: &FixtureCase, suffix: &str) -> String {
    std::fs::read_to_string(fixture_dir().join(format!("{}.{suffix}.json", case.name)))
        .unwrap()
        .trim_end()
        .to_string()
}

fn payload(question: &str, image_ref: &str, points: &[Xy]) -> ObservationPayload {
    ObservationPayload {
        question: question.into(),
        pose: Pose::new(Point::new(0.0, 0.0), 0.0),
        sample_points: points.iter().map(|p| Point::from(*p)).collect(),
        ground_truth: None,
        image_ref: Some(image_ref.into()),
    }
}

/// Sends the fixture request through the typed client and returns the decoded
/// response re-encoded in wire form.
fn call(oracle: &dyn Oracle, case: &FixtureCase, request: &str) -> Result<Value, OracleError> {
    let v = |x: Value| Ok(x);
    match case.endpoint.as_str() {
        wire::PRIORITIZE_REGIONS => {
            let req: wire::PrioritizeRequest = serde_json::from_str(request).unwrap();
            v(serde_json::json!({ "regions": oracle.prioritize_regions(&req.question)? }))
        }
        wire::SEMANTIC_SCORES => {
            let req: wire::SemanticScoresRequest = serde_json::from_str(request).unwrap();
            let s = oracle.semantic_scores(&payload(&req.question, &req.image_ref, &req.sample_points))?;
            v(serde_json::json!({ "v_g": s.v_g, "v_l": s.v_l }))
        }
        wire::CLASSIFY_REGION => {
            let req: wire::ObservationRequest = serde_json::from_str(request).unwrap();
            let g = oracle.classify_region(&payload(&req.question, &req.image_ref, &[]))?;
            v(serde_json::json!({
                "confidence": g.confidence,
                "region_type": g.region_type,
                "rep_point": {"x": g.rep_point.x, "y": g.rep_point.y},
            }))
        }
        wire::SHOULD_STOP => {
            let req: wire::ObservationRequest = serde_json::from_str(request).unwrap();
            v(serde_json::json!({ "stop": oracle.should_stop(&payload(&req.question, &req.image_ref, &[]))? }))
        }
        wire::ANSWER => {
            let req: wire::ObservationRequest = serde_json::from_str(request).unwrap();
            v(serde_json::json!({ "answer": oracle.answer(&payload(&req.question, &req.image_ref, &[]))? }))
        }
        wire::GRADE => {
            let req: wire::GradeRequest = serde_json::from_str(request).unwrap();
            let p = payload(&req.question, &req.image_ref, &[]);
            let g = oracle.grade(&req.question, &req.gold, &req.answer, &p)?;
            v(serde_json::json!({ "delta": g.delta.value(), "sigma": g.sigma() }))
        }
        other => panic!("unknown endpoint {other}"),
    }
}

fn reencode(endpoint: &str, request: &str) -> String {
    fn re<T: serde::de::DeserializeOwned + serde::Serialize>(s: &str) -> String {
        serde_json::to_string(&serde_json::from_str::<T>(s).unwrap()).unwrap()
    }
    match endpoint {
        wire::PRIORITIZE_REGIONS => re::<wire::PrioritizeRequest>(request),
        wire::SEMANTIC_SCORES => re::<wire::SemanticScoresRequest>(request),
        wire::GRADE => re::<wire::GradeRequest>(request),
        _ => re::<wire::ObservationRequest>(request),
    }
}

fn client(url: String) -> RemoteOracle {
    let mut config = RemoteConfig::new(url);
    config.backoff_base = Duration::from_millis(1);
    config.retry_max = 2;
    config.token = None;
    RemoteOracle::new(config)
}

fn start() -> MockServer {
    MockServer::start(
        "127.0.0.1:0",
        ScriptedOracle::default(),
        ReplaySet::load_dir(&fixture_dir()).unwrap(),
        2,
    )
    .unwrap()
}

#[test]
fn manifest_covers_every_endpoint() {
    let cases = load_manifest(&fixture_dir()).unwrap();
    for endpoint in [
        wire::PRIORITIZE_REGIONS,
        wire::SEMANTIC_SCORES,
        wire::CLASSIFY_REGION,
        wire::SHOULD_STOP,
        wire::ANSWER,
        wire::GRADE,
    ] {
        assert!(cases.iter().any(|c| c.endpoint == endpoint && !c.replay), "{endpoint}");
    }
    assert!(cases.iter().any(|c| c.expect == "sigma out of range"));
    assert!(cases.iter().any(|c| c.expect == "delta out of range"));
}

#[test]
fn requests_are_canonical() {
    for case in load_manifest(&fixture_dir()).unwrap() {
        let request = read(&case, "request");
        assert_eq!(reencode(&case.endpoint, &request), request, "{}", case.name);
        let parsed: Value = serde_json::from_str(&request).unwrap();
        if let Some(r) = parsed.get("image_ref").and_then(Value::as_str) {
            let view = GroundTruthView::from_image_ref(r).unwrap();
            assert_eq!(view.to_image_ref(), r, "{}", case.name);
        }
    }
}

#[test]
fn scripted_oracle_matches_golden_responses() {
    let oracle = ScriptedOracle::default();
    for case in load_manifest(&fixture_dir()).unwrap().iter().filter(|c| !c.replay) {
        let got = call(&oracle, case, &read(case, "request")).unwrap();
        let want: Value = serde_json::from_str(&read(case, "response")).unwrap();
        assert_eq!(got, want, "{}", case.name);
    }
}

#[test]
fn mock_server_speaks_the_golden_bytes() {
    let server = start();
    let remote = client(server.url());
    for case in load_manifest(&fixture_dir()).unwrap() {
        let request = read(&case, "request");
        let (status, body) = remote.post_raw(&case.endpoint, &request).unwrap();
        assert_eq!(status, case.status, "{}", case.name);
        assert_eq!(body, read(&case, "response"), "{}", case.name);
    }
    server.shutdown();
}

#[test]
fn remote_client_validates_responses() {
    let server = start();
    let remote = client(server.url());
    for case in load_manifest(&fixture_dir()).unwrap() {
        let request = read(&case, "request");
        match (case.expect.as_str(), call(&remote, &case, &request)) {
            ("ok", Ok(got)) => {
                let want: Value = serde_json::from_str(&read(&case, "response")).unwrap();
                assert_eq!(got, want, "{}", case.name);
            }
            ("ok", Err(e)) => panic!("{}: unexpected error {e}", case.name),
            (fragment, Err(e)) => {
                assert!(e.to_string().contains(fragment), "{}: {e}", case.name)
            }
            (fragment, Ok(v)) => panic!("{}: expected {fragment}, got {v}", case.name),
        }
    }
    server.shutdown();
}

#[test]
fn server_errors_are_retried_then_reported() {
    let server = start();
    let remote = client(server.url());
    let case = load_manifest(&fixture_dir())
        .unwrap()
        .into_iter()
        .find(|c| c.status >= 500)
        .unwrap();
    let err = call(&remote, &case, &read(&case, "request")).unwrap_err();
    assert!(
        matches!(&err, OracleError::Rejected { status: 504, code, .. } if code == "provider_timeout"),
        "{err}"
    );
    server.shutdown();
}

#[test]
fn malformed_bodies_are_rejected() {
    let server = start();
    let remote = client(server.url());
    let (status, body) = remote.post_raw(wire::GRADE, "{\"answer\":").unwrap();
    assert_eq!(status, 400);
    let err: wire::ErrorBody = serde_json::from_str(&body).unwrap();
    assert_eq!(err.error.code, "bad_request");
    let bad_ref = r#"{"image_ref":"http://example/x.png","question":"q"}"#;
    let (status, body) = remote.post_raw(wire::SHOULD_STOP, bad_ref).unwrap();
    assert_eq!(status, 400);
    assert!(body.contains("bad_image_ref"));
    let unknown = r#"{"question":"q","verbose":true}"#;
    assert_eq!(remote.post_raw(wire::PRIORITIZE_REGIONS, unknown).unwrap().0, 400);
    server.shutdown();
}

#[test]
fn unreachable_server_is_a_transport_error() {
    let remote = client("http://127.0.0.1:9".into());
    let err = remote.prioritize_regions("where is the sofa?").unwrap_err();
    assert!(matches!(err, OracleError::Transport { attempts: 3, .. }), "{err}");
}
