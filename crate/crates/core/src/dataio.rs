//! Line-delimited JSON formats: QA items, episode traces and run reports.
//!
//! Serialization is canonical. Keys come out in declaration order (extra QA fields
//! sorted after the known ones) and floats in shortest round-trip form, so equal
//! values always give equal bytes.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{self, BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::controller::{EpisodeResult, EpisodeStatus, MapSnapshot, StepRecord, Strategy};
use crate::metrics::MetricsReport;
use crate::oracle::GroundTruthView;
use crate::scene::{Point, Pose};

#[derive(Debug, Error)]
pub enum DataError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: {field} must be finite")]
    NonFinite { line: usize, field: &'static str },
    #[error("truncated trace: {0}")]
    Truncated(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum QuestionType {
    State,
    Knowledge,
    Location,
    Attribute,
    Counting,
    Existence,
    Object,
}

impl QuestionType {
    pub const ALL: [QuestionType; 7] = [
        QuestionType::State,
        QuestionType::Knowledge,
        QuestionType::Location,
        QuestionType::Attribute,
        QuestionType::Counting,
        QuestionType::Existence,
        QuestionType::Object,
    ];

    pub fn name(self) -> &'static str {
        match self {
            QuestionType::State => "state",
            QuestionType::Knowledge => "knowledge",
            QuestionType::Location => "location",
            QuestionType::Attribute => "attribute",
            QuestionType::Counting => "counting",
            QuestionType::Existence => "existence",
            QuestionType::Object => "object",
        }
    }
}

impl fmt::Display for QuestionType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for QuestionType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        QuestionType::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| {
                format!(
                    "unknown question_type {s:?}; expected one of state, knowledge, location, attribute, counting, existence, object"
                )
            })
    }
}

impl Serialize for QuestionType {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for QuestionType {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QAItem {
    pub id: String,
    pub question: String,
    pub gold_answer: String,
    pub question_type: QuestionType,
    pub scene: String,
    pub start: Pose,
    pub target: Point,
    pub gt_step_count: usize,
    pub gt_geodesic_m: f64,
    /// Fields this version does not know about, kept for round-tripping.
    #[serde(flatten)]
    pub extra: BTreeMap<String, Value>,
}

impl QAItem {
    fn check_finite(&self, line: usize) -> Result<(), DataError> {
        let fields = [
            ("start.position.x", self.start.position.x),
            ("start.position.y", self.start.position.y),
            ("start.heading", self.start.heading),
            ("target.x", self.target.x),
            ("target.y", self.target.y),
            ("gt_geodesic_m", self.gt_geodesic_m),
        ];
        match fields.iter().find(|(_, v)| !v.is_finite()) {
            Some((field, _)) => Err(DataError::NonFinite { line, field }),
            None => Ok(()),
        }
    }
}

fn parse_line<T: for<'de> Deserialize<'de>>(line: usize, text: &str) -> Result<T, DataError> {
    serde_json::from_str(text).map_err(|e| DataError::Parse {
        line,
        message: e.to_string(),
    })
}

/// Reads one QA item per non-blank line.
pub fn read_qa<R: BufRead>(reader: R) -> Result<Vec<QAItem>, DataError> {
    let mut items = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let item: QAItem = parse_line(i + 1, &line)?;
        item.check_finite(i + 1)?;
        items.push(item);
    }
    Ok(items)
}

pub fn write_qa<W: Write>(mut writer: W, items: &[QAItem]) -> io::Result<()> {
    for item in items {
        serde_json::to_writer(&mut writer, item)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

pub const TRACE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub version: u32,
    pub scene: String,
    pub qa_id: String,
    pub strategy: Strategy,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEnd {
    /// Number of step records before this one.
    pub count: usize,
    pub status: EpisodeStatus,
    pub answer: String,
    pub ce: f64,
    pub p_m: f64,
    pub final_pose: Pose,
    pub final_view: GroundTruthView,
    pub snapshot: MapSnapshot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum TraceLine {
    Header(TraceHeader),
    Step(StepRecord),
    End(Box<TraceEnd>),
}

/// Writes a header line, one line per step and a closing line carrying the step count.
pub fn write_trace<W: Write>(mut writer: W, header: &TraceHeader, result: &EpisodeResult) -> io::Result<()> {
    let mut line = |l: &TraceLine| -> io::Result<()> {
        serde_json::to_writer(&mut writer, l)?;
        writer.write_all(b"\n")
    };
    line(&TraceLine::Header(header.clone()))?;
    for r in &result.records {
        line(&TraceLine::Step(r.clone()))?;
    }
    line(&TraceLine::End(Box::new(TraceEnd {
        count: result.records.len(),
        status: result.status,
        answer: result.answer.clone(),
        ce: result.ce,
        p_m: result.p_m,
        final_pose: result.final_pose,
        final_view: result.final_view.clone(),
        snapshot: result.snapshot.clone(),
    })))
}

pub fn trace_bytes(header: &TraceHeader, result: &EpisodeResult) -> Vec<u8> {
    let mut out = Vec::new();
    write_trace(&mut out, header, result).expect("writing to memory");
    out
}

/// Hex SHA-256 of the canonical trace serialization.
pub fn trace_hash(header: &TraceHeader, result: &EpisodeResult) -> String {
    Sha256::digest(trace_bytes(header, result))
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

pub fn read_trace<R: BufRead>(reader: R) -> Result<(TraceHeader, EpisodeResult), DataError> {
    let mut header = None;
    let mut records = Vec::new();
    let mut end = None;
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let n = i + 1;
        if end.is_some() {
            return Err(DataError::Parse {
                line: n,
                message: "content after end record".into(),
            });
        }
        match parse_line::<TraceLine>(n, &line)? {
            TraceLine::Header(h) if header.is_none() && n == 1 => header = Some(h),
            TraceLine::Header(_) => {
                return Err(DataError::Parse {
                    line: n,
                    message: "header must be the first line".into(),
                })
            }
            TraceLine::Step(_) | TraceLine::End(_) if header.is_none() => {
                return Err(DataError::Parse {
                    line: n,
                    message: "missing header".into(),
                })
            }
            TraceLine::Step(s) => {
                if !s.travel_m.is_finite() {
                    return Err(DataError::NonFinite {
                        line: n,
                        field: "travel_m",
                    });
                }
                records.push(s)
            }
            TraceLine::End(e) => end = Some((n, e)),
        }
    }
    let header = header.ok_or_else(|| DataError::Truncated("empty trace".into()))?;
    let (n, end) = end.ok_or_else(|| DataError::Truncated("missing end record".into()))?;
    if end.count != records.len() {
        return Err(DataError::Truncated(format!(
            "end record counts {} steps, found {}",
            end.count,
            records.len()
        )));
    }
    for (field, v) in [("ce", end.ce), ("p_m", end.p_m)] {
        if !v.is_finite() {
            return Err(DataError::NonFinite { line: n, field });
        }
    }
    let result = EpisodeResult {
        qa_id: header.qa_id.clone(),
        strategy: header.strategy,
        status: end.status,
        steps: records.len(),
        p_m: end.p_m,
        answer: end.answer,
        ce: end.ce,
        final_pose: end.final_pose,
        final_view: end.final_view,
        records,
        snapshot: end.snapshot,
    };
    Ok((header, result))
}

/// Per-item outcome of an evaluated episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemOutcome {
    pub qa_id: String,
    pub question_type: QuestionType,
    pub status: EpisodeStatus,
    pub steps: usize,
    pub answer: String,
    pub sigma: u8,
    pub delta: f64,
    pub l_m: f64,
    pub p_m: f64,
    pub d_t_m: f64,
    pub ce: f64,
    pub trace_sha256: String,
}

/// Everything `run` writes as its report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub scene: String,
    pub strategy: Strategy,
    pub seed: u64,
    pub items: Vec<ItemOutcome>,
    pub metrics: MetricsReport,
}

pub fn write_report<W: Write>(mut writer: W, report: &RunReport) -> io::Result<()> {
    serde_json::to_writer_pretty(&mut writer, report)?;
    writer.write_all(b"\n")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controller::{Mode, RegionLabel, StepEvent};

    const LINE: &str = r#"{"id":"q1","question":"What color is the towel?","gold_answer":"blue","question_type":"attribute","scene":"demo","start":{"position":{"x":0.125,"y":0.125},"heading":0.0},"target":{"x":1.125,"y":0.625},"gt_step_count":12,"gt_geodesic_m":2.5,"source":"x","zz":[1,2]}"#;

    #[test]
    fn qa_round_trip_keeps_extra_fields() {
        let items = read_qa(LINE.as_bytes()).unwrap();
        assert_eq!(items.len(), 1);
        assert_eq!(items[0].extra.len(), 2);
        let mut out = Vec::new();
        write_qa(&mut out, &items).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), format!("{LINE}\n"));
        assert!(read_qa("".as_bytes()).unwrap().is_empty());
    }

    #[test]
    fn qa_rejections() {
        let bad = LINE.replace("attribute", "color");
        let err = read_qa(format!("\n{bad}").as_bytes()).unwrap_err().to_string();
        assert!(err.starts_with("line 2:"), "{err}");
        assert!(err.contains("existence"), "{err}");
        let nan = LINE.replace("2.5", "NaN");
        assert!(matches!(read_qa(nan.as_bytes()), Err(DataError::Parse { line: 1, .. })));
        let huge = LINE.replace("2.5", "1e999");
        assert!(read_qa(huge.as_bytes()).is_err());
    }

    fn result() -> EpisodeResult {
        let pose = Pose::new(Point::new(0.125, 0.125), 0.0);
        EpisodeResult {
            qa_id: "q1".into(),
            strategy: Strategy::FineEQA,
            status: EpisodeStatus::Completed,
            steps: 1,
            p_m: 0.0,
            answer: "blue".into(),
            ce: 0.55,
            final_pose: pose,
            final_view: GroundTruthView {
                agent: pose.position,
                sample_points: vec![],
                sample_regions: vec![],
                target_answer: "blue".into(),
                target_visible: true,
                visible_free_cells: 3,
                visible_regions: vec![],
            },
            records: vec![StepRecord {
                step: 1,
                mode: Mode::Goal(2),
                event: StepEvent::Stop,
                start: pose,
                pose,
                target: None,
                waypoint: None,
                path: vec![],
                actions: 0,
                travel_m: 0.0,
                oracle: vec![],
            }],
            snapshot: MapSnapshot {
                width: 1,
                height: 1,
                explored: ".".into(),
                semantic: vec![0.1],
                regions: vec![3],
                region_types: vec![RegionLabel {
                    id: 3,
                    region_type: "bathroom".into(),
                }],
                masked: None,
            },
        }
    }

    fn header() -> TraceHeader {
        TraceHeader {
            version: TRACE_VERSION,
            scene: "demo".into(),
            qa_id: "q1".into(),
            strategy: Strategy::FineEQA,
            seed: 7,
        }
    }

    #[test]
    fn single_step_trace_round_trips() {
        let bytes = trace_bytes(&header(), &result());
        let (h, r) = read_trace(bytes.as_slice()).unwrap();
        assert_eq!(h, header());
        assert_eq!(r, result());
        assert_eq!(trace_bytes(&h, &r), bytes);
        assert_eq!(trace_hash(&h, &r), trace_hash(&header(), &result()));
    }

    #[test]
    fn missing_end_record_is_truncation() {
        let bytes = trace_bytes(&header(), &result());
        let text = String::from_utf8(bytes).unwrap();
        let cut: String = text.lines().take(2).map(|l| format!("{l}\n")).collect();
        let err = read_trace(cut.as_bytes()).unwrap_err();
        assert!(err.to_string().starts_with("truncated trace"), "{err}");
        let lines: Vec<&str> = text.lines().collect();
        let dropped = format!("{}\n{}\n", lines[0], lines[2]);
        assert!(matches!(read_trace(dropped.as_bytes()), Err(DataError::Truncated(_))));
    }
}
