//! Deterministic rule-based oracle.
//!
//! The grader here is a fixed string-matching proxy for offline runs and tests. It is
//! not an attempt to reproduce how a vision-language model would grade.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{
    Delta, Grade, ObservationPayload, Oracle, OracleError, RegionGuess, SemanticScores,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleEntry {
    pub keywords: Vec<String>,
    /// Region types in priority order for questions matching any keyword.
    pub regions: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rulebook {
    pub rules: Vec<RuleEntry>,
    /// Local/global score given to anything not relevant.
    #[serde(default = "default_baseline")]
    pub baseline: f64,
    #[serde(default = "default_fallback")]
    pub fallback_answer: String,
    #[serde(default = "default_stopwords")]
    pub stopwords: Vec<String>,
}

fn default_baseline() -> f64 {
    0.1
}

fn default_fallback() -> String {
    "i do not know".into()
}

fn default_stopwords() -> Vec<String> {
    [
        "a", "an", "the", "is", "are", "was", "were", "it", "its", "of", "in", "on", "at", "to",
        "there", "this", "that", "these", "those", "what", "which", "where", "how", "does", "do",
        "did", "be", "and", "or", "with", "by", "for",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect()
}

const REGION_NAMES: [&str; 8] = [
    "bathroom",
    "bedroom",
    "kitchen",
    "living room",
    "dining room",
    "office",
    "laundry room",
    "hallway",
];

impl Default for Rulebook {
    fn default() -> Self {
        let rule = |keywords: &[&str], regions: &[&str]| RuleEntry {
            keywords: keywords.iter().map(|s| s.to_string()).collect(),
            regions: regions.iter().map(|s| s.to_string()).collect(),
        };
        let mut rules: Vec<RuleEntry> = REGION_NAMES
            .iter()
            .map(|r| {
                if *r == "hallway" {
                    rule(&[r], &[r])
                } else {
                    rule(&[r], &[r, "hallway"])
                }
            })
            .collect();
        rules.extend([
            rule(&["towel", "toilet", "shower", "bathtub", "toothbrush", "soap"], &["bathroom", "hallway"]),
            rule(&["mirror"], &["bathroom", "bedroom"]),
            rule(&["bed", "pillow", "blanket", "wardrobe", "nightstand"], &["bedroom", "hallway"]),
            rule(&["stove", "fridge", "refrigerator", "oven", "microwave", "kettle"], &["kitchen", "dining room"]),
            rule(&["sofa", "couch", "television", "tv", "fireplace"], &["living room", "hallway"]),
            rule(&["table", "chairs", "plates"], &["dining room", "kitchen"]),
            rule(&["desk", "computer", "bookshelf", "printer"], &["office", "hallway"]),
            rule(&["washing", "washer", "dryer", "detergent"], &["laundry room", "hallway"]),
            rule(&["coat", "shoes", "umbrella"], &["hallway"]),
        ]);
        Self {
            rules,
            baseline: default_baseline(),
            fallback_answer: default_fallback(),
            stopwords: default_stopwords(),
        }
    }
}

/// Lowercase, punctuation replaced by spaces, whitespace collapsed.
pub fn normalize(text: &str) -> String {
    text.chars()
        .map(|c| if c.is_alphanumeric() { c.to_ascii_lowercase() } else { ' ' })
        .collect::<String>()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

/// Token-multiset F1 between two normalized strings.
pub fn token_f1(prediction: &str, reference: &str) -> f64 {
    let p = normalize(prediction);
    let r = normalize(reference);
    let p: Vec<&str> = p.split_whitespace().collect();
    let r: Vec<&str> = r.split_whitespace().collect();
    if p.is_empty() || r.is_empty() {
        return 0.0;
    }
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for t in &r {
        *counts.entry(t).or_default() += 1;
    }
    let mut common = 0usize;
    for t in &p {
        if let Some(c) = counts.get_mut(t) {
            if *c > 0 {
                *c -= 1;
                common += 1;
            }
        }
    }
    if common == 0 {
        return 0.0;
    }
    let precision = common as f64 / p.len() as f64;
    let recall = common as f64 / r.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

fn contains_phrase(haystack: &str, phrase: &str) -> Option<usize> {
    let padded = format!(" {haystack} ");
    padded.find(&format!(" {phrase} "))
}

impl Rulebook {
    /// Ordered region types for a question. Rules triggered by a region name take
    /// precedence over object keywords; within each group, earlier mentions first.
    pub fn priorities(&self, question: &str) -> Vec<String> {
        let q = normalize(question);
        let mut hits: Vec<(bool, usize, usize)> = Vec::new();
        for (i, rule) in self.rules.iter().enumerate() {
            let first = rule
                .keywords
                .iter()
                .filter_map(|k| {
                    contains_phrase(&q, &normalize(k))
                        .map(|pos| (!rule.regions.iter().any(|r| normalize(r) == normalize(k)), pos))
                })
                .min();
            if let Some((is_object, pos)) = first {
                hits.push((is_object, pos, i));
            }
        }
        hits.sort();
        let mut out: Vec<String> = Vec::new();
        for (_, _, i) in hits {
            for r in &self.rules[i].regions {
                if !out.contains(r) {
                    out.push(r.clone());
                }
            }
        }
        out
    }

    fn relevance(&self, question: &str, region: Option<&str>) -> f64 {
        match (self.priorities(question).first(), region) {
            (Some(top), Some(r)) if top == r => 1.0,
            _ => self.baseline,
        }
    }

    fn key_token(&self, text: &str) -> String {
        let n = normalize(text);
        let tokens: Vec<&str> = n.split_whitespace().collect();
        tokens
            .iter()
            .find(|t| !self.stopwords.iter().any(|s| s == *t))
            .or(tokens.first())
            .map(|s| s.to_string())
            .unwrap_or_default()
    }

    pub fn semantic_scores(&self, payload: &ObservationPayload) -> Result<SemanticScores, OracleError> {
        let view = payload.view()?;
        let v_l = (0..payload.sample_points.len())
            .map(|i| {
                let region = view.sample_regions.get(i).cloned().flatten();
                self.relevance(&payload.question, region.as_deref())
            })
            .collect();
        let v_g = view
            .visible_regions
            .iter()
            .map(|r| self.relevance(&payload.question, Some(&r.region_type)))
            .fold(self.baseline, f64::max);
        Ok(SemanticScores { v_l, v_g })
    }

    pub fn classify_region(&self, payload: &ObservationPayload) -> Result<RegionGuess, OracleError> {
        let view = payload.view()?;
        let dominant = view
            .visible_regions
            .iter()
            .max_by(|a, b| a.cells.cmp(&b.cells).then(b.region_type.cmp(&a.region_type)));
        let unknown = RegionGuess {
            region_type: "unknown".into(),
            confidence: 0.0,
            rep_point: view.agent,
        };
        let Some(dominant) = dominant else {
            return Ok(unknown);
        };
        let rep = view
            .sample_regions
            .iter()
            .position(|r| r.as_deref() == Some(dominant.region_type.as_str()))
            .and_then(|i| view.sample_points.get(i));
        let Some(rep) = rep else {
            return Ok(unknown);
        };
        let confidence = if view.visible_free_cells == 0 {
            0.0
        } else {
            (dominant.cells as f64 / view.visible_free_cells as f64).min(1.0)
        };
        Ok(RegionGuess {
            region_type: dominant.region_type.clone(),
            confidence,
            rep_point: *rep,
        })
    }

    pub fn should_stop(&self, payload: &ObservationPayload) -> Result<bool, OracleError> {
        Ok(payload.view()?.target_visible)
    }

    pub fn answer(&self, payload: &ObservationPayload) -> Result<String, OracleError> {
        let view = payload.view()?;
        Ok(if view.target_visible {
            view.target_answer
        } else {
            self.fallback_answer.clone()
        })
    }

    pub fn grade(
        &self,
        gold: &str,
        answer: &str,
        payload: &ObservationPayload,
    ) -> Result<Grade, OracleError> {
        let view = payload.view()?;
        let delta = if !view.target_visible {
            Delta::Zero
        } else if self.key_token(answer) == self.key_token(&view.target_answer) {
            Delta::One
        } else {
            Delta::Half
        };
        let sigma = if normalize(answer) == normalize(gold) {
            5
        } else {
            ((5.0 * token_f1(answer, gold)).round() as i64).clamp(1, 5)
        };
        Grade::new(sigma, delta.value())
    }
}

/// [`Oracle`] backed by a [`Rulebook`].
#[derive(Debug, Clone, Default)]
pub struct ScriptedOracle {
    pub rulebook: Rulebook,
}

impl ScriptedOracle {
    pub fn new(rulebook: Rulebook) -> Self {
        Self { rulebook }
    }
}

impl Oracle for ScriptedOracle {
    fn prioritize_regions(&self, question: &str) -> Result<Vec<String>, OracleError> {
        Ok(self.rulebook.priorities(question))
    }

    fn semantic_scores(&self, payload: &ObservationPayload) -> Result<SemanticScores, OracleError> {
        self.rulebook.semantic_scores(payload)
    }

    fn classify_region(&self, payload: &ObservationPayload) -> Result<RegionGuess, OracleError> {
        self.rulebook.classify_region(payload)
    }

    fn should_stop(&self, payload: &ObservationPayload) -> Result<bool, OracleError> {
        self.rulebook.should_stop(payload)
    }

    fn answer(&self, payload: &ObservationPayload) -> Result<String, OracleError> {
        self.rulebook.answer(payload)
    }

    fn grade(
        &self,
        _question: &str,
        gold: &str,
        answer: &str,
        payload: &ObservationPayload,
    ) -> Result<Grade, OracleError> {
        self.rulebook.grade(gold, answer, payload)
    }
}
