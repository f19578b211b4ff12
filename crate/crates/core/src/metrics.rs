//! Exploration-answer consistency metrics.
//!
//! Per item: correctness σ ∈ 1..=5, grounding δ ∈ {0, 0.5, 1}, the sufficient
//! ground-truth distance `l`, the travelled distance `p`, and the final geodesic
//! distance to the target `d_T`. Aggregates are means over items; the C-family and
//! E-family values are percentages, ACE/NPL/WCE are fractions.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scene::{geodesic_distance, Point, Scene};

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("no graded items")]
    Empty,
    #[error("item {index}: {message}")]
    InvalidItem { index: usize, message: String },
    #[error("item {index} lacks {field}, required for {metric}")]
    MissingField {
        index: usize,
        field: &'static str,
        metric: &'static str,
    },
    #[error("target unreachable from start")]
    Unreachable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradedItem {
    pub sigma: u8,
    pub delta: f64,
    pub l_m: f64,
    pub p_m: f64,
    pub d_t_m: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ce: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_prime: Option<u8>,
}

impl GradedItem {
    pub fn validate(&self, index: usize) -> Result<(), MetricsError> {
        let bad = |message: String| Err(MetricsError::InvalidItem { index, message });
        if !(1..=5).contains(&self.sigma) {
            return bad(format!("sigma {} not in 1..=5", self.sigma));
        }
        if ![0.0, 0.5, 1.0].contains(&self.delta) {
            return bad(format!("delta {} not in {{0, 0.5, 1}}", self.delta));
        }
        for (name, v) in [("l_m", self.l_m), ("p_m", self.p_m), ("d_t_m", self.d_t_m)] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} must be finite and non-negative"));
            }
        }
        if let Some(ce) = self.ce {
            if !(ce.is_finite() && (0.0..=1.0).contains(&ce)) {
                return bad(format!("ce {ce} not in [0, 1]"));
            }
        }
        if let Some(s) = self.sigma_prime {
            if !(1..=5).contains(&s) {
                return bad(format!("sigma_prime {s} not in 1..=5"));
            }
        }
        Ok(())
    }

    /// `l / max(p, l)`; a zero-length task counts as perfectly efficient.
    pub fn path_ratio(&self) -> f64 {
        let denom = self.p_m.max(self.l_m);
        if denom == 0.0 {
            1.0
        } else {
            self.l_m / denom
        }
    }
}

/// `σ·δ/5`.
pub fn item_score(item: &GradedItem) -> f64 {
    item.sigma as f64 * item.delta / 5.0
}

/// Which optional metric families to compute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct MetricSelection {
    pub openeqa: bool,
    pub confidence: bool,
}

impl MetricSelection {
    pub fn all() -> Self {
        Self {
            openeqa: true,
            confidence: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n: usize,
    pub c: f64,
    pub c_star: f64,
    pub e_path: f64,
    pub d_t_mean: f64,
    pub c_prime: Option<f64>,
    pub e_prime: Option<f64>,
    pub ace: Option<f64>,
    pub npl: f64,
    pub wce: Option<f64>,
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    sum / n as f64
}

/// Aggregates graded items. Optional families are computed when selected and fail if
/// any item lacks the field they need.
pub fn aggregate(items: &[GradedItem], select: MetricSelection) -> Result<MetricsReport, MetricsError> {
    if items.is_empty() {
        return Err(MetricsError::Empty);
    }
    for (i, item) in items.iter().enumerate() {
        item.validate(i)?;
    }
    let sigma_primes = if select.openeqa {
        Some(
            items
                .iter()
                .enumerate()
                .map(|(index, it)| {
                    it.sigma_prime.ok_or(MetricsError::MissingField {
                        index,
                        field: "sigma_prime",
                        metric: "C'/E'",
                    })
                })
                .collect::<Result<Vec<u8>, _>>()?,
        )
    } else {
        None
    };
    let ces = if select.confidence {
        Some(
            items
                .iter()
                .enumerate()
                .map(|(index, it)| {
                    it.ce.ok_or(MetricsError::MissingField {
                        index,
                        field: "ce",
                        metric: "ACE/WCE",
                    })
                })
                .collect::<Result<Vec<f64>, _>>()?,
        )
    } else {
        None
    };

    let c = mean(items.iter().map(item_score)) * 100.0;
    let c_star = mean(items.iter().map(|it| it.sigma as f64 / 5.0)) * 100.0;
    let e_path = mean(items.iter().map(|it| item_score(it) * it.path_ratio())) * 100.0;
    let d_t_mean = mean(items.iter().map(|it| it.d_t_m));
    let npl = mean(items.iter().map(GradedItem::path_ratio));
    let (c_prime, e_prime) = match &sigma_primes {
        Some(sp) => (
            Some(mean(sp.iter().map(|&s| (s as f64 - 1.0) / 4.0)) * 100.0),
            Some(
                mean(
                    sp.iter()
                        .zip(items)
                        .map(|(&s, it)| (s as f64 - 1.0) / 4.0 * it.path_ratio()),
                ) * 100.0,
            ),
        ),
        None => (None, None),
    };
    let (ace, wce) = match &ces {
        Some(ce) => (
            Some(mean(ce.iter().copied())),
            Some(mean(ce.iter().zip(items).map(|(&c, it)| c * it.path_ratio()))),
        ),
        None => (None, None),
    };
    Ok(MetricsReport {
        n: items.len(),
        c,
        c_star,
        e_path,
        d_t_mean,
        c_prime,
        e_prime,
        ace,
        npl,
        wce,
    })
}

/// Ground-truth distance an agent needs to cover: the full start→target geodesic,
/// optionally reduced by an observation range (floored at zero).
pub fn sufficient_length(
    scene: &Scene,
    start: Point,
    target: Point,
    visibility_slack_m: Option<f64>,
) -> Result<f64, MetricsError> {
    let d = geodesic_distance(scene, start, target).ok_or(MetricsError::Unreachable)?;
    Ok(match visibility_slack_m {
        Some(slack) => (d - slack).max(0.0),
        None => d,
    })
}

/// Rounds half-to-even at `decimals` places, for display.
pub fn round_half_even(value: f64, decimals: u32) -> f64 {
    let scale = 10f64.powi(decimals as i32);
    let scaled = value * scale;
    let floor = scaled.floor();
    let diff = scaled - floor;
    let rounded = if (diff - 0.5).abs() < 1e-9 {
        if floor % 2.0 == 0.0 {
            floor
        } else {
            floor + 1.0
        }
    } else {
        scaled.round()
    };
    rounded / scale
}

impl MetricsReport {
    /// Aligned two-column table with values rounded half-to-even to 2 decimals.
    pub fn to_table(&self) -> String {
        let fmt = |v: Option<f64>| match v {
            Some(v) => format!("{:.2}", round_half_even(v, 2)),
            None => "n/a".to_string(),
        };
        let rows = [
            ("N", self.n.to_string()),
            ("C (%)", fmt(Some(self.c))),
            ("C* (%)", fmt(Some(self.c_star))),
            ("E_path (%)", fmt(Some(self.e_path))),
            ("d_T (m)", fmt(Some(self.d_t_mean))),
            ("C' (%)", fmt(self.c_prime)),
            ("E' (%)", fmt(self.e_prime)),
            ("ACE", fmt(self.ace)),
            ("NPL", fmt(Some(self.npl))),
            ("WCE", fmt(self.wce)),
        ];
        let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        let vwidth = rows.iter().map(|(_, v)| v.len()).max().unwrap_or(0);
        rows.iter()
            .map(|(k, v)| format!("{k:<width$}  {v:>vwidth$}\n"))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn item(sigma: u8, delta: f64, l: f64, p: f64) -> GradedItem {
        GradedItem {
            sigma,
            delta,
            l_m: l,
            p_m: p,
            d_t_m: 0.0,
            ce: None,
            sigma_prime: None,
        }
    }

    #[test]
    fn item_scores() {
        assert_eq!(item_score(&item(5, 1.0, 1.0, 1.0)), 1.0);
        assert_eq!(item_score(&item(5, 0.0, 1.0, 1.0)), 0.0);
        assert!((item_score(&item(4, 0.5, 1.0, 1.0)) - 0.4).abs() < 1e-15);
    }

    #[test]
    fn aggregate_examples() {
        let r = aggregate(&[item(4, 0.5, 1.0, 1.0), item(2, 1.0, 1.0, 1.0)], MetricSelection::default()).unwrap();
        assert!((r.c - 40.0).abs() < 1e-12);
        let r = aggregate(&[item(5, 1.0, 6.0, 12.0)], MetricSelection::default()).unwrap();
        assert!((r.e_path - 50.0).abs() < 1e-12);
        let short = [item(3, 0.5, 5.0, 2.0), item(5, 1.0, 4.0, 4.0)];
        let r = aggregate(&short, MetricSelection::default()).unwrap();
        assert_eq!(r.e_path, r.c);
    }

    #[test]
    fn openeqa_floor_and_wce_product() {
        let mut it = item(3, 1.0, 0.34, 1.0);
        it.sigma_prime = Some(1);
        it.ce = Some(0.59);
        let r = aggregate(&[it], MetricSelection::all()).unwrap();
        assert_eq!(r.c_prime, Some(0.0));
        assert_eq!(r.e_prime, Some(0.0));
        assert!((r.wce.unwrap() - 0.59 * 0.34).abs() < 1e-12);
        assert!((r.wce.unwrap() - 0.2006).abs() < 1e-12);
    }

    #[test]
    fn errors() {
        assert_eq!(aggregate(&[], MetricSelection::default()), Err(MetricsError::Empty));
        let err = aggregate(&[item(3, 1.0, 1.0, 1.0)], MetricSelection::all()).unwrap_err();
        assert!(matches!(err, MetricsError::MissingField { field: "sigma_prime", .. }));
        let err = aggregate(&[item(3, 0.3, 1.0, 1.0)], MetricSelection::default()).unwrap_err();
        assert!(matches!(err, MetricsError::InvalidItem { index: 0, .. }));
    }

    #[test]
    fn sufficient_length_cases() {
        let s = Scene::open("corridor", 12, 1, 0.25);
        let a = s.center_of(0);
        assert_eq!(sufficient_length(&s, a, a, None), Ok(0.0));
        let b = s.center_of(10);
        assert!((sufficient_length(&s, a, b, None).unwrap() - 2.5).abs() < 1e-12);
        assert!((sufficient_length(&s, a, b, Some(1.0)).unwrap() - 1.5).abs() < 1e-12);
        assert_eq!(sufficient_length(&s, a, b, Some(9.0)), Ok(0.0));
    }

    #[test]
    fn display_rounding() {
        assert_eq!(round_half_even(0.125, 2), 0.12);
        assert_eq!(round_half_even(0.375, 2), 0.38);
        assert_eq!(round_half_even(40.554, 2), 40.55);
        let r = aggregate(&[item(5, 1.0, 1.0, 1.0)], MetricSelection::default()).unwrap();
        assert!(r.to_table().contains("C (%)       100.00"));
    }
}
