//! Running and grading many episodes, optionally in parallel. Results come back in
//! input order whatever the thread count.

use rayon::prelude::*;
use thiserror::Error;

use crate::controller::{run_episode, EpisodeError, EpisodeResult, Params, Strategy};
use crate::dataio::{trace_hash, ItemOutcome, QAItem, TraceHeader, TRACE_VERSION};
use crate::metrics::{sufficient_length, GradedItem, MetricsError};
use crate::oracle::{ObservationPayload, Oracle, OracleError};
use crate::scene::{geodesic_distance, Scene};

#[derive(Debug, Error)]
pub enum BatchError {
    #[error("{qa_id}: {source}")]
    Episode {
        qa_id: String,
        #[source]
        source: EpisodeError,
    },
    #[error("{qa_id}: grading failed: {source}")]
    Grade {
        qa_id: String,
        #[source]
        source: OracleError,
    },
    #[error("{qa_id}: {source}")]
    Metrics {
        qa_id: String,
        #[source]
        source: MetricsError,
    },
    #[error("{qa_id}: final position cannot reach the target")]
    Unreachable { qa_id: String },
    #[error("thread pool: {0}")]
    Pool(String),
}

/// One finished and graded episode.
#[derive(Debug, Clone)]
pub struct Evaluated {
    pub header: TraceHeader,
    pub result: EpisodeResult,
    pub graded: GradedItem,
    pub outcome: ItemOutcome,
}

/// Grades a finished episode. `σ′` reuses the grader's σ and `ce` is the final global
/// semantic score.
pub fn grade_episode(
    scene: &Scene,
    qa: &QAItem,
    result: &EpisodeResult,
    oracle: &dyn Oracle,
) -> Result<(GradedItem, u8), BatchError> {
    let payload = ObservationPayload {
        question: qa.question.clone(),
        pose: result.final_pose,
        sample_points: result.final_view.sample_points.clone(),
        ground_truth: Some(result.final_view.clone()),
        image_ref: None,
    };
    let grade = oracle
        .grade(&qa.question, &qa.gold_answer, &result.answer, &payload)
        .map_err(|source| BatchError::Grade {
            qa_id: qa.id.clone(),
            source,
        })?;
    let l_m = sufficient_length(scene, qa.start.position, qa.target, None).map_err(|source| {
        BatchError::Metrics {
            qa_id: qa.id.clone(),
            source,
        }
    })?;
    let d_t_m = geodesic_distance(scene, result.final_pose.position, qa.target).ok_or_else(|| {
        BatchError::Unreachable {
            qa_id: qa.id.clone(),
        }
    })?;
    Ok((
        GradedItem {
            sigma: grade.sigma(),
            delta: grade.delta.value(),
            l_m,
            p_m: result.p_m,
            d_t_m,
            ce: Some(result.ce),
            sigma_prime: Some(grade.sigma()),
        },
        grade.sigma(),
    ))
}

pub fn evaluate_one(
    scene: &Scene,
    qa: &QAItem,
    strategy: Strategy,
    oracle: &dyn Oracle,
    params: &Params,
    seed: u64,
) -> Result<Evaluated, BatchError> {
    let result = run_episode(scene, qa, strategy, oracle, params, seed).map_err(|source| {
        BatchError::Episode {
            qa_id: qa.id.clone(),
            source,
        }
    })?;
    let (graded, _) = grade_episode(scene, qa, &result, oracle)?;
    let header = TraceHeader {
        version: TRACE_VERSION,
        scene: scene.name.clone(),
        qa_id: qa.id.clone(),
        strategy,
        seed,
    };
    let outcome = ItemOutcome {
        qa_id: qa.id.clone(),
        question_type: qa.question_type,
        status: result.status,
        steps: result.steps,
        answer: result.answer.clone(),
        sigma: graded.sigma,
        delta: graded.delta,
        l_m: graded.l_m,
        p_m: graded.p_m,
        d_t_m: graded.d_t_m,
        ce: result.ce,
        trace_sha256: trace_hash(&header, &result),
    };
    Ok(Evaluated {
        header,
        result,
        graded,
        outcome,
    })
}

/// Evaluates every item on `jobs` threads. Each item keeps its own result, in input
/// order.
pub fn evaluate_all(
    scene: &Scene,
    items: &[QAItem],
    strategy: Strategy,
    oracle: &dyn Oracle,
    params: &Params,
    seed: u64,
    jobs: usize,
) -> Result<Vec<Result<Evaluated, BatchError>>, BatchError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| BatchError::Pool(e.to_string()))?;
    Ok(pool.install(|| {
        items
            .par_iter()
            .map(|qa| evaluate_one(scene, qa, strategy, oracle, params, seed))
            .collect()
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::ScriptedOracle;
    use crate::synth::{generate_house, generate_qa, HouseParams};

    #[test]
    fn parallel_matches_serial() {
        let house = generate_house("h", 4, &HouseParams::default());
        let items = generate_qa(&house, 4, 4);
        let oracle = ScriptedOracle::default();
        let params = Params::default();
        let hashes = |jobs| -> Vec<String> {
            evaluate_all(&house.scene, &items, Strategy::FineEQA, &oracle, &params, 1, jobs)
                .unwrap()
                .into_iter()
                .map(|r| r.unwrap().outcome.trace_sha256)
                .collect()
        };
        assert_eq!(hashes(1), hashes(3));
    }
}
