//! Corpus evaluation: the share of sampled manager completions that are
//! executable, correct and minimal.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::completion::{CompletionBackend, CompletionRequest};
use crate::parser::parse_skill_sequence;
use crate::planner::Planner;
use crate::prompt::{build_manager_prompt, PromptError};
use crate::registry::Registry;
use crate::task::TaskSpec;
use crate::validator::validate_plan;

/// One sampled completion together with the task it answers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sample {
    pub task_spec: TaskSpec,
    pub completion_text: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleVerdict {
    pub parsed: bool,
    pub grammar_ok: bool,
    pub executable: bool,
    pub correct: bool,
    pub minimal: bool,
    pub plan_length: Option<usize>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub samples: usize,
    pub executable: usize,
    pub correct: usize,
    pub minimal: usize,
    pub executable_fraction: f64,
    pub correct_fraction: f64,
    pub minimal_fraction: f64,
}

impl EvalMetrics {
    fn from_counts(samples: usize, executable: usize, correct: usize, minimal: usize) -> Self {
        let frac = |n: usize| n as f64 / samples as f64;
        Self {
            samples,
            executable,
            correct,
            minimal,
            executable_fraction: frac(executable),
            correct_fraction: frac(correct),
            minimal_fraction: frac(minimal),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub metrics: EvalMetrics,
    pub verdicts: Vec<SampleVerdict>,
}

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("file not found: {0}")]
    NotFound(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: malformed corpus: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Prompt(#[from] PromptError),
}

/// Judges one sample. Each judgment presupposes the previous one: a plan
/// must parse to be executable, execute to be correct, and be correct to be
/// minimal.
pub fn evaluate_sample(sample: &Sample, planner: &Planner<'_>) -> SampleVerdict {
    let plan = match parse_skill_sequence(&sample.completion_text) {
        Ok(p) => p,
        Err(e) => {
            return SampleVerdict {
                error: Some(format!("parse: {e}")),
                ..SampleVerdict::default()
            }
        }
    };
    let report = validate_plan(&plan, &sample.task_spec, planner);
    let error = if let Some(v) = report.grammar.violations.first() {
        Some(format!("grammar: {}", v.message))
    } else if let Some(f) = report.executable.as_ref().and_then(|e| e.fault.as_ref()) {
        Some(format!("step {}: {}", f.step + 1, f.reason))
    } else if let Some(s) = report.satisfies_task.as_ref().filter(|s| !s.satisfied) {
        Some(format!("unsatisfied: {}", s.missing.join(", ")))
    } else {
        report
            .minimal
            .as_ref()
            .and_then(|m| m.oracle_error.clone().map(|e| format!("oracle: {e}")))
    };
    SampleVerdict {
        parsed: true,
        grammar_ok: report.grammar_ok(),
        executable: report.is_executable(),
        correct: report.is_correct(),
        minimal: report.is_minimal(),
        plan_length: Some(plan.len()),
        error,
    }
}

/// Evaluates every sample and reports the three fractions over the whole
/// corpus.
pub fn evaluate_corpus(samples: &[Sample], planner: &Planner<'_>) -> Result<EvalReport, EvalError> {
    if samples.is_empty() {
        return Err(EvalError::EmptyCorpus);
    }
    let verdicts: Vec<SampleVerdict> = samples.iter().map(|s| evaluate_sample(s, planner)).collect();
    let count = |f: fn(&SampleVerdict) -> bool| verdicts.iter().filter(|v| f(v)).count();
    let metrics = EvalMetrics::from_counts(
        samples.len(),
        count(|v| v.executable),
        count(|v| v.correct),
        count(|v| v.minimal),
    );
    Ok(EvalReport { metrics, verdicts })
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Vec<Sample>, EvalError> {
    let path = path.as_ref();
    let shown = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|source| {
        if source.kind() == std::io::ErrorKind::NotFound {
            EvalError::NotFound(shown.clone())
        } else {
            EvalError::Io {
                path: shown.clone(),
                source,
            }
        }
    })?;
    serde_json::from_str(&text).map_err(|source| EvalError::Json { path: shown, source })
}

pub fn save_corpus(path: impl AsRef<Path>, samples: &[Sample]) -> Result<(), EvalError> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(samples).expect("samples serialize");
    std::fs::write(path, text).map_err(|source| EvalError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Draws `n` manager completions per task. A failed completion is kept as an
/// empty sample, which evaluates as not executable.
pub async fn collect(
    tasks: &[TaskSpec],
    n: usize,
    backend: &dyn CompletionBackend,
    registry: &Registry,
    temperature: f32,
) -> Result<Vec<Sample>, EvalError> {
    let mut samples = Vec::with_capacity(tasks.len() * n);
    for task in tasks {
        let prompt = build_manager_prompt(registry, &task.instruction)?;
        let request = CompletionRequest::new(prompt).with_temperature(temperature);
        for _ in 0..n {
            let completion_text = match backend.complete(&request).await {
                Ok(r) => r.text,
                Err(e) => {
                    tracing::warn!(task = %task.instruction, error = %e, "completion failed");
                    String::new()
                }
            };
            samples.push(Sample {
                task_spec: task.clone(),
                completion_text,
            });
        }
    }
    Ok(samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::task::bundled_tasks;

    #[test]
    fn empty_corpus_is_an_error() {
        let r = Registry::bundled();
        assert!(matches!(
            evaluate_corpus(&[], &Planner::new(&r)),
            Err(EvalError::EmptyCorpus)
        ));
    }

    #[test]
    fn unparseable_sample_scores_zero() {
        let r = Registry::bundled();
        let samples = [Sample {
            task_spec: bundled_tasks()[0].clone(),
            completion_text: "I cannot help with that.".into(),
        }];
        let m = evaluate_corpus(&samples, &Planner::new(&r)).unwrap().metrics;
        assert_eq!(
            (m.executable_fraction, m.correct_fraction, m.minimal_fraction),
            (0.0, 0.0, 0.0)
        );
    }

    #[test]
    fn missing_file_reports_not_found() {
        let err = load_corpus("/nonexistent/corpus.json").unwrap_err();
        assert!(err.to_string().starts_with("file not found"));
    }
}
