use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::runner::Workload;
use super::TrainError;
use crate::model::{is_correct, Generator};
use crate::topology::{run_actor_critic, ProblemInstance};

fn percent(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        100.0 * num as f64 / den as f64
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccuracyCount {
    pub correct: usize,
    pub total: usize,
}

impl AccuracyCount {
    pub fn percent(&self) -> f64 {
        percent(self.correct, self.total)
    }
}

/// TP counts problems whose initial actor answer is correct and whose
/// judgment confirms it. Overall counts correct answers after the loop.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActorCriticMetrics {
    pub total: usize,
    pub true_positive: usize,
    pub overall_correct: usize,
}

impl ActorCriticMetrics {
    pub fn tp_percent(&self) -> f64 {
        percent(self.true_positive, self.total)
    }

    pub fn overall_percent(&self) -> f64 {
        percent(self.overall_correct, self.total)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "setting", rename_all = "kebab-case")]
pub enum EvalReport {
    ProblemSolving(AccuracyCount),
    ActorCritic(ActorCriticMetrics),
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EvalReport::ProblemSolving(a) => {
                writeln!(f, "Problems {}", a.total)?;
                writeln!(f, "Accuracy {:.1}", a.percent())
            }
            EvalReport::ActorCritic(m) => {
                writeln!(f, "Problems {}", m.total)?;
                writeln!(f, "TP {:.1}", m.tp_percent())?;
                writeln!(f, "Overall {:.1}", m.overall_percent())
            }
        }
    }
}

/// Scores `workload` on held-out problems. No augmentation, no gold in prompts.
pub fn evaluate(
    workload: &Workload,
    generator: &Generator,
    problems: &[ProblemInstance],
    workers: usize,
) -> Result<EvalReport, TrainError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| TrainError::InvalidConfig(format!("worker pool: {e}")))?;
    match workload {
        Workload::Pipeline { pipeline, .. } => {
            let hits: Vec<Result<bool, TrainError>> = pool.install(|| {
                problems
                    .par_iter()
                    .map(|p| {
                        let tr = pipeline.execute(generator, p, 0)?;
                        Ok(is_correct(tr.final_answer.as_ref(), &p.gold_answer, p.task_kind))
                    })
                    .collect()
            });
            let mut acc = AccuracyCount {
                correct: 0,
                total: problems.len(),
            };
            for h in hits {
                acc.correct += usize::from(h?);
            }
            Ok(EvalReport::ProblemSolving(acc))
        }
        Workload::ActorCritic { agents, budget, .. } => {
            let rows: Vec<Result<(bool, bool), TrainError>> = pool.install(|| {
                problems
                    .par_iter()
                    .map(|p| {
                        let run = run_actor_critic(generator, agents, p, *budget, 0)?;
                        let tr = &run.trace;
                        let initial = is_correct(tr.actor_answer.as_ref(), &p.gold_answer, p.task_kind);
                        let fin = is_correct(tr.final_answer.as_ref(), &p.gold_answer, p.task_kind);
                        Ok((initial && tr.judgment_verdict, fin))
                    })
                    .collect()
            });
            let mut m = ActorCriticMetrics {
                total: problems.len(),
                ..Default::default()
            };
            for r in rows {
                let (tp, fin) = r?;
                m.true_positive += usize::from(tp);
                m.overall_correct += usize::from(fin);
            }
            Ok(EvalReport::ActorCritic(m))
        }
        Workload::Game { .. } => Err(TrainError::InvalidConfig(
            "eval scores task workloads; use tournament for games".into(),
        )),
    }
}
