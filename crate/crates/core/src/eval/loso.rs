use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::metrics::{bca, uia};
use super::report::{
    Aggregate, Condition, CurvePoint, ExperimentReport, FoldResult, Metric, Split,
};
use crate::data::{loso_indices, split_loso, Dataset};
use crate::error::{Error, Result};
use crate::nets::{self, ExtractorConfig, Stage, SurrogateModels, TrainConfig};

/// Settings of the evaluation-side models and the fold loop.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub extractor: ExtractorConfig,
    /// `epochs` drives stage 1, `head_epochs` stage 2; `seed` is the base
    /// seed, repeat `r` uses `seed + r`.
    pub train: TrainConfig,
    pub repeats: usize,
    /// Record per-epoch train/test metrics.
    pub curves: bool,
    /// Evaluate on perturbed rather than clean test sessions.
    pub perturb_test: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            extractor: ExtractorConfig::cfg_a(),
            train: TrainConfig::default(),
            repeats: 5,
            curves: true,
            perturb_test: false,
        }
    }
}

/// Predictions and metrics of one trained evaluation model.
#[derive(Clone, Debug)]
pub(crate) struct FoldEval {
    pub bca: f64,
    pub uia: f64,
    pub user_predictions: Vec<usize>,
    pub curves: Vec<CurvePoint>,
}

/// Two-stage training on `train`, scored on `test`.
pub(crate) fn evaluate_fold(
    train: &Dataset,
    test: &Dataset,
    extractor: &ExtractorConfig,
    cfg: &TrainConfig,
    curves: bool,
) -> Result<FoldEval> {
    let mut points = Vec::new();
    let mut feats: Option<(Vec<f64>, Vec<f64>)> = None;
    let mut observe = |stage: Stage, epoch: usize, m: &SurrogateModels| -> Result<()> {
        if !curves {
            return Ok(());
        }
        for (split, d) in [(Split::Train, train), (Split::Test, test)] {
            let (metric, value) = match stage {
                Stage::Task => (
                    Metric::Bca,
                    bca(&nets::predict_task(m, d)?, d.task_labels(), d.classes())?,
                ),
                Stage::User => {
                    let (ftr, fte) = match &feats {
                        Some(f) => f,
                        None => feats
                            .insert((nets::features_of(m, train)?, nets::features_of(m, test)?)),
                    };
                    let f = if split == Split::Train { ftr } else { fte };
                    (
                        Metric::Uia,
                        uia(&nets::predict_users_from_features(m, f)?, d.user_labels())?,
                    )
                }
            };
            points.push(CurvePoint {
                step: epoch,
                split,
                metric,
                value,
            });
        }
        Ok(())
    };
    let out = nets::train_two_stage_observed(train, extractor, cfg, &mut observe)?;
    let m = &out.models;
    let task = nets::predict_task(m, test)?;
    let users = nets::predict_users_from_features(m, &nets::features_of(m, test)?)?;
    Ok(FoldEval {
        bca: bca(&task, test.task_labels(), test.classes())?,
        uia: uia(&users, test.user_labels())?,
        user_predictions: users,
        curves: points,
    })
}

pub(crate) fn check_pair(clean: &Dataset, perturbed: &Dataset) -> Result<()> {
    let same = clean.dims() == perturbed.dims()
        && clean.task_labels() == perturbed.task_labels()
        && clean.user_labels() == perturbed.user_labels()
        && clean.session_labels() == perturbed.session_labels();
    if !same {
        return Err(Error::param(
            "perturbed dataset does not match the clean dataset's shape and labels",
        ));
    }
    Ok(())
}

pub(crate) fn check_sessions(d: &Dataset) -> Result<()> {
    if d.sessions() < 2 {
        return Err(Error::Protocol(format!(
            "leave-one-session-out needs at least 2 sessions, found {}; re-segment with split_by_index first",
            d.sessions()
        )));
    }
    Ok(())
}

/// Leave-one-session-out evaluation: each session in turn trains (from the
/// perturbed data when given), the other sessions test.
pub fn run_loso(
    clean: &Dataset,
    perturbed: Option<(&Dataset, Condition)>,
    cfg: &EvalConfig,
) -> Result<ExperimentReport> {
    check_sessions(clean)?;
    cfg.train.validate()?;
    if cfg.repeats == 0 {
        return Err(Error::param("repeats must be >= 1"));
    }
    let condition = match perturbed {
        Some((p, c)) => {
            check_pair(clean, p)?;
            c
        }
        None => Condition::Clean,
    };
    let source = perturbed.map(|(p, _)| p).unwrap_or(clean);
    let test_source = if cfg.perturb_test { source } else { clean };
    let jobs: Vec<(usize, usize)> = (0..clean.sessions())
        .flat_map(|s| (0..cfg.repeats).map(move |r| (s, r)))
        .collect();
    let folds = jobs
        .par_iter()
        .map(|&(session, repeat)| {
            let idx = loso_indices(clean, session)?;
            if idx.train.iter().any(|i| idx.test.binary_search(i).is_ok()) {
                return Err(Error::Protocol(format!(
                    "fold {session}: a training trial is also a test trial"
                )));
            }
            if idx.train.is_empty() || idx.test.is_empty() {
                return Err(Error::Protocol(format!(
                    "fold {session} has an empty train or test split"
                )));
            }
            let (train, _) = split_loso(source, session)?;
            let (_, test) = split_loso(test_source, session)?;
            let seed = cfg.train.seed.wrapping_add(repeat as u64);
            let tc = TrainConfig {
                seed,
                ..cfg.train.clone()
            };
            let e = evaluate_fold(&train, &test, &cfg.extractor, &tc, cfg.curves)?;
            Ok(FoldResult {
                session,
                repeat,
                seed,
                bca: e.bca,
                uia: e.uia,
                curves: e.curves,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ExperimentReport {
        condition,
        extractor_cfg: cfg.extractor.name.clone(),
        eval_cfg: None,
        hyper: json!({ "eval": cfg }),
        aggregate: Aggregate::of(&folds)?,
        folds,
        baseline: None,
        reduction: None,
    })
}

/// Evaluates `perturbed` with models of a different architecture than the
/// one that crafted it, paired with a clean run of the same architecture.
pub fn run_transfer(
    clean: &Dataset,
    perturbed: (&Dataset, Condition),
    craft: &ExtractorConfig,
    cfg: &EvalConfig,
) -> Result<ExperimentReport> {
    let baseline = run_loso(clean, None, cfg)?;
    let mut report = run_loso(clean, Some(perturbed), cfg)?.paired_with(&baseline)?;
    report.extractor_cfg = craft.name.clone();
    report.eval_cfg = Some(cfg.extractor.name.clone());
    report.hyper = json!({ "craft": craft, "eval": cfg });
    Ok(report)
}
