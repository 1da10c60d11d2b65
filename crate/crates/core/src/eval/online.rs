use serde::{Deserialize, Serialize};

use super::loso::{check_sessions, evaluate_fold, EvalConfig};
use super::metrics::uia;
use crate::data::{
    apply_perturbation, loso_indices, synth_generate, Dataset, PerturbationMode, PerturbationSet,
    SynthConfig,
};
use crate::error::{Error, Result};
use crate::shield::{extend_user_wise, UserHyper};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OnlineConfig {
    pub hyper: UserHyper,
    pub eval: EvalConfig,
    /// Sessions used as the training side of the evaluation folds.
    pub held_sessions: Vec<usize>,
}

/// UIA of one condition at one step, averaged over folds and repeats.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepScores {
    pub all: f64,
    pub existing: Option<f64>,
    pub new: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OnlineStep {
    pub step: usize,
    pub users: usize,
    pub new_users: usize,
    pub chance: f64,
    pub clean: StepScores,
    pub perturbed: StepScores,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OnlineReport {
    pub config: OnlineConfig,
    pub steps: Vec<OnlineStep>,
}

impl OnlineReport {
    /// `step,users,condition,group,uia` rows.
    pub fn curves_csv(&self) -> String {
        let mut out = String::from("step,users,condition,group,uia\n");
        for s in &self.steps {
            for (name, sc) in [("clean", &s.clean), ("perturbed", &s.perturbed)] {
                out += &format!("{},{},{name},all,{}\n", s.step, s.users, sc.all);
                if let Some(e) = sc.existing {
                    out += &format!("{},{},{name},existing,{e}\n", s.step, s.users);
                }
                out += &format!("{},{},{name},new,{}\n", s.step, s.users, sc.new);
            }
        }
        out
    }
}

/// Streams batches of new users: each step extends the user-wise templates,
/// then retrains evaluation models on everything released so far.
///
/// Batch `k` must carry user ids disjoint from every earlier batch, and ids
/// must continue contiguously from the previous batches.
pub fn run_online(stream: &[Dataset], cfg: &OnlineConfig) -> Result<OnlineReport> {
    let first = stream
        .first()
        .ok_or_else(|| Error::param("online stream is empty"))?;
    let (c, t) = (first.channels(), first.samples());
    if cfg.held_sessions.is_empty() || cfg.eval.repeats == 0 {
        return Err(Error::param(
            "online evaluation needs at least one held session and one repeat",
        ));
    }
    let mut templates = PerturbationSet::new(PerturbationMode::UserWise, c, t, vec![], 0.0)?;
    let mut clean_all: Option<Dataset> = None;
    let mut perturbed_all: Option<Dataset> = None;
    let mut steps = Vec::with_capacity(stream.len());
    for (k, batch) in stream.iter().enumerate() {
        check_sessions(batch)?;
        let offset = templates.count();
        if let Some(&u) = batch.user_labels().iter().find(|&&u| u < offset) {
            return Err(Error::param(format!(
                "step {k}: user {u} already appeared in an earlier batch"
            )));
        }
        let previous = match &perturbed_all {
            Some(p) => p.clone(),
            None => batch.subset(&[]).with_user_count(offset)?,
        };
        templates = extend_user_wise(
            &templates,
            &previous,
            batch,
            &cfg.eval.extractor,
            &cfg.hyper,
        )?;
        let users = templates.count();
        if users == offset {
            return Err(Error::param(format!("step {k} adds no users")));
        }
        let shifted = apply_perturbation(&batch.with_user_count(users)?, &templates)?;
        let (clean, perturbed) = match (&clean_all, &perturbed_all) {
            (Some(c), Some(p)) => (
                Dataset::concat(&[c, batch])?,
                Dataset::concat(&[p, &shifted])?,
            ),
            _ => (batch.clone(), shifted),
        };
        let clean = clean.with_user_count(users)?;
        let perturbed = perturbed.with_user_count(users)?;
        steps.push(OnlineStep {
            step: k,
            users,
            new_users: users - offset,
            chance: 1.0 / users as f64,
            clean: score(&clean, &clean, offset, cfg)?,
            perturbed: score(&clean, &perturbed, offset, cfg)?,
        });
        clean_all = Some(clean);
        perturbed_all = Some(perturbed);
    }
    Ok(OnlineReport {
        config: cfg.clone(),
        steps,
    })
}

/// Generates one synthetic population and splits it into `batches` groups
/// of consecutive users; batch `k` declares `(k + 1) * users / batches` users.
pub fn synth_stream(cfg: &SynthConfig, batches: usize) -> Result<Vec<Dataset>> {
    if batches == 0 || !cfg.users.is_multiple_of(batches) {
        return Err(Error::param(format!(
            "{} users cannot be split into {batches} equal batches",
            cfg.users
        )));
    }
    let all = synth_generate(cfg)?;
    let per = cfg.users / batches;
    (0..batches)
        .map(|k| {
            all.subset(&all.indices_of_users(k * per..(k + 1) * per))
                .with_user_count((k + 1) * per)
        })
        .collect()
}

fn score(
    clean: &Dataset,
    train_source: &Dataset,
    offset: usize,
    cfg: &OnlineConfig,
) -> Result<StepScores> {
    let (mut all, mut existing, mut new, mut n) = (0.0, 0.0, 0.0, 0.0);
    for &session in &cfg.held_sessions {
        let idx = loso_indices(clean, session)?;
        let train = train_source.subset(&idx.train);
        let test = if cfg.eval.perturb_test {
            train_source.subset(&idx.test)
        } else {
            clean.subset(&idx.test)
        };
        for r in 0..cfg.eval.repeats {
            let tc = crate::nets::TrainConfig {
                seed: cfg.eval.train.seed.wrapping_add(r as u64),
                ..cfg.eval.train.clone()
            };
            let e = evaluate_fold(&train, &test, &cfg.eval.extractor, &tc, false)?;
            all += e.uia;
            let (old_idx, new_idx): (Vec<usize>, Vec<usize>) =
                (0..test.len()).partition(|&i| test.user_labels()[i] < offset);
            let pick = |ix: &[usize]| -> Result<f64> {
                let p: Vec<usize> = ix.iter().map(|&i| e.user_predictions[i]).collect();
                let u: Vec<usize> = ix.iter().map(|&i| test.user_labels()[i]).collect();
                uia(&p, &u)
            };
            if !old_idx.is_empty() {
                existing += pick(&old_idx)?;
            }
            new += pick(&new_idx)?;
            n += 1.0;
        }
    }
    Ok(StepScores {
        all: all / n,
        existing: (offset > 0).then_some(existing / n),
        new: new / n,
    })
}
