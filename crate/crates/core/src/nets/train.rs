use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{self, ExtractorConfig, SurrogateModels, Trainable};
use super::optim::{OptimizerConfig, OptimizerState};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::numerics::{Graph, Tensor};
use crate::seed;

/// Batch size used when only evaluating (no gradients).
const EVAL_BATCH: usize = 128;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Weight of the user cross-entropy in joint training.
    pub alpha: f64,
    pub batch_size: usize,
    /// Epochs of joint training, or of stage 1 in two-stage training.
    pub epochs: usize,
    /// Epochs of user-head training in stage 2.
    pub head_epochs: usize,
    pub seed: u64,
    pub optimizer: OptimizerConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            batch_size: 64,
            epochs: 150,
            head_epochs: 150,
            seed: 0,
            optimizer: OptimizerConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return Err(Error::param(format!(
                "alpha must be >= 0, got {}",
                self.alpha
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::param("batch size must be >= 1"));
        }
        self.optimizer.validate()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Objective {
    /// `CE(task) + alpha * CE(user)` through the shared extractor.
    Joint { alpha: f64 },
    /// `CE(task)` only; the user head is untouched.
    TaskOnly,
}

/// Mini-batch trainer that keeps models, optimizer moments and shuffling
/// state across calls, so training can be resumed between perturbation rounds.
pub struct Trainer {
    models: SurrogateModels,
    optimizer: OptimizerState,
    rng: ChaCha8Rng,
    objective: Objective,
    batch_size: usize,
    epoch: usize,
}

impl Trainer {
    pub fn new(models: SurrogateModels, objective: Objective, cfg: &TrainConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            models,
            optimizer: OptimizerState::new(cfg.optimizer.clone())?,
            rng: seed::rng(seed::derive(cfg.seed, seed::SHUFFLE)),
            objective,
            batch_size: cfg.batch_size,
            epoch: 0,
        })
    }

    pub fn models(&self) -> &SurrogateModels {
        &self.models
    }

    pub fn into_models(self) -> SurrogateModels {
        self.models
    }

    /// One pass over `d` in shuffled mini-batches; returns the mean batch loss.
    pub fn run_epoch(&mut self, d: &Dataset) -> Result<f64> {
        check_labels(d, &self.models)?;
        if d.is_empty() {
            return Err(Error::param("cannot train on an empty dataset"));
        }
        let epoch = self.epoch;
        self.epoch += 1;
        let mut order: Vec<usize> = (0..d.len()).collect();
        order.shuffle(&mut self.rng);
        let mut total = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(self.batch_size) {
            let loss = self.step(d, chunk).map_err(|e| at_epoch(e, epoch))?;
            total += loss;
            batches += 1;
        }
        let mean = total / batches as f64;
        if !mean.is_finite() {
            return Err(Error::Numerical(format!(
                "epoch {epoch}: loss is not finite"
            )));
        }
        Ok(mean)
    }

    /// Gradient of the objective on one batch, in parameter declaration order.
    pub fn gradients(&self, d: &Dataset, indices: &[usize]) -> Result<(f64, Vec<Vec<f64>>)> {
        let mut g = Graph::new();
        let vars = self.models.bind(&mut g, Trainable::All);
        let x = g.constant(d.batch(indices)?);
        let f = model::features(&mut g, &self.models, &vars, x)?;
        let tl = model::task_logits(&mut g, &vars, f)?;
        let ys: Vec<usize> = indices.iter().map(|&i| d.task_labels()[i]).collect();
        let mut loss = g.softmax_cross_entropy(tl, &ys)?;
        if let Objective::Joint { alpha } = self.objective {
            let ul = model::user_logits(&mut g, &vars, f)?;
            let us: Vec<usize> = indices.iter().map(|&i| d.user_labels()[i]).collect();
            let ce_u = g.softmax_cross_entropy(ul, &us)?;
            let weighted = g.scale(ce_u, alpha)?;
            loss = g.add(loss, weighted)?;
        }
        let value = g.value(loss).item();
        let mut grads = g.backward(loss)?;
        Ok((value, vars.all().iter().map(|&v| grads.take(v)).collect()))
    }

    fn step(&mut self, d: &Dataset, indices: &[usize]) -> Result<f64> {
        let (loss, grads) = self.gradients(d, indices)?;
        let mut params = self.models.params_mut();
        self.optimizer.step(&mut params, &grads)?;
        Ok(loss)
    }
}

fn at_epoch(e: Error, epoch: usize) -> Error {
    match e {
        Error::Numerical(msg) => Error::Numerical(format!("epoch {epoch}: {msg}")),
        other => other,
    }
}

fn check_labels(d: &Dataset, models: &SurrogateModels) -> Result<()> {
    if d.classes() > models.classes() {
        return Err(Error::label(format!(
            "{} classes but task head has {}",
            d.classes(),
            models.classes()
        )));
    }
    if d.users() > models.users() {
        return Err(Error::label(format!(
            "{} users but user head has {}",
            d.users(),
            models.users()
        )));
    }
    models.check_input(&[1, d.channels(), d.samples()])
}

/// Result of a training run with its per-epoch mean losses.
#[derive(Clone, Debug)]
pub struct Trained {
    pub models: SurrogateModels,
    pub losses: Vec<f64>,
}

/// Joint training of extractor, task head and user head for `cfg.epochs`.
pub fn train_joint(d: &Dataset, cfg: &TrainConfig, models: SurrogateModels) -> Result<Trained> {
    train_with(d, cfg, models, Objective::Joint { alpha: cfg.alpha })
}

/// Task-only training; the α = 0 reference for [`train_joint`].
pub fn train_task_only(d: &Dataset, cfg: &TrainConfig, models: SurrogateModels) -> Result<Trained> {
    train_with(d, cfg, models, Objective::TaskOnly)
}

fn train_with(
    d: &Dataset,
    cfg: &TrainConfig,
    models: SurrogateModels,
    objective: Objective,
) -> Result<Trained> {
    let mut trainer = Trainer::new(models, objective, cfg)?;
    let losses = (0..cfg.epochs)
        .map(|_| trainer.run_epoch(d))
        .collect::<Result<Vec<_>>>()?;
    Ok(Trained {
        models: trainer.into_models(),
        losses,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Task,
    User,
}

#[derive(Clone, Debug)]
pub struct TwoStageOutcome {
    pub models: SurrogateModels,
    pub task_losses: Vec<f64>,
    pub user_losses: Vec<f64>,
}

/// Stage 1 trains extractor and task head on task labels; stage 2 freezes
/// the extractor and fits a fresh user head on its features.
pub fn train_two_stage(
    d: &Dataset,
    extractor: &ExtractorConfig,
    cfg: &TrainConfig,
) -> Result<TwoStageOutcome> {
    train_two_stage_observed(d, extractor, cfg, &mut |_, _, _| Ok(()))
}

/// [`train_two_stage`] with a callback after every epoch of either stage.
pub fn train_two_stage_observed(
    d: &Dataset,
    extractor: &ExtractorConfig,
    cfg: &TrainConfig,
    observer: &mut dyn FnMut(Stage, usize, &SurrogateModels) -> Result<()>,
) -> Result<TwoStageOutcome> {
    cfg.validate()?;
    let models = SurrogateModels::new(
        extractor.clone(),
        d.channels(),
        d.samples(),
        d.classes(),
        d.users(),
        cfg.seed,
    )?;
    let mut trainer = Trainer::new(models, Objective::TaskOnly, cfg)?;
    let mut task_losses = Vec::with_capacity(cfg.epochs);
    for e in 0..cfg.epochs {
        task_losses.push(trainer.run_epoch(d)?);
        observer(Stage::Task, e, trainer.models())?;
    }
    let mut models = trainer.into_models();
    models.reset_user_head(d.users(), cfg.seed);

    let feats = features_of(&models, d)?;
    let fd = models.extractor.feature_dim();
    let mut optimizer = OptimizerState::new(cfg.optimizer.clone())?;
    let mut rng = seed::rng(seed::derive(cfg.seed, seed::HEAD_SHUFFLE));
    let mut user_losses = Vec::with_capacity(cfg.head_epochs);
    for e in 0..cfg.head_epochs {
        let mut order: Vec<usize> = (0..d.len()).collect();
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(cfg.batch_size) {
            let mut g = Graph::new();
            let vars = models.bind(&mut g, Trainable::UserHead);
            let mut fb = Vec::with_capacity(chunk.len() * fd);
            for &i in chunk {
                fb.extend_from_slice(&feats[i * fd..(i + 1) * fd]);
            }
            let f = g.constant(Tensor::new(vec![chunk.len(), fd], fb)?);
            let ul = model::user_logits(&mut g, &vars, f)?;
            let us: Vec<usize> = chunk.iter().map(|&i| d.user_labels()[i]).collect();
            let loss = g
                .softmax_cross_entropy(ul, &us)
                .map_err(|err| at_epoch(err, e))?;
            total += g.value(loss).item();
            batches += 1;
            let mut grads = g.backward(loss)?;
            let grads: Vec<Vec<f64>> = vars.user_head().iter().map(|&v| grads.take(v)).collect();
            let head = &mut models.user_head;
            let mut params = [
                &mut head.hidden.weight,
                &mut head.hidden.bias,
                &mut head.output.weight,
                &mut head.output.bias,
            ];
            optimizer.step(&mut params, &grads)?;
        }
        user_losses.push(total / batches.max(1) as f64);
        observer(Stage::User, e, &models)?;
    }
    Ok(TwoStageOutcome {
        models,
        task_losses,
        user_losses,
    })
}

/// Flattened `[n, feature_dim]` features of every trial.
pub fn features_of(models: &SurrogateModels, d: &Dataset) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(d.len() * models.extractor.feature_dim());
    let idx: Vec<usize> = (0..d.len()).collect();
    for chunk in idx.chunks(EVAL_BATCH) {
        let mut g = Graph::new();
        let vars = models.bind(&mut g, Trainable::Nothing);
        let x = g.constant(d.batch(chunk)?);
        let f = model::features(&mut g, models, &vars, x)?;
        out.extend_from_slice(g.value(f).data());
    }
    Ok(out)
}

/// Predicted task class and user id for every trial.
pub fn predict(models: &SurrogateModels, d: &Dataset) -> Result<(Vec<usize>, Vec<usize>)> {
    let (mut tasks, mut users) = (Vec::with_capacity(d.len()), Vec::with_capacity(d.len()));
    let idx: Vec<usize> = (0..d.len()).collect();
    for chunk in idx.chunks(EVAL_BATCH) {
        let out = model::forward(models, &d.batch(chunk)?)?;
        tasks.extend(argmax_rows(&out.task_logits));
        users.extend(argmax_rows(&out.user_logits));
    }
    Ok((tasks, users))
}

/// Task predictions only.
pub fn predict_task(models: &SurrogateModels, d: &Dataset) -> Result<Vec<usize>> {
    let mut tasks = Vec::with_capacity(d.len());
    let idx: Vec<usize> = (0..d.len()).collect();
    for chunk in idx.chunks(EVAL_BATCH) {
        let mut g = Graph::new();
        let vars = models.bind(&mut g, Trainable::Nothing);
        let x = g.constant(d.batch(chunk)?);
        let f = model::features(&mut g, models, &vars, x)?;
        let t = model::task_logits(&mut g, &vars, f)?;
        tasks.extend(argmax_rows(g.value(t)));
    }
    Ok(tasks)
}

/// User predictions from precomputed `[n, feature_dim]` features.
pub fn predict_users_from_features(models: &SurrogateModels, feats: &[f64]) -> Result<Vec<usize>> {
    let fd = models.extractor.feature_dim();
    let n = feats.len() / fd;
    let mut users = Vec::with_capacity(n);
    for start in (0..n).step_by(EVAL_BATCH) {
        let end = (start + EVAL_BATCH).min(n);
        let mut g = Graph::new();
        let vars = models.bind(&mut g, Trainable::Nothing);
        let f = g.constant(Tensor::new(
            vec![end - start, fd],
            feats[start * fd..end * fd].to_vec(),
        )?);
        let u = model::user_logits(&mut g, &vars, f)?;
        users.extend(argmax_rows(g.value(u)));
    }
    Ok(users)
}

pub fn argmax_rows(logits: &Tensor) -> Vec<usize> {
    let k = logits.shape()[1];
    logits
        .data()
        .chunks(k)
        .map(|row| {
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}
