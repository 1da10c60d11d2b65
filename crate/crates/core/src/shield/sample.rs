use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::data::{apply_perturbation, Dataset, PerturbationMode, PerturbationSet};
use crate::error::{Error, Result};
use crate::nets::{
    self, ExtractorConfig, Objective, OptimizerConfig, SurrogateModels, TrainConfig, Trainable,
    Trainer,
};
use crate::numerics::{log_softmax_row, project_linf_in_place, sign_of, Graph, Tensor, Var};
use crate::seed;

/// Trials per graph during perturbation updates.
const PGD_CHUNK: usize = 32;

/// What the consistency term compares between clean and perturbed inputs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MseTarget {
    #[default]
    Logits,
    Probabilities,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleHyper {
    pub alpha: f64,
    pub beta: f64,
    pub epsilon: f64,
    pub eta: f64,
    pub n_iter: usize,
    /// Surrogate training epochs per round.
    #[serde(rename = "L")]
    pub model_epochs: usize,
    /// Perturbation rounds.
    #[serde(rename = "M")]
    pub rounds: usize,
    pub seed: u64,
    pub batch_size: usize,
    pub optimizer: OptimizerConfig,
    pub mse_target: MseTarget,
    /// Continue each round from the current deltas rather than the initial draw.
    pub warm_start: bool,
    /// Rebuild the surrogates at the start of every round.
    pub reinit_models: bool,
}

impl Default for SampleHyper {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            beta: 0.1,
            epsilon: 0.01,
            eta: 0.002,
            n_iter: 5,
            model_epochs: 5,
            rounds: 30,
            seed: 0,
            batch_size: 64,
            optimizer: OptimizerConfig::default(),
            mse_target: MseTarget::Logits,
            warm_start: true,
            reinit_models: false,
        }
    }
}

impl SampleHyper {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.alpha, self.beta, self.epsilon, self.eta]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.alpha < 0.0 || self.beta < 0.0 {
            return Err(Error::param("alpha and beta must be finite and >= 0"));
        }
        if self.epsilon < 0.0 {
            return Err(Error::param(format!(
                "epsilon must be >= 0, got {}",
                self.epsilon
            )));
        }
        if self.eta <= 0.0 {
            return Err(Error::param(format!("eta must be > 0, got {}", self.eta)));
        }
        if self.n_iter == 0 || self.model_epochs == 0 || self.rounds == 0 {
            return Err(Error::param("n_iter, L and M must all be >= 1"));
        }
        self.train_config().validate()
    }

    fn train_config(&self) -> TrainConfig {
        TrainConfig {
            alpha: self.alpha,
            batch_size: self.batch_size,
            epochs: self.model_epochs,
            head_epochs: 0,
            seed: self.seed,
            optimizer: self.optimizer.clone(),
        }
    }
}

/// Consistency loss plus `beta` times user cross-entropy on a batch.
///
/// `x` and `delta` are `[b, c, t]`; the clean-side outputs carry no gradient.
pub fn perturbation_loss(
    x: &Tensor,
    delta: &Tensor,
    users: &[usize],
    models: &SurrogateModels,
    beta: f64,
    target: MseTarget,
) -> Result<f64> {
    if x.shape() != delta.shape() {
        return Err(Error::dim(format!(
            "x {:?} vs delta {:?}",
            x.shape(),
            delta.shape()
        )));
    }
    Ok(loss_and_gradient(x, delta, users, models, beta, target, false)?.0)
}

/// [`perturbation_loss`] and its gradient with respect to `delta`.
pub fn perturbation_gradient(
    x: &Tensor,
    delta: &Tensor,
    users: &[usize],
    models: &SurrogateModels,
    beta: f64,
    target: MseTarget,
) -> Result<(f64, Tensor)> {
    if x.shape() != delta.shape() {
        return Err(Error::dim(format!(
            "x {:?} vs delta {:?}",
            x.shape(),
            delta.shape()
        )));
    }
    let (loss, grad) = loss_and_gradient(x, delta, users, models, beta, target, true)?;
    Ok((loss, Tensor::new(x.shape().to_vec(), grad)?))
}

fn loss_and_gradient(
    x: &Tensor,
    delta: &Tensor,
    users: &[usize],
    models: &SurrogateModels,
    beta: f64,
    target: MseTarget,
    with_grad: bool,
) -> Result<(f64, Vec<f64>)> {
    let reference = clean_outputs(models, x, target)?;
    let mut g = Graph::new();
    let xd = g.param(perturbed_input(x, delta.data())?);
    let loss = build_loss(&mut g, models, xd, &reference, users, beta, target)?;
    let value = g.value(loss).item();
    let grad = if with_grad {
        g.backward(loss)?.take(xd)
    } else {
        Vec::new()
    };
    Ok((value, grad))
}

/// Task outputs of the clean batch, as logits or probabilities.
fn clean_outputs(models: &SurrogateModels, x: &Tensor, target: MseTarget) -> Result<Tensor> {
    let mut g = Graph::new();
    let vars = models.bind(&mut g, Trainable::Nothing);
    let xv = g.constant(x.clone());
    let f = nets::features(&mut g, models, &vars, xv)?;
    let mut out = nets::task_logits(&mut g, &vars, f)?;
    if target == MseTarget::Probabilities {
        out = g.softmax(out)?;
    }
    Ok(g.value(out).clone())
}

fn perturbed_input(x: &Tensor, delta: &[f64]) -> Result<Tensor> {
    let data = x.data().iter().zip(delta).map(|(a, b)| a + b).collect();
    Tensor::new(x.shape().to_vec(), data)
}

/// Batch-mean loss on the perturbed input `xd`.
fn build_loss(
    g: &mut Graph,
    models: &SurrogateModels,
    xd: Var,
    reference: &Tensor,
    users: &[usize],
    beta: f64,
    target: MseTarget,
) -> Result<Var> {
    let vars = models.bind(g, Trainable::Nothing);
    let f = nets::features(g, models, &vars, xd)?;
    let mut out = nets::task_logits(g, &vars, f)?;
    if target == MseTarget::Probabilities {
        out = g.softmax(out)?;
    }
    let r = g.constant(reference.clone());
    let mse = g.mse(out, r)?;
    let ul = nets::user_logits(g, &vars, f)?;
    let ce = g.softmax_cross_entropy(ul, users)?;
    let weighted = g.scale(ce, beta)?;
    g.add(mse, weighted)
}

/// Per-trial loss values, consistent with the batch mean of [`build_loss`].
fn per_trial_losses(
    outputs: &Tensor,
    reference: &Tensor,
    user_logits: &Tensor,
    users: &[usize],
    beta: f64,
) -> Vec<f64> {
    let k = outputs.shape()[1];
    let u = user_logits.shape()[1];
    users
        .iter()
        .enumerate()
        .map(|(i, &label)| {
            let o = &outputs.data()[i * k..(i + 1) * k];
            let r = &reference.data()[i * k..(i + 1) * k];
            let mse = o.iter().zip(r).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / k as f64;
            let row = &user_logits.data()[i * u..(i + 1) * u];
            let (lse, _) = log_softmax_row(row);
            mse + beta * (lse - row[label])
        })
        .collect()
}

/// Runs `n_iter` signed-gradient steps on a batch of deltas in place,
/// projecting onto the ℓ∞ ball after each step. Returns, per trial, the
/// loss before every step and after the last one.
pub fn pgd_batch(
    x: &Tensor,
    delta: &mut [f64],
    users: &[usize],
    models: &SurrogateModels,
    hyper: &SampleHyper,
) -> Result<Vec<Vec<f64>>> {
    let b = x.shape()[0];
    if delta.len() != x.numel() || users.len() != b {
        return Err(Error::dim(format!(
            "pgd batch x {:?} with {} deltas, {} users",
            x.shape(),
            delta.len(),
            users.len()
        )));
    }
    if let Some(v) = delta.iter().find(|v| v.abs() > hyper.epsilon) {
        return Err(Error::param(format!(
            "input delta {v} outside the epsilon ball {}",
            hyper.epsilon
        )));
    }
    let reference = clean_outputs(models, x, hyper.mse_target)?;
    let size = x.numel() / b;
    let mut traces = vec![Vec::with_capacity(hyper.n_iter + 1); b];
    for step in 0..=hyper.n_iter {
        let mut g = Graph::new();
        let xd = g.param(perturbed_input(x, delta)?);
        let vars = models.bind(&mut g, Trainable::Nothing);
        let f = nets::features(&mut g, models, &vars, xd)?;
        let mut out = nets::task_logits(&mut g, &vars, f)?;
        if hyper.mse_target == MseTarget::Probabilities {
            out = g.softmax(out)?;
        }
        let ul = nets::user_logits(&mut g, &vars, f)?;
        for (trace, l) in traces.iter_mut().zip(per_trial_losses(
            g.value(out),
            &reference,
            g.value(ul),
            users,
            hyper.beta,
        )) {
            trace.push(l);
        }
        if step == hyper.n_iter {
            break;
        }
        let r = g.constant(reference.clone());
        let mse = g.mse(out, r)?;
        let ce = g.softmax_cross_entropy(ul, users)?;
        let weighted = g.scale(ce, hyper.beta)?;
        let loss = g.add(mse, weighted)?;
        let grad = g.backward(loss)?.take(xd);
        for (i, chunk) in grad.chunks(size).enumerate() {
            if chunk.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numerical(format!(
                    "non-finite input gradient for trial {i} of the batch"
                )));
            }
        }
        for (d, gv) in delta.iter_mut().zip(&grad) {
            *d -= hyper.eta * sign_of(*gv);
        }
        project_linf_in_place(delta, hyper.epsilon)?;
    }
    Ok(traces)
}

/// Single-trial update: `x` and `delta` are `[c, t]`.
pub fn pgd_update(
    x: &Tensor,
    delta: &Tensor,
    user: usize,
    models: &SurrogateModels,
    hyper: &SampleHyper,
) -> Result<Tensor> {
    if x.shape() != delta.shape() || x.shape().len() != 2 {
        return Err(Error::dim(format!(
            "pgd_update x {:?} delta {:?}",
            x.shape(),
            delta.shape()
        )));
    }
    let mut shape = vec![1];
    shape.extend_from_slice(x.shape());
    let xb = x.clone().reshaped(&shape)?;
    let mut d = delta.data().to_vec();
    pgd_batch(&xb, &mut d, &[user], models, hyper)?;
    Tensor::new(delta.shape().to_vec(), d)
}

/// Per-trial update across the whole dataset, chunked and run in parallel.
/// Returns the mean loss before the first and after the last step.
fn pgd_all(
    d: &Dataset,
    deltas: &mut [f64],
    models: &SurrogateModels,
    hyper: &SampleHyper,
) -> Result<(f64, f64, Vec<Vec<f64>>)> {
    let size = d.trial_size();
    let chunks: Vec<(usize, &mut [f64])> =
        deltas.chunks_mut(PGD_CHUNK * size).enumerate().collect();
    let traces: Vec<Vec<Vec<f64>>> = chunks
        .into_par_iter()
        .map(|(ci, chunk)| {
            let idx: Vec<usize> = (ci * PGD_CHUNK..ci * PGD_CHUNK + chunk.len() / size).collect();
            let users: Vec<usize> = idx.iter().map(|&i| d.user_labels()[i]).collect();
            pgd_batch(&d.batch(&idx)?, chunk, &users, models, hyper).map_err(|e| match e {
                Error::Numerical(msg) => {
                    Error::Numerical(format!("{msg} (trials from {})", ci * PGD_CHUNK))
                }
                other => other,
            })
        })
        .collect::<Result<_>>()?;
    let traces: Vec<Vec<f64>> = traces.into_iter().flatten().collect();
    let n = traces.len().max(1) as f64;
    let first = traces.iter().map(|t| t[0]).sum::<f64>() / n;
    let last = traces.iter().map(|t| t[t.len() - 1]).sum::<f64>() / n;
    Ok((first, last, traces))
}

#[derive(Clone, Debug)]
pub struct SampleOutcome {
    pub perturbation: PerturbationSet,
    pub perturbed: Dataset,
    /// Mean per-trial loss after each round's update.
    pub round_losses: Vec<f64>,
}

/// Round-boundary view handed to observers.
pub struct RoundState<'a> {
    pub round: usize,
    pub deltas: &'a [f64],
    pub mean_loss_before: f64,
    pub mean_loss_after: f64,
    /// Per-trial losses across the inner iterations of this round.
    pub traces: &'a [Vec<f64>],
}

pub fn generate_sample_wise(
    d: &Dataset,
    extractor: &ExtractorConfig,
    hyper: &SampleHyper,
) -> Result<SampleOutcome> {
    generate_sample_wise_observed(d, extractor, hyper, &mut |_| Ok(()))
}

/// Alternates surrogate training on the perturbed data with perturbation
/// updates computed on the clean trials, calling `observer` after every round.
pub fn generate_sample_wise_observed(
    d: &Dataset,
    extractor: &ExtractorConfig,
    hyper: &SampleHyper,
    observer: &mut dyn FnMut(&RoundState) -> Result<()>,
) -> Result<SampleOutcome> {
    hyper.validate()?;
    if d.is_empty() {
        return Err(Error::param("cannot perturb an empty dataset"));
    }
    let eps = hyper.epsilon;
    let mut rng = seed::rng(seed::derive(hyper.seed, seed::DELTA_INIT));
    let initial: Vec<f64> = (0..d.data().len())
        .map(|_| {
            if eps > 0.0 {
                rng.random_range(-eps..=eps)
            } else {
                0.0
            }
        })
        .collect();
    let mut deltas = initial.clone();
    let cfg = hyper.train_config();
    let fresh = |round: u64| -> Result<Trainer> {
        let s = seed::derive(hyper.seed, round);
        let models = SurrogateModels::new(
            extractor.clone(),
            d.channels(),
            d.samples(),
            d.classes(),
            d.users(),
            s,
        )?;
        Trainer::new(
            models,
            Objective::Joint { alpha: hyper.alpha },
            &TrainConfig {
                seed: s,
                ..cfg.clone()
            },
        )
    };
    let mut trainer = fresh(0)?;
    let mut round_losses = Vec::with_capacity(hyper.rounds);
    for round in 0..hyper.rounds {
        if hyper.reinit_models && round > 0 {
            trainer = fresh(round as u64)?;
        }
        let current = PerturbationSet::new(
            PerturbationMode::SampleWise,
            d.channels(),
            d.samples(),
            deltas.clone(),
            eps,
        )?;
        let shifted = apply_perturbation(d, &current)?;
        for _ in 0..hyper.model_epochs {
            trainer
                .run_epoch(&shifted)
                .map_err(|e| in_round(e, round))?;
        }
        if !hyper.warm_start {
            deltas.copy_from_slice(&initial);
        }
        let (before, after, traces) =
            pgd_all(d, &mut deltas, trainer.models(), hyper).map_err(|e| in_round(e, round))?;
        if let Some(v) = deltas.iter().find(|v| v.abs() > eps) {
            return Err(Error::Numerical(format!(
                "round {round}: delta {v} escaped the epsilon ball"
            )));
        }
        round_losses.push(after);
        observer(&RoundState {
            round,
            deltas: &deltas,
            mean_loss_before: before,
            mean_loss_after: after,
            traces: &traces,
        })?;
    }
    let provenance = json!({
        "mode": "sample_wise",
        "extractor": extractor,
        "hyper": hyper,
        "round_losses": round_losses,
    });
    let perturbation = PerturbationSet::new(
        PerturbationMode::SampleWise,
        d.channels(),
        d.samples(),
        deltas,
        eps,
    )?
    .with_provenance(provenance);
    let perturbed = apply_perturbation(d, &perturbation)?;
    Ok(SampleOutcome {
        perturbation,
        perturbed,
        round_losses,
    })
}

fn in_round(e: Error, round: usize) -> Error {
    match e {
        Error::Numerical(msg) => Error::Numerical(format!("round {round}: {msg}")),
        other => other,
    }
}
