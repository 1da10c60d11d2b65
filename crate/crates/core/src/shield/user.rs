use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::data::{apply_perturbation, Dataset, PerturbationMode, PerturbationSet};
use crate::error::{Error, Result};
use crate::nets::{
    self, ExtractorConfig, OptimizerConfig, OptimizerState, SurrogateModels, TrainConfig, Trainable,
};
use crate::numerics::{Graph, Tensor, Var};
use crate::seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UserHyper {
    pub alpha: f64,
    pub beta: f64,
    /// ℓ2 penalty weight; `None` means `1e-6 / beta`.
    pub gamma: Option<f64>,
    pub init_std: f64,
    pub m_model: usize,
    pub m_pert: usize,
    pub batch_size: usize,
    /// Optimizer for surrogate training.
    pub model_optimizer: OptimizerConfig,
    /// Optimizer for the templates.
    pub template_optimizer: OptimizerConfig,
    pub seed: u64,
}

impl Default for UserHyper {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            beta: 0.1,
            gamma: None,
            init_std: 0.001,
            m_model: 150,
            m_pert: 150,
            batch_size: 64,
            model_optimizer: OptimizerConfig::default(),
            template_optimizer: OptimizerConfig::default(),
            seed: 0,
        }
    }
}

impl UserHyper {
    pub fn gamma(&self) -> f64 {
        self.gamma.unwrap_or(1e-6 / self.beta)
    }

    pub fn validate(&self) -> Result<()> {
        if ![self.alpha, self.beta]
            .iter()
            .all(|v| v.is_finite() && *v >= 0.0)
        {
            return Err(Error::param("alpha and beta must be finite and >= 0"));
        }
        let gamma = self.gamma();
        if !(gamma.is_finite() && gamma >= 0.0) {
            return Err(Error::param(format!(
                "gamma must be finite and >= 0, got {gamma} (beta = 0 needs an explicit gamma)"
            )));
        }
        if !(self.init_std.is_finite() && self.init_std >= 0.0) {
            return Err(Error::param(format!(
                "init_std must be >= 0, got {}",
                self.init_std
            )));
        }
        if self.m_model == 0 || self.m_pert == 0 {
            return Err(Error::param("m_model and m_pert must be >= 1"));
        }
        self.train_config().validate()?;
        self.template_optimizer.validate()
    }

    fn train_config(&self) -> TrainConfig {
        TrainConfig {
            alpha: self.alpha,
            batch_size: self.batch_size,
            epochs: self.m_model,
            head_epochs: 0,
            seed: self.seed,
            optimizer: self.model_optimizer.clone(),
        }
    }
}

/// Batch mean of consistency MSE, `beta` times user cross-entropy and
/// `gamma` times the Euclidean norm of each trial's template.
///
/// `x` is `[b, c, t]`; `templates` is `[U, c, t]`.
pub fn user_loss(
    x: &Tensor,
    users: &[usize],
    templates: &Tensor,
    beta: f64,
    gamma: f64,
    models: &SurrogateModels,
) -> Result<f64> {
    Ok(user_loss_gradient(x, users, templates, beta, gamma, models)?.0)
}

/// [`user_loss`] and its gradient with respect to `templates`.
pub fn user_loss_gradient(
    x: &Tensor,
    users: &[usize],
    templates: &Tensor,
    beta: f64,
    gamma: f64,
    models: &SurrogateModels,
) -> Result<(f64, Tensor)> {
    let count = templates.shape()[0];
    if let Some(&u) = users.iter().find(|&&u| u >= count) {
        return Err(Error::label(format!(
            "user {u} has no template ({count} templates)"
        )));
    }
    if templates.numel() != count * x.numel() / x.shape()[0].max(1) {
        return Err(Error::dim(format!(
            "templates {:?} vs batch {:?}",
            templates.shape(),
            x.shape()
        )));
    }
    let reference = nets::forward(models, x)?.task_logits;
    let mut g = Graph::new();
    let t = g.param(templates.clone());
    let loss = loss_graph(&mut g, models, x, users, users, t, &reference, beta, gamma)?;
    let value = g.value(loss).item();
    let grad = g.backward(loss)?.take(t);
    Ok((value, Tensor::new(templates.shape().to_vec(), grad)?))
}

#[derive(Clone, Debug)]
pub struct UserOutcome {
    pub perturbation: PerturbationSet,
    pub perturbed: Dataset,
    /// Epoch-mean template loss.
    pub epoch_losses: Vec<f64>,
    /// Mean template ℓ2 norm after each epoch.
    pub epoch_norms: Vec<f64>,
}

/// Trains surrogates on the clean data, freezes them, then fits one
/// template per user.
pub fn generate_user_wise(
    d: &Dataset,
    extractor: &ExtractorConfig,
    hyper: &UserHyper,
) -> Result<UserOutcome> {
    let (perturbation, epoch_losses, epoch_norms) = fit_templates(d, d, 0, extractor, hyper)?;
    let perturbed = apply_perturbation(d, &perturbation)?;
    Ok(UserOutcome {
        perturbation,
        perturbed,
        epoch_losses,
        epoch_norms,
    })
}

/// Fits templates for users that `existing` does not cover, with surrogates
/// trained on `previous_perturbed` plus the new clean trials. Existing
/// templates are returned unchanged, followed by the new ones.
///
/// `new_users` must only carry user ids `>= existing.count()`.
pub fn extend_user_wise(
    existing: &PerturbationSet,
    previous_perturbed: &Dataset,
    new_users: &Dataset,
    extractor: &ExtractorConfig,
    hyper: &UserHyper,
) -> Result<PerturbationSet> {
    if existing.mode() != PerturbationMode::UserWise {
        return Err(Error::param("only user-wise templates can be extended"));
    }
    let offset = existing.count();
    if new_users.is_empty() {
        return Ok(existing.clone());
    }
    if let Some(&u) = new_users.user_labels().iter().find(|&&u| u < offset) {
        return Err(Error::param(format!("user {u} already has a template")));
    }
    if previous_perturbed
        .user_labels()
        .iter()
        .any(|&u| u >= offset)
    {
        return Err(Error::param(
            "previously perturbed data refers to users without templates",
        ));
    }
    let union = if previous_perturbed.is_empty() {
        new_users.clone()
    } else {
        Dataset::concat(&[previous_perturbed, new_users])?
    };
    let (fresh, _, _) = fit_templates(&union, new_users, offset, extractor, hyper)?;
    let mut merged = existing.data().to_vec();
    merged.extend_from_slice(&fresh.data()[offset * new_users.trial_size()..]);
    let set = PerturbationSet::new(
        PerturbationMode::UserWise,
        new_users.channels(),
        new_users.samples(),
        merged,
        0.0,
    )?;
    Ok(set.with_provenance(fresh.provenance))
}

/// Templates for users `offset..U` of `targets`, returned as a full `U`-row
/// set whose first `offset` rows are zero.
fn fit_templates(
    train_on: &Dataset,
    targets: &Dataset,
    offset: usize,
    extractor: &ExtractorConfig,
    hyper: &UserHyper,
) -> Result<(PerturbationSet, Vec<f64>, Vec<f64>)> {
    hyper.validate()?;
    if targets.is_empty() {
        return Err(Error::param("cannot fit templates without trials"));
    }
    let (c, t) = (targets.channels(), targets.samples());
    let size = c * t;
    let users = targets.users();
    let fresh = users - offset;

    let normal = Normal::new(0.0, hyper.init_std).map_err(|e| Error::param(e.to_string()))?;
    let mut rng = seed::rng(seed::derive(hyper.seed, seed::DELTA_INIT));
    let init: Vec<f64> = (0..fresh * size).map(|_| normal.sample(&mut rng)).collect();
    let mut templates = Tensor::new(vec![fresh, c, t], init)?;

    let models = SurrogateModels::new(
        extractor.clone(),
        c,
        t,
        train_on.classes(),
        train_on.users().max(users),
        hyper.seed,
    )?;
    let models = nets::train_joint(train_on, &hyper.train_config(), models)?.models;

    let idx: Vec<usize> = (0..targets.len()).collect();
    let reference: Vec<f64> = idx
        .chunks(128)
        .map(|chunk| {
            Ok(nets::forward(&models, &targets.batch(chunk)?)?
                .task_logits
                .into_data())
        })
        .collect::<Result<Vec<_>>>()?
        .concat();
    let k = models.classes();

    let gamma = hyper.gamma();
    let mut optimizer = OptimizerState::new(hyper.template_optimizer.clone())?;
    let mut shuffle = seed::rng(seed::derive(hyper.seed, seed::TEMPLATE_SHUFFLE));
    let mut epoch_losses = Vec::with_capacity(hyper.m_pert);
    let mut epoch_norms = Vec::with_capacity(hyper.m_pert);
    let mut order = idx;
    for epoch in 0..hyper.m_pert {
        order.shuffle(&mut shuffle);
        let mut total = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(hyper.batch_size) {
            let x = targets.batch(chunk)?;
            let global: Vec<usize> = chunk.iter().map(|&i| targets.user_labels()[i]).collect();
            let local: Vec<usize> = global.iter().map(|&u| u - offset).collect();
            let mut r = Vec::with_capacity(chunk.len() * k);
            for &i in chunk {
                r.extend_from_slice(&reference[i * k..(i + 1) * k]);
            }
            let r = Tensor::new(vec![chunk.len(), k], r)?;
            let mut g = Graph::new();
            let tv = g.param(templates.clone());
            let loss = loss_graph(
                &mut g, &models, &x, &local, &global, tv, &r, hyper.beta, gamma,
            )
            .map_err(|e| at_epoch(e, epoch))?;
            let value = g.value(loss).item();
            if !value.is_finite() {
                return Err(Error::Numerical(format!(
                    "epoch {epoch}: template loss is not finite"
                )));
            }
            total += value;
            batches += 1;
            let grad = g.backward(loss)?.take(tv);
            optimizer.step(&mut [&mut templates], &[grad])?;
        }
        epoch_losses.push(total / batches as f64);
        let norms: Vec<f64> = templates
            .data()
            .chunks(size)
            .map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect();
        epoch_norms.push(norms.iter().sum::<f64>() / norms.len().max(1) as f64);
    }

    let mut full = vec![0.0; offset * size];
    full.extend_from_slice(templates.data());
    let set = PerturbationSet::new(PerturbationMode::UserWise, c, t, full, 0.0)?;
    let final_norms = set.norms();
    let provenance = json!({
        "mode": "user_wise",
        "extractor": extractor,
        "hyper": hyper,
        "gamma": gamma,
        "new_users": offset..users,
        "epoch_losses": epoch_losses,
        "epoch_mean_norms": epoch_norms,
        "template_norms": final_norms,
        "max_template_norm": final_norms.iter().fold(0.0f64, |m, &v| m.max(v)),
    });
    Ok((set.with_provenance(provenance), epoch_losses, epoch_norms))
}

/// `rows` index the templates, `users` the user head.
#[allow(clippy::too_many_arguments)]
fn loss_graph(
    g: &mut Graph,
    models: &SurrogateModels,
    x: &Tensor,
    rows: &[usize],
    users: &[usize],
    templates: Var,
    reference: &Tensor,
    beta: f64,
    gamma: f64,
) -> Result<Var> {
    let vars = models.bind(g, Trainable::Nothing);
    let picked = g.gather(templates, rows)?;
    let xc = g.constant(x.clone());
    let xd = g.add(xc, picked)?;
    let f = nets::features(g, models, &vars, xd)?;
    let out = nets::task_logits(g, &vars, f)?;
    let r = g.constant(reference.clone());
    let mse = g.mse(out, r)?;
    let ul = nets::user_logits(g, &vars, f)?;
    let ce = g.softmax_cross_entropy(ul, users)?;
    let ce = g.scale(ce, beta)?;
    let norms = g.row_norms(picked)?;
    let norm = g.mean(norms)?;
    let norm = g.scale(norm, gamma)?;
    let loss = g.add(mse, ce)?;
    g.add(loss, norm)
}

fn at_epoch(e: Error, epoch: usize) -> Error {
    match e {
        Error::Numerical(msg) => Error::Numerical(format!("epoch {epoch}: {msg}")),
        other => other,
    }
}
