//! Reverse-mode gradients against central finite differences. Every check
//! returns the norm-wise relative error `|a - n| / max(|a|, |n|)`.

use eegshield::data::Dataset;
use eegshield::nets::{ExtractorConfig, Objective, SurrogateModels, TrainConfig, Trainer};
use eegshield::numerics::{Activation, Graph, Tensor, Var};
use eegshield::shield::{
    perturbation_gradient, perturbation_loss, user_loss, user_loss_gradient, MseTarget,
};
use eegshield::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const STEP: f64 = 1e-5;
pub const TOL: f64 = 1e-4;

pub type Errors = Vec<(&'static str, f64)>;

fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(
        shape.to_vec(),
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
    )
    .unwrap()
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / na.max(nb).max(1e-10)
}

fn numeric(x: &Tensor, f: impl Fn(&Tensor) -> f64) -> Vec<f64> {
    (0..x.numel())
        .map(|i| {
            let mut up = x.clone();
            up.data_mut()[i] += STEP;
            let mut down = x.clone();
            down.data_mut()[i] -= STEP;
            (f(&up) - f(&down)) / (2.0 * STEP)
        })
        .collect()
}

/// Worst error over the inputs of `op`. Non-scalar outputs are reduced by
/// an MSE against a fixed random target so every output element matters.
fn op_error(seed: u64, inputs: &[Tensor], op: impl Fn(&mut Graph, &[Var]) -> Result<Var>) -> f64 {
    let target_rng = ChaCha8Rng::seed_from_u64(seed ^ 0xABCD);
    let eval = |g: &mut Graph, vars: &[Var]| -> Var {
        let out = op(g, vars).unwrap();
        if g.value(out).numel() == 1 {
            return out;
        }
        let t = random(&mut target_rng.clone(), g.value(out).shape());
        let tv = g.constant(t);
        g.mse(out, tv).unwrap()
    };
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.param(t.clone())).collect();
    let out = eval(&mut g, &vars);
    let analytic = g.grad(out, &vars).unwrap();
    let mut worst = 0.0f64;
    for (k, input) in inputs.iter().enumerate() {
        let n = numeric(input, |p| {
            let mut g = Graph::new();
            let vars: Vec<Var> = inputs
                .iter()
                .enumerate()
                .map(|(j, t)| g.param(if j == k { p.clone() } else { t.clone() }))
                .collect();
            let out = eval(&mut g, &vars);
            g.value(out).item()
        });
        worst = worst.max(rel_err(analytic[k].data(), &n));
    }
    worst
}

pub fn elementary_ops(seed: u64) -> Errors {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let a = random(&mut r, &[3, 4]);
    let b = random(&mut r, &[4, 2]);
    let row = random(&mut r, &[4]);
    let other = random(&mut r, &[3, 4]);
    let cube = random(&mut r, &[3, 2, 4]);
    vec![
        (
            "matmul",
            op_error(seed, &[a.clone(), b], |g, v| g.matmul(v[0], v[1])),
        ),
        (
            "transpose",
            op_error(seed, std::slice::from_ref(&a), |g, v| g.transpose(v[0])),
        ),
        (
            "add_row",
            op_error(seed, &[a.clone(), row], |g, v| g.add_row(v[0], v[1])),
        ),
        (
            "add",
            op_error(seed, &[a.clone(), other.clone()], |g, v| g.add(v[0], v[1])),
        ),
        (
            "scale",
            op_error(seed, std::slice::from_ref(&a), |g, v| g.scale(v[0], -1.7)),
        ),
        (
            "reshape",
            op_error(seed, std::slice::from_ref(&a), |g, v| {
                g.reshape(v[0], &[2, 6])
            }),
        ),
        (
            "gather",
            op_error(seed, std::slice::from_ref(&a), |g, v| {
                g.gather(v[0], &[2, 0, 2, 1])
            }),
        ),
        (
            "softmax",
            op_error(seed, std::slice::from_ref(&a), |g, v| g.softmax(v[0])),
        ),
        (
            "cross_entropy",
            op_error(seed, std::slice::from_ref(&a), |g, v| {
                g.softmax_cross_entropy(v[0], &[3, 0, 1])
            }),
        ),
        (
            "mse",
            op_error(seed, &[a.clone(), other], |g, v| g.mse(v[0], v[1])),
        ),
        (
            "row_norms",
            op_error(seed, &[cube], |g, v| g.row_norms(v[0])),
        ),
        (
            "mean",
            op_error(seed, std::slice::from_ref(&a), |g, v| g.mean(v[0])),
        ),
        ("sum", op_error(seed, &[a], |g, v| g.sum(v[0]))),
    ]
}

pub fn signal_ops(seed: u64) -> Errors {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let x = random(&mut r, &[2, 2, 16]);
    let k = random(&mut r, &[3, 1, 5]);
    let mix = random(&mut r, &[3, 2]);
    vec![
        (
            "conv_temporal",
            op_error(seed, &[x.clone(), k.clone()], |g, v| {
                g.conv_temporal(v[0], v[1], 1)
            }),
        ),
        (
            "conv_temporal/stride2",
            op_error(seed, &[x.clone(), k], |g, v| g.conv_temporal(v[0], v[1], 2)),
        ),
        (
            "conv_spatial",
            op_error(seed, &[x.clone(), mix], |g, v| g.conv_spatial(v[0], v[1])),
        ),
        (
            "relu",
            op_error(seed, std::slice::from_ref(&x), |g, v| {
                g.activation(v[0], Activation::Relu)
            }),
        ),
        (
            "elu",
            op_error(seed, std::slice::from_ref(&x), |g, v| {
                g.activation(v[0], Activation::Elu)
            }),
        ),
        (
            "square",
            op_error(seed, std::slice::from_ref(&x), |g, v| {
                g.activation(v[0], Activation::Square)
            }),
        ),
        (
            "mean_pool",
            op_error(seed, &[x], |g, v| g.mean_pool_time(v[0], 4, 3)),
        ),
    ]
}

fn toy_models(seed: u64) -> SurrogateModels {
    let activation = [Activation::Square, Activation::Elu, Activation::Relu][seed as usize % 3];
    let cfg = ExtractorConfig {
        name: "toy".into(),
        temporal_filters: 2,
        temporal_kernel: 5,
        spatial_filters: 3,
        activation,
        pool_window: 4,
        pool_stride: 2,
    };
    SurrogateModels::with_hidden(cfg, 2, 16, 2, 3, 5, seed).unwrap()
}

fn toy_data(seed: u64) -> Dataset {
    let mut r = ChaCha8Rng::seed_from_u64(seed + 1000);
    let trials = random(&mut r, &[6, 2, 16]).into_data();
    Dataset::new(
        2,
        16,
        2,
        3,
        1,
        trials,
        vec![0, 1, 1, 0, 1, 0],
        vec![0, 1, 2, 2, 1, 0],
        vec![0; 6],
    )
    .unwrap()
}

/// Joint task/user loss with respect to every model parameter.
pub fn joint_loss(seed: u64) -> f64 {
    let cfg = TrainConfig::default();
    let idx = [0, 1, 2, 3, 4, 5];
    let d = toy_data(seed);
    let models = toy_models(seed);
    let objective = Objective::Joint { alpha: 0.1 };
    let (_, grads) = Trainer::new(models.clone(), objective, &cfg)
        .unwrap()
        .gradients(&d, &idx)
        .unwrap();
    let mut worst = 0.0f64;
    for (p, analytic) in grads.iter().enumerate() {
        let n = numeric(models.params()[p], |v| {
            let mut m = models.clone();
            *m.params_mut()[p] = v.clone();
            Trainer::new(m, objective, &cfg)
                .unwrap()
                .gradients(&d, &idx)
                .unwrap()
                .0
        });
        worst = worst.max(rel_err(analytic, &n));
    }
    worst
}

/// Sample-wise perturbation loss with respect to the deltas, in both
/// consistency modes.
pub fn sample_wise_loss(seed: u64) -> f64 {
    let d = toy_data(seed);
    let models = toy_models(seed);
    let x = d.batch(&[0, 1, 2, 3]).unwrap();
    let users = &d.user_labels()[..4];
    let mut r = ChaCha8Rng::seed_from_u64(seed + 7);
    let delta = random(&mut r, x.shape()).map(|v| v * 0.01);
    [MseTarget::Logits, MseTarget::Probabilities]
        .into_iter()
        .map(|target| {
            let (_, analytic) =
                perturbation_gradient(&x, &delta, users, &models, 0.3, target).unwrap();
            let n = numeric(&delta, |dl| {
                perturbation_loss(&x, dl, users, &models, 0.3, target).unwrap()
            });
            rel_err(analytic.data(), &n)
        })
        .fold(0.0, f64::max)
}

/// User-wise loss with respect to the templates.
pub fn user_wise_loss(seed: u64) -> f64 {
    let d = toy_data(seed);
    let models = toy_models(seed);
    let x = d.batch(&[0, 1, 2, 3, 4, 5]).unwrap();
    let users = d.user_labels();
    let mut r = ChaCha8Rng::seed_from_u64(seed + 11);
    let templates = random(&mut r, &[3, 2, 16]).map(|v| v * 0.1);
    let (_, analytic) = user_loss_gradient(&x, users, &templates, 0.5, 0.05, &models).unwrap();
    let n = numeric(&templates, |t| {
        user_loss(&x, users, t, 0.5, 0.05, &models).unwrap()
    });
    rel_err(analytic.data(), &n)
}
