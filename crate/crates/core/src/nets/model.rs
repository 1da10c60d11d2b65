use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Activation, Graph, Tensor, Var};
use crate::seed;

/// Default width of the hidden layer in the user head.
pub const USER_HIDDEN: usize = 64;

/// Shallow convolutional feature extractor: temporal filter bank, spatial
/// mixing, nonlinearity, then mean pooling over time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtractorConfig {
    pub name: String,
    pub temporal_filters: usize,
    pub temporal_kernel: usize,
    pub spatial_filters: usize,
    pub activation: Activation,
    pub pool_window: usize,
    pub pool_stride: usize,
}

impl ExtractorConfig {
    pub fn cfg_a() -> Self {
        Self {
            name: "cfgA".into(),
            temporal_filters: 8,
            temporal_kernel: 13,
            spatial_filters: 8,
            activation: Activation::Square,
            pool_window: 8,
            pool_stride: 4,
        }
    }

    pub fn cfg_b() -> Self {
        Self {
            name: "cfgB".into(),
            temporal_filters: 4,
            temporal_kernel: 25,
            spatial_filters: 16,
            activation: Activation::Elu,
            pool_window: 16,
            pool_stride: 8,
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "cfgA" | "cfga" | "a" => Ok(Self::cfg_a()),
            "cfgB" | "cfgb" | "b" => Ok(Self::cfg_b()),
            other => Err(Error::param(format!(
                "unknown extractor preset {other:?} (expected cfgA or cfgB)"
            ))),
        }
    }

    /// Length of the time axis after filtering and pooling.
    pub fn pooled_len(&self, len: usize) -> Result<usize> {
        self.validate(len)?;
        let filtered = len - self.temporal_kernel + 1;
        Ok((filtered - self.pool_window) / self.pool_stride + 1)
    }

    pub fn feature_dim(&self, len: usize) -> Result<usize> {
        Ok(self.spatial_filters * self.pooled_len(len)?)
    }

    pub fn validate(&self, len: usize) -> Result<()> {
        let counts = [
            self.temporal_filters,
            self.temporal_kernel,
            self.spatial_filters,
            self.pool_window,
            self.pool_stride,
        ];
        if counts.contains(&0) {
            return Err(Error::param(format!(
                "extractor {} has a zero-sized field",
                self.name
            )));
        }
        if self.temporal_kernel > len {
            return Err(Error::dim(format!(
                "temporal kernel {} longer than trial length {len}",
                self.temporal_kernel
            )));
        }
        if self.pool_window > len - self.temporal_kernel + 1 {
            return Err(Error::dim(format!(
                "pool window {} longer than filtered signal",
                self.pool_window
            )));
        }
        Ok(())
    }
}

/// Affine map `y = x·Wᵀ + b` with `W: [out, in]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Linear {
    fn init(rng: &mut impl Rng, inputs: usize, outputs: usize) -> Self {
        Self {
            weight: uniform(rng, &[outputs, inputs], inputs),
            bias: uniform(rng, &[outputs], inputs),
        }
    }

    pub fn outputs(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn inputs(&self) -> usize {
        self.weight.shape()[1]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Extractor {
    pub config: ExtractorConfig,
    pub channels: usize,
    pub len: usize,
    /// `[temporal_filters, 1, temporal_kernel]`
    pub kernels: Tensor,
    /// `[spatial_filters, channels * temporal_filters]`
    pub mix: Tensor,
}

impl Extractor {
    pub fn new(
        config: ExtractorConfig,
        channels: usize,
        len: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        config.validate(len)?;
        if channels == 0 {
            return Err(Error::param("extractor needs at least one channel"));
        }
        let kernels = uniform(
            rng,
            &[config.temporal_filters, 1, config.temporal_kernel],
            config.temporal_kernel,
        );
        let mixed = channels * config.temporal_filters;
        let mix = uniform(rng, &[config.spatial_filters, mixed], mixed);
        Ok(Self {
            config,
            channels,
            len,
            kernels,
            mix,
        })
    }

    pub fn feature_dim(&self) -> usize {
        self.config
            .feature_dim(self.len)
            .expect("validated at construction")
    }
}

/// Two affine layers with a ReLU in between.
#[derive(Clone, Debug, PartialEq)]
pub struct UserHead {
    pub hidden: Linear,
    pub output: Linear,
}

impl UserHead {
    pub fn new(features: usize, hidden: usize, users: usize, rng: &mut impl Rng) -> Self {
        Self {
            hidden: Linear::init(rng, features, hidden),
            output: Linear::init(rng, hidden, users),
        }
    }
}

/// Feature extractor with a one-layer task head and a two-layer user head.
#[derive(Clone, Debug, PartialEq)]
pub struct SurrogateModels {
    pub extractor: Extractor,
    pub task_head: Linear,
    pub user_head: UserHead,
}

/// Which parameter groups become differentiable leaves when binding.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Trainable {
    All,
    ExtractorAndTask,
    UserHead,
    Nothing,
}

/// Graph handles for every model parameter, in declaration order.
#[derive(Clone, Copy, Debug)]
pub struct ModelVars {
    pub kernels: Var,
    pub mix: Var,
    pub task_w: Var,
    pub task_b: Var,
    pub user_w1: Var,
    pub user_b1: Var,
    pub user_w2: Var,
    pub user_b2: Var,
}

impl ModelVars {
    pub fn all(&self) -> [Var; 8] {
        [
            self.kernels,
            self.mix,
            self.task_w,
            self.task_b,
            self.user_w1,
            self.user_b1,
            self.user_w2,
            self.user_b2,
        ]
    }

    pub fn extractor_and_task(&self) -> [Var; 4] {
        [self.kernels, self.mix, self.task_w, self.task_b]
    }

    pub fn user_head(&self) -> [Var; 4] {
        [self.user_w1, self.user_b1, self.user_w2, self.user_b2]
    }
}

/// Output of [`forward`].
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardOutput {
    pub task_logits: Tensor,
    pub user_logits: Tensor,
    pub features: Tensor,
}

impl SurrogateModels {
    pub fn new(
        config: ExtractorConfig,
        channels: usize,
        len: usize,
        classes: usize,
        users: usize,
        seed: u64,
    ) -> Result<Self> {
        Self::with_hidden(config, channels, len, classes, users, USER_HIDDEN, seed)
    }

    pub fn with_hidden(
        config: ExtractorConfig,
        channels: usize,
        len: usize,
        classes: usize,
        users: usize,
        hidden: usize,
        seed: u64,
    ) -> Result<Self> {
        if classes == 0 || users == 0 || hidden == 0 {
            return Err(Error::param("classes, users and hidden width must be >= 1"));
        }
        let mut rng = seed::rng(seed::derive(seed, seed::INIT));
        let extractor = Extractor::new(config, channels, len, &mut rng)?;
        let fd = extractor.feature_dim();
        let task_head = Linear::init(&mut rng, fd, classes);
        let user_head = UserHead::new(fd, hidden, users, &mut rng);
        Ok(Self {
            extractor,
            task_head,
            user_head,
        })
    }

    pub fn classes(&self) -> usize {
        self.task_head.outputs()
    }

    pub fn users(&self) -> usize {
        self.user_head.output.outputs()
    }

    pub fn hidden(&self) -> usize {
        self.user_head.hidden.outputs()
    }

    /// Replaces the user head with a freshly initialized one for `users`
    /// identities; extractor and task head are kept.
    pub fn reset_user_head(&mut self, users: usize, seed: u64) {
        let mut rng = seed::rng(seed::derive(seed, seed::HEAD_INIT));
        self.user_head =
            UserHead::new(self.extractor.feature_dim(), self.hidden(), users, &mut rng);
    }

    pub fn params(&self) -> [&Tensor; 8] {
        [
            &self.extractor.kernels,
            &self.extractor.mix,
            &self.task_head.weight,
            &self.task_head.bias,
            &self.user_head.hidden.weight,
            &self.user_head.hidden.bias,
            &self.user_head.output.weight,
            &self.user_head.output.bias,
        ]
    }

    pub fn params_mut(&mut self) -> [&mut Tensor; 8] {
        [
            &mut self.extractor.kernels,
            &mut self.extractor.mix,
            &mut self.task_head.weight,
            &mut self.task_head.bias,
            &mut self.user_head.hidden.weight,
            &mut self.user_head.hidden.bias,
            &mut self.user_head.output.weight,
            &mut self.user_head.output.bias,
        ]
    }

    pub fn bind(&self, g: &mut Graph, trainable: Trainable) -> ModelVars {
        let (ext, user) = match trainable {
            Trainable::All => (true, true),
            Trainable::ExtractorAndTask => (true, false),
            Trainable::UserHead => (false, true),
            Trainable::Nothing => (false, false),
        };
        let mut leaf = |t: &Tensor, diff: bool| {
            if diff {
                g.param(t.clone())
            } else {
                g.constant(t.clone())
            }
        };
        ModelVars {
            kernels: leaf(&self.extractor.kernels, ext),
            mix: leaf(&self.extractor.mix, ext),
            task_w: leaf(&self.task_head.weight, ext),
            task_b: leaf(&self.task_head.bias, ext),
            user_w1: leaf(&self.user_head.hidden.weight, user),
            user_b1: leaf(&self.user_head.hidden.bias, user),
            user_w2: leaf(&self.user_head.output.weight, user),
            user_b2: leaf(&self.user_head.output.bias, user),
        }
    }

    /// Checks that `x` is a `[b, c, t]` batch matching the extractor.
    pub fn check_input(&self, shape: &[usize]) -> Result<()> {
        let e = &self.extractor;
        if shape.len() != 3 || shape[1] != e.channels || shape[2] != e.len {
            return Err(Error::dim(format!(
                "input {shape:?} does not match extractor [b, {}, {}]",
                e.channels, e.len
            )));
        }
        Ok(())
    }
}

/// `F(x)`: `[b, c, t]` to `[b, feature_dim]`.
pub fn features(g: &mut Graph, models: &SurrogateModels, vars: &ModelVars, x: Var) -> Result<Var> {
    models.check_input(g.value(x).shape())?;
    let cfg = &models.extractor.config;
    let b = g.value(x).shape()[0];
    let h = g.conv_temporal(x, vars.kernels, 1)?;
    let h = g.conv_spatial(h, vars.mix)?;
    let h = g.activation(h, cfg.activation)?;
    let h = g.mean_pool_time(h, cfg.pool_window, cfg.pool_stride)?;
    let fd = models.extractor.feature_dim();
    g.reshape(h, &[b, fd])
}

pub fn linear(g: &mut Graph, x: Var, w: Var, b: Var) -> Result<Var> {
    let wt = g.transpose(w)?;
    let y = g.matmul(x, wt)?;
    g.add_row(y, b)
}

/// `C(features)`.
pub fn task_logits(g: &mut Graph, vars: &ModelVars, feats: Var) -> Result<Var> {
    linear(g, feats, vars.task_w, vars.task_b)
}

/// `D(features)`.
pub fn user_logits(g: &mut Graph, vars: &ModelVars, feats: Var) -> Result<Var> {
    let h = linear(g, feats, vars.user_w1, vars.user_b1)?;
    let h = g.activation(h, Activation::Relu)?;
    linear(g, h, vars.user_w2, vars.user_b2)
}

/// Evaluates both heads on a batch without recording gradients.
pub fn forward(models: &SurrogateModels, batch: &Tensor) -> Result<ForwardOutput> {
    let mut g = Graph::new();
    let vars = models.bind(&mut g, Trainable::Nothing);
    let x = g.constant(batch.clone());
    let f = features(&mut g, models, &vars, x)?;
    let t = task_logits(&mut g, &vars, f)?;
    let u = user_logits(&mut g, &vars, f)?;
    Ok(ForwardOutput {
        task_logits: g.value(t).clone(),
        user_logits: g.value(u).clone(),
        features: g.value(f).clone(),
    })
}

fn uniform(rng: &mut impl Rng, shape: &[usize], fan_in: usize) -> Tensor {
    let bound = 1.0 / (fan_in as f64).sqrt();
    let numel: usize = shape.iter().product();
    let data = (0..numel)
        .map(|_| rng.random_range(-bound..bound))
        .collect();
    Tensor::new(shape.to_vec(), data).expect("shape matches")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_feature_dims() {
        assert_eq!(ExtractorConfig::cfg_a().feature_dim(128).unwrap(), 8 * 28);
        assert_eq!(ExtractorConfig::cfg_b().feature_dim(128).unwrap(), 16 * 12);
        assert!(ExtractorConfig::cfg_b().feature_dim(20).is_err());
        assert!(ExtractorConfig::preset("cfgC").is_err());
    }

    #[test]
    fn feature_dim_matches_forward() {
        for cfg in [ExtractorConfig::cfg_a(), ExtractorConfig::cfg_b()] {
            for (c, t) in [(1, 40), (3, 64), (8, 128), (2, 97)] {
                let m = SurrogateModels::new(cfg.clone(), c, t, 2, 3, 0).unwrap();
                let out = forward(&m, &Tensor::filled(&[2, c, t], 0.5)).unwrap();
                assert_eq!(out.features.shape(), &[2, cfg.feature_dim(t).unwrap()]);
            }
        }
    }

    #[test]
    fn zero_heads_give_zero_logits() {
        let mut m = SurrogateModels::new(ExtractorConfig::cfg_a(), 2, 32, 3, 4, 1).unwrap();
        for p in m.params_mut().into_iter().skip(2) {
            p.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        let out = forward(&m, &Tensor::filled(&[1, 2, 32], 1.7)).unwrap();
        assert_eq!(out.task_logits.shape(), &[1, 3]);
        assert_eq!(out.user_logits.shape(), &[1, 4]);
        assert!(out
            .task_logits
            .data()
            .iter()
            .chain(out.user_logits.data())
            .all(|&v| v == 0.0));
    }

    #[test]
    fn head_order_does_not_change_features() {
        let m = SurrogateModels::new(ExtractorConfig::cfg_b(), 3, 64, 2, 5, 9).unwrap();
        let x = Tensor::new(
            vec![2, 3, 64],
            (0..384).map(|i| (i as f64 * 0.37).sin()).collect(),
        )
        .unwrap();
        let run = |task_first: bool| {
            let mut g = Graph::new();
            let vars = m.bind(&mut g, Trainable::Nothing);
            let xv = g.constant(x.clone());
            let f = features(&mut g, &m, &vars, xv).unwrap();
            let (t, u) = if task_first {
                let t = task_logits(&mut g, &vars, f).unwrap();
                (t, user_logits(&mut g, &vars, f).unwrap())
            } else {
                let u = user_logits(&mut g, &vars, f).unwrap();
                (task_logits(&mut g, &vars, f).unwrap(), u)
            };
            (g.value(f).clone(), g.value(t).clone(), g.value(u).clone())
        };
        assert_eq!(run(true), run(false));
    }

    #[test]
    fn wrong_input_shape() {
        let m = SurrogateModels::new(ExtractorConfig::cfg_a(), 2, 32, 2, 2, 0).unwrap();
        assert!(matches!(
            forward(&m, &Tensor::zeros(&[1, 3, 32])),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn reset_user_head_keeps_extractor() {
        let mut m = SurrogateModels::new(ExtractorConfig::cfg_a(), 2, 32, 2, 2, 0).unwrap();
        let ext = m.extractor.clone();
        m.reset_user_head(7, 3);
        assert_eq!(m.users(), 7);
        assert_eq!(m.extractor, ext);
    }
}
