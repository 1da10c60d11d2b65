use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbationMode {
    SampleWise,
    UserWise,
}

impl PerturbationMode {
    pub fn code(self) -> u32 {
        match self {
            PerturbationMode::SampleWise => 0,
            PerturbationMode::UserWise => 1,
        }
    }

    pub fn from_code(code: u32) -> Result<Self> {
        match code {
            0 => Ok(PerturbationMode::SampleWise),
            1 => Ok(PerturbationMode::UserWise),
            other => Err(Error::Format(format!("unknown perturbation mode {other}"))),
        }
    }
}

/// Per-trial deltas (sample-wise) or per-user templates (user-wise).
#[derive(Clone, Debug, PartialEq)]
pub struct PerturbationSet {
    mode: PerturbationMode,
    channels: usize,
    len: usize,
    deltas: Vec<f64>,
    /// ℓ∞ radius for sample-wise sets; 0 for user-wise.
    epsilon: f64,
    /// Hyperparameters and seed that produced the set.
    pub provenance: serde_json::Value,
}

impl PerturbationSet {
    pub fn new(
        mode: PerturbationMode,
        channels: usize,
        len: usize,
        deltas: Vec<f64>,
        epsilon: f64,
    ) -> Result<Self> {
        let size = channels * len;
        if size == 0 || !deltas.len().is_multiple_of(size) {
            return Err(Error::dim(format!(
                "{} delta values do not tile {channels}x{len}",
                deltas.len()
            )));
        }
        if deltas.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(
                "perturbation contains non-finite values".into(),
            ));
        }
        let epsilon = match mode {
            PerturbationMode::UserWise => 0.0,
            PerturbationMode::SampleWise => {
                if !(epsilon.is_finite() && epsilon >= 0.0) {
                    return Err(Error::param(format!("epsilon must be >= 0, got {epsilon}")));
                }
                if let Some(v) = deltas.iter().find(|v| v.abs() > epsilon) {
                    return Err(Error::Validation(format!(
                        "delta value {v} exceeds epsilon {epsilon}"
                    )));
                }
                epsilon
            }
        };
        Ok(Self {
            mode,
            channels,
            len,
            deltas,
            epsilon,
            provenance: serde_json::Value::Null,
        })
    }

    pub fn with_provenance(mut self, provenance: serde_json::Value) -> Self {
        self.provenance = provenance;
        self
    }

    pub fn mode(&self) -> PerturbationMode {
        self.mode
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn samples(&self) -> usize {
        self.len
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn count(&self) -> usize {
        self.deltas.len() / (self.channels * self.len)
    }

    pub fn delta(&self, i: usize) -> &[f64] {
        let s = self.channels * self.len;
        &self.deltas[i * s..(i + 1) * s]
    }

    pub fn data(&self) -> &[f64] {
        &self.deltas
    }

    pub fn max_abs(&self) -> f64 {
        self.deltas.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// ℓ2 norm of each delta or template.
    pub fn norms(&self) -> Vec<f64> {
        (0..self.count())
            .map(|i| self.delta(i).iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect()
    }
}

/// Adds each trial's delta (sample-wise) or its user's template (user-wise).
/// Labels are copied unchanged and the input is left untouched.
pub fn apply_perturbation(d: &Dataset, p: &PerturbationSet) -> Result<Dataset> {
    if p.channels != d.channels() || p.len != d.samples() {
        return Err(Error::dim(format!(
            "perturbation is {}x{}, dataset is {}x{}",
            p.channels,
            p.len,
            d.channels(),
            d.samples()
        )));
    }
    let rows: Vec<usize> = match p.mode {
        PerturbationMode::SampleWise => {
            if p.count() != d.len() {
                return Err(Error::param(format!(
                    "{} sample-wise deltas for {} trials",
                    p.count(),
                    d.len()
                )));
            }
            (0..d.len()).collect()
        }
        PerturbationMode::UserWise => {
            if p.count() != d.users() {
                return Err(Error::param(format!(
                    "{} user templates for {} users",
                    p.count(),
                    d.users()
                )));
            }
            d.user_labels().to_vec()
        }
    };
    let mut out = d.data().to_vec();
    let size = d.trial_size();
    for (i, &r) in rows.iter().enumerate() {
        for (o, v) in out[i * size..(i + 1) * size].iter_mut().zip(p.delta(r)) {
            *o += v;
        }
    }
    d.with_trials(out)
}
