//! Synthetic multichannel trials with separately controllable task,
//! identity and session structure.
//!
//! Each trial is
//! `task_amplitude·T[y] + identity_amplitude·B[u] + session_amplitude·C[s] + noise`
//! where every pattern is scaled to unit RMS over the full `c × t` matrix:
//!
//! * `T[y]` is a class-specific sinusoid with random per-channel gains on a
//!   fixed channel subset (the first half of a seeded channel permutation);
//! * `B[u]` is a per-user random spatial vector modulating a slow sinusoid
//!   shared by all users;
//! * `C[s]` is a per-session constant offset per channel;
//! * noise is i.i.d. `N(0, noise_std²)`.
//!
//! Values are rounded to `f32` so generated datasets survive the on-disk
//! format bit-exactly.

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};
use crate::seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub users: usize,
    pub sessions: usize,
    pub trials_per_user_per_session: usize,
    pub channels: usize,
    pub len: usize,
    pub classes: usize,
    pub identity_amplitude: f64,
    pub task_amplitude: f64,
    pub session_amplitude: f64,
    pub noise_std: f64,
    pub seed: u64,
}

impl SynthConfig {
    /// 8 users, 3 sessions, 40 trials per user and session, 8×128 trials, 2 classes.
    pub fn reference() -> Self {
        Self {
            users: 8,
            sessions: 3,
            trials_per_user_per_session: 40,
            channels: 8,
            len: 128,
            classes: 2,
            identity_amplitude: 1.0,
            task_amplitude: 1.0,
            session_amplitude: 0.2,
            noise_std: 1.0,
            seed: 7,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            self.users,
            self.sessions,
            self.trials_per_user_per_session,
            self.channels,
            self.len,
            self.classes,
        ];
        if counts.contains(&0) {
            return Err(Error::param("synthetic counts must all be >= 1"));
        }
        let amps = [
            self.identity_amplitude,
            self.task_amplitude,
            self.session_amplitude,
            self.noise_std,
        ];
        if !amps.iter().all(|a| a.is_finite() && *a >= 0.0) {
            return Err(Error::param("synthetic amplitudes must be finite and >= 0"));
        }
        Ok(())
    }

    pub fn trials(&self) -> usize {
        self.users * self.sessions * self.trials_per_user_per_session
    }
}

const SLOW_CYCLES: f64 = 3.0;

/// Generates a dataset ordered by user, then session, then trial. Task labels
/// cycle through the classes within each user-session block.
pub fn synth_generate(cfg: &SynthConfig) -> Result<Dataset> {
    cfg.validate()?;
    let (c, t) = (cfg.channels, cfg.len);
    let mut rng = seed::rng(cfg.seed);

    let mut order: Vec<usize> = (0..c).collect();
    order.shuffle(&mut rng);
    let task_channels = &order[..c.div_ceil(2)];
    let task_patterns: Vec<Vec<f64>> = (0..cfg.classes)
        .map(|k| {
            let cycles = 5.0 + 3.0 * k as f64;
            let phase = rng.random_range(0.0..2.0 * PI);
            let mut p = vec![0.0; c * t];
            for &ch in task_channels {
                let gain = rng.random_range(0.5..1.0);
                for (tau, v) in p[ch * t..(ch + 1) * t].iter_mut().enumerate() {
                    *v = gain * (2.0 * PI * cycles * tau as f64 / t as f64 + phase).sin();
                }
            }
            unit_rms(p)
        })
        .collect();

    let slow_phase = rng.random_range(0.0..2.0 * PI);
    let slow: Vec<f64> = (0..t)
        .map(|tau| (2.0 * PI * SLOW_CYCLES * tau as f64 / t as f64 + slow_phase).sin())
        .collect();
    let user_patterns: Vec<Vec<f64>> = (0..cfg.users)
        .map(|_| {
            let spatial: Vec<f64> = (0..c).map(|_| StandardNormal.sample(&mut rng)).collect();
            let mut p = vec![0.0; c * t];
            for (ch, a) in spatial.iter().enumerate() {
                for (v, s) in p[ch * t..(ch + 1) * t].iter_mut().zip(&slow) {
                    *v = a * s;
                }
            }
            unit_rms(p)
        })
        .collect();

    let session_patterns: Vec<Vec<f64>> = (0..cfg.sessions)
        .map(|_| {
            let offsets: Vec<f64> = (0..c).map(|_| StandardNormal.sample(&mut rng)).collect();
            unit_rms(
                offsets
                    .iter()
                    .flat_map(|&o| std::iter::repeat_n(o, t))
                    .collect(),
            )
        })
        .collect();

    let noise = Normal::new(0.0, cfg.noise_std).map_err(|e| Error::param(e.to_string()))?;
    let n = cfg.trials();
    let mut trials = Vec::with_capacity(n * c * t);
    let (mut ys, mut us, mut ss) = (
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
    );
    for (u, up) in user_patterns.iter().enumerate() {
        for (s, sp) in session_patterns.iter().enumerate() {
            for i in 0..cfg.trials_per_user_per_session {
                let y = i % cfg.classes;
                let tp = &task_patterns[y];
                for j in 0..c * t {
                    let v = cfg.task_amplitude * tp[j]
                        + cfg.identity_amplitude * up[j]
                        + cfg.session_amplitude * sp[j]
                        + noise.sample(&mut rng);
                    trials.push(v as f32 as f64);
                }
                ys.push(y);
                us.push(u);
                ss.push(s);
            }
        }
    }
    Dataset::new(
        c,
        t,
        cfg.classes,
        cfg.users,
        cfg.sessions,
        trials,
        ys,
        us,
        ss,
    )
}

fn unit_rms(mut p: Vec<f64>) -> Vec<f64> {
    let rms = (p.iter().map(|v| v * v).sum::<f64>() / p.len() as f64).sqrt();
    if rms > 0.0 {
        p.iter_mut().for_each(|v| *v /= rms);
    }
    p
}
