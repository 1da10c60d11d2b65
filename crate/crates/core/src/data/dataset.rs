use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Labelled collection of `c × t` trials.
///
/// Trials are stored contiguously, trial-major then channel-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    channels: usize,
    len: usize,
    classes: usize,
    users: usize,
    sessions: usize,
    trials: Vec<f64>,
    task_labels: Vec<usize>,
    user_labels: Vec<usize>,
    session_labels: Vec<usize>,
}

/// Label-space sizes and trial geometry of a [`Dataset`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Dims {
    pub trials: usize,
    pub channels: usize,
    pub len: usize,
    pub classes: usize,
    pub users: usize,
    pub sessions: usize,
}

impl Dataset {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        channels: usize,
        len: usize,
        classes: usize,
        users: usize,
        sessions: usize,
        trials: Vec<f64>,
        task_labels: Vec<usize>,
        user_labels: Vec<usize>,
        session_labels: Vec<usize>,
    ) -> Result<Self> {
        let n = task_labels.len();
        if user_labels.len() != n || session_labels.len() != n {
            return Err(Error::Validation("label arrays differ in length".into()));
        }
        if trials.len() != n * channels * len {
            return Err(Error::Validation(format!(
                "{} trial values for {n} trials of {channels}x{len}",
                trials.len()
            )));
        }
        check_labels("task", &task_labels, classes)?;
        check_labels("user", &user_labels, users)?;
        check_labels("session", &session_labels, sessions)?;
        if let Some(i) = trials.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "non-finite value in trial {}",
                i / (channels * len).max(1)
            )));
        }
        Ok(Self {
            channels,
            len,
            classes,
            users,
            sessions,
            trials,
            task_labels,
            user_labels,
            session_labels,
        })
    }

    pub fn dims(&self) -> Dims {
        Dims {
            trials: self.len(),
            channels: self.channels,
            len: self.len,
            classes: self.classes,
            users: self.users,
            sessions: self.sessions,
        }
    }

    pub fn len(&self) -> usize {
        self.task_labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.task_labels.is_empty()
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn samples(&self) -> usize {
        self.len
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn users(&self) -> usize {
        self.users
    }

    pub fn sessions(&self) -> usize {
        self.sessions
    }

    pub fn trial_size(&self) -> usize {
        self.channels * self.len
    }

    pub fn trial(&self, i: usize) -> &[f64] {
        let s = self.trial_size();
        &self.trials[i * s..(i + 1) * s]
    }

    pub fn data(&self) -> &[f64] {
        &self.trials
    }

    pub fn task_labels(&self) -> &[usize] {
        &self.task_labels
    }

    pub fn user_labels(&self) -> &[usize] {
        &self.user_labels
    }

    pub fn session_labels(&self) -> &[usize] {
        &self.session_labels
    }

    /// Stacks the given trials into a `[b, c, t]` tensor.
    pub fn batch(&self, indices: &[usize]) -> Result<Tensor> {
        let s = self.trial_size();
        let mut data = Vec::with_capacity(indices.len() * s);
        for &i in indices {
            data.extend_from_slice(self.trial(i));
        }
        Tensor::new(vec![indices.len(), self.channels, self.len], data)
    }

    /// Trials at `indices`, in that order, with unchanged label spaces.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let s = self.trial_size();
        let mut trials = Vec::with_capacity(indices.len() * s);
        for &i in indices {
            trials.extend_from_slice(self.trial(i));
        }
        Dataset {
            trials,
            task_labels: indices.iter().map(|&i| self.task_labels[i]).collect(),
            user_labels: indices.iter().map(|&i| self.user_labels[i]).collect(),
            session_labels: indices.iter().map(|&i| self.session_labels[i]).collect(),
            ..self.empty_like()
        }
    }

    fn empty_like(&self) -> Dataset {
        Dataset {
            channels: self.channels,
            len: self.len,
            classes: self.classes,
            users: self.users,
            sessions: self.sessions,
            trials: Vec::new(),
            task_labels: Vec::new(),
            user_labels: Vec::new(),
            session_labels: Vec::new(),
        }
    }

    /// Same labels and geometry, different trial values.
    pub fn with_trials(&self, trials: Vec<f64>) -> Result<Dataset> {
        if trials.len() != self.trials.len() {
            return Err(Error::dim("replacement trial data has the wrong length"));
        }
        if trials.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(
                "replacement trial data is not finite".into(),
            ));
        }
        Ok(Dataset {
            trials,
            task_labels: self.task_labels.clone(),
            user_labels: self.user_labels.clone(),
            session_labels: self.session_labels.clone(),
            ..self.empty_like()
        })
    }

    /// Relabels users through `map` (old id to new id) and sets the user count.
    pub fn remap_users(&self, map: &[Option<usize>], users: usize) -> Result<Dataset> {
        let mut out = self.clone();
        out.users = users;
        for u in out.user_labels.iter_mut() {
            *u = map
                .get(*u)
                .copied()
                .flatten()
                .ok_or_else(|| Error::label(format!("user {u} has no mapping")))?;
        }
        check_labels("user", &out.user_labels, users)?;
        Ok(out)
    }

    /// Replaces the session labels, e.g. after re-segmenting a single-session recording.
    pub fn with_sessions(&self, session_labels: Vec<usize>, sessions: usize) -> Result<Dataset> {
        if session_labels.len() != self.len() {
            return Err(Error::dim("session label count differs from trial count"));
        }
        check_labels("session", &session_labels, sessions)?;
        let mut out = self.clone();
        out.session_labels = session_labels;
        out.sessions = sessions;
        Ok(out)
    }

    /// Indices of trials whose user id lies in `users`.
    pub fn indices_of_users(&self, users: std::ops::Range<usize>) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| users.contains(&self.user_labels[i]))
            .collect()
    }

    /// Concatenates datasets with the same trial geometry. Label spaces
    /// become the maximum over the parts.
    pub fn concat(parts: &[&Dataset]) -> Result<Dataset> {
        let first = parts
            .first()
            .ok_or_else(|| Error::param("nothing to concatenate"))?;
        let mut out = first.empty_like();
        for p in parts {
            if p.channels != out.channels || p.len != out.len {
                return Err(Error::dim(
                    "cannot concatenate datasets with different trial shapes",
                ));
            }
            out.classes = out.classes.max(p.classes);
            out.users = out.users.max(p.users);
            out.sessions = out.sessions.max(p.sessions);
            out.trials.extend_from_slice(&p.trials);
            out.task_labels.extend_from_slice(&p.task_labels);
            out.user_labels.extend_from_slice(&p.user_labels);
            out.session_labels.extend_from_slice(&p.session_labels);
        }
        Ok(out)
    }

    /// Sets a larger user label space without touching the trials.
    pub fn with_user_count(&self, users: usize) -> Result<Dataset> {
        check_labels("user", &self.user_labels, users)?;
        let mut out = self.clone();
        out.users = users;
        Ok(out)
    }
}

fn check_labels(kind: &str, labels: &[usize], bound: usize) -> Result<()> {
    if let Some(&bad) = labels.iter().find(|&&l| l >= bound) {
        return Err(Error::Validation(format!(
            "{kind} label {bad} outside declared range 0..{bound}"
        )));
    }
    Ok(())
}
