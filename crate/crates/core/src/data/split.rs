use super::Dataset;
use crate::error::{Error, Result};

/// Trial indices of a leave-one-session-out fold. Following the protocol's
/// convention, `train` is the single held session and `test` is the rest.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FoldIndices {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

pub fn loso_indices(d: &Dataset, held_session: usize) -> Result<FoldIndices> {
    if held_session >= d.sessions() {
        return Err(Error::param(format!(
            "session {held_session} out of range 0..{}",
            d.sessions()
        )));
    }
    let (train, test) = (0..d.len()).partition(|&i| d.session_labels()[i] == held_session);
    Ok(FoldIndices { train, test })
}

/// Splits `d` into the held session (train) and every other session (test).
///
/// User ids are compacted to `0..U'` over the users present in either part,
/// in ascending original order, and the same mapping is applied to both.
pub fn split_loso(d: &Dataset, held_session: usize) -> Result<(Dataset, Dataset)> {
    let fold = loso_indices(d, held_session)?;
    let mut present = vec![false; d.users()];
    for &u in d.user_labels() {
        present[u] = true;
    }
    let mut map = vec![None; d.users()];
    let mut next = 0;
    for (u, &p) in present.iter().enumerate() {
        if p {
            map[u] = Some(next);
            next += 1;
        }
    }
    let users = next.max(1);
    let train = d.subset(&fold.train).remap_users(&map, users)?;
    let test = d.subset(&fold.test).remap_users(&map, users)?;
    Ok((train, test))
}

/// Re-segments every user's trials into `parts` contiguous, near-equal
/// sessions, for recordings that only have one session.
pub fn split_by_index(d: &Dataset, parts: usize) -> Result<Dataset> {
    if parts == 0 {
        return Err(Error::param("cannot split into zero sessions"));
    }
    let mut per_user: Vec<Vec<usize>> = vec![Vec::new(); d.users()];
    for (i, &u) in d.user_labels().iter().enumerate() {
        per_user[u].push(i);
    }
    let mut sessions = vec![0; d.len()];
    for trials in &per_user {
        let n = trials.len();
        for (rank, &i) in trials.iter().enumerate() {
            sessions[i] = rank * parts / n.max(1);
        }
    }
    d.with_sessions(sessions, parts)
}
