use crate::error::{Error, Result};

/// Balanced classification accuracy: mean recall over the classes that
/// occur in `labels`.
pub fn bca(predictions: &[usize], labels: &[usize], classes: usize) -> Result<f64> {
    check(predictions, labels)?;
    let mut hits = vec![0usize; classes];
    let mut totals = vec![0usize; classes];
    for (&p, &y) in predictions.iter().zip(labels) {
        if y >= classes {
            return Err(Error::label(format!(
                "label {y} out of range for {classes} classes"
            )));
        }
        totals[y] += 1;
        if p == y {
            hits[y] += 1;
        }
    }
    let present: Vec<f64> = hits
        .iter()
        .zip(&totals)
        .filter(|(_, &n)| n > 0)
        .map(|(&h, &n)| h as f64 / n as f64)
        .collect();
    Ok(present.iter().sum::<f64>() / present.len() as f64)
}

/// User identification accuracy.
pub fn uia(predictions: &[usize], users: &[usize]) -> Result<f64> {
    check(predictions, users)?;
    let hits = predictions
        .iter()
        .zip(users)
        .filter(|(p, u)| p == u)
        .count();
    Ok(hits as f64 / users.len() as f64)
}

fn check(predictions: &[usize], labels: &[usize]) -> Result<()> {
    if labels.is_empty() {
        return Err(Error::param("metric over an empty set"));
    }
    if predictions.len() != labels.len() {
        return Err(Error::dim(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_cases() {
        assert_eq!(bca(&[0, 0, 1, 1, 1], &[0, 1, 1, 1, 1], 2).unwrap(), 0.875);
        assert_eq!(bca(&[1, 1, 1], &[0, 1, 1], 2).unwrap(), 0.5);
        assert_eq!(uia(&[0, 1, 2], &[0, 1, 0]).unwrap(), 2.0 / 3.0);
    }

    #[test]
    fn absent_classes_are_skipped() {
        assert_eq!(bca(&[2, 2], &[2, 2], 5).unwrap(), 1.0);
    }

    #[test]
    fn empty_input() {
        assert!(matches!(bca(&[], &[], 2), Err(Error::Parameter(_))));
        assert!(matches!(uia(&[], &[]), Err(Error::Parameter(_))));
    }
}
