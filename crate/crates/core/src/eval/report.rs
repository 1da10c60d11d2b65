use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    Clean,
    SampleWise,
    UserWise,
}

impl std::str::FromStr for Condition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "clean" => Ok(Condition::Clean),
            "sample_wise" | "sample" => Ok(Condition::SampleWise),
            "user_wise" | "user" => Ok(Condition::UserWise),
            other => Err(Error::param(format!("unknown condition {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Bca,
    Uia,
}

/// One point of a per-epoch learning curve.
#[derive(Clone, Debug, PartialEq)]
pub struct CurvePoint {
    pub step: usize,
    pub split: Split,
    pub metric: Metric,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub session: usize,
    pub repeat: usize,
    pub seed: u64,
    pub bca: f64,
    pub uia: f64,
    #[serde(skip)]
    pub curves: Vec<CurvePoint>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub bca_mean: f64,
    pub bca_std: f64,
    pub uia_mean: f64,
    pub uia_std: f64,
}

impl Aggregate {
    /// Means and sample standard deviations (zero for a single fold).
    pub fn of(folds: &[FoldResult]) -> Result<Self> {
        if folds.is_empty() {
            return Err(Error::param("cannot aggregate zero folds"));
        }
        let (bca_mean, bca_std) = mean_std(folds.iter().map(|f| f.bca));
        let (uia_mean, uia_std) = mean_std(folds.iter().map(|f| f.uia));
        Ok(Self {
            bca_mean,
            bca_std,
            uia_mean,
            uia_std,
        })
    }
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    if n < 2.0 {
        return (mean, 0.0);
    }
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Drop from a paired clean baseline (`baseline - condition`).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Reduction {
    pub bca: f64,
    pub uia: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub condition: Condition,
    pub extractor_cfg: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval_cfg: Option<String>,
    pub hyper: serde_json::Value,
    pub folds: Vec<FoldResult>,
    pub aggregate: Aggregate,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline: Option<Aggregate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reduction: Option<Reduction>,
}

impl ExperimentReport {
    /// Attaches a clean baseline run over the same folds.
    pub fn paired_with(mut self, baseline: &ExperimentReport) -> Result<Self> {
        let same =
            self.folds.len() == baseline.folds.len()
                && self.folds.iter().zip(&baseline.folds).all(|(a, b)| {
                    a.session == b.session && a.repeat == b.repeat && a.seed == b.seed
                });
        if !same {
            return Err(Error::Protocol(
                "paired reports need matching fold structure".into(),
            ));
        }
        let b = baseline.aggregate;
        self.reduction = Some(Reduction {
            bca: b.bca_mean - self.aggregate.bca_mean,
            uia: b.uia_mean - self.aggregate.uia_mean,
        });
        self.baseline = Some(b);
        Ok(self)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// `epoch,fold,repeat,split,bca,uia` rows in fold order. Row `e` holds
    /// the stage-1 BCA and stage-2 UIA after epoch `e`; a cell is empty
    /// when that stage ran fewer epochs.
    pub fn curves_csv(&self) -> String {
        let mut out = String::from("epoch,fold,repeat,split,bca,uia\n");
        for f in &self.folds {
            let epochs = f.curves.iter().map(|p| p.step + 1).max().unwrap_or(0);
            let mut cells = vec![[None::<f64>; 2]; epochs * 2];
            for p in &f.curves {
                let row = p.step * 2 + usize::from(p.split == Split::Test);
                cells[row][usize::from(p.metric == Metric::Uia)] = Some(p.value);
            }
            for (row, [bca, uia]) in cells.iter().enumerate() {
                let split = if row % 2 == 0 { "train" } else { "test" };
                let cell = |v: &Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
                writeln!(
                    out,
                    "{},{},{},{split},{},{}",
                    row / 2,
                    f.session,
                    f.repeat,
                    cell(bca),
                    cell(uia)
                )
                .unwrap();
            }
        }
        out
    }
}

/// Writes `report.json` and `curves.csv` into `dir`, creating it if needed.
pub fn write_report(r: &ExperimentReport, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    fs::write(dir.join("report.json"), r.to_json()? + "\n")?;
    fs::write(dir.join("curves.csv"), r.curves_csv())?;
    Ok(())
}

/// Reads a `report.json`; curves are not restored.
pub fn read_report(path: impl AsRef<Path>) -> Result<ExperimentReport> {
    Ok(serde_json::from_slice(&fs::read(path)?)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fold(session: usize, bca: f64, uia: f64) -> FoldResult {
        FoldResult {
            session,
            repeat: 0,
            seed: 1,
            bca,
            uia,
            curves: vec![],
        }
    }

    #[test]
    fn aggregate_uses_sample_std() {
        let a = Aggregate::of(&[fold(0, 0.5, 0.2), fold(1, 0.7, 0.4)]).unwrap();
        assert!((a.bca_mean - 0.6).abs() < 1e-15);
        assert!((a.bca_std - 0.02f64.sqrt()).abs() < 1e-15);
        assert_eq!(Aggregate::of(&[fold(0, 0.5, 0.2)]).unwrap().uia_std, 0.0);
    }

    #[test]
    fn pairing_needs_same_folds() {
        let folds = vec![fold(0, 0.9, 0.8), fold(1, 0.9, 0.6)];
        let base = ExperimentReport {
            condition: Condition::Clean,
            extractor_cfg: "cfgA".into(),
            eval_cfg: None,
            hyper: serde_json::Value::Null,
            aggregate: Aggregate::of(&folds).unwrap(),
            folds,
            baseline: None,
            reduction: None,
        };
        let mut other = base.clone();
        other.condition = Condition::UserWise;
        other.folds[0].uia = 0.1;
        other.aggregate = Aggregate::of(&other.folds).unwrap();
        let paired = other.clone().paired_with(&base).unwrap();
        assert!((paired.reduction.unwrap().uia - 0.35).abs() < 1e-12);
        other.folds.pop();
        assert!(other.paired_with(&base).is_err());
    }

    #[test]
    fn curves_are_one_row_per_epoch_and_split() {
        let point = |step, split, metric, value| CurvePoint {
            step,
            split,
            metric,
            value,
        };
        let mut f = fold(2, 0.5, 0.5);
        f.curves = vec![
            point(0, Split::Train, Metric::Bca, 0.5),
            point(0, Split::Test, Metric::Bca, 0.25),
            point(0, Split::Train, Metric::Uia, 1.0),
            point(0, Split::Test, Metric::Uia, 0.75),
            point(1, Split::Train, Metric::Bca, 0.5),
            point(1, Split::Test, Metric::Bca, 0.5),
        ];
        let r = ExperimentReport {
            condition: Condition::Clean,
            extractor_cfg: "cfgA".into(),
            eval_cfg: None,
            hyper: serde_json::Value::Null,
            aggregate: Aggregate::of(std::slice::from_ref(&f)).unwrap(),
            folds: vec![f],
            baseline: None,
            reduction: None,
        };
        assert_eq!(
            r.curves_csv(),
            "epoch,fold,repeat,split,bca,uia\n0,2,0,train,0.5,1\n0,2,0,test,0.25,0.75\n1,2,0,train,0.5,\n1,2,0,test,0.5,\n"
        );
    }
}
