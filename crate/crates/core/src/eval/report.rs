use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cascade::{ConfusionMatrix, CostModel};

use super::{Curve, CurvePoint, EvalError, Result, StrategyKind};

pub const CSV_SIGNIFICANT_DIGITS: usize = 6;
/// How accuracy is read between curve points.
pub const INTERPOLATION: &str = "trapezoid";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSummary {
    pub split: String,
    pub examples: usize,
    pub bow_accuracy: f64,
    pub lstm_accuracy: f64,
    pub confusion: ConfusionMatrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyResult {
    pub strategy: StrategyKind,
    pub split: String,
    pub auc: f64,
    pub points: Vec<CurvePoint>,
}

impl StrategyResult {
    pub fn curve(&self) -> Curve {
        Curve {
            strategy: self.strategy,
            points: self.points.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Report {
    pub interpolation: String,
    pub cost_model: CostModel,
    /// Extra per-sample cost charged to the decision-network strategy.
    pub decision_overhead: f64,
    pub grid_size: usize,
    pub seeds: BTreeMap<String, u64>,
    pub splits: Vec<SplitSummary>,
    pub results: Vec<StrategyResult>,
}

impl Report {
    pub fn result(&self, split: &str, strategy: StrategyKind) -> Option<&StrategyResult> {
        self.results.iter().find(|r| r.split == split && r.strategy == strategy)
    }

    pub fn auc(&self, split: &str, strategy: StrategyKind) -> Option<f64> {
        self.result(split, strategy).map(|r| r.auc)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| EvalError::Io {
            path: path.to_owned(),
            source,
        })?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// One evaluation example for external embedding visualizations.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationRow {
    pub id: usize,
    pub label: usize,
    pub bow_correct: bool,
    pub lstm_correct: bool,
    pub decision_prob: f64,
    /// BoW last hidden layer.
    pub hidden: Vec<f64>,
}

/// `x` rounded to `digits` significant digits.
pub fn round_sig(x: f64, digits: usize) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{:.*e}", digits.max(1) - 1, x).parse().expect("formatted float parses")
}

fn fmt(x: f64) -> String {
    round_sig(x, CSV_SIGNIFICANT_DIGITS).to_string()
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> EvalError + '_ {
    move |source| EvalError::Io {
        path: path.to_owned(),
        source,
    }
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> EvalError + '_ {
    move |e| EvalError::Csv {
        path: path.to_owned(),
        message: e.to_string(),
    }
}

fn write_rows(path: &Path, header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(header).map_err(csv_err(path))?;
    for row in rows {
        w.write_record(&row).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn write_curve_csv(curve: &Curve, path: &Path) -> Result<()> {
    let header = ["knob", "savings", "accuracy"].map(String::from);
    let rows = curve
        .points
        .iter()
        .map(|p| vec![p.knob.map(fmt).unwrap_or_default(), fmt(p.savings), fmt(p.accuracy)]);
    write_rows(path, &header, rows)
}

/// Reads a curve written by [`write_curve_csv`]; values come back rounded.
pub fn read_curve_csv(path: &Path, strategy: StrategyKind) -> Result<Curve> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let mut r = csv::Reader::from_reader(file);
    let header = r.headers().map_err(csv_err(path))?.clone();
    if header.iter().collect::<Vec<_>>() != ["knob", "savings", "accuracy"] {
        return Err(EvalError::Csv {
            path: path.to_owned(),
            message: format!("unexpected header {header:?}"),
        });
    }
    let bad = |line: usize, field: &str| EvalError::Csv {
        path: path.to_owned(),
        message: format!("record {line}: bad number {field:?}"),
    };
    let mut points = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err(path))?;
        let num = |j: usize| -> Result<f64> {
            let f = rec.get(j).unwrap_or_default();
            f.parse().map_err(|_| bad(i + 1, f))
        };
        let knob = match rec.get(0).unwrap_or_default() {
            "" => None,
            _ => Some(num(0)?),
        };
        points.push(CurvePoint {
            knob,
            savings: num(1)?,
            accuracy: num(2)?,
        });
    }
    Ok(Curve { strategy, points })
}

fn write_activations(rows: &[ActivationRow], path: &Path) -> Result<()> {
    let width = rows.first().map_or(0, |r| r.hidden.len());
    if let Some(r) = rows.iter().find(|r| r.hidden.len() != width) {
        return Err(EvalError::Alignment(format!(
            "activation row {} has {} hidden values, expected {width}",
            r.id,
            r.hidden.len()
        )));
    }
    let mut header: Vec<String> = ["id", "label", "bow_correct", "lstm_correct", "decision_prob"]
        .map(String::from)
        .to_vec();
    header.extend((1..=width).map(|k| format!("h{k}")));
    let body = rows.iter().map(|r| {
        let mut row = vec![
            r.id.to_string(),
            r.label.to_string(),
            u8::from(r.bow_correct).to_string(),
            u8::from(r.lstm_correct).to_string(),
            fmt(r.decision_prob),
        ];
        row.extend(r.hidden.iter().map(|&h| fmt(h)));
        row
    });
    write_rows(path, &header, body)
}

fn write_confusion(m: &ConfusionMatrix, path: &Path) -> Result<()> {
    let header = ["tt", "tf", "ft", "ff"].map(String::from);
    write_rows(path, &header, [vec![fmt(m.tt), fmt(m.tf), fmt(m.ft), fmt(m.ff)]])
}

/// Writes `report.json` under `out_dir` and, per split, a directory with one
/// `curve_<strategy>.csv` per strategy, `confusion.csv` and `activations.csv`.
/// Returns every path written.
pub fn export_report(
    report: &Report,
    activations: &BTreeMap<String, Vec<ActivationRow>>,
    out_dir: &Path,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let mut written = Vec::new();
    let json_path = out_dir.join("report.json");
    fs::write(&json_path, report.to_json()?).map_err(io_err(&json_path))?;
    written.push(json_path);
    for summary in &report.splits {
        let dir = out_dir.join(&summary.split);
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        for result in report.results.iter().filter(|r| r.split == summary.split) {
            let path = dir.join(format!("curve_{}.csv", result.strategy));
            write_curve_csv(&result.curve(), &path)?;
            written.push(path);
        }
        let path = dir.join("confusion.csv");
        write_confusion(&summary.confusion, &path)?;
        written.push(path);
        if let Some(rows) = activations.get(&summary.split) {
            let path = dir.join("activations.csv");
            write_activations(rows, &path)?;
            written.push(path);
        }
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounding() {
        assert_eq!(round_sig(0.882352941, 6), 0.882353);
        assert_eq!(round_sig(0.0, 6), 0.0);
        assert_eq!(round_sig(123456789.0, 3), 123000000.0);
        assert_eq!(fmt(0.5), "0.5");
    }

    #[test]
    fn curve_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.csv");
        let curve = Curve {
            strategy: StrategyKind::ProbThreshold,
            points: vec![
                CurvePoint {
                    knob: None,
                    savings: 0.0,
                    accuracy: 0.875,
                },
                CurvePoint {
                    knob: Some(0.7),
                    savings: 1.0 - 0.16 / 1.36,
                    accuracy: 2.0 / 3.0,
                },
            ],
        };
        write_curve_csv(&curve, &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("knob,savings,accuracy\n,0,0.875\n0.7,0.882353,0.666667\n"));
        let back = read_curve_csv(&path, StrategyKind::ProbThreshold).unwrap();
        assert_eq!(back.points.len(), 2);
        assert_eq!(back.points[1].savings, 0.882353);
        assert_eq!(back.points[0].knob, None);
    }

    #[test]
    fn ragged_activations_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let row = |id, n| ActivationRow {
            id,
            label: 0,
            bow_correct: true,
            lstm_correct: false,
            decision_prob: 0.1,
            hidden: vec![0.0; n],
        };
        let err = write_activations(&[row(0, 2), row(1, 3)], &dir.path().join("a.csv"));
        assert!(matches!(err, Err(EvalError::Alignment(_))));
    }
}
