use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::config::KvMap;
use crate::error::{Error, Result};
use crate::models::Family;
use crate::tensorio::FeatureType;

/// Mean and population standard deviation, `sqrt(sum((x - mean)^2) / n)`.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Accuracy over one split.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    /// `None` for classes absent from the split.
    pub per_class: Vec<Option<f64>>,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
    pub mean_loss: f64,
}

impl Evaluation {
    pub fn from_predictions(labels: &[usize], predictions: &[usize], classes: usize) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::EmptySplit("evaluation".into()));
        }
        if labels.len() != predictions.len() {
            return Err(Error::shape("evaluate", "labels and predictions differ in length"));
        }
        let mut confusion = vec![vec![0usize; classes]; classes];
        for (&y, &p) in labels.iter().zip(predictions) {
            if y >= classes || p >= classes {
                return Err(Error::shape(
                    "evaluate",
                    format!("class index out of range for {classes} classes"),
                ));
            }
            confusion[y][p] += 1;
        }
        let correct: usize = (0..classes).map(|c| confusion[c][c]).sum();
        let per_class = confusion
            .iter()
            .enumerate()
            .map(|(c, row)| {
                let n: usize = row.iter().sum();
                (n > 0).then(|| row[c] as f64 / n as f64)
            })
            .collect();
        Ok(Self {
            accuracy: correct as f64 / labels.len() as f64,
            per_class,
            confusion,
            mean_loss: f64::NAN,
        })
    }

    pub fn total(&self) -> usize {
        self.confusion.iter().flatten().sum()
    }

    pub fn to_text(&self, class_names: &[String]) -> String {
        let mut out = format!("accuracy\t{:.6}\n", self.accuracy);
        for (c, acc) in self.per_class.iter().enumerate() {
            let name = class_names.get(c).map_or("?", String::as_str);
            match acc {
                Some(a) => writeln!(out, "class\t{c}\t{name}\t{a:.6}").unwrap(),
                None => writeln!(out, "class\t{c}\t{name}\t-").unwrap(),
            }
        }
        out.push_str("confusion\n");
        for row in &self.confusion {
            let cells: Vec<String> = row.iter().map(usize::to_string).collect();
            writeln!(out, "{}", cells.join("\t")).unwrap();
        }
        out
    }
}

/// Test accuracies of one (family, feature) pair over several seeds.
#[derive(Clone, Debug, PartialEq)]
pub struct RunReport {
    pub family: Family,
    pub feature: FeatureType,
    pub seeds: Vec<u64>,
    pub accuracies: Vec<f64>,
    /// Per-seed test evaluations, when available.
    pub evaluations: Vec<Evaluation>,
}

impl RunReport {
    pub fn mean(&self) -> f64 {
        mean_std(&self.accuracies).0
    }

    pub fn std(&self) -> f64 {
        mean_std(&self.accuracies).1
    }

    /// `mean±std` in percent with two decimals.
    pub fn cell(&self) -> String {
        let (m, s) = mean_std(&self.accuracies);
        format!("{:.2}±{:.2}", 100.0 * m, 100.0 * s)
    }
}

pub fn feature_label(f: FeatureType) -> &'static str {
    match f {
        FeatureType::Cartesian => "Cartesian",
        FeatureType::Angular => "Angular",
        FeatureType::I3d => "I3D features",
        FeatureType::Tokens => "Transcriptions",
    }
}

/// Test accuracy table: one row per feature type, one column per family,
/// cells `mean±std` in percent over seeds. `majority` adds the reference line.
pub fn accuracy_table(reports: &[RunReport], majority: Option<f64>) -> String {
    let families: Vec<Family> = Family::ALL
        .into_iter()
        .filter(|f| reports.iter().any(|r| r.family == *f))
        .collect();
    let features: Vec<FeatureType> = FeatureType::ALL
        .into_iter()
        .filter(|f| reports.iter().any(|r| r.feature == *f))
        .collect();
    let mut rows = vec![std::iter::once(String::new())
        .chain(families.iter().map(|f| f.title().to_string()))
        .collect::<Vec<_>>()];
    for &feat in &features {
        let mut row = vec![feature_label(feat).to_string()];
        for &fam in &families {
            let cell = reports
                .iter()
                .find(|r| r.family == fam && r.feature == feat)
                .map_or_else(|| "-".to_string(), RunReport::cell);
            row.push(cell);
        }
        rows.push(row);
    }
    let ncols = rows[0].len();
    let widths: Vec<usize> = (0..ncols)
        .map(|j| rows.iter().map(|r| r[j].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in &rows {
        let cells: Vec<String> = row
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(j, (c, &w))| {
                let pad = w - c.chars().count();
                if j == 0 {
                    format!("{c}{}", " ".repeat(pad))
                } else {
                    format!("{}{c}", " ".repeat(pad))
                }
            })
            .collect();
        out.push_str(cells.join("  ").trim_end());
        out.push('\n');
    }
    let n = reports.iter().map(|r| r.accuracies.len()).max().unwrap_or(0);
    writeln!(out, "Test accuracy (%), mean±std over {n} run(s), population std.").unwrap();
    if let Some(m) = majority {
        writeln!(out, "Majority-class accuracy: {:.2}%", 100.0 * m).unwrap();
    }
    out
}

pub const REPORT_FILE: &str = "report.txt";

/// Summary keys a run directory's report carries after its table block.
#[derive(Clone, Debug, PartialEq)]
pub struct RunRecord {
    pub family: Family,
    pub feature: FeatureType,
    pub seed: u64,
    pub test_accuracy: f64,
    pub val_accuracy: f64,
    pub best_epoch: usize,
    pub majority_accuracy: f64,
}

impl RunRecord {
    pub fn to_kv(&self) -> KvMap {
        let mut m = KvMap::new();
        m.set("family", self.family);
        m.set("feature", self.feature.name());
        m.set("seed", self.seed);
        m.set("test_accuracy", self.test_accuracy);
        m.set("val_accuracy", self.val_accuracy);
        m.set("best_epoch", self.best_epoch);
        m.set("majority_accuracy", self.majority_accuracy);
        m
    }

    /// Reads the `# key=value` lines of a report.
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let kv: KvMap = text
            .lines()
            .filter_map(|l| l.strip_prefix("# "))
            .filter_map(|l| l.split_once('='))
            .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
            .collect();
        let get = |k: &str| -> Result<&str> {
            kv.get(k)
                .ok_or_else(|| Error::parse(origin, format!("report lacks {k}")))
        };
        let num = |k: &str| -> Result<f64> {
            get(k)?
                .parse()
                .map_err(|_| Error::parse(origin, format!("bad value for {k}")))
        };
        Ok(Self {
            family: get("family")?.parse()?,
            feature: get("feature")?.parse()?,
            seed: num("seed")? as u64,
            test_accuracy: num("test_accuracy")?,
            val_accuracy: num("val_accuracy")?,
            best_epoch: num("best_epoch")? as usize,
            majority_accuracy: num("majority_accuracy")?,
        })
    }

    pub fn load(run_dir: impl AsRef<Path>) -> Result<Self> {
        let path = run_dir.as_ref().join(REPORT_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Self::parse(&text, &path.display().to_string())
    }
}

/// Groups run records by (family, feature), keeping seed order as given.
pub fn aggregate(records: &[RunRecord]) -> Vec<RunReport> {
    let mut groups: BTreeMap<(Family, FeatureType), RunReport> = BTreeMap::new();
    for r in records {
        let g = groups.entry((r.family, r.feature)).or_insert_with(|| RunReport {
            family: r.family,
            feature: r.feature,
            seeds: Vec::new(),
            accuracies: Vec::new(),
            evaluations: Vec::new(),
        });
        g.seeds.push(r.seed);
        g.accuracies.push(r.test_accuracy);
    }
    groups.into_values().collect()
}

/// Table block plus the majority reference over a set of run directories.
pub fn report_runs(dirs: &[impl AsRef<Path>]) -> Result<String> {
    let records = dirs.iter().map(RunRecord::load).collect::<Result<Vec<_>>>()?;
    let majority = records.first().map(|r| r.majority_accuracy);
    Ok(accuracy_table(&aggregate(&records), majority))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn population_std_by_hand() {
        let (m, s) = mean_std(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - (2.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert!((s - 0.8165).abs() < 1e-4);
        assert_eq!(mean_std(&[0.4]), (0.4, 0.0));
    }

    #[test]
    fn perfect_and_constant_predictors() {
        let labels = [0, 1, 2, 2, 1, 0, 0];
        let e = Evaluation::from_predictions(&labels, &labels, 3).unwrap();
        assert_eq!(e.accuracy, 1.0);
        for (i, row) in e.confusion.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                assert!(i == j || v == 0);
            }
        }
        let e = Evaluation::from_predictions(&labels, &[0; 7], 3).unwrap();
        assert!((e.accuracy - 3.0 / 7.0).abs() < 1e-15);
        assert_eq!(e.per_class, vec![Some(1.0), Some(0.0), Some(0.0)]);
        let sums: Vec<usize> = e.confusion.iter().map(|r| r.iter().sum()).collect();
        assert_eq!(sums, vec![3, 2, 2]);
        assert!(Evaluation::from_predictions(&[], &[], 3).is_err());
    }

    #[test]
    fn absent_class_has_no_accuracy() {
        let e = Evaluation::from_predictions(&[0, 0], &[0, 1], 3).unwrap();
        assert_eq!(e.per_class[2], None);
    }

    #[test]
    fn table_layout() {
        let r = RunReport {
            family: Family::Transformer,
            feature: FeatureType::I3d,
            seeds: vec![0, 1, 2],
            accuracies: vec![0.01, 0.02, 0.03],
            evaluations: vec![],
        };
        let t = accuracy_table(&[r], Some(0.25));
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines[0].trim(), "Transformer");
        assert!(lines[1].starts_with("I3D features"));
        assert!(lines[1].ends_with("2.00±0.82"));
        assert_eq!(lines[3], "Majority-class accuracy: 25.00%");
    }

    #[test]
    fn record_round_trip() {
        let r = RunRecord {
            family: Family::LstmAttn,
            feature: FeatureType::Angular,
            seed: 7,
            test_accuracy: 0.5,
            val_accuracy: 0.625,
            best_epoch: 3,
            majority_accuracy: 0.25,
        };
        let text: String = r.to_kv().iter().map(|(k, v)| format!("# {k}={v}\n")).collect();
        assert_eq!(RunRecord::parse(&format!("table\n{text}"), "t").unwrap(), r);
    }
}
