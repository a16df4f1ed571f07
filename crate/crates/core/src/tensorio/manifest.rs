//! Line-oriented dataset manifest.
//!
//! ```text
//! classes<TAB>name0,name1,...
//! feature_type<TAB>cartesian|angular|i3d|tokens
//! id<TAB>relative/path.stf<TAB>label<TAB>train|val|test
//! ```

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::{read_tensor, read_tensor_dims, Matrix};
use crate::error::{Error, Result};

pub const CARTESIAN_WIDTH: usize = 150;
pub const ANGULAR_WIDTH: usize = 288;
pub const I3D_WIDTH: usize = 1024;
/// Token sequences are stored as a single column of ids.
pub const TOKEN_COLUMN_WIDTH: usize = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FeatureType {
    Cartesian,
    Angular,
    I3d,
    Tokens,
}

impl FeatureType {
    pub const ALL: [FeatureType; 4] = [
        FeatureType::Cartesian,
        FeatureType::Angular,
        FeatureType::I3d,
        FeatureType::Tokens,
    ];

    /// Column count of the stored feature file.
    pub fn width(self) -> usize {
        match self {
            FeatureType::Cartesian => CARTESIAN_WIDTH,
            FeatureType::Angular => ANGULAR_WIDTH,
            FeatureType::I3d => I3D_WIDTH,
            FeatureType::Tokens => TOKEN_COLUMN_WIDTH,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FeatureType::Cartesian => "cartesian",
            FeatureType::Angular => "angular",
            FeatureType::I3d => "i3d",
            FeatureType::Tokens => "tokens",
        }
    }
}

impl fmt::Display for FeatureType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FeatureType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FeatureType::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::Manifest(format!("unknown feature type {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Split::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::Manifest(format!("unknown split {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestEntry {
    pub id: String,
    pub path: PathBuf,
    pub label: usize,
    pub split: Split,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Manifest {
    pub class_names: Vec<String>,
    pub feature_type: FeatureType,
    pub entries: Vec<ManifestEntry>,
}

/// One video's features with its label.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub id: String,
    pub features: Matrix<f32>,
    pub label: usize,
    pub split: Split,
}

impl Sample {
    /// Token ids stored in the single feature column.
    pub fn token_ids(&self) -> Result<Vec<usize>> {
        if self.features.cols() != TOKEN_COLUMN_WIDTH {
            return Err(Error::WidthMismatch {
                id: self.id.clone(),
                expected: TOKEN_COLUMN_WIDTH,
                found: self.features.cols(),
            });
        }
        self.features
            .as_slice()
            .iter()
            .map(|&v| {
                if v >= 0.0 && v.fract() == 0.0 {
                    Ok(v as usize)
                } else {
                    Err(Error::Manifest(format!(
                        "{}: token column holds non-integer value {v}",
                        self.id
                    )))
                }
            })
            .collect()
    }
}

impl Manifest {
    pub fn classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, first) = lines
            .next()
            .ok_or_else(|| Error::parse(origin, "missing classes line"))?;
        let class_names: Vec<String> = match first.split_once('\t') {
            Some(("classes", names)) => names.split(',').map(str::to_owned).collect(),
            _ => return Err(Error::parse(format!("{origin}:1"), "expected classes<TAB>...")),
        };
        let (_, second) = lines
            .next()
            .ok_or_else(|| Error::parse(origin, "missing feature_type line"))?;
        let feature_type = match second.split_once('\t') {
            Some(("feature_type", t)) => t.trim().parse()?,
            _ => return Err(Error::parse(format!("{origin}:2"), "expected feature_type<TAB>...")),
        };
        let mut entries = Vec::new();
        for (n, line) in lines {
            let fields: Vec<&str> = line.split('\t').collect();
            let [id, path, label, split] = fields[..] else {
                return Err(Error::parse(
                    format!("{origin}:{}", n + 1),
                    "expected id<TAB>path<TAB>label<TAB>split",
                ));
            };
            let label = label
                .trim()
                .parse()
                .map_err(|_| Error::parse(format!("{origin}:{}", n + 1), "label not an integer"))?;
            entries.push(ManifestEntry {
                id: id.to_owned(),
                path: PathBuf::from(path),
                label,
                split: split.trim().parse()?,
            });
        }
        let manifest = Manifest {
            class_names,
            feature_type,
            entries,
        };
        manifest.check_labels()?;
        Ok(manifest)
    }

    fn check_labels(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for name in &self.class_names {
            if name.is_empty() || !seen.insert(name.as_str()) {
                return Err(Error::Manifest(format!("duplicate or empty class name {name:?}")));
            }
        }
        let mut ids = HashSet::new();
        for e in &self.entries {
            if e.label >= self.classes() {
                return Err(Error::LabelOutOfRange {
                    id: e.id.clone(),
                    label: e.label,
                    classes: self.classes(),
                });
            }
            if !ids.insert(e.id.as_str()) {
                return Err(Error::Manifest(format!("duplicate entry id {:?}", e.id)));
            }
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "classes\t{}\nfeature_type\t{}\n",
            self.class_names.join(","),
            self.feature_type
        );
        for e in &self.entries {
            out.push_str(&format!("{}\t{}\t{}\t{}\n", e.id, e.path.display(), e.label, e.split));
        }
        out
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn split_entries(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }

    pub fn split_counts(&self) -> SplitCounts {
        let mut c = SplitCounts::default();
        for e in &self.entries {
            match e.split {
                Split::Train => c.train += 1,
                Split::Val => c.val += 1,
                Split::Test => c.test += 1,
            }
        }
        c
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SplitCounts {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl fmt::Display for SplitCounts {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "train={} val={} test={}", self.train, self.val, self.test)
    }
}

/// A validated manifest plus the directory its relative paths resolve from.
/// Feature payloads are read on demand.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub manifest: Manifest,
    pub root: PathBuf,
    pub counts: SplitCounts,
}

impl Dataset {
    pub fn resolve(&self, entry: &ManifestEntry) -> PathBuf {
        self.root.join(&entry.path)
    }

    pub fn load_entry(&self, entry: &ManifestEntry) -> Result<Sample> {
        let features = read_tensor(self.resolve(entry))?;
        if features.rows() == 0 {
            return Err(Error::Manifest(format!("{}: zero-length sequence", entry.id)));
        }
        Ok(Sample {
            id: entry.id.clone(),
            features,
            label: entry.label,
            split: entry.split,
        })
    }

    pub fn load_split(&self, split: Split) -> Result<Vec<Sample>> {
        self.manifest.split_entries(split).map(|e| self.load_entry(e)).collect()
    }
}

/// Parses and validates a manifest: labels in range, every referenced file
/// present with the declared feature width.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let manifest = Manifest::parse(&text, &path.display().to_string())?;
    let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let expected = manifest.feature_type.width();
    for e in &manifest.entries {
        let file = root.join(&e.path);
        if !file.is_file() {
            return Err(Error::MissingFile {
                id: e.id.clone(),
                path: file,
            });
        }
        let (rows, cols) = read_tensor_dims(&file)?;
        if cols != expected {
            return Err(Error::WidthMismatch {
                id: e.id.clone(),
                expected,
                found: cols,
            });
        }
        if rows == 0 {
            return Err(Error::Manifest(format!("{}: zero-length sequence", e.id)));
        }
    }
    let counts = manifest.split_counts();
    Ok(Dataset { manifest, root, counts })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensorio::write_tensor;

    fn ten_classes() -> String {
        (0..10).map(|i| format!("c{i}")).collect::<Vec<_>>().join(",")
    }

    fn setup(width: usize, entries: &[(&str, usize, &str)]) -> (tempfile::TempDir, PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let mut text = format!("classes\t{}\nfeature_type\tcartesian\n", ten_classes());
        for (id, label, split) in entries {
            write_tensor(dir.path().join(format!("{id}.stf")), &Matrix::<f32>::zeros(4, width)).unwrap();
            text.push_str(&format!("{id}\t{id}.stf\t{label}\t{split}\n"));
        }
        let path = dir.path().join("manifest.txt");
        fs::write(&path, text).unwrap();
        (dir, path)
    }

    #[test]
    fn loads_valid_manifest() {
        let (_dir, path) = setup(150, &[("a", 0, "train"), ("b", 9, "val"), ("c", 3, "test")]);
        let ds = load_manifest(&path).unwrap();
        assert_eq!(ds.manifest.entries.len(), 3);
        assert_eq!(ds.manifest.classes(), 10);
        assert_eq!(
            ds.counts,
            SplitCounts {
                train: 1,
                val: 1,
                test: 1
            }
        );
        let s = ds.load_split(Split::Val).unwrap();
        assert_eq!(s[0].label, 9);
        assert_eq!(s[0].features.shape(), (4, 150));
        assert_eq!(Manifest::parse(&ds.manifest.to_text(), "x").unwrap(), ds.manifest);
    }

    #[test]
    fn rejects_label_out_of_range() {
        let (_dir, path) = setup(150, &[("a", 10, "train")]);
        let err = load_manifest(&path).unwrap_err();
        assert!(matches!(err, Error::LabelOutOfRange { label: 10, .. }));
        assert!(err.to_string().contains("label out of range"));
    }

    #[test]
    fn rejects_width_mismatch() {
        let (_dir, path) = setup(288, &[("a", 1, "train")]);
        let err = load_manifest(&path).unwrap_err();
        assert!(err.to_string().contains("width mismatch"), "{err}");
    }

    #[test]
    fn rejects_missing_file() {
        let (dir, path) = setup(150, &[("a", 1, "train")]);
        fs::remove_file(dir.path().join("a.stf")).unwrap();
        assert!(matches!(load_manifest(&path), Err(Error::MissingFile { .. })));
    }

    #[test]
    fn rejects_duplicate_classes_and_bad_split() {
        assert!(Manifest::parse("classes\ta,a\nfeature_type\ti3d\n", "m").is_err());
        assert!(Manifest::parse("classes\ta,b\nfeature_type\ti3d\nx\tx.stf\t0\tdev\n", "m").is_err());
        assert!(Manifest::parse("classes\ta,b\nfeature_type\tvideo\n", "m").is_err());
    }
}
