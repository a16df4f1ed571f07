//! Deterministic class-separable corpora in every feature format.
//!
//! Pose samples animate each bone with a class-specific swing trajectory,
//! run it through forward kinematics and add position noise, so the
//! Cartesian and angular variants of one sample describe the same motion.
//! I3D-style samples walk around a class mean vector. Token samples draw
//! words from a class keyword mixture and encode them with a tokenizer
//! trained on the training split.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::config::KvMap;
use crate::error::{Error, Result};
use crate::posefeat::{
    cartesian_to_angular, encode_bone_rotations, forward_kinematics, frames_to_matrix, geometry, swing_rotation,
    KeypointFrame, SkeletonSpec,
};
use crate::tensorio::{write_tensor, FeatureType, Manifest, ManifestEntry, Matrix, Sample, Split, I3D_WIDTH};
use crate::tokenizer::{train_vocab, TokenizerOptions, Vocab};

pub const MANIFEST_FILE: &str = "manifest.txt";
pub const SKELETON_FILE: &str = "skeleton.txt";
pub const VOCAB_FILE: &str = "vocab.txt";
pub const TEXTS_FILE: &str = "texts.tsv";
pub const FEATURE_DIR: &str = "features";

/// Position noise per unit of `noise` for pose features (skeleton units).
const POSE_NOISE_SCALE: f64 = 0.1;
const SWING_AMPLITUDE: f64 = 0.15;
const KEYWORDS_PER_CLASS: usize = 8;
const FILLER_WORDS: usize = 40;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Balance {
    Uniform,
    /// Class 0 gets three times the samples of each other class; with ten
    /// classes that is exactly a quarter of the corpus.
    Majority25,
}

impl Balance {
    pub fn name(self) -> &'static str {
        match self {
            Balance::Uniform => "uniform",
            Balance::Majority25 => "majority25",
        }
    }
}

impl std::str::FromStr for Balance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(Balance::Uniform),
            "majority25" => Ok(Balance::Majority25),
            _ => Err(Error::Config(format!("unknown balance {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthSpec {
    pub classes: usize,
    pub train_per_class: usize,
    pub val_per_class: usize,
    pub test_per_class: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub feature: FeatureType,
    /// Class distinctness in (0, 1].
    pub separation: f64,
    /// Relative noise: position jitter for poses, per-dimension noise for
    /// I3D-style rows, off-topic word probability for tokens.
    pub noise: f64,
    pub seed: u64,
    pub balance: Balance,
    /// Tokenizer target for token corpora.
    pub vocab_size: usize,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            classes: 10,
            train_per_class: 24,
            val_per_class: 8,
            test_per_class: 8,
            min_len: 24,
            max_len: 48,
            feature: FeatureType::Cartesian,
            separation: 0.5,
            noise: 0.3,
            seed: 0,
            balance: Balance::Uniform,
            vocab_size: crate::models::DEFAULT_VOCAB_SIZE,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.classes < 2 {
            return bad("synthetic corpora need at least 2 classes");
        }
        if self.min_len < 2 || self.max_len < self.min_len {
            return bad("need 2 <= min_len <= max_len");
        }
        if !(self.separation > 0.0 && self.separation <= 1.0) {
            return bad("separation must lie in (0, 1]");
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return bad("noise must be finite and non-negative");
        }
        if self.train_per_class + self.val_per_class + self.test_per_class == 0 {
            return bad("no samples requested");
        }
        if self.feature == FeatureType::Tokens && self.vocab_size < crate::tokenizer::MIN_VOCAB {
            return Err(Error::VocabTooSmall(self.vocab_size));
        }
        Ok(())
    }

    pub fn from_kv(m: &KvMap) -> Result<Self> {
        let d = Self::default();
        let spec = Self {
            classes: m.parse_or("classes", d.classes)?,
            train_per_class: m.parse_or("train_per_class", d.train_per_class)?,
            val_per_class: m.parse_or("val_per_class", d.val_per_class)?,
            test_per_class: m.parse_or("test_per_class", d.test_per_class)?,
            min_len: m.parse_or("min_len", d.min_len)?,
            max_len: m.parse_or("max_len", d.max_len)?,
            feature: m.parse_or("feature", d.feature)?,
            separation: m.parse_or("separation", d.separation)?,
            noise: m.parse_or("noise", d.noise)?,
            seed: m.parse_or("seed", d.seed)?,
            balance: m.parse_or("balance", d.balance)?,
            vocab_size: m.parse_or("vocab_size", d.vocab_size)?,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_kv(&self) -> KvMap {
        let mut m = KvMap::new();
        m.set("classes", self.classes);
        m.set("train_per_class", self.train_per_class);
        m.set("val_per_class", self.val_per_class);
        m.set("test_per_class", self.test_per_class);
        m.set("min_len", self.min_len);
        m.set("max_len", self.max_len);
        m.set("feature", self.feature);
        m.set("separation", self.separation);
        m.set("noise", self.noise);
        m.set("seed", self.seed);
        m.set("balance", self.balance.name());
        m.set("vocab_size", self.vocab_size);
        m
    }

    fn per_class(&self, split: Split, class: usize) -> usize {
        let n = match split {
            Split::Train => self.train_per_class,
            Split::Val => self.val_per_class,
            Split::Test => self.test_per_class,
        };
        match (self.balance, class) {
            (Balance::Majority25, 0) => 3 * n,
            _ => n,
        }
    }
}

/// splitmix64 finalizer, used to derive independent sub-seeds.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn sub_rng(seed: u64, parts: &[u64]) -> ChaCha8Rng {
    let s = parts.iter().fold(mix(seed), |acc, &p| mix(acc ^ p));
    ChaCha8Rng::seed_from_u64(s)
}

const STREAM_CLASS: u64 = 1;
const STREAM_SAMPLE: u64 = 2;
const STREAM_SHARED: u64 = 3;

#[derive(Clone, Debug)]
struct Slot {
    split: Split,
    class: usize,
    index: usize,
}

impl Slot {
    fn id(&self) -> String {
        format!("{}-c{:02}-{:04}", self.split.name(), self.class, self.index)
    }

    fn rng(&self, seed: u64) -> ChaCha8Rng {
        let split = Split::ALL.iter().position(|&s| s == self.split).unwrap_or(0) as u64;
        sub_rng(seed, &[STREAM_SAMPLE, split, self.class as u64, self.index as u64])
    }
}

fn slots(spec: &SynthSpec) -> Vec<Slot> {
    let mut out = Vec::new();
    for split in Split::ALL {
        for class in 0..spec.classes {
            for index in 0..spec.per_class(split, class) {
                out.push(Slot { split, class, index });
            }
        }
    }
    out
}

/// Per-bone swing parameters of one class: base polar and azimuth angles in
/// the parent bone's frame, plus the number of oscillation cycles.
struct PoseMotif {
    theta: Vec<f64>,
    phi: Vec<f64>,
    cycles: f64,
}

fn pose_motifs(spec: &SynthSpec, skel: &SkeletonSpec) -> Vec<PoseMotif> {
    let n = skel.num_joints();
    let mut shared = sub_rng(spec.seed, &[STREAM_SHARED]);
    let theta0: Vec<f64> = (0..n).map(|_| shared.random_range(0.45..0.9)).collect();
    let phi0: Vec<f64> = (0..n).map(|_| shared.random_range(-PI..PI)).collect();
    (0..spec.classes)
        .map(|c| {
            let mut g = sub_rng(spec.seed, &[STREAM_CLASS, c as u64]);
            let s = spec.separation;
            PoseMotif {
                theta: theta0
                    .iter()
                    .map(|&t| (t + s * g.random_range(-0.3..0.3)).clamp(0.2, 1.3))
                    .collect(),
                phi: phi0.iter().map(|&p| p + s * g.random_range(-0.8..0.8)).collect(),
                cycles: (1 + c % 3) as f64,
            }
        })
        .collect()
}

fn pose_sample(spec: &SynthSpec, skel: &SkeletonSpec, motif: &PoseMotif, rng: &mut ChaCha8Rng) -> Result<Matrix<f64>> {
    let t_len = rng.random_range(spec.min_len..=spec.max_len);
    let phase = rng.random_range(0.0..2.0 * PI);
    let n = skel.num_joints();
    let mut angular = Vec::with_capacity(t_len * 6 * skel.num_bones());
    let mut roots = Vec::with_capacity(t_len * 3 * skel.roots().len());
    let root_rest = [[0.0, 0.25, 0.05], [0.0, 0.0, 0.0]];
    for t in 0..t_len {
        let w = 2.0 * PI * motif.cycles * t as f64 / t_len as f64 + phase;
        let mut rotations = vec![geometry::identity::<f64>(); n];
        for &j in &skel.bone_list {
            let theta = motif.theta[j] + SWING_AMPLITUDE * w.sin();
            let phi = motif.phi[j] + SWING_AMPLITUDE * w.cos();
            let dir = [theta.cos(), theta.sin() * phi.cos(), theta.sin() * phi.sin()];
            rotations[j] = swing_rotation(skel, j, dir)?;
        }
        angular.extend(encode_bone_rotations(skel, &rotations));
        for r in 0..skel.roots().len() {
            roots.extend_from_slice(&root_rest[r % root_rest.len()]);
        }
    }
    let angular = Matrix::from_vec(t_len, 6 * skel.num_bones(), angular)?;
    let roots = Matrix::from_vec(t_len, 3 * skel.roots().len(), roots)?;
    let mut frames = forward_kinematics(&angular, skel, &roots)?;
    let sigma = spec.noise * POSE_NOISE_SCALE;
    if sigma > 0.0 {
        let normal = Normal::new(0.0, sigma).expect("positive sigma");
        for f in &mut frames {
            for p in &mut f.joints {
                for v in p.iter_mut() {
                    *v += normal.sample(rng);
                }
            }
        }
    }
    match spec.feature {
        FeatureType::Cartesian => frames_to_matrix(&frames),
        FeatureType::Angular => Ok(cartesian_to_angular::<f64>(&frames, skel)?.features),
        _ => unreachable!("pose_sample called for a non-pose feature"),
    }
}

fn i3d_means(spec: &SynthSpec) -> Vec<Vec<f64>> {
    (0..spec.classes)
        .map(|c| {
            let mut g = sub_rng(spec.seed, &[STREAM_CLASS, c as u64]);
            (0..I3D_WIDTH)
                .map(|_| spec.separation * g.sample::<f64, _>(rand_distr::StandardNormal))
                .collect()
        })
        .collect()
}

fn i3d_sample(spec: &SynthSpec, mean: &[f64], rng: &mut ChaCha8Rng) -> Matrix<f64> {
    let t_len = rng.random_range(spec.min_len..=spec.max_len);
    let step = Normal::new(0.0, 0.05).expect("valid");
    let mut walk = vec![0.0; I3D_WIDTH];
    let mut data = Vec::with_capacity(t_len * I3D_WIDTH);
    for _ in 0..t_len {
        for (k, w) in walk.iter_mut().enumerate() {
            *w += step.sample(rng);
            let noise = if spec.noise > 0.0 {
                spec.noise * rng.sample::<f64, _>(rand_distr::StandardNormal)
            } else {
                0.0
            };
            data.push(mean[k] + *w + noise);
        }
    }
    Matrix::from_vec(t_len, I3D_WIDTH, data).expect("sized above")
}

fn make_word(g: &mut ChaCha8Rng) -> String {
    const ONSETS: [&str; 16] = [
        "b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "ch", "sh",
    ];
    const VOWELS: [&str; 6] = ["a", "e", "i", "o", "u", "ai"];
    let syllables = g.random_range(2..=4);
    (0..syllables)
        .map(|_| {
            format!(
                "{}{}",
                ONSETS[g.random_range(0..ONSETS.len())],
                VOWELS[g.random_range(0..VOWELS.len())]
            )
        })
        .collect()
}

struct Lexicon {
    keywords: Vec<Vec<String>>,
    filler: Vec<String>,
}

fn lexicon(spec: &SynthSpec) -> Lexicon {
    let mut shared = sub_rng(spec.seed, &[STREAM_SHARED]);
    let filler = (0..FILLER_WORDS).map(|_| make_word(&mut shared)).collect();
    let keywords = (0..spec.classes)
        .map(|c| {
            let mut g = sub_rng(spec.seed, &[STREAM_CLASS, c as u64]);
            (0..KEYWORDS_PER_CLASS).map(|_| make_word(&mut g)).collect()
        })
        .collect();
    Lexicon { keywords, filler }
}

fn text_sample(spec: &SynthSpec, lex: &Lexicon, class: usize, rng: &mut ChaCha8Rng) -> String {
    let words = rng.random_range(spec.min_len..=spec.max_len);
    let keyword_p = 0.2 + 0.6 * spec.separation;
    let off_topic = spec.noise.min(1.0);
    (0..words)
        .map(|_| {
            if rng.random_bool(keyword_p) {
                let c = if rng.random_bool(off_topic) {
                    rng.random_range(0..spec.classes)
                } else {
                    class
                };
                let k = &lex.keywords[c];
                k[rng.random_range(0..k.len())].clone()
            } else {
                lex.filler[rng.random_range(0..lex.filler.len())].clone()
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// A generated corpus held in memory.
#[derive(Clone, Debug)]
pub struct Corpus {
    pub spec: SynthSpec,
    pub class_names: Vec<String>,
    pub samples: Vec<Sample>,
    pub skeleton: Option<SkeletonSpec>,
    pub vocab: Option<Vocab>,
    /// Source text per sample, token corpora only.
    pub texts: Vec<String>,
}

impl Corpus {
    pub fn split(&self, split: Split) -> Vec<Sample> {
        self.samples.iter().filter(|s| s.split == split).cloned().collect()
    }
}

pub fn synthesize(spec: &SynthSpec) -> Result<Corpus> {
    spec.validate()?;
    let slots = slots(spec);
    let class_names = (0..spec.classes).map(|c| format!("topic{c}")).collect();
    let mut skeleton = None;
    let mut vocab = None;
    let mut texts = Vec::new();
    let features: Vec<Matrix<f32>> = match spec.feature {
        FeatureType::Cartesian | FeatureType::Angular => {
            let skel = SkeletonSpec::standard();
            let motifs = pose_motifs(spec, &skel);
            let out = slots
                .par_iter()
                .map(|s| pose_sample(spec, &skel, &motifs[s.class], &mut s.rng(spec.seed)).map(|m| m.cast()))
                .collect::<Result<Vec<_>>>()?;
            skeleton = Some(skel);
            out
        }
        FeatureType::I3d => {
            let means = i3d_means(spec);
            slots
                .par_iter()
                .map(|s| i3d_sample(spec, &means[s.class], &mut s.rng(spec.seed)).cast())
                .collect()
        }
        FeatureType::Tokens => {
            let lex = lexicon(spec);
            texts = slots
                .par_iter()
                .map(|s| text_sample(spec, &lex, s.class, &mut s.rng(spec.seed)))
                .collect();
            let train_texts: Vec<&str> = slots
                .iter()
                .zip(&texts)
                .filter(|(s, _)| s.split == Split::Train)
                .map(|(_, t)| t.as_str())
                .collect();
            let corpus = if train_texts.is_empty() {
                texts.iter().map(String::as_str).collect()
            } else {
                train_texts
            };
            let v = train_vocab(&corpus, spec.vocab_size, TokenizerOptions::default())?;
            let out = texts
                .iter()
                .map(|t| {
                    let mut ids = v.encode(t);
                    ids.truncate(spec.max_len);
                    let n = ids.len();
                    Matrix::from_vec(n, 1, ids.into_iter().map(|i| i as f32).collect())
                })
                .collect::<Result<Vec<_>>>()?;
            vocab = Some(v);
            out
        }
    };
    let samples = slots
        .iter()
        .zip(features)
        .map(|(s, features)| Sample {
            id: s.id(),
            features,
            label: s.class,
            split: s.split,
        })
        .collect();
    Ok(Corpus {
        spec: spec.clone(),
        class_names,
        samples,
        skeleton,
        vocab,
        texts,
    })
}

/// Writes features under `features/`, the manifest, and the skeleton or
/// vocabulary the features depend on. Returns the manifest.
pub fn write_corpus(corpus: &Corpus, dir: &Path) -> Result<Manifest> {
    let feat_dir = dir.join(FEATURE_DIR);
    fs::create_dir_all(&feat_dir).map_err(|e| Error::io(&feat_dir, e))?;
    corpus
        .samples
        .par_iter()
        .map(|s| write_tensor(feat_dir.join(format!("{}.stf", s.id)), &s.features))
        .collect::<Result<Vec<_>>>()?;
    let manifest = Manifest {
        class_names: corpus.class_names.clone(),
        feature_type: corpus.spec.feature,
        entries: corpus
            .samples
            .iter()
            .map(|s| ManifestEntry {
                id: s.id.clone(),
                path: PathBuf::from(FEATURE_DIR).join(format!("{}.stf", s.id)),
                label: s.label,
                split: s.split,
            })
            .collect(),
    };
    manifest.write(dir.join(MANIFEST_FILE))?;
    if let Some(skel) = &corpus.skeleton {
        skel.write(dir.join(SKELETON_FILE))?;
    }
    if let Some(v) = &corpus.vocab {
        v.save(dir.join(VOCAB_FILE))?;
        let mut text = String::new();
        for (s, t) in corpus.samples.iter().zip(&corpus.texts) {
            text.push_str(&format!("{}\t{}\n", s.id, t));
        }
        let path = dir.join(TEXTS_FILE);
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    }
    Ok(manifest)
}

pub fn generate(spec: &SynthSpec, dir: &Path) -> Result<Manifest> {
    write_corpus(&synthesize(spec)?, dir)
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabelDistribution {
    pub fractions: Vec<f64>,
    pub majority_class: usize,
    /// Accuracy of always predicting the majority class.
    pub majority_accuracy: f64,
}

pub fn label_distribution(manifest: &Manifest) -> Result<LabelDistribution> {
    if manifest.entries.is_empty() {
        return Err(Error::EmptyManifest);
    }
    let mut counts = vec![0usize; manifest.classes()];
    for e in &manifest.entries {
        counts[e.label] += 1;
    }
    let total = manifest.entries.len() as f64;
    let fractions: Vec<f64> = counts.iter().map(|&n| n as f64 / total).collect();
    let majority_class = crate::models::predict(&fractions);
    Ok(LabelDistribution {
        majority_accuracy: fractions[majority_class],
        fractions,
        majority_class,
    })
}

/// Fixed-width summary used by the nearest-class-mean baseline: the time
/// mean of the feature rows, or a normalized id histogram for tokens.
fn summary(s: &Sample, feature: FeatureType, ids: usize) -> Vec<f64> {
    if feature == FeatureType::Tokens {
        let mut h = vec![0.0; ids];
        for &v in s.features.as_slice() {
            h[v as usize] += 1.0;
        }
        let n = s.features.rows().max(1) as f64;
        return h.into_iter().map(|v| v / n).collect();
    }
    let mut m = vec![0.0; s.features.cols()];
    for t in 0..s.features.rows() {
        for (a, &v) in m.iter_mut().zip(s.features.row(t)) {
            *a += v as f64;
        }
    }
    let n = s.features.rows() as f64;
    m.into_iter().map(|v| v / n).collect()
}

/// Test accuracy of classifying each sequence summary by its nearest
/// training class mean.
pub fn nearest_class_mean_accuracy(
    train: &[Sample],
    test: &[Sample],
    classes: usize,
    feature: FeatureType,
) -> Result<f64> {
    if train.is_empty() || test.is_empty() {
        return Err(Error::EmptySplit("nearest-class-mean".into()));
    }
    let ids = if feature == FeatureType::Tokens {
        train
            .iter()
            .chain(test)
            .flat_map(|s| s.features.as_slice().iter().map(|&v| v as usize + 1))
            .max()
            .unwrap_or(1)
    } else {
        0
    };
    let width = summary(&train[0], feature, ids).len();
    let mut means = vec![vec![0.0; width]; classes];
    let mut counts = vec![0usize; classes];
    for s in train {
        for (a, v) in means[s.label].iter_mut().zip(summary(s, feature, ids)) {
            *a += v;
        }
        counts[s.label] += 1;
    }
    for (m, &n) in means.iter_mut().zip(&counts) {
        if n > 0 {
            m.iter_mut().for_each(|v| *v /= n as f64);
        }
    }
    let correct = test
        .iter()
        .filter(|s| {
            let x = summary(s, feature, ids);
            let dist: Vec<f64> = means
                .iter()
                .zip(&counts)
                .map(|(m, &n)| {
                    if n == 0 {
                        f64::INFINITY
                    } else {
                        -m.iter().zip(&x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
                    }
                })
                .map(|d| if d.is_infinite() { f64::NEG_INFINITY } else { d })
                .collect();
            crate::models::predict(&dist) == s.label
        })
        .count();
    Ok(correct as f64 / test.len() as f64)
}

/// Frames of a Cartesian sample, for checks that need joint positions.
pub fn cartesian_frames(sample: &Sample) -> Result<Vec<KeypointFrame<f64>>> {
    crate::posefeat::matrix_to_frames(&sample.features.cast())
}
