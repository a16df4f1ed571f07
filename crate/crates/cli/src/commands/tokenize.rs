use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, Subcommand};
use signtopic_core::config::KvMap;
use signtopic_core::tensorio::{write_tensor, FeatureType, Manifest, ManifestEntry, Split};
use signtopic_core::tokenizer::{train_vocab, TokenizerOptions, Vocab};
use signtopic_core::{Error, Matrix32};

use crate::settings::{echo, echo_path_for_dir, flag, parsed, required, resolve, switch, write_text, Common};
use crate::{CliError, CliResult};

#[derive(Args, Debug)]
pub struct TokenizeArgs {
    #[command(subcommand)]
    pub action: Action,
}

#[derive(Debug, Subcommand)]
pub enum Action {
    /// Learn a vocabulary from a text corpus, one sentence per line.
    Train(TrainArgs),
    /// Text lines to space-separated ids.
    Encode(CodecArgs),
    /// Space-separated id lines back to text.
    Decode(CodecArgs),
    /// Encode a labelled text table into a token-id manifest.
    Corpus(CorpusArgs),
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long, value_name = "FILE")]
    pub corpus: Option<PathBuf>,
    /// Target vocabulary size, specials included (default 8000).
    #[arg(long)]
    pub size: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub lowercase: bool,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug)]
pub struct CodecArgs {
    #[arg(long, value_name = "FILE")]
    pub vocab: Option<PathBuf>,
    /// Input lines; stdin when absent.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Output file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug)]
pub struct CorpusArgs {
    #[arg(long, value_name = "FILE")]
    pub vocab: Option<PathBuf>,
    /// Tab-separated `id label split text` lines.
    #[arg(long, value_name = "FILE")]
    pub texts: Option<PathBuf>,
    /// Comma-separated class names, in label order.
    #[arg(long)]
    pub classes: Option<String>,
    /// Output directory for the manifest and id tensors.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

pub fn run(a: TokenizeArgs) -> CliResult<()> {
    match a.action {
        Action::Train(a) => train(a),
        Action::Encode(a) => codec(a, true),
        Action::Decode(a) => codec(a, false),
        Action::Corpus(a) => corpus(a),
    }
}

fn read_input(path: Option<&str>) -> CliResult<String> {
    match path {
        Some(p) => std::fs::read_to_string(p).map_err(|e| Error::io(p, e).into()),
        None => std::io::read_to_string(std::io::stdin()).map_err(|e| Error::io("<stdin>", e).into()),
    }
}

fn train(a: TrainArgs) -> CliResult<()> {
    let kv = resolve(
        &a.common,
        &[],
        &[
            ("corpus", flag(&a.corpus.as_ref().map(|p| p.display()))),
            ("size", flag(&a.size)),
            ("out", flag(&a.out.as_ref().map(|p| p.display()))),
            ("lowercase", switch(a.lowercase)),
        ],
    )?;
    let size = parsed(&kv, "size", signtopic_core::models::DEFAULT_VOCAB_SIZE)?;
    let lowercase = parsed(&kv, "lowercase", false)?;
    let out = PathBuf::from(required(&kv, "out")?);
    let text = read_input(Some(&required(&kv, "corpus")?))?;
    let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
    let vocab = train_vocab(&lines, size, TokenizerOptions { lowercase })?;
    vocab.save(&out)?;
    let mut resolved = kv.clone();
    resolved.set("size", size);
    resolved.set("lowercase", lowercase);
    echo(&resolved, Some(&out))?;
    println!(
        "{}\t{} pieces (requested {})",
        out.display(),
        vocab.len(),
        vocab.requested()
    );
    Ok(())
}

fn codec(a: CodecArgs, encode: bool) -> CliResult<()> {
    let kv = resolve(
        &a.common,
        &[],
        &[
            ("vocab", flag(&a.vocab.as_ref().map(|p| p.display()))),
            ("input", flag(&a.input.as_ref().map(|p| p.display()))),
            ("out", flag(&a.out.as_ref().map(|p| p.display()))),
        ],
    )?;
    let vocab = Vocab::load(required(&kv, "vocab")?)?;
    let input = read_input(kv.get("input"))?;
    let mut out = String::new();
    for (n, line) in input.lines().enumerate() {
        if encode {
            let ids: Vec<String> = vocab.encode(line).iter().map(ToString::to_string).collect();
            out.push_str(&ids.join(" "));
        } else {
            let ids = line
                .split_whitespace()
                .map(|t| t.parse::<usize>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| Error::parse(format!("line {}", n + 1), e.to_string()))?;
            out.push_str(&vocab.decode(&ids)?);
        }
        out.push('\n');
    }
    let dest = kv.get("out").map(PathBuf::from);
    match &dest {
        Some(p) => write_text(p, &out)?,
        None => print!("{out}"),
    }
    echo(&kv, dest.as_deref())
}

fn corpus(a: CorpusArgs) -> CliResult<()> {
    let kv = resolve(
        &a.common,
        &[],
        &[
            ("vocab", flag(&a.vocab.as_ref().map(|p| p.display()))),
            ("texts", flag(&a.texts.as_ref().map(|p| p.display()))),
            ("classes", a.classes.clone()),
            ("out", flag(&a.out.as_ref().map(|p| p.display()))),
        ],
    )?;
    let vocab = Vocab::load(required(&kv, "vocab")?)?;
    let texts_path = required(&kv, "texts")?;
    let out = PathBuf::from(required(&kv, "out")?);
    let class_names = crate::settings::list(&required(&kv, "classes")?);
    if class_names.len() < 2 {
        return Err(CliError::usage("--classes needs at least two names"));
    }
    let manifest = encode_table(&vocab, &read_input(Some(&texts_path))?, &texts_path, class_names, &out)?;
    let mut resolved: KvMap = kv.clone();
    resolved.set("vocab_size", vocab.len());
    resolved.write(echo_path_for_dir(&out))?;
    let mut per_split = BTreeMap::new();
    for e in &manifest.entries {
        *per_split.entry(e.split).or_insert(0usize) += 1;
    }
    let counts: Vec<String> = Split::ALL
        .iter()
        .map(|s| format!("{} {}", s.name(), per_split.get(s).unwrap_or(&0)))
        .collect();
    println!("{}\t{}", out.join("manifest.txt").display(), counts.join(", "));
    Ok(())
}

fn encode_table(vocab: &Vocab, text: &str, origin: &str, class_names: Vec<String>, out: &Path) -> CliResult<Manifest> {
    let feat_dir = out.join("features");
    std::fs::create_dir_all(&feat_dir).map_err(|e| Error::io(&feat_dir, e))?;
    let mut entries = Vec::new();
    for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let loc = || format!("{origin}:{}", n + 1);
        let fields: Vec<&str> = line.splitn(4, '\t').collect();
        let [id, label, split, sentence] = fields[..] else {
            return Err(Error::parse(loc(), "expected id, label, split and text separated by tabs").into());
        };
        let label: usize = label
            .trim()
            .parse()
            .map_err(|_| Error::parse(loc(), format!("bad label {label:?}")))?;
        let split: Split = split.trim().parse()?;
        let ids = vocab.encode(sentence);
        if ids.is_empty() {
            return Err(Error::parse(loc(), "text encodes to no tokens").into());
        }
        let data: Vec<f32> = ids.iter().map(|&i| i as f32).collect();
        let m = Matrix32::from_vec(ids.len(), 1, data)?;
        let rel = PathBuf::from("features").join(format!("{id}.stf"));
        write_tensor(out.join(&rel), &m)?;
        entries.push(ManifestEntry {
            id: id.to_string(),
            path: rel,
            label,
            split,
        });
    }
    let manifest = Manifest {
        class_names,
        feature_type: FeatureType::Tokens,
        entries,
    };
    // Checks labels against the class list before anything refers to it.
    manifest.write(out.join("manifest.txt"))?;
    signtopic_core::tensorio::load_manifest(out.join("manifest.txt"))?;
    Ok(manifest)
}
