use std::path::PathBuf;

use clap::Args;
use signtopic_core::synthgen::{generate, label_distribution, SynthSpec, MANIFEST_FILE};

use crate::settings::{echo_path_for_dir, flag, required, resolve, Common};
use crate::CliResult;

const SPEC_KEYS: &[&str] = &[
    "classes",
    "train_per_class",
    "val_per_class",
    "test_per_class",
    "min_len",
    "max_len",
    "feature",
    "separation",
    "noise",
    "seed",
    "balance",
    "vocab_size",
];

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// cartesian, angular, i3d or tokens.
    #[arg(long)]
    pub feature: Option<String>,
    #[arg(long)]
    pub classes: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub separation: Option<f64>,
    #[arg(long)]
    pub noise: Option<f64>,
    /// uniform or majority25.
    #[arg(long)]
    pub balance: Option<String>,
    #[command(flatten)]
    pub common: Common,
}

pub fn run(a: SynthArgs) -> CliResult<()> {
    let kv = resolve(
        &a.common,
        &[SPEC_KEYS],
        &[
            ("out", flag(&a.out.as_ref().map(|p| p.display()))),
            ("feature", a.feature.clone()),
            ("classes", flag(&a.classes)),
            ("seed", flag(&a.seed)),
            ("separation", flag(&a.separation)),
            ("noise", flag(&a.noise)),
            ("balance", a.balance.clone()),
        ],
    )?;
    let out = PathBuf::from(required(&kv, "out")?);
    let spec = SynthSpec::from_kv(&kv)?;
    let manifest = generate(&spec, &out)?;
    let mut resolved = spec.to_kv();
    resolved.set("out", out.display());
    resolved.write(echo_path_for_dir(&out))?;
    let dist = label_distribution(&manifest)?;
    println!(
        "{}\t{} entries\tmajority class {} ({:.4})",
        out.join(MANIFEST_FILE).display(),
        manifest.entries.len(),
        manifest.class_names[dist.majority_class],
        dist.majority_accuracy
    );
    Ok(())
}
