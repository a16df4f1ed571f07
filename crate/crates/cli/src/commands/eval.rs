use std::path::PathBuf;

use clap::Args;
use signtopic_core::tensorio::{load_manifest, Split};
use signtopic_core::training::{evaluate_checkpoint, CHECKPOINT_DIR};

use crate::settings::{echo, flag, required, resolve, write_text, Common};
use crate::{CliError, CliResult};

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Checkpoint directory, or a run directory holding `checkpoint-best/`.
    #[arg(long, value_name = "DIR")]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    pub manifest: Option<PathBuf>,
    /// train, val or test (default test).
    #[arg(long)]
    pub split: Option<String>,
    /// Also write the evaluation to this file.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

pub fn run(a: EvalArgs) -> CliResult<()> {
    let kv = resolve(
        &a.common,
        &[],
        &[
            ("checkpoint", flag(&a.checkpoint.as_ref().map(|p| p.display()))),
            ("manifest", flag(&a.manifest.as_ref().map(|p| p.display()))),
            ("split", a.split.clone()),
            ("out", flag(&a.out.as_ref().map(|p| p.display()))),
        ],
    )?;
    let split: Split = kv
        .get("split")
        .unwrap_or("test")
        .parse()
        .map_err(|_| CliError::usage("--split must be train, val or test"))?;
    let mut ckpt = PathBuf::from(required(&kv, "checkpoint")?);
    if ckpt.join(CHECKPOINT_DIR).is_dir() {
        ckpt = ckpt.join(CHECKPOINT_DIR);
    }
    let dataset = load_manifest(required(&kv, "manifest")?)?;
    let eval = evaluate_checkpoint(&ckpt, &dataset, split)?;
    let mut resolved = kv.clone();
    resolved.set("split", split);
    let text = format!("split\t{split}\n{}", eval.to_text(&dataset.manifest.class_names));
    let out = kv.get("out").map(PathBuf::from);
    if let Some(p) = &out {
        write_text(p, &text)?;
    }
    echo(&resolved, out.as_deref())?;
    print!("{text}");
    Ok(())
}
