use std::path::{Path, PathBuf};

use clap::Args;
use signtopic_core::config::KvMap;
use signtopic_core::tensorio::load_manifest;
use signtopic_core::training::{model_config_for, run_training, RunOutcome, TrainConfig};

use crate::settings::{flag, required, resolve, switch, Common, MODEL_KEYS, TRAIN_KEYS};
use crate::CliResult;

#[derive(Args, Debug, Clone, Default)]
pub struct TrainFlags {
    #[arg(long, value_name = "FILE")]
    pub manifest: Option<PathBuf>,
    /// lstm_attn, transformer or perceiver_io.
    #[arg(long)]
    pub family: Option<String>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long = "max-epochs")]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    /// Batch sequences of similar length together.
    #[arg(long)]
    pub bucket: bool,
    #[command(flatten)]
    pub common: Common,
}

impl TrainFlags {
    pub fn pairs(&self) -> Vec<(&'static str, Option<String>)> {
        vec![
            ("manifest", flag(&self.manifest.as_ref().map(|p| p.display()))),
            ("family", self.family.clone()),
            ("lr", flag(&self.lr)),
            ("seed", flag(&self.seed)),
            ("batch", flag(&self.batch)),
            ("max_epochs", flag(&self.max_epochs)),
            ("patience", flag(&self.patience)),
            ("bucket", switch(self.bucket)),
        ]
    }
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub flags: TrainFlags,
    /// Run directory; `runs/<family>-<feature>-seed<seed>` by default.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Suppress per-epoch progress lines.
    #[arg(long)]
    pub quiet: bool,
}

/// Trains one configuration described by `kv` into `out`. The caller
/// checks that `manifest`, `family` and `lr` are present.
pub fn train_from_settings(kv: &KvMap, out: &Path, quiet: bool) -> signtopic_core::Result<RunOutcome> {
    let dataset = load_manifest(kv.require::<String>("manifest")?)?;
    let model_cfg = model_config_for(kv, &dataset.manifest)?;
    let train_cfg = TrainConfig::from_kv(kv)?;
    run_training(&dataset, &model_cfg, &train_cfg, out, kv, |e| {
        if !quiet {
            println!(
                "epoch {:>3}  train_loss {:.4}  val_loss {:.4}  val_acc {:.4}  lr {:.2e}",
                e.epoch, e.train_loss, e.val_loss, e.val_acc, e.lr
            );
        }
    })
}

pub fn run(a: TrainArgs) -> CliResult<()> {
    let mut pairs = a.flags.pairs();
    pairs.push(("out", flag(&a.out.as_ref().map(|p| p.display()))));
    let mut kv = resolve(&a.flags.common, &[MODEL_KEYS, TRAIN_KEYS], &pairs)?;
    for key in ["manifest", "family", "lr"] {
        required(&kv, key)?;
    }
    let out = match kv.get("out") {
        Some(p) => PathBuf::from(p),
        None => {
            let dataset = load_manifest(required(&kv, "manifest")?)?;
            let seed = kv.get("seed").unwrap_or("0");
            PathBuf::from("runs").join(format!(
                "{}-{}-seed{seed}",
                required(&kv, "family")?,
                dataset.manifest.feature_type
            ))
        }
    };
    kv.set("out", out.display());
    let outcome = train_from_settings(&kv, &out, a.quiet)?;
    let r = &outcome.record;
    println!(
        "{}\tbest_epoch {}\tval_acc {:.4}\ttest_acc {:.4}\tmajority {:.4}",
        out.display(),
        r.best_epoch,
        r.val_accuracy,
        r.test_accuracy,
        r.majority_accuracy
    );
    Ok(())
}
