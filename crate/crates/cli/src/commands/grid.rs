use std::path::PathBuf;

use clap::Args;
use signtopic_core::training::{grid_search, Grid};
use signtopic_core::{Error, ErrorCategory};

use super::train::{train_from_settings, TrainFlags};
use crate::settings::{echo_path_for_dir, flag, required, resolve, write_text, MODEL_KEYS, TRAIN_KEYS};
use crate::{CliError, CliResult};

#[derive(Args, Debug)]
pub struct GridArgs {
    /// Axes as `key = v1, v2, ...` lines.
    #[arg(long, value_name = "FILE")]
    pub grid: Option<PathBuf>,
    #[command(flatten)]
    pub flags: TrainFlags,
    /// Output directory; each point trains into `point-NNN/`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Print per-epoch progress.
    #[arg(long)]
    pub verbose: bool,
}

pub fn run(a: GridArgs) -> CliResult<()> {
    let mut pairs = a.flags.pairs();
    pairs.push(("grid", flag(&a.grid.as_ref().map(|p| p.display()))));
    pairs.push(("out", flag(&a.out.as_ref().map(|p| p.display()))));
    let kv = resolve(&a.flags.common, &[MODEL_KEYS, TRAIN_KEYS], &pairs)?;
    let grid_path = required(&kv, "grid")?;
    let out = PathBuf::from(required(&kv, "out")?);
    let text = std::fs::read_to_string(&grid_path).map_err(|e| Error::io(&grid_path, e))?;
    let grid = Grid::parse(&text, &grid_path)?;
    for (axis, _) in &grid.axes {
        if !MODEL_KEYS.contains(&axis.as_str()) && !TRAIN_KEYS.contains(&axis.as_str()) {
            return Err(CliError::usage(format!(
                "grid axis {axis:?} is not a model or training setting"
            )));
        }
    }
    for key in ["manifest", "family", "lr"] {
        if !kv.contains(key) && !grid.axes.iter().any(|(a, _)| a == key) {
            required(&kv, key)?;
        }
    }

    let mut base = kv.clone();
    base.remove("grid");
    base.remove("out");
    let mut categories = Vec::new();
    let result = grid_search(&base, &grid, |i, settings| {
        let dir = out.join(format!("point-{i:03}"));
        let r = train_from_settings(settings, &dir, !a.verbose);
        match &r {
            Ok(o) => println!("point {i:03}\tval_acc {:.4}", o.record.val_accuracy),
            Err(e) => {
                categories.push(e.category());
                println!("point {i:03}\tfailed: {e}");
            }
        }
        r.map(|o| o.record.val_accuracy)
    })?;

    write_text(&out.join("ranking.tsv"), &result.ranking_table())?;
    kv.write(echo_path_for_dir(&out))?;
    let Some(best) = result.best else {
        let category = if categories.iter().all(|&c| c == ErrorCategory::Divergence) {
            ErrorCategory::Divergence
        } else {
            ErrorCategory::Data
        };
        return Err(CliError {
            category,
            message: format!(
                "all {} grid points failed; see {}",
                grid.len(),
                out.join("ranking.tsv").display()
            ),
        });
    };
    let point = &result.points[best];
    let mut best_kv = base.clone();
    best_kv.merge(&point.settings);
    best_kv.set("point", format!("point-{best:03}"));
    best_kv.set("val_acc", format!("{:.6}", point.outcome.as_ref().unwrap()));
    best_kv.write(out.join("best.txt"))?;
    let settings: Vec<String> = point.settings.iter().map(|(k, v)| format!("{k}={v}")).collect();
    println!(
        "best point-{best:03}\t{}\tval_acc {:.4}",
        settings.join(" "),
        point.outcome.as_ref().unwrap()
    );
    Ok(())
}
