use std::path::PathBuf;

use clap::Args;
use signtopic_core::training::report_runs;

use crate::settings::{echo, flag, list, resolve, write_text, Common};
use crate::{CliError, CliResult};

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// Run directories; repeat the flag or separate with commas.
    #[arg(long, num_args = 1..)]
    pub runs: Vec<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

pub fn run(a: ReportArgs) -> CliResult<()> {
    let joined: Vec<String> = a.runs.iter().map(|p| p.display().to_string()).collect();
    let joined = (!joined.is_empty()).then(|| joined.join(","));
    let kv = resolve(
        &a.common,
        &[],
        &[("runs", joined), ("out", flag(&a.out.as_ref().map(|p| p.display())))],
    )?;
    let runs = kv.get("runs").map(list).unwrap_or_default();
    if runs.is_empty() {
        return Err(CliError::usage("missing --runs"));
    }
    let table = report_runs(&runs)?;
    let out = kv.get("out").map(PathBuf::from);
    if let Some(p) = &out {
        write_text(p, &table)?;
    }
    echo(&kv, out.as_deref())?;
    print!("{table}");
    Ok(())
}
