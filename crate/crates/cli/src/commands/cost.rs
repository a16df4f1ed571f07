use std::fmt::Write as _;
use std::path::PathBuf;

use clap::Args;
use signtopic_core::complexity::{cost, cost_table, human, CostRow, TableFormat, DEFAULT_COST_LENGTH};
use signtopic_core::models::{Family, ModelConfig};
use signtopic_core::tensorio::FeatureType;
use signtopic_core::training::feature_label;

use crate::settings::{echo, flag, list, parsed, resolve, write_text, Common, MODEL_KEYS};
use crate::{CliError, CliResult};

#[derive(Args, Debug)]
pub struct CostArgs {
    /// Input length in frames or tokens.
    #[arg(long)]
    pub t: Option<usize>,
    /// text or tsv.
    #[arg(long)]
    pub format: Option<String>,
    /// base or tiny configs.
    #[arg(long)]
    pub size: Option<String>,
    /// Comma-separated families; all by default.
    #[arg(long)]
    pub families: Option<String>,
    /// Comma-separated feature types; all by default.
    #[arg(long)]
    pub features: Option<String>,
    #[arg(long)]
    pub classes: Option<usize>,
    /// Break down a single config (with --feature and model settings).
    #[arg(long)]
    pub family: Option<String>,
    #[arg(long)]
    pub feature: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

fn sized(size: &str, family: Family, feature: FeatureType, classes: usize) -> CliResult<ModelConfig> {
    match size {
        "base" => Ok(ModelConfig::base(family, feature, classes)),
        "tiny" => Ok(ModelConfig::tiny_for(family, feature, classes)),
        other => Err(CliError::usage(format!("--size must be base or tiny, got {other:?}"))),
    }
}

pub fn run(a: CostArgs) -> CliResult<()> {
    let kv = resolve(
        &a.common,
        &[MODEL_KEYS],
        &[
            ("t", flag(&a.t)),
            ("format", a.format.clone()),
            ("size", a.size.clone()),
            ("families", a.families.clone()),
            ("features", a.features.clone()),
            ("classes", flag(&a.classes)),
            ("family", a.family.clone()),
            ("feature", a.feature.clone()),
            ("out", flag(&a.out.as_ref().map(|p| p.display()))),
        ],
    )?;
    let t: usize = parsed(&kv, "t", DEFAULT_COST_LENGTH)?;
    if t == 0 {
        return Err(CliError::usage("--t must be positive"));
    }
    let format = match kv.get("format").unwrap_or("text") {
        "text" => TableFormat::Text,
        "tsv" => TableFormat::Tsv,
        other => return Err(CliError::usage(format!("--format must be text or tsv, got {other:?}"))),
    };
    let size = kv.get("size").unwrap_or("base").to_string();
    let classes: usize = parsed(&kv, "classes", 10)?;
    let mut resolved = kv.clone();
    resolved.set("t", t);
    resolved.set("size", &size);
    resolved.set("classes", classes);

    let text = if let Some(family) = kv.get("family") {
        let family: Family = family.parse()?;
        let feature: FeatureType = kv.get("feature").unwrap_or("i3d").parse()?;
        let mut m = sized(&size, family, feature, classes)?.to_kv();
        for &k in MODEL_KEYS {
            if let Some(v) = kv.get(k) {
                m.set(k, v);
            }
        }
        let cfg = ModelConfig::from_kv(&m)?;
        resolved.merge(&cfg.to_kv());
        breakdown(&cfg, t, format)
    } else {
        let families: Vec<Family> = match kv.get("families") {
            Some(v) => list(v).iter().map(|s| s.parse()).collect::<Result<_, _>>()?,
            None => Family::ALL.to_vec(),
        };
        let features: Vec<FeatureType> = match kv.get("features") {
            Some(v) => list(v).iter().map(|s| s.parse()).collect::<Result<_, _>>()?,
            None => FeatureType::ALL.to_vec(),
        };
        if families.is_empty() || features.is_empty() {
            return Err(CliError::usage("need at least one family and one feature type"));
        }
        let groups: Vec<&str> = families.iter().map(|f| f.title()).collect();
        let rows = features
            .iter()
            .map(|&feat| {
                Ok(CostRow {
                    label: feature_label(feat).to_string(),
                    configs: families
                        .iter()
                        .map(|&f| sized(&size, f, feat, classes))
                        .collect::<CliResult<_>>()?,
                })
            })
            .collect::<CliResult<Vec<_>>>()?;
        cost_table(&groups, &rows, t, format)
    };
    let out = kv.get("out").map(PathBuf::from);
    if let Some(p) = &out {
        write_text(p, &text)?;
    }
    echo(&resolved, out.as_deref())?;
    print!("{text}");
    Ok(())
}

fn breakdown(cfg: &ModelConfig, t: usize, format: TableFormat) -> String {
    let r = cost(cfg, t);
    let mut out = String::new();
    match format {
        TableFormat::Tsv => {
            out.push_str("component\tparams\tflops\n");
            for c in &r.components {
                writeln!(out, "{}\t{}\t{}", c.name, c.params, c.flops).unwrap();
            }
            writeln!(out, "total\t{}\t{}", r.params, r.flops).unwrap();
            writeln!(out, "ratio\t{:.4}", r.ratio).unwrap();
        }
        TableFormat::Text => {
            writeln!(out, "{} T = {t}", cfg.family().title()).unwrap();
            let w = r.components.iter().map(|c| c.name.len()).max().unwrap_or(5).max(5);
            for c in &r.components {
                writeln!(out, "{:<w$}  {:>10}  {:>10}", c.name, human(c.params), human(c.flops)).unwrap();
            }
            writeln!(out, "{:<w$}  {:>10}  {:>10}", "total", human(r.params), human(r.flops)).unwrap();
            writeln!(out, "Ratio(1e-4) {:.2}", r.ratio).unwrap();
        }
    }
    out
}
