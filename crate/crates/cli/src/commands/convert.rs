use std::path::{Path, PathBuf};

use clap::Args;
use signtopic_core::posefeat::{cartesian_to_angular, matrix_to_frames, normalize_cartesian, SkeletonSpec};
use signtopic_core::tensorio::{read_tensor, write_tensor, FeatureType, Manifest, ManifestEntry, CARTESIAN_WIDTH};
use signtopic_core::{Error, Matrix32};

use crate::settings::{echo, echo_path_for_dir, flag, parsed, required, resolve, Common};
use crate::{CliError, CliResult};

#[derive(Args, Debug)]
pub struct ConvertArgs {
    /// Keypoint file, T x 150.
    #[arg(long = "in", value_name = "FILE")]
    pub input: Option<PathBuf>,
    /// Convert every entry of a Cartesian manifest instead of one file.
    #[arg(long, value_name = "FILE", conflicts_with = "input")]
    pub manifest: Option<PathBuf>,
    /// Output file, or output directory with --manifest.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Target representation: cartesian or angular.
    #[arg(long)]
    pub to: Option<String>,
    /// Skeleton file; the standard 50-joint skeleton by default.
    #[arg(long)]
    pub skeleton: Option<PathBuf>,
    /// Neck-origin, shoulder-width scaling before conversion (default true).
    #[arg(long)]
    pub normalize: Option<bool>,
    #[command(flatten)]
    pub common: Common,
}

fn convert_one(m: &Matrix32, to: FeatureType, skel: &SkeletonSpec, normalize: bool) -> CliResult<(Matrix32, usize)> {
    if m.cols() != CARTESIAN_WIDTH {
        return Err(Error::shape(
            "convert",
            format!("expected {CARTESIAN_WIDTH} keypoint columns, got {}", m.cols()),
        )
        .into());
    }
    let x = m.cast::<f64>();
    let x = if normalize { normalize_cartesian(&x)? } else { x };
    match to {
        FeatureType::Cartesian => Ok((x.cast(), 0)),
        FeatureType::Angular => {
            let seq = cartesian_to_angular(&matrix_to_frames(&x)?, skel)?;
            Ok((seq.features.cast(), seq.flagged_frames.len()))
        }
        other => Err(CliError::usage(format!("cannot convert keypoints to {other}"))),
    }
}

pub fn run(a: ConvertArgs) -> CliResult<()> {
    let kv = resolve(
        &a.common,
        &[],
        &[
            ("in", flag(&a.input.as_ref().map(|p| p.display()))),
            ("manifest", flag(&a.manifest.as_ref().map(|p| p.display()))),
            ("out", flag(&a.out.as_ref().map(|p| p.display()))),
            ("to", a.to.clone()),
            ("skeleton", flag(&a.skeleton.as_ref().map(|p| p.display()))),
            ("normalize", flag(&a.normalize)),
        ],
    )?;
    let to: FeatureType = required(&kv, "to")?
        .parse()
        .map_err(|_| CliError::usage("--to must be cartesian or angular"))?;
    if !matches!(to, FeatureType::Cartesian | FeatureType::Angular) {
        return Err(CliError::usage("--to must be cartesian or angular"));
    }
    let normalize = parsed(&kv, "normalize", true)?;
    let out = PathBuf::from(required(&kv, "out")?);
    let skel = match kv.get("skeleton") {
        Some(p) => SkeletonSpec::load(p)?,
        None => SkeletonSpec::standard(),
    };
    let mut resolved = kv.clone();
    resolved.set("normalize", normalize);

    if let Some(manifest) = kv.get("manifest") {
        return convert_manifest(Path::new(manifest), &out, to, &skel, normalize, &resolved);
    }
    let input = required(&kv, "in")?;
    let m = read_tensor(&input)?;
    let (converted, flagged) = convert_one(&m, to, &skel, normalize)?;
    write_tensor(&out, &converted)?;
    echo(&resolved, Some(&out))?;
    if flagged > 0 {
        eprintln!("note: {flagged} frame(s) had coincident joints; rest directions substituted");
    }
    println!("{}\t{}x{}", out.display(), converted.rows(), converted.cols());
    Ok(())
}

fn convert_manifest(
    path: &Path,
    out: &Path,
    to: FeatureType,
    skel: &SkeletonSpec,
    normalize: bool,
    resolved: &signtopic_core::config::KvMap,
) -> CliResult<()> {
    let dataset = signtopic_core::tensorio::load_manifest(path)?;
    if dataset.manifest.feature_type != FeatureType::Cartesian {
        return Err(CliError::usage("--manifest must list cartesian keypoint files"));
    }
    let feat_dir = out.join("features");
    std::fs::create_dir_all(&feat_dir).map_err(|e| Error::io(&feat_dir, e))?;
    let mut entries = Vec::with_capacity(dataset.manifest.entries.len());
    for e in &dataset.manifest.entries {
        let m = read_tensor(dataset.resolve(e))?;
        let (converted, _) = convert_one(&m, to, skel, normalize)?;
        let rel = PathBuf::from("features").join(format!("{}.stf", e.id));
        write_tensor(out.join(&rel), &converted)?;
        entries.push(ManifestEntry { path: rel, ..e.clone() });
    }
    let manifest = Manifest {
        class_names: dataset.manifest.class_names.clone(),
        feature_type: to,
        entries,
    };
    manifest.write(out.join("manifest.txt"))?;
    resolved.write(echo_path_for_dir(out))?;
    println!(
        "{}\t{} entries",
        out.join("manifest.txt").display(),
        manifest.entries.len()
    );
    Ok(())
}
