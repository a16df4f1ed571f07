use std::fmt::Write as _;

use crate::config::KvMap;
use crate::error::{Error, Result};

/// Hyperparameter grid: `key = v1, v2, ...` lines, axes kept in file order.
/// Points enumerate with the last axis varying fastest.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Grid {
    pub axes: Vec<(String, Vec<String>)>,
}

impl Grid {
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut axes: Vec<(String, Vec<String>)> = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let loc = || format!("{origin}:{}", n + 1);
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(loc(), "expected `key = v1, v2`"))?;
            let values: Vec<String> = v.split(',').map(|s| s.trim().to_string()).collect();
            if k.trim().is_empty() || values.iter().any(String::is_empty) {
                return Err(Error::parse(loc(), "empty key or value"));
            }
            let k = k.trim().to_string();
            match axes.iter_mut().find(|(name, _)| *name == k) {
                Some(axis) => axis.1 = values,
                None => axes.push((k, values)),
            }
        }
        if axes.is_empty() {
            return Err(Error::Config("grid has no axes".into()));
        }
        Ok(Self { axes })
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|(_, v)| v.len()).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn points(&self) -> Vec<KvMap> {
        let mut out = vec![KvMap::new()];
        for (key, values) in &self.axes {
            out = out
                .into_iter()
                .flat_map(|p| {
                    values.iter().map(move |v| {
                        let mut q = p.clone();
                        q.set(key.clone(), v);
                        q
                    })
                })
                .collect();
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridPoint {
    pub index: usize,
    pub settings: KvMap,
    /// Validation accuracy, or the failure message.
    pub outcome: std::result::Result<f64, String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridResult {
    pub points: Vec<GridPoint>,
    /// Highest validation accuracy; the earliest point wins ties.
    pub best: Option<usize>,
}

/// Runs `run` on every point merged over `base`. Failed points are kept with
/// their error and excluded from selection.
pub fn grid_search(base: &KvMap, grid: &Grid, mut run: impl FnMut(usize, &KvMap) -> Result<f64>) -> Result<GridResult> {
    if grid.is_empty() {
        return Err(Error::Config("grid has no points".into()));
    }
    let mut points = Vec::new();
    let mut best: Option<(usize, f64)> = None;
    for (index, settings) in grid.points().into_iter().enumerate() {
        let mut merged = base.clone();
        merged.merge(&settings);
        let outcome = run(index, &merged).map_err(|e| e.to_string());
        if let Ok(acc) = outcome {
            if best.is_none_or(|(_, b)| acc > b) {
                best = Some((index, acc));
            }
        }
        points.push(GridPoint {
            index,
            settings,
            outcome,
        });
    }
    Ok(GridResult {
        points,
        best: best.map(|b| b.0),
    })
}

impl GridResult {
    /// Points ordered best first; failures last, in grid order.
    pub fn ranking(&self) -> Vec<&GridPoint> {
        let mut ok: Vec<&GridPoint> = self.points.iter().filter(|p| p.outcome.is_ok()).collect();
        ok.sort_by(|a, b| {
            let (x, y) = (a.outcome.as_ref().unwrap(), b.outcome.as_ref().unwrap());
            y.total_cmp(x).then(a.index.cmp(&b.index))
        });
        ok.extend(self.points.iter().filter(|p| p.outcome.is_err()));
        ok
    }

    /// TSV ranking: rank, point, settings, val_acc, status.
    pub fn ranking_table(&self) -> String {
        let mut out = String::from("rank\tpoint\tsettings\tval_acc\tstatus\n");
        for (r, p) in self.ranking().into_iter().enumerate() {
            let settings: Vec<String> = p.settings.iter().map(|(k, v)| format!("{k}={v}")).collect();
            let settings = settings.join(" ");
            match &p.outcome {
                Ok(acc) => writeln!(out, "{}\t{}\t{settings}\t{acc:.6}\tok", r + 1, p.index).unwrap(),
                Err(e) => writeln!(out, "-\t{}\t{settings}\t-\tfailed: {e}", p.index).unwrap(),
            }
        }
        out
    }
}
