//! Checkpoint directories: one STF tensor per parameter plus `index.txt`
//! with lines `name<TAB>relative_path<TAB>RxC`.

use std::fs;
use std::path::Path;

use super::params::ParamStore;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensorio::{read_tensor, write_tensor};

pub const INDEX_FILE: &str = "index.txt";

pub fn save_checkpoint<S: Scalar>(dir: impl AsRef<Path>, params: &ParamStore<S>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut index = String::new();
    for (i, e) in params.entries().iter().enumerate() {
        let rel = format!("p{i:04}.stf");
        write_tensor(dir.join(&rel), &e.value)?;
        index.push_str(&format!("{}\t{}\t{}x{}\n", e.name, rel, e.value.rows(), e.value.cols()));
    }
    let path = dir.join(INDEX_FILE);
    fs::write(&path, index).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint<S: Scalar>(dir: impl AsRef<Path>) -> Result<ParamStore<S>> {
    let dir = dir.as_ref();
    let path = dir.join(INDEX_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let mut store = ParamStore::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |msg: &str| Error::Parse {
            location: format!("{}:{}", path.display(), n + 1),
            message: msg.to_owned(),
        };
        let fields: Vec<&str> = line.split('\t').collect();
        let [name, rel, shape] = fields[..] else {
            return Err(bad("expected name, path and shape"));
        };
        let (r, c) = shape.split_once('x').ok_or_else(|| bad("shape must be RxC"))?;
        let rows: usize = r.parse().map_err(|_| bad("bad row count"))?;
        let cols: usize = c.parse().map_err(|_| bad("bad column count"))?;
        let m = read_tensor(dir.join(rel))?;
        if m.shape() != (rows, cols) {
            return Err(Error::shape(
                "load_checkpoint",
                format!("{name}: index says {rows}x{cols}, file holds {}x{}", m.rows(), m.cols()),
            ));
        }
        store.insert(name, m.cast())?;
    }
    Ok(store)
}
