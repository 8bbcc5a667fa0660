//! Text checkpoint format.
//!
//! ```text
//! geokg-params v1
//! <parameter count>
//! <name> <rows> <cols>
//! <rows*cols whitespace-separated values, row-major>
//! ...
//! ```
//!
//! Values use Rust's shortest round-trip float formatting, so loading restores
//! bit-identical parameters.

use std::fmt::Write as _;
use std::path::Path;

use super::{AutodiffError, ParamStore, Tensor};

pub const CHECKPOINT_HEADER: &str = "geokg-params v1";

pub fn to_string(store: &ParamStore) -> String {
    let mut out = String::new();
    writeln!(out, "{CHECKPOINT_HEADER}").unwrap();
    writeln!(out, "{}", store.len()).unwrap();
    for p in store.iter() {
        writeln!(out, "{} {} {}", p.name, p.value.rows(), p.value.cols()).unwrap();
        let vals: Vec<String> = p.value.data().iter().map(|v| format!("{v:?}")).collect();
        writeln!(out, "{}", vals.join(" ")).unwrap();
    }
    out
}

pub fn from_str(text: &str) -> Result<ParamStore, AutodiffError> {
    let bad = |line: usize, reason: &str| AutodiffError::Checkpoint {
        line,
        reason: reason.to_string(),
    };
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    match lines.next() {
        Some((_, l)) if l.trim() == CHECKPOINT_HEADER => {}
        _ => return Err(bad(1, "missing or unsupported header")),
    }
    let (n_line, count) = lines.next().ok_or_else(|| bad(2, "missing count"))?;
    let count: usize = count.trim().parse().map_err(|_| bad(n_line, "bad count"))?;
    let mut store = ParamStore::new();
    for _ in 0..count {
        let (ln, head) = lines.next().ok_or_else(|| bad(n_line, "truncated"))?;
        let parts: Vec<&str> = head.split_whitespace().collect();
        if parts.len() != 3 {
            return Err(bad(ln, "expected `name rows cols`"));
        }
        let rows: usize = parts[1].parse().map_err(|_| bad(ln, "bad rows"))?;
        let cols: usize = parts[2].parse().map_err(|_| bad(ln, "bad cols"))?;
        let (vl, values) = lines.next().ok_or_else(|| bad(ln, "missing values"))?;
        let data = values
            .split_whitespace()
            .map(|v| v.parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| bad(vl, "bad value"))?;
        if data.len() != rows * cols {
            return Err(bad(vl, "value count does not match shape"));
        }
        if store.find(parts[0]).is_some() {
            return Err(bad(ln, "duplicate parameter name"));
        }
        store.add(parts[0], Tensor::from_vec(rows, cols, data)?);
    }
    Ok(store)
}

pub fn save(store: &ParamStore, path: &Path) -> Result<(), AutodiffError> {
    std::fs::write(path, to_string(store)).map_err(|source| AutodiffError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load(path: &Path) -> Result<ParamStore, AutodiffError> {
    let text = std::fs::read_to_string(path).map_err(|source| AutodiffError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    from_str(&text)
}

/// Overwrites values in `target` with same-named, same-shaped entries of `source`.
pub fn restore_into(target: &mut ParamStore, source: &ParamStore) -> Result<(), AutodiffError> {
    if target.len() != source.len() {
        return Err(AutodiffError::Checkpoint {
            line: 0,
            reason: format!(
                "checkpoint has {} parameters, model expects {}",
                source.len(),
                target.len()
            ),
        });
    }
    for id in target.ids().collect::<Vec<_>>() {
        let name = target.get(id).name.clone();
        let src = source
            .find(&name)
            .map(|s| source.get(s))
            .ok_or_else(|| AutodiffError::Checkpoint {
                line: 0,
                reason: format!("checkpoint lacks parameter {name}"),
            })?;
        if src.value.shape() != target.get(id).value.shape() {
            return Err(AutodiffError::Checkpoint {
                line: 0,
                reason: format!("shape mismatch for {name}"),
            });
        }
        target.get_mut(id).value = src.value.clone();
    }
    Ok(())
}
