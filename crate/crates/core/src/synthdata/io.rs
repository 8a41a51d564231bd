use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Provenance, SynthError, TimeSeriesBundle};

/// Which columns a CSV must provide besides `x` and `y`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Schema {
    /// Proxies `p_1..p_k` required, confounder optional.
    Observed,
    /// Confounder `z_1..z_d` required, proxies optional (built later).
    Confounded,
    /// Only `x` and `y` required.
    Plain,
}

/// Sidecar record written next to a bundle CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleMeta {
    pub provenance: Provenance,
    pub seed: Option<u64>,
    pub config: Option<serde_json::Value>,
    pub t: usize,
    pub d_p: usize,
    pub d_z: usize,
}

impl BundleMeta {
    pub fn for_bundle(b: &TimeSeriesBundle, seed: Option<u64>, config: Option<serde_json::Value>) -> Self {
        Self {
            provenance: b.provenance,
            seed,
            config,
            t: b.len(),
            d_p: b.d_p(),
            d_z: b.d_z(),
        }
    }
}

/// `data.csv` -> `data.meta.json`.
pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("meta.json")
}

/// Writes `x, y, p_*, z_*, w` columns. Numbers use the shortest
/// representation that parses back to the same `f64`.
pub fn save_csv(
    bundle: &TimeSeriesBundle,
    path: &Path,
    meta: Option<&BundleMeta>,
) -> Result<(), SynthError> {
    bundle.validate(true)?;
    let mut header = vec!["x".to_string(), "y".to_string()];
    let mut cols: Vec<&[f64]> = vec![&bundle.x, &bundle.y];
    for (j, c) in bundle.p.iter().enumerate() {
        header.push(format!("p_{}", j + 1));
        cols.push(c);
    }
    if let Some(z) = &bundle.z {
        for (j, c) in z.iter().enumerate() {
            header.push(format!("z_{}", j + 1));
            cols.push(c);
        }
    }
    if let Some(w) = &bundle.w {
        header.push("w".into());
        cols.push(w);
    }
    let mut wtr = csv::Writer::from_path(path)?;
    wtr.write_record(&header)?;
    let mut rec = Vec::with_capacity(cols.len());
    for t in 0..bundle.len() {
        rec.clear();
        rec.extend(cols.iter().map(|c| c[t].to_string()));
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    if let Some(meta) = meta {
        std::fs::write(sidecar_path(path), serde_json::to_vec_pretty(meta)?)?;
    }
    Ok(())
}

pub fn read_metadata(csv: &Path) -> Result<Option<BundleMeta>, SynthError> {
    let p = sidecar_path(csv);
    if !p.exists() {
        return Ok(None);
    }
    Ok(Some(serde_json::from_slice(&std::fs::read(p)?)?))
}

enum Slot {
    X,
    Y,
    P(usize),
    Z(usize),
    W,
}

fn indexed(name: &str, prefix: &str) -> Option<usize> {
    name.strip_prefix(prefix)
        .and_then(|r| r.parse::<usize>().ok())
        .filter(|&i| i >= 1)
}

fn contiguous(mut idx: Vec<usize>, family: &str) -> Result<usize, SynthError> {
    idx.sort_unstable();
    for (k, &i) in idx.iter().enumerate() {
        if i != k + 1 {
            return Err(SynthError::MissingColumn(format!("{family}_{}", k + 1)));
        }
    }
    Ok(idx.len())
}

/// Reads a bundle. Rows are taken in file order; line numbers in errors are
/// 1-based and count the header.
pub fn load_csv(path: &Path, schema: Schema) -> Result<TimeSeriesBundle, SynthError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let headers = rdr.headers()?.clone();
    let mut slots = Vec::with_capacity(headers.len());
    let (mut has_x, mut has_y, mut has_w) = (false, false, false);
    let (mut p_idx, mut z_idx) = (Vec::new(), Vec::new());
    for h in headers.iter() {
        let slot = match h {
            "x" => {
                has_x = true;
                Slot::X
            }
            "y" => {
                has_y = true;
                Slot::Y
            }
            "w" => {
                has_w = true;
                Slot::W
            }
            _ => {
                if let Some(i) = indexed(h, "p_") {
                    p_idx.push(i);
                    Slot::P(i - 1)
                } else if let Some(i) = indexed(h, "z_") {
                    z_idx.push(i);
                    Slot::Z(i - 1)
                } else {
                    return Err(SynthError::UnknownColumn(h.to_string()));
                }
            }
        };
        slots.push(slot);
    }
    if !has_x {
        return Err(SynthError::MissingColumn("x".into()));
    }
    if !has_y {
        return Err(SynthError::MissingColumn("y".into()));
    }
    let d_p = contiguous(p_idx, "p")?;
    let d_z = contiguous(z_idx, "z")?;
    match schema {
        Schema::Observed if d_p == 0 => return Err(SynthError::MissingColumn("p_1".into())),
        Schema::Confounded if d_z == 0 => return Err(SynthError::MissingColumn("z_1".into())),
        _ => {}
    }
    let mut x = Vec::new();
    let mut y = Vec::new();
    let mut w = Vec::new();
    let mut p = vec![Vec::new(); d_p];
    let mut z = vec![Vec::new(); d_z];
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = r + 2;
        if rec.len() != slots.len() {
            return Err(SynthError::Ragged {
                row: line,
                expected: slots.len(),
                got: rec.len(),
            });
        }
        for ((cell, slot), name) in rec.iter().zip(&slots).zip(headers.iter()) {
            let v: f64 = cell.parse().map_err(|_| SynthError::Cell {
                row: line,
                column: name.to_string(),
                msg: if cell.is_empty() {
                    "missing value".into()
                } else {
                    format!("not a number: {cell:?}")
                },
            })?;
            if !v.is_finite() {
                return Err(SynthError::Cell {
                    row: line,
                    column: name.to_string(),
                    msg: format!("non-finite value {cell}"),
                });
            }
            match *slot {
                Slot::X => x.push(v),
                Slot::Y => y.push(v),
                Slot::W => w.push(v),
                Slot::P(j) => p[j].push(v),
                Slot::Z(j) => z[j].push(v),
            }
        }
    }
    let bundle = TimeSeriesBundle {
        x,
        y,
        p,
        z: (d_z > 0).then_some(z),
        w: has_w.then_some(w),
        provenance: Provenance::Csv,
    };
    bundle.validate(schema != Schema::Observed)?;
    Ok(bundle)
}
