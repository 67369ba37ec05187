//! File formats: long-format image CSV with a grid sidecar, responses,
//! surfaces, and one-header-line reports.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bases::GridSpec;
use crate::design::ImageSample;
use crate::error::{GdsError, Result};

pub const IMAGES: &str = "images.csv";
pub const RESPONSES: &str = "responses.csv";
pub const GRID: &str = "grid.csv";
pub const TRUTH: &str = "truth.csv";
pub const VAL_IMAGES: &str = "val_images.csv";
pub const VAL_RESPONSES: &str = "val_responses.csv";
pub const TEST_IMAGES: &str = "test_images.csv";
pub const TEST_RESPONSES: &str = "test_responses.csv";
pub const SURFACE: &str = "surface.csv";
pub const ETA: &str = "eta.csv";
pub const FIT_SUMMARY: &str = "fit_summary.csv";
pub const RESOLVED: &str = "config.resolved.toml";

pub(crate) fn io_err(path: &Path, source: std::io::Error) -> GdsError {
    GdsError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn csv_err(path: &Path, e: csv::Error) -> GdsError {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => io_err(path, source),
        other => GdsError::Parse(format!("{}: {other:?}", path.display())),
    }
}

/// Shortest decimal that parses back to the same `f64`.
pub fn num(v: f64) -> String {
    format!("{v}")
}

/// Accumulates a CSV report in memory; written in one go.
pub struct Table {
    buf: String,
    width: usize,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table {
            buf: format!("{}\n", header.join(",")),
            width: header.len(),
        }
    }

    pub fn row<S: AsRef<str>>(&mut self, cells: &[S]) {
        debug_assert_eq!(cells.len(), self.width);
        let line: Vec<String> = cells.iter().map(|c| quote(c.as_ref())).collect();
        self.buf.push_str(&line.join(","));
        self.buf.push('\n');
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_text(path, &self.buf)
    }

    pub fn as_str(&self) -> &str {
        &self.buf
    }
}

fn quote(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        }
    }
    let mut f = fs::File::create(path).map_err(|e| io_err(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| io_err(path, e))
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| io_err(path, e))
}

fn reader(path: &Path) -> Result<csv::Reader<fs::File>> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_err(path, e))
}

/// Sidecar grid descriptor; `mask` is relative to the sidecar's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRecord {
    pub m1: usize,
    pub m2: usize,
    pub t0: f64,
    pub s0: f64,
    pub delta1: f64,
    pub delta2: f64,
    #[serde(default)]
    pub mask: Option<String>,
}

pub fn write_grid(path: &Path, grid: &GridSpec, mask: Option<&str>) -> Result<()> {
    let mut t = Table::new(&["m1", "m2", "t0", "s0", "delta1", "delta2", "mask"]);
    t.row(&[
        grid.m1.to_string(),
        grid.m2.to_string(),
        num(grid.t0),
        num(grid.s0),
        num(grid.delta1),
        num(grid.delta2),
        mask.unwrap_or("").to_string(),
    ]);
    t.write(path)
}

/// The grid and, when the sidecar names one, the mask (`true` = included).
pub fn read_grid(path: &Path) -> Result<(GridSpec, Option<Vec<bool>>)> {
    let mut rdr = reader(path)?;
    let rec: GridRecord = rdr
        .deserialize()
        .next()
        .ok_or_else(|| GdsError::Parse(format!("{}: no grid row", path.display())))?
        .map_err(|e| csv_err(path, e))?;
    let grid = GridSpec::new(rec.m1, rec.m2, rec.t0, rec.s0, rec.delta1, rec.delta2)?;
    let mask = match rec.mask.as_deref().map(str::trim) {
        None | Some("") => None,
        Some(m) => {
            let mp = path.parent().map_or_else(|| PathBuf::from(m), |d| d.join(m));
            Some(read_mask(&mp, &grid)?)
        }
    };
    Ok((grid, mask))
}

#[derive(Deserialize)]
struct MaskRow {
    t_index: usize,
    s_index: usize,
    included: u8,
}

/// Mask CSV `(t_index, s_index, included)`; cells not listed are included.
pub fn read_mask(path: &Path, grid: &GridSpec) -> Result<Vec<bool>> {
    let mut mask = vec![true; grid.len()];
    for row in reader(path)?.deserialize::<MaskRow>() {
        let row = row.map_err(|e| csv_err(path, e))?;
        if row.t_index >= grid.m1 || row.s_index >= grid.m2 {
            return Err(GdsError::Parse(format!(
                "{}: cell ({}, {}) outside the grid",
                path.display(),
                row.t_index,
                row.s_index
            )));
        }
        mask[grid.index(row.t_index, row.s_index)] = row.included != 0;
    }
    Ok(mask)
}

pub fn write_images(path: &Path, images: &[ImageSample]) -> Result<()> {
    let mut t = Table::new(&["sample_id", "t_index", "s_index", "value"]);
    for img in images {
        for k in 0..img.m1 {
            for l in 0..img.m2 {
                t.row(&[
                    img.id.clone(),
                    k.to_string(),
                    l.to_string(),
                    num(img.values[k * img.m2 + l]),
                ]);
            }
        }
    }
    t.write(path)
}

#[derive(Deserialize)]
struct ImageRow {
    sample_id: String,
    t_index: usize,
    s_index: usize,
    value: f64,
}

/// Samples in order of first appearance; every cell must be present once.
pub fn read_images(path: &Path, grid: &GridSpec) -> Result<Vec<ImageSample>> {
    let mut order: Vec<String> = Vec::new();
    let mut slots: HashMap<String, (Vec<f64>, Vec<bool>)> = HashMap::new();
    for row in reader(path)?.deserialize::<ImageRow>() {
        let row = row.map_err(|e| csv_err(path, e))?;
        if row.t_index >= grid.m1 || row.s_index >= grid.m2 {
            return Err(GdsError::Parse(format!(
                "{}: sample '{}' has cell ({}, {}) outside the grid",
                path.display(),
                row.sample_id,
                row.t_index,
                row.s_index
            )));
        }
        let entry = slots.entry(row.sample_id.clone()).or_insert_with(|| {
            order.push(row.sample_id.clone());
            (vec![0.0; grid.len()], vec![false; grid.len()])
        });
        let idx = grid.index(row.t_index, row.s_index);
        if entry.1[idx] {
            return Err(GdsError::Parse(format!(
                "{}: sample '{}' repeats cell ({}, {})",
                path.display(),
                row.sample_id,
                row.t_index,
                row.s_index
            )));
        }
        entry.0[idx] = row.value;
        entry.1[idx] = true;
    }
    order
        .into_iter()
        .map(|id| {
            let (values, seen) = slots.remove(&id).expect("recorded id");
            if seen.iter().any(|s| !s) {
                return Err(GdsError::Parse(format!(
                    "{}: sample '{id}' is missing grid cells",
                    path.display()
                )));
            }
            ImageSample::new(id, grid.m1, grid.m2, values)
        })
        .collect()
}

pub fn write_responses(path: &Path, images: &[ImageSample], y: &[f64]) -> Result<()> {
    let mut t = Table::new(&["sample_id", "y"]);
    for (img, v) in images.iter().zip(y) {
        t.row(&[img.id.clone(), num(*v)]);
    }
    t.write(path)
}

#[derive(Deserialize)]
struct ResponseRow {
    sample_id: String,
    y: f64,
}

/// Responses matched to `images` by sample id.
pub fn read_responses(path: &Path, images: &[ImageSample]) -> Result<Vec<f64>> {
    let mut by_id = HashMap::new();
    for row in reader(path)?.deserialize::<ResponseRow>() {
        let row = row.map_err(|e| csv_err(path, e))?;
        if by_id.insert(row.sample_id.clone(), row.y).is_some() {
            return Err(GdsError::Parse(format!(
                "{}: duplicate sample '{}'",
                path.display(),
                row.sample_id
            )));
        }
    }
    if by_id.len() != images.len() {
        return Err(GdsError::dim(format!(
            "{} responses for {} images",
            by_id.len(),
            images.len()
        )));
    }
    images
        .iter()
        .map(|img| {
            by_id.get(&img.id).copied().ok_or_else(|| {
                GdsError::Parse(format!("{}: no response for '{}'", path.display(), img.id))
            })
        })
        .collect()
}

pub fn write_surface(path: &Path, grid: &GridSpec, raw: &[f64], truncated: &[f64]) -> Result<()> {
    let mut t = Table::new(&["t", "s", "beta_raw", "beta_truncated"]);
    for (i, (r, c)) in raw.iter().zip(truncated).enumerate() {
        let (tt, ss) = grid.point(i);
        t.row(&[num(tt), num(ss), num(*r), num(*c)]);
    }
    t.write(path)
}

#[derive(Deserialize)]
struct SurfaceRow {
    #[allow(dead_code)]
    t: f64,
    #[allow(dead_code)]
    s: f64,
    beta_raw: f64,
    beta_truncated: f64,
}

/// `(raw, truncated)` in grid order.
pub fn read_surface(path: &Path, grid: &GridSpec) -> Result<(Vec<f64>, Vec<f64>)> {
    let (mut raw, mut tr) = (Vec::new(), Vec::new());
    for row in reader(path)?.deserialize::<SurfaceRow>() {
        let row = row.map_err(|e| csv_err(path, e))?;
        raw.push(row.beta_raw);
        tr.push(row.beta_truncated);
    }
    if raw.len() != grid.len() {
        return Err(GdsError::dim(format!(
            "{}: {} surface rows for a grid of {}",
            path.display(),
            raw.len(),
            grid.len()
        )));
    }
    Ok((raw, tr))
}

/// Reads a one-row CSV into a column-name map.
pub fn read_record(path: &Path) -> Result<HashMap<String, String>> {
    let mut rdr = reader(path)?;
    let headers = rdr.headers().map_err(|e| csv_err(path, e))?.clone();
    let rec = rdr
        .records()
        .next()
        .ok_or_else(|| GdsError::Parse(format!("{}: empty report", path.display())))?
        .map_err(|e| csv_err(path, e))?;
    Ok(headers
        .iter()
        .zip(rec.iter())
        .map(|(h, v)| (h.to_string(), v.to_string()))
        .collect())
}
