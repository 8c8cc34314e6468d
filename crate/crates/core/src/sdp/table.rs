//! Value functions on a state grid for every step, with interpolation and
//! on-disk persistence (raw little-endian `f64` plus a JSON header).

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::grid::StateGrid;
use crate::error::{EmsError, Result};
use crate::model::State;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TableKind {
    Sdpo,
    Sdpa,
    Deterministic,
}

/// `V_t` on `grid` for `t = 0..=horizon`. Layout `[t][w][soc][pm10]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTable {
    pub kind: TableKind,
    pub grid: StateGrid,
    pub horizon: usize,
    pub config_hash: String,
    values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueTableHeader {
    pub kind: TableKind,
    pub grid: StateGrid,
    pub horizon: usize,
    pub config_hash: String,
    pub value_count: usize,
    pub data_sha256: String,
}

/// Bilinear weights of a point inside one (SOC, PM10) layer.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Corner {
    pub k: usize,
    pub theta: f64,
    pub l: usize,
    pub phi: f64,
}

impl Corner {
    pub fn locate(grid: &StateGrid, x: &State) -> Self {
        let (k, theta) = grid.soc.bracket(x.soc);
        let (l, phi) = grid.pm10.bracket(x.pm10);
        Self { k, theta, l, phi }
    }

    /// Evaluates the bilinear interpolant through `value(i, j)`. The PM10
    /// direction is blended first; the Bellman kernel uses the same order.
    #[inline]
    pub fn eval(&self, value: impl Fn(usize, usize) -> f64) -> f64 {
        let row = |i: usize| (1.0 - self.phi) * value(i, self.l) + self.phi * value(i, self.l + 1);
        (1.0 - self.theta) * row(self.k) + self.theta * row(self.k + 1)
    }
}

impl ValueTable {
    /// A table filled with the final cost (zero).
    pub fn zeros(kind: TableKind, grid: StateGrid, horizon: usize) -> Self {
        let values = vec![0.0; (horizon + 1) * grid.len()];
        Self {
            kind,
            grid,
            horizon,
            config_hash: String::new(),
            values,
        }
    }

    pub fn layer(&self, t: usize) -> &[f64] {
        let n = self.grid.len();
        &self.values[t * n..(t + 1) * n]
    }

    pub fn layer_mut(&mut self, t: usize) -> &mut [f64] {
        let n = self.grid.len();
        &mut self.values[t * n..(t + 1) * n]
    }

    /// `(V_t, V_{t+1})` as disjoint slices.
    pub(crate) fn pair_mut(&mut self, t: usize) -> (&mut [f64], &[f64]) {
        let n = self.grid.len();
        let (a, b) = self.values[t * n..(t + 2) * n].split_at_mut(n);
        (a, b)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Value at a grid node.
    pub fn at_node(&self, t: usize, w: usize, i: usize, j: usize) -> f64 {
        let g = &self.grid;
        self.layer(t)[(w * g.soc.len() + i) * g.pm10.len() + j]
    }

    /// Bilinear interpolation of `V_t` at `x`, clamped to the grid span.
    /// Uses the first braking layer of augmented tables.
    pub fn interpolate(&self, t: usize, x: &State) -> f64 {
        let c = Corner::locate(&self.grid, x);
        let layer = self.layer(t);
        let n_c = self.grid.pm10.len();
        c.eval(|i, j| layer[i * n_c + j])
    }

    /// Trilinear interpolation over (SOC, PM10, braking).
    pub fn interpolate_augmented(&self, t: usize, x: &State, b: f64) -> f64 {
        let Some(axis) = &self.grid.braking else {
            return self.interpolate(t, x);
        };
        let mut weights = vec![0.0; axis.len()];
        let (g, psi) = axis.bracket(b);
        weights[g] += 1.0 - psi;
        weights[g + 1] += psi;
        self.interpolate_mixed(t, &Corner::locate(&self.grid, x), &weights)
    }

    /// Interpolates the braking-weighted mixture `Σ_g β_g V_t[g]`.
    pub(crate) fn interpolate_mixed(&self, t: usize, c: &Corner, weights: &[f64]) -> f64 {
        let layer = self.layer(t);
        let n_c = self.grid.pm10.len();
        let stride = self.grid.layer_len();
        c.eval(|i, j| {
            let mut acc = 0.0;
            for (g, &beta) in weights.iter().enumerate() {
                if beta != 0.0 {
                    acc += beta * layer[g * stride + i * n_c + j];
                }
            }
            acc
        })
    }

    pub fn header(&self) -> ValueTableHeader {
        let mut h = Sha256::new();
        for v in &self.values {
            h.update(v.to_le_bytes());
        }
        ValueTableHeader {
            kind: self.kind,
            grid: self.grid.clone(),
            horizon: self.horizon,
            config_hash: self.config_hash.clone(),
            value_count: self.values.len(),
            data_sha256: hex::encode(h.finalize()),
        }
    }

    /// Writes `<path>.bin` and `<path>.json`.
    pub fn save(&self, path: &Path) -> Result<ValueTableHeader> {
        let (bin, json) = table_paths(path);
        if let Some(dir) = bin.parent() {
            fs::create_dir_all(dir)?;
        }
        let mut w = BufWriter::new(File::create(&bin)?);
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()?;
        let header = self.header();
        fs::write(&json, serde_json::to_string_pretty(&header)?)?;
        Ok(header)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (bin, json) = table_paths(path);
        let err = |p: &Path, reason: String| EmsError::Artifact {
            path: p.to_path_buf(),
            reason,
        };
        let header: ValueTableHeader = serde_json::from_slice(
            &fs::read(&json).map_err(|e| err(&json, format!("cannot read header: {e}")))?,
        )?;
        let expected = (header.horizon + 1) * header.grid.len();
        if header.value_count != expected {
            return Err(err(&json, format!("header declares {} values, grid needs {expected}", header.value_count)));
        }
        let mut r = BufReader::new(File::open(&bin).map_err(|e| err(&bin, format!("cannot open: {e}")))?);
        let mut values = Vec::with_capacity(expected);
        let mut buf = [0u8; 8];
        for _ in 0..expected {
            r.read_exact(&mut buf).map_err(|_| err(&bin, "truncated value file".into()))?;
            values.push(f64::from_le_bytes(buf));
        }
        if r.read(&mut buf)? != 0 {
            return Err(err(&bin, "trailing bytes after values".into()));
        }
        let table = Self {
            kind: header.kind,
            grid: header.grid.clone(),
            horizon: header.horizon,
            config_hash: header.config_hash.clone(),
            values,
        };
        if table.header().data_sha256 != header.data_sha256 {
            return Err(err(&bin, "content does not match its header hash".into()));
        }
        Ok(table)
    }
}

pub fn table_paths(path: &Path) -> (PathBuf, PathBuf) {
    (path.with_extension("bin"), path.with_extension("json"))
}
