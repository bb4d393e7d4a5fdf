//! Particle batches: N×d sample positions tagged with their role.

use std::io::{Read, Write};

use ndarray::{Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Whether a batch holds model samples (negatives) or data samples (positives).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Model,
    Data,
}

/// An immutable N×d array of finite particle positions.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleBatch {
    positions: Array2<f64>,
    role: Role,
    seed: u64,
}

impl ParticleBatch {
    /// Builds a batch, rejecting empty shapes and non-finite entries.
    pub fn new(positions: Array2<f64>, role: Role, seed: u64) -> Result<Self> {
        let (n, d) = positions.dim();
        if n == 0 || d == 0 {
            return Err(Error::Shape(format!("batch must be non-empty, got {n}x{d}")));
        }
        if let Some(bad) = positions.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "batch entry ({}, {}) is {}",
                bad / d,
                bad % d,
                positions.as_slice().map_or(f64::NAN, |s| s[bad])
            )));
        }
        Ok(Self {
            positions,
            role,
            seed,
        })
    }

    /// Convenience constructor from row vectors (seed provenance 0).
    pub fn from_rows(rows: &[Vec<f64>], role: Role) -> Result<Self> {
        let n = rows.len();
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::Shape("rows have unequal lengths".into()));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let positions = Array2::from_shape_vec((n, d), flat)
            .map_err(|e| Error::Shape(e.to_string()))?;
        Self::new(positions, role, 0)
    }

    pub fn len(&self) -> usize {
        self.positions.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.positions.ncols()
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn positions(&self) -> ArrayView2<'_, f64> {
        self.positions.view()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.positions.row(i)
    }

    pub fn into_positions(self) -> Array2<f64> {
        self.positions
    }

    /// Same positions under a different role.
    pub fn with_role(&self, role: Role) -> Self {
        Self {
            positions: self.positions.clone(),
            role,
            seed: self.seed,
        }
    }

    /// Writes `x0,x1,...` header followed by one row per particle.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let header: Vec<String> = (0..self.dim()).map(|k| format!("x{k}")).collect();
        w.write_record(&header)?;
        for row in self.positions.rows() {
            w.write_record(row.iter().map(|v| v.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }

    /// Re-imports a batch previously written by [`ParticleBatch::write_csv`].
    pub fn read_csv<R: Read>(reader: R, role: Role) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let headers = r.headers()?.clone();
        for (k, h) in headers.iter().enumerate() {
            if h.trim() != format!("x{k}") {
                return Err(Error::Config(format!(
                    "unexpected CSV column '{h}' at position {k}"
                )));
            }
        }
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let row = rec
                .iter()
                .map(|s| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::Config(format!("bad number '{s}': {e}")))
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        Self::from_rows(&rows, role)
    }
}

pub(crate) fn check_same_dim(a: &ParticleBatch, b: &ParticleBatch) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::Shape(format!(
            "dimension mismatch: {} vs {}",
            a.dim(),
            b.dim()
        )));
    }
    Ok(())
}
