//! Field snapshot files.
//!
//! Layout: the 8-byte magic `NSKFLD01`, a little-endian `u64` byte length
//! followed by that many bytes of JSON header `{d, n, L, t, components}`,
//! then for each component `prod(n)` complex coefficients stored as
//! interleaved little-endian `f64` pairs `(re, im)` in FFT ordering.

use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{NskError, Result};
use crate::field::{SpectralField, State};
use crate::grid::Grid;

pub const MAGIC: &[u8; 8] = b"NSKFLD01";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotHeader {
    pub d: usize,
    pub n: Vec<usize>,
    #[serde(rename = "L")]
    pub lengths: Vec<f64>,
    pub t: f64,
    pub components: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct Snapshot {
    pub header: SnapshotHeader,
    pub fields: Vec<SpectralField>,
}

impl Snapshot {
    pub fn from_state(state: &State) -> Self {
        let g = state.grid();
        let mut components = vec!["a".to_string()];
        components.extend((1..=g.dim()).map(|j| format!("m{j}")));
        Snapshot {
            header: SnapshotHeader {
                d: g.dim(),
                n: g.n().to_vec(),
                lengths: g.lengths().to_vec(),
                t: state.t,
                components,
            },
            fields: state.components().cloned().collect(),
        }
    }

    /// Interprets the components as `a, m1, ..., md`.
    pub fn to_state(&self) -> Result<State> {
        let d = self.header.d;
        if self.fields.len() != d + 1 {
            return Err(NskError::Snapshot(format!(
                "state snapshots need {} components, found {}",
                d + 1,
                self.fields.len()
            )));
        }
        State::new(self.fields[0].clone(), self.fields[1..].to_vec(), self.header.t)
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let header = serde_json::to_vec(&self.header)?;
        w.write_all(MAGIC)?;
        w.write_all(&(header.len() as u64).to_le_bytes())?;
        w.write_all(&header)?;
        for f in &self.fields {
            let mut buf = Vec::with_capacity(f.coeffs().len() * 16);
            for c in f.coeffs() {
                buf.extend_from_slice(&c.re.to_le_bytes());
                buf.extend_from_slice(&c.im.to_le_bytes());
            }
            w.write_all(&buf)?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(NskError::Snapshot("bad magic".into()));
        }
        let mut len = [0u8; 8];
        r.read_exact(&mut len)?;
        let len = u64::from_le_bytes(len) as usize;
        let mut header = vec![0u8; len];
        r.read_exact(&mut header)?;
        let header: SnapshotHeader = serde_json::from_slice(&header)?;
        if header.n.len() != header.d || header.lengths.len() != header.d {
            return Err(NskError::Snapshot("header dimension mismatch".into()));
        }
        let grid = Grid::new(&header.n, &header.lengths)?;
        let fields = Self::read_fields(&mut r, &grid, header.components.len())?;
        Ok(Snapshot { header, fields })
    }

    fn read_fields<R: Read>(r: &mut R, grid: &Arc<Grid>, count: usize) -> Result<Vec<SpectralField>> {
        let modes = grid.mode_count();
        let mut buf = vec![0u8; modes * 16];
        let mut out = Vec::with_capacity(count);
        for _ in 0..count {
            r.read_exact(&mut buf)?;
            let coeffs = buf
                .chunks_exact(16)
                .map(|c| {
                    let re = f64::from_le_bytes(c[..8].try_into().unwrap());
                    let im = f64::from_le_bytes(c[8..].try_into().unwrap());
                    Complex64::new(re, im)
                })
                .collect();
            out.push(SpectralField::from_coeffs(grid, coeffs)?);
        }
        Ok(out)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_to(std::io::BufWriter::new(file))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_from(std::io::BufReader::new(file))
    }
}
