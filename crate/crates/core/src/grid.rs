//! Periodic lattices, wavevector bookkeeping and the N-d FFT.
//!
//! Coefficients are stored in standard FFT ordering per axis
//! (`0, 1, ..., n/2, -n/2+1, ..., -1`), row-major over axes with axis 0 the
//! slowest. The forward transform is the plain DFT `c_k = sum_x f(x) e^{-i k.x}`
//! and the inverse carries the `1/N` factor, so the kernels themselves are
//! normalization-free. The continuous transform `(2 pi)^{-d/2} int f e^{-i x.xi}`
//! is recovered as `fourier_scale() * c_k`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{NskError, Result};

/// Minimum resolution per axis.
pub const MIN_MODES: usize = 8;

pub struct Grid {
    n: Vec<usize>,
    lengths: Vec<f64>,
    /// Per-mode |xi| using the true wavevector.
    xi_norm: Vec<f64>,
    /// Per-axis, per-mode derivative wavenumbers (Nyquist component zeroed).
    kd: Vec<Vec<f64>>,
    /// Per-mode |kd|^2.
    kd_sq: Vec<f64>,
    dealias: Vec<bool>,
    forward: Vec<Arc<dyn Fft<f64>>>,
    inverse: Vec<Arc<dyn Fft<f64>>>,
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid")
            .field("n", &self.n)
            .field("lengths", &self.lengths)
            .finish()
    }
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n && self.lengths == other.lengths
    }
}

/// Signed mode index for position `i` along an axis of `n` modes.
#[inline]
pub fn signed_index(i: usize, n: usize) -> i64 {
    if i <= n / 2 {
        i as i64
    } else {
        i as i64 - n as i64
    }
}

impl Grid {
    pub fn new(n: &[usize], lengths: &[f64]) -> Result<Arc<Grid>> {
        let d = n.len();
        if !(1..=3).contains(&d) {
            return Err(NskError::Config(format!(
                "grid dimension must be 1, 2 or 3, got {d}"
            )));
        }
        if lengths.len() != d {
            return Err(NskError::Config(format!(
                "grid has {d} axes but {} periods",
                lengths.len()
            )));
        }
        for (axis, (&na, &la)) in n.iter().zip(lengths).enumerate() {
            if na < MIN_MODES || na % 2 != 0 {
                return Err(NskError::Config(format!(
                    "grid.n[{axis}] = {na}: mode counts must be even and >= {MIN_MODES}"
                )));
            }
            if !(la.is_finite() && la > 0.0) {
                return Err(NskError::Config(format!(
                    "grid.L[{axis}] = {la}: periods must be positive"
                )));
            }
        }

        let total: usize = n.iter().product();
        let axis_k: Vec<Vec<f64>> = n
            .iter()
            .zip(lengths)
            .map(|(&na, &la)| {
                (0..na)
                    .map(|i| signed_index(i, na) as f64 * 2.0 * PI / la)
                    .collect()
            })
            .collect();

        let mut xi_norm = vec![0.0; total];
        let mut kd = vec![vec![0.0; total]; d];
        let mut kd_sq = vec![0.0; total];
        let mut dealias = vec![true; total];
        let mut idx = vec![0usize; d];
        for flat in 0..total {
            let mut xs = 0.0;
            let mut ks = 0.0;
            for axis in 0..d {
                let k = axis_k[axis][idx[axis]];
                xs += k * k;
                let kder = if idx[axis] == n[axis] / 2 { 0.0 } else { k };
                kd[axis][flat] = kder;
                ks += kder * kder;
                if signed_index(idx[axis], n[axis]).unsigned_abs() as usize * 3 > n[axis] {
                    dealias[flat] = false;
                }
            }
            xi_norm[flat] = xs.sqrt();
            kd_sq[flat] = ks;
            // row-major increment, last axis fastest
            for axis in (0..d).rev() {
                idx[axis] += 1;
                if idx[axis] < n[axis] {
                    break;
                }
                idx[axis] = 0;
            }
        }

        let mut planner = FftPlanner::new();
        let forward = n.iter().map(|&na| planner.plan_fft_forward(na)).collect();
        let inverse = n.iter().map(|&na| planner.plan_fft_inverse(na)).collect();

        Ok(Arc::new(Grid {
            n: n.to_vec(),
            lengths: lengths.to_vec(),
            xi_norm,
            kd,
            kd_sq,
            dealias,
            forward,
            inverse,
        }))
    }

    /// Cubic grid with the same resolution and period on every axis.
    pub fn cube(d: usize, n: usize, length: f64) -> Result<Arc<Grid>> {
        Grid::new(&vec![n; d], &vec![length; d])
    }

    pub fn dim(&self) -> usize {
        self.n.len()
    }

    pub fn n(&self) -> &[usize] {
        &self.n
    }

    pub fn lengths(&self) -> &[f64] {
        &self.lengths
    }

    pub fn mode_count(&self) -> usize {
        self.xi_norm.len()
    }

    pub fn volume(&self) -> f64 {
        self.lengths.iter().product()
    }

    pub fn cell_volume(&self) -> f64 {
        self.volume() / self.mode_count() as f64
    }

    pub fn fundamental(&self, axis: usize) -> f64 {
        2.0 * PI / self.lengths[axis]
    }

    /// Volume element of the dual lattice, `prod 2 pi / L`.
    pub fn dxi_volume(&self) -> f64 {
        (0..self.dim()).map(|a| self.fundamental(a)).product()
    }

    /// Factor mapping a stored DFT coefficient onto the continuous transform value.
    pub fn fourier_scale(&self) -> f64 {
        (2.0 * PI).powf(-(self.dim() as f64) / 2.0) * self.cell_volume()
    }

    /// Parseval constant: `sum |f_x|^2 dV = parseval_factor() * sum |c_k|^2`.
    pub fn parseval_factor(&self) -> f64 {
        self.cell_volume() / self.mode_count() as f64
    }

    pub fn multi_index(&self, flat: usize) -> Vec<usize> {
        let mut rem = flat;
        let mut idx = vec![0; self.dim()];
        for axis in (0..self.dim()).rev() {
            idx[axis] = rem % self.n[axis];
            rem /= self.n[axis];
        }
        idx
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter()
            .zip(&self.n)
            .fold(0, |acc, (&i, &n)| acc * n + i)
    }

    /// Signed integer mode numbers of a flat index.
    pub fn mode_numbers(&self, flat: usize) -> Vec<i64> {
        self.multi_index(flat)
            .iter()
            .zip(&self.n)
            .map(|(&i, &n)| signed_index(i, n))
            .collect()
    }

    /// Flat index of the mode with the given signed mode numbers (wrapped).
    pub fn index_of_modes(&self, modes: &[i64]) -> usize {
        let idx: Vec<usize> = modes
            .iter()
            .zip(&self.n)
            .map(|(&m, &n)| m.rem_euclid(n as i64) as usize)
            .collect();
        self.flat_index(&idx)
    }

    /// Flat index of the mode `-k`.
    pub fn negated_index(&self, flat: usize) -> usize {
        let idx: Vec<usize> = self
            .multi_index(flat)
            .iter()
            .zip(&self.n)
            .map(|(&i, &n)| (n - i) % n)
            .collect();
        self.flat_index(&idx)
    }

    /// Physical wavevector of a mode.
    pub fn wavevector(&self, flat: usize) -> Result<Vec<f64>> {
        if flat >= self.mode_count() {
            return Err(NskError::IndexOutOfRange {
                index: flat,
                len: self.mode_count(),
            });
        }
        Ok(self
            .mode_numbers(flat)
            .iter()
            .enumerate()
            .map(|(axis, &m)| m as f64 * self.fundamental(axis))
            .collect())
    }

    pub fn xi_norm(&self) -> &[f64] {
        &self.xi_norm
    }

    /// Derivative wavenumbers along `axis` for every mode. These agree with
    /// the wavevector except on the Nyquist plane, where odd-order symbols
    /// are set to zero so real data stays real.
    pub fn deriv_k(&self, axis: usize) -> &[f64] {
        &self.kd[axis]
    }

    pub fn deriv_k_sq(&self) -> &[f64] {
        &self.kd_sq
    }

    /// Largest |xi| on the grid.
    pub fn xi_max(&self) -> f64 {
        self.xi_norm.iter().cloned().fold(0.0, f64::max)
    }

    /// Smallest nonzero |xi| on the grid.
    pub fn xi_min(&self) -> f64 {
        (0..self.dim())
            .map(|a| self.fundamental(a))
            .fold(f64::INFINITY, f64::min)
    }

    /// True when every axis index satisfies `|k| <= n/3` (the 2/3 rule band).
    pub fn dealias_mask(&self) -> &[bool] {
        &self.dealias
    }

    /// Physical sample coordinates of a flat index, in `[0, L)`.
    pub fn position(&self, flat: usize) -> Vec<f64> {
        self.multi_index(flat)
            .iter()
            .enumerate()
            .map(|(axis, &i)| i as f64 * self.lengths[axis] / self.n[axis] as f64)
            .collect()
    }

    pub(crate) fn fft_forward(&self, data: &mut [Complex64]) {
        self.transform(data, &self.forward);
    }

    pub(crate) fn fft_inverse(&self, data: &mut [Complex64]) {
        self.transform(data, &self.inverse);
        let scale = 1.0 / self.mode_count() as f64;
        for c in data.iter_mut() {
            *c *= scale;
        }
    }

    fn transform(&self, data: &mut [Complex64], plans: &[Arc<dyn Fft<f64>>]) {
        assert_eq!(data.len(), self.mode_count());
        let d = self.dim();
        let mut scratch = Vec::new();
        let mut line = Vec::new();
        for axis in 0..d {
            let n = self.n[axis];
            let plan = &plans[axis];
            scratch.resize(plan.get_inplace_scratch_len(), Complex64::default());
            let stride: usize = self.n[axis + 1..].iter().product();
            if stride == 1 {
                plan.process_with_scratch(data, &mut scratch);
                continue;
            }
            let block = n * stride;
            line.resize(n, Complex64::default());
            for base in (0..data.len()).step_by(block) {
                for offset in 0..stride {
                    let start = base + offset;
                    for (i, v) in line.iter_mut().enumerate() {
                        *v = data[start + i * stride];
                    }
                    plan.process_with_scratch(&mut line, &mut scratch);
                    for (i, v) in line.iter().enumerate() {
                        data[start + i * stride] = *v;
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_odd_or_small_resolution() {
        assert!(Grid::new(&[7], &[1.0]).is_err());
        assert!(Grid::new(&[6], &[1.0]).is_err());
        assert!(Grid::new(&[8, 8], &[1.0]).is_err());
        assert!(Grid::new(&[8], &[0.0]).is_err());
        assert!(Grid::new(&[8, 8, 8, 8], &[1.0; 4]).is_err());
    }

    #[test]
    fn wavevector_follows_fft_ordering() {
        let g = Grid::cube(1, 8, 2.0 * PI).unwrap();
        assert_eq!(g.wavevector(0).unwrap(), vec![0.0]);
        assert_eq!(g.wavevector(1).unwrap(), vec![1.0]);
        assert_eq!(g.wavevector(4).unwrap(), vec![4.0]);
        assert_eq!(g.wavevector(5).unwrap(), vec![-3.0]);
        assert_eq!(g.wavevector(7).unwrap(), vec![-1.0]);
        assert!(matches!(
            g.wavevector(8),
            Err(NskError::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn mode_count_and_indices() {
        let g = Grid::new(&[8, 10, 12], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(g.mode_count(), 960);
        for flat in [0, 1, 17, 500, 959] {
            assert_eq!(g.flat_index(&g.multi_index(flat)), flat);
            let neg = g.negated_index(flat);
            assert_eq!(g.negated_index(neg), flat);
        }
        let k = g.wavevector(g.index_of_modes(&[1, -2, 3])).unwrap();
        assert!((k[0] - 2.0 * PI).abs() < 1e-15);
        assert!((k[1] + 2.0 * PI).abs() < 1e-15);
        assert!((k[2] - 2.0 * PI).abs() < 1e-15);
    }

    #[test]
    fn nyquist_derivative_symbol_is_zero() {
        let g = Grid::cube(2, 8, 2.0 * PI).unwrap();
        let ny = g.index_of_modes(&[4, 1]);
        assert_eq!(g.deriv_k(0)[ny], 0.0);
        assert_eq!(g.deriv_k(1)[ny], 1.0);
        assert!((g.xi_norm()[ny] - 17f64.sqrt()).abs() < 1e-14);
    }
}
