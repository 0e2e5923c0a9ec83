//! Spectral fields and the `(a, m)` state.

use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;

use crate::error::{NskError, Result};
use crate::grid::Grid;

/// Complex Fourier coefficients of one scalar field on a [`Grid`].
#[derive(Debug, Clone)]
pub struct SpectralField {
    grid: Arc<Grid>,
    coeffs: Vec<Complex64>,
}

impl SpectralField {
    pub fn zeros(grid: &Arc<Grid>) -> Self {
        SpectralField {
            grid: grid.clone(),
            coeffs: vec![Complex64::default(); grid.mode_count()],
        }
    }

    pub fn from_coeffs(grid: &Arc<Grid>, coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != grid.mode_count() {
            return Err(NskError::SizeMismatch {
                expected: grid.mode_count(),
                got: coeffs.len(),
            });
        }
        Ok(SpectralField {
            grid: grid.clone(),
            coeffs,
        })
    }

    /// Forward transform of physical samples.
    pub fn from_physical(grid: &Arc<Grid>, samples: &[f64]) -> Result<Self> {
        if samples.len() != grid.mode_count() {
            return Err(NskError::SizeMismatch {
                expected: grid.mode_count(),
                got: samples.len(),
            });
        }
        let mut coeffs: Vec<Complex64> = samples.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        grid.fft_forward(&mut coeffs);
        Ok(SpectralField {
            grid: grid.clone(),
            coeffs,
        })
    }

    /// Samples `f` at the grid points and transforms.
    pub fn from_fn(grid: &Arc<Grid>, f: impl Fn(&[f64]) -> f64) -> Self {
        let samples: Vec<f64> = (0..grid.mode_count()).map(|i| f(&grid.position(i))).collect();
        Self::from_physical(grid, &samples).expect("sizes match by construction")
    }

    /// Builds a field from its continuous-transform values `f_hat(xi)`.
    pub fn from_symbol(grid: &Arc<Grid>, f: impl Fn(usize) -> Complex64) -> Self {
        let inv = 1.0 / grid.fourier_scale();
        let coeffs = (0..grid.mode_count()).map(|i| f(i) * inv).collect();
        SpectralField {
            grid: grid.clone(),
            coeffs,
        }
    }

    /// Random Hermitian field with coefficients drawn uniformly in the unit
    /// disc on modes where `keep(flat)` holds.
    pub fn random_hermitian<R: Rng>(grid: &Arc<Grid>, rng: &mut R, keep: impl Fn(usize) -> bool) -> Self {
        let mut coeffs = vec![Complex64::default(); grid.mode_count()];
        for (i, c) in coeffs.iter_mut().enumerate() {
            if keep(i) {
                *c = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            }
        }
        let mut f = SpectralField {
            grid: grid.clone(),
            coeffs,
        };
        f.symmetrize();
        f
    }

    /// Projects onto Hermitian-symmetric coefficients: `c(-k) = conj c(k)`.
    pub fn symmetrize(&mut self) {
        let g = self.grid.clone();
        let orig = self.coeffs.clone();
        for (i, c) in self.coeffs.iter_mut().enumerate() {
            let j = g.negated_index(i);
            *c = 0.5 * (orig[i] + orig[j].conj());
        }
    }

    pub fn to_physical(&self) -> Vec<f64> {
        let mut data = self.coeffs.clone();
        self.grid.fft_inverse(&mut data);
        data.into_iter().map(|c| c.re).collect()
    }

    /// Inverse transform keeping the imaginary parts (for diagnostics).
    pub fn to_physical_complex(&self) -> Vec<Complex64> {
        let mut data = self.coeffs.clone();
        self.grid.fft_inverse(&mut data);
        data
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<Complex64> {
        self.coeffs
    }

    /// Continuous-transform value `f_hat(xi_k)`.
    pub fn fourier_value(&self, flat: usize) -> Complex64 {
        self.coeffs[flat] * self.grid.fourier_scale()
    }

    pub fn same_grid(&self, other: &SpectralField) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid) || *self.grid == *other.grid
    }

    pub fn check_grid(&self, other: &SpectralField) -> Result<()> {
        if self.same_grid(other) {
            Ok(())
        } else {
            Err(NskError::GridMismatch)
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        self.map(|_, c| c * s)
    }

    pub fn map(&self, f: impl Fn(usize, Complex64) -> Complex64) -> Self {
        SpectralField {
            grid: self.grid.clone(),
            coeffs: self.coeffs.iter().enumerate().map(|(i, &c)| f(i, c)).collect(),
        }
    }

    pub fn add(&self, other: &SpectralField) -> Result<Self> {
        self.check_grid(other)?;
        Ok(self.map(|i, c| c + other.coeffs[i]))
    }

    pub fn sub(&self, other: &SpectralField) -> Result<Self> {
        self.check_grid(other)?;
        Ok(self.map(|i, c| c - other.coeffs[i]))
    }

    pub fn axpy(&mut self, alpha: f64, x: &SpectralField) {
        for (c, &v) in self.coeffs.iter_mut().zip(&x.coeffs) {
            *c += alpha * v;
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    pub fn l2_sq(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|c| c.re == 0.0 && c.im == 0.0)
    }

    /// Largest violation of `c(-k) = conj c(k)`, relative to the largest coefficient.
    pub fn hermitian_defect(&self) -> f64 {
        let scale = self.max_abs();
        if scale == 0.0 {
            return 0.0;
        }
        let g = &self.grid;
        (0..self.coeffs.len())
            .map(|i| (self.coeffs[i] - self.coeffs[g.negated_index(i)].conj()).norm())
            .fold(0.0, f64::max)
            / scale
    }
}

/// Largest coefficient difference between two fields relative to the larger of their maxima.
pub fn relative_difference(a: &SpectralField, b: &SpectralField) -> f64 {
    let scale = a.max_abs().max(b.max_abs());
    if scale == 0.0 {
        return 0.0;
    }
    a.coeffs()
        .iter()
        .zip(b.coeffs())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
        / scale
}

/// Density perturbation `a`, momentum `m` and the current time.
#[derive(Debug, Clone)]
pub struct State {
    pub a: SpectralField,
    pub m: Vec<SpectralField>,
    pub t: f64,
}

impl State {
    pub fn zeros(grid: &Arc<Grid>) -> Self {
        State {
            a: SpectralField::zeros(grid),
            m: (0..grid.dim()).map(|_| SpectralField::zeros(grid)).collect(),
            t: 0.0,
        }
    }

    pub fn new(a: SpectralField, m: Vec<SpectralField>, t: f64) -> Result<Self> {
        if m.len() != a.grid().dim() {
            return Err(NskError::SizeMismatch {
                expected: a.grid().dim(),
                got: m.len(),
            });
        }
        for mi in &m {
            a.check_grid(mi)?;
        }
        Ok(State { a, m, t })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.a.grid()
    }

    pub fn components(&self) -> impl Iterator<Item = &SpectralField> {
        std::iter::once(&self.a).chain(self.m.iter())
    }

    /// Largest coefficient difference over all components, relative to the
    /// largest coefficient of either state.
    pub fn relative_difference(&self, other: &State) -> f64 {
        let scale = self
            .components()
            .chain(other.components())
            .map(|f| f.max_abs())
            .fold(0.0, f64::max);
        if scale == 0.0 {
            return 0.0;
        }
        self.components()
            .zip(other.components())
            .flat_map(|(x, y)| x.coeffs().iter().zip(y.coeffs()).map(|(p, q)| (p - q).norm()))
            .fold(0.0, f64::max)
            / scale
    }

    pub fn hermitian_defect(&self) -> f64 {
        self.components().map(|f| f.hermitian_defect()).fold(0.0, f64::max)
    }

    pub fn is_zero(&self) -> bool {
        self.components().all(|f| f.is_zero())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    #[test]
    fn zero_and_constant_samples() {
        let g = Grid::cube(2, 8, 1.0).unwrap();
        let z = SpectralField::from_physical(&g, &vec![0.0; 64]).unwrap();
        assert!(z.is_zero());
        let c = SpectralField::from_physical(&g, &vec![2.5; 64]).unwrap();
        assert!((c.coeffs()[0].re - 2.5 * 64.0).abs() < 1e-12);
        assert!(c.coeffs()[1..].iter().all(|v| v.norm() < 1e-13));
    }

    #[test]
    fn cosine_hits_plus_minus_one_only() {
        let g = Grid::cube(1, 8, 2.0 * PI).unwrap();
        let f = SpectralField::from_fn(&g, |x| x[0].cos());
        let c = f.coeffs();
        assert!((c[1] - c[7]).norm() < 1e-14);
        assert!((c[1].re - 4.0).abs() < 1e-13);
        for (i, v) in c.iter().enumerate() {
            if i != 1 && i != 7 {
                assert!(v.norm() < 1e-14, "mode {i}: {v}");
            }
        }
    }

    #[test]
    fn size_mismatch_is_reported() {
        let g = Grid::cube(1, 8, 1.0).unwrap();
        assert!(matches!(
            SpectralField::from_physical(&g, &[0.0; 7]),
            Err(NskError::SizeMismatch { expected: 8, got: 7 })
        ));
    }

    #[test]
    fn random_hermitian_is_real_in_physical_space() {
        let g = Grid::new(&[8, 10, 12], &[1.0, 2.0, 3.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f = SpectralField::random_hermitian(&g, &mut rng, |_| true);
        assert!(f.hermitian_defect() < 1e-15);
        let imag = f.to_physical_complex().iter().map(|c| c.im.abs()).fold(0.0, f64::max);
        assert!(imag < 1e-13);
    }
}
