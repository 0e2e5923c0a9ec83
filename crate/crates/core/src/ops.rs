//! Spectral differential operators, projections and quadrature.
//!
//! All first-order symbols use [`Grid::deriv_k`], which vanishes on the
//! Nyquist plane, and the Laplacian uses its square, so
//! `divergence(gradient(f)) == laplacian(f)` holds coefficient by coefficient.

use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{NskError, Result};
use crate::field::SpectralField;
use crate::grid::Grid;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

fn check_components(grid: &Arc<Grid>, v: &[SpectralField]) -> Result<()> {
    if v.len() != grid.dim() {
        return Err(NskError::SizeMismatch {
            expected: grid.dim(),
            got: v.len(),
        });
    }
    for c in v {
        if *c.grid().as_ref() != **grid {
            return Err(NskError::GridMismatch);
        }
    }
    Ok(())
}

/// `d/dx_axis` as the multiplier `i k_axis`.
pub fn partial(f: &SpectralField, axis: usize) -> SpectralField {
    let k = f.grid().deriv_k(axis);
    f.map(|i, c| I * k[i] * c)
}

pub fn gradient(f: &SpectralField) -> Vec<SpectralField> {
    (0..f.grid().dim()).map(|axis| partial(f, axis)).collect()
}

pub fn divergence(v: &[SpectralField]) -> Result<SpectralField> {
    let grid = v
        .first()
        .ok_or_else(|| NskError::InvalidArgument("empty vector field".into()))?
        .grid()
        .clone();
    check_components(&grid, v)?;
    let mut out = SpectralField::zeros(&grid);
    for (axis, comp) in v.iter().enumerate() {
        let k = grid.deriv_k(axis);
        for (i, (o, &c)) in out.coeffs_mut().iter_mut().zip(comp.coeffs()).enumerate() {
            *o += I * k[i] * c;
        }
    }
    Ok(out)
}

pub fn laplacian(f: &SpectralField) -> SpectralField {
    let k2 = f.grid().deriv_k_sq();
    f.map(|i, c| -k2[i] * c)
}

/// Fractional derivative `|nabla|^s`; the DC coefficient maps to zero.
pub fn riesz_potential(f: &SpectralField, s: f64) -> SpectralField {
    let xi = f.grid().xi_norm();
    f.map(|i, c| if xi[i] == 0.0 { Complex64::default() } else { c * xi[i].powf(s) })
}

/// Splits `v` into its solenoidal and potential parts. The DC mode is
/// assigned entirely to the solenoidal part, so the parts sum to `v` exactly.
pub fn helmholtz_project(v: &[SpectralField]) -> Result<(Vec<SpectralField>, Vec<SpectralField>)> {
    let grid = v
        .first()
        .ok_or_else(|| NskError::InvalidArgument("empty vector field".into()))?
        .grid()
        .clone();
    check_components(&grid, v)?;
    let d = grid.dim();
    let n = grid.mode_count();
    let k2 = grid.deriv_k_sq();
    let mut sol: Vec<Vec<Complex64>> = v.iter().map(|c| c.coeffs().to_vec()).collect();
    let mut pot: Vec<Vec<Complex64>> = vec![vec![Complex64::default(); n]; d];
    for i in 0..n {
        if k2[i] == 0.0 {
            continue;
        }
        let mut kdotv = Complex64::default();
        for (axis, comp) in v.iter().enumerate() {
            kdotv += grid.deriv_k(axis)[i] * comp.coeffs()[i];
        }
        for axis in 0..d {
            let p = grid.deriv_k(axis)[i] * kdotv / k2[i];
            pot[axis][i] = p;
            sol[axis][i] = v[axis].coeffs()[i] - p;
        }
    }
    let wrap = |c: Vec<Vec<Complex64>>| -> Vec<SpectralField> {
        c.into_iter()
            .map(|x| SpectralField::from_coeffs(&grid, x).expect("sizes match"))
            .collect()
    };
    Ok((wrap(sol), wrap(pot)))
}

/// Lame operator `mu Laplacian + (lambda + mu) grad div`.
pub fn lame_apply(v: &[SpectralField], mu: f64, lambda_visc: f64) -> Result<Vec<SpectralField>> {
    if !(mu > 0.0) || !(lambda_visc + 2.0 * mu > 0.0) {
        return Err(NskError::Config(format!(
            "Lame parameters need mu > 0 and lambda + 2 mu > 0 (mu = {mu}, lambda = {lambda_visc})"
        )));
    }
    let grid = v
        .first()
        .ok_or_else(|| NskError::InvalidArgument("empty vector field".into()))?
        .grid()
        .clone();
    check_components(&grid, v)?;
    let d = grid.dim();
    let k2 = grid.deriv_k_sq();
    let coupling = lambda_visc + mu;
    let mut out: Vec<SpectralField> = v.iter().map(|c| c.scaled(0.0)).collect();
    for i in 0..grid.mode_count() {
        let mut kdotv = Complex64::default();
        for (axis, comp) in v.iter().enumerate() {
            kdotv += grid.deriv_k(axis)[i] * comp.coeffs()[i];
        }
        for axis in 0..d {
            out[axis].coeffs_mut()[i] =
                -mu * k2[i] * v[axis].coeffs()[i] - coupling * grid.deriv_k(axis)[i] * kdotv;
        }
    }
    Ok(out)
}

/// Physical-space integral over one period cell.
pub fn moment(f: &SpectralField) -> f64 {
    f.coeffs()[0].re * f.grid().cell_volume()
}

/// Zeroes every mode outside the 2/3-rule band.
pub fn dealias(f: &mut SpectralField) {
    let grid = f.grid().clone();
    for (c, &keep) in f.coeffs_mut().iter_mut().zip(grid.dealias_mask()) {
        if !keep {
            *c = Complex64::default();
        }
    }
}

pub fn dealiased(f: &SpectralField) -> SpectralField {
    let mut out = f.clone();
    dealias(&mut out);
    out
}

/// Transforms pointwise samples and applies the 2/3 rule.
pub fn from_physical_dealiased(grid: &Arc<Grid>, samples: &[f64]) -> SpectralField {
    let mut f = SpectralField::from_physical(grid, samples).expect("caller passes full grids");
    dealias(&mut f);
    f
}

/// Pointwise product formed in physical space and dealiased.
pub fn product(f: &SpectralField, g: &SpectralField) -> Result<SpectralField> {
    f.check_grid(g)?;
    let fp = f.to_physical();
    let gp = g.to_physical();
    let prod: Vec<f64> = fp.iter().zip(&gp).map(|(x, y)| x * y).collect();
    Ok(from_physical_dealiased(f.grid(), &prod))
}

/// Fraction of `sum |f|^2` carried by samples within `L/10` of the cell
/// boundary on some axis. Data is assumed centred in the cell.
pub fn boundary_shell_fraction(samples: &[&[f64]], grid: &Grid) -> f64 {
    let mut shell = 0.0;
    let mut total = 0.0;
    for i in 0..grid.mode_count() {
        let pos = grid.position(i);
        let near = pos
            .iter()
            .zip(grid.lengths())
            .any(|(&x, &l)| (x - 0.5 * l).abs() >= 0.4 * l);
        let e: f64 = samples.iter().map(|s| s[i] * s[i]).sum();
        total += e;
        if near {
            shell += e;
        }
    }
    if total == 0.0 {
        0.0
    } else {
        shell / total
    }
}
