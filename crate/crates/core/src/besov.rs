//! Littlewood-Paley analysis on the Fourier side.
//!
//! The radial cutoff `chi` equals one on `[0, 0.625]`, vanishes on
//! `[1.1, inf)` and is a quintic smoothstep in between. The block bump
//! `phi(r) = chi(r/2) - chi(r)` is supported in `[0.625, 2.2]` and equals one
//! on `[1.1, 1.25]`, so the sum over `j` telescopes to one on every nonzero
//! lattice mode. All norms are quadratures over the dual lattice with volume
//! element `prod 2 pi / L` applied to the continuous transform values.

use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{NskError, Result};
use crate::field::SpectralField;
use crate::grid::Grid;
use crate::ops;

pub const CHI_INNER: f64 = 0.625;
pub const CHI_OUTER: f64 = 1.1;
/// `phi` is identically one on `[CHI_OUTER, 2 CHI_INNER]`.
pub const PHI_PLATEAU: (f64, f64) = (CHI_OUTER, 2.0 * CHI_INNER);
pub const PHI_SUPPORT: (f64, f64) = (CHI_INNER, 2.0 * CHI_OUTER);

/// Largest admissible Gevrey exponent `sqrt(c0 t) |xi|_max`.
pub const GEVREY_EXPONENT_LIMIT: f64 = 700.0;

pub fn chi(r: f64) -> f64 {
    if r <= CHI_INNER {
        1.0
    } else if r >= CHI_OUTER {
        0.0
    } else {
        let x = (r - CHI_INNER) / (CHI_OUTER - CHI_INNER);
        1.0 - x * x * x * (10.0 - 15.0 * x + 6.0 * x * x)
    }
}

pub fn phi(r: f64) -> f64 {
    chi(0.5 * r) - chi(r)
}

/// Block weights of one grid: for each block `j` the modes it touches and
/// the value of `phi(2^-j |xi|)` there.
#[derive(Debug, Clone)]
pub struct DyadicPartition {
    j_min: i32,
    j_max: i32,
    blocks: Vec<Vec<(usize, f64)>>,
}

impl DyadicPartition {
    pub fn new(grid: &Grid) -> Self {
        let j_min = (grid.xi_min() / CHI_OUTER).log2().floor() as i32;
        let j_max = (grid.xi_max() / (2.0 * CHI_INNER)).log2().ceil() as i32;
        let mut blocks = vec![Vec::new(); (j_max - j_min + 1) as usize];
        for (flat, &r) in grid.xi_norm().iter().enumerate() {
            if r == 0.0 {
                continue;
            }
            let lo = (r / PHI_SUPPORT.1).log2().floor() as i32;
            let hi = (r / PHI_SUPPORT.0).log2().ceil() as i32;
            for j in lo.max(j_min)..=hi.min(j_max) {
                let w = phi(r * 2f64.powi(-j));
                if w > 0.0 {
                    blocks[(j - j_min) as usize].push((flat, w));
                }
            }
        }
        DyadicPartition { j_min, j_max, blocks }
    }

    pub fn j_min(&self) -> i32 {
        self.j_min
    }

    pub fn j_max(&self) -> i32 {
        self.j_max
    }

    pub fn block_count(&self) -> usize {
        self.blocks.len()
    }

    pub fn contains(&self, j: i32) -> bool {
        (self.j_min..=self.j_max).contains(&j)
    }

    /// `(flat index, weight)` pairs of block `j`; empty outside the range.
    pub fn block(&self, j: i32) -> &[(usize, f64)] {
        if self.contains(j) {
            &self.blocks[(j - self.j_min) as usize]
        } else {
            &[]
        }
    }

    /// Largest deviation of `sum_j phi_j` from one over all nonzero modes.
    pub fn unity_defect(&self, grid: &Grid) -> f64 {
        let mut sum = vec![0.0; grid.mode_count()];
        for b in &self.blocks {
            for &(i, w) in b {
                sum[i] += w;
            }
        }
        sum.iter()
            .zip(grid.xi_norm())
            .filter(|(_, &r)| r > 0.0)
            .map(|(s, _)| (s - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Largest number of blocks meeting a single mode.
    pub fn max_overlap(&self, grid: &Grid) -> usize {
        let mut count = vec![0usize; grid.mode_count()];
        for b in &self.blocks {
            for &(i, _) in b {
                count[i] += 1;
            }
        }
        count.into_iter().max().unwrap_or(0)
    }

    /// `||Delta_j f||_{L^p hat}` for every block, given per-mode magnitudes
    /// of the continuous transform.
    pub fn block_norms(&self, magnitudes: &[f64], p: f64, dxi: f64) -> Vec<f64> {
        let q = conjugate(p);
        self.blocks
            .iter()
            .map(|b| {
                if q.is_infinite() {
                    b.iter().map(|&(i, w)| w * magnitudes[i]).fold(0.0, f64::max)
                } else if q == 1.0 {
                    b.iter().map(|&(i, w)| w * magnitudes[i]).sum::<f64>() * dxi
                } else if q == 2.0 {
                    (b.iter()
                        .map(|&(i, w)| {
                            let v = w * magnitudes[i];
                            v * v
                        })
                        .sum::<f64>()
                        * dxi)
                        .sqrt()
                } else {
                    (b.iter().map(|&(i, w)| (w * magnitudes[i]).powf(q)).sum::<f64>() * dxi)
                        .powf(1.0 / q)
                }
            })
            .collect()
    }
}

/// Hoelder conjugate with `1' = inf` and `inf' = 1`.
pub fn conjugate(p: f64) -> f64 {
    if p == 1.0 {
        f64::INFINITY
    } else if p.is_infinite() {
        1.0
    } else {
        p / (p - 1.0)
    }
}

/// `l^q` norm of a sequence, `q = inf` meaning the maximum.
pub fn lq_norm(values: impl IntoIterator<Item = f64>, q: f64) -> f64 {
    if q.is_infinite() {
        values.into_iter().fold(0.0, f64::max)
    } else if q == 1.0 {
        values.into_iter().sum()
    } else {
        values.into_iter().map(|v| v.powf(q)).sum::<f64>().powf(1.0 / q)
    }
}

/// Index triple of a Fourier-Besov norm, plus the optional time index of a
/// Chemin-Lerner norm. Infinite indices are `f64::INFINITY`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormSpec {
    pub s: f64,
    pub p: f64,
    pub sigma: f64,
    #[serde(default)]
    pub r: Option<f64>,
}

fn check_index(name: &str, v: f64) -> Result<()> {
    if v >= 1.0 {
        Ok(())
    } else {
        Err(NskError::InvalidArgument(format!("{name} = {v} must lie in [1, inf]")))
    }
}

impl NormSpec {
    pub fn new(s: f64, p: f64, sigma: f64) -> Self {
        NormSpec { s, p, sigma, r: None }
    }

    pub fn with_time_index(self, r: f64) -> Self {
        NormSpec { r: Some(r), ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.s.is_finite() {
            return Err(NskError::InvalidArgument(format!("s = {} must be finite", self.s)));
        }
        check_index("p", self.p)?;
        check_index("sigma", self.sigma)?;
        if let Some(r) = self.r {
            check_index("r", r)?;
        }
        Ok(())
    }

    pub fn p_conjugate(&self) -> f64 {
        conjugate(self.p)
    }
}

/// Per-mode `|f_hat(xi)|` of a scalar field.
pub fn magnitudes(f: &SpectralField) -> Vec<f64> {
    let scale = f.grid().fourier_scale();
    f.coeffs().iter().map(|c| c.norm() * scale).collect()
}

/// Per-mode Euclidean magnitude of the transform of a vector field.
pub fn vector_magnitudes(v: &[&SpectralField]) -> Result<Vec<f64>> {
    let first = v
        .first()
        .ok_or_else(|| NskError::InvalidArgument("empty vector field".into()))?;
    for c in v {
        first.check_grid(c)?;
    }
    let scale = first.grid().fourier_scale();
    let n = first.grid().mode_count();
    let mut out = vec![0.0; n];
    for c in v {
        for (o, z) in out.iter_mut().zip(c.coeffs()) {
            *o += z.norm_sqr();
        }
    }
    for o in &mut out {
        *o = o.sqrt() * scale;
    }
    Ok(out)
}

/// `(sum |m|^q dxi)^(1/q)` with `q = p'`; `p = 1` gives the supremum.
pub fn lebesgue_of_magnitudes(magnitudes: &[f64], p: f64, dxi: f64) -> f64 {
    let q = conjugate(p);
    if q.is_infinite() {
        magnitudes.iter().cloned().fold(0.0, f64::max)
    } else {
        (magnitudes.iter().map(|m| m.powf(q)).sum::<f64>() * dxi).powf(1.0 / q)
    }
}

/// Applies `phi(2^-j |xi|)`; returns zero for `j` outside the active range.
pub fn dyadic_block(f: &SpectralField, j: i32) -> SpectralField {
    let part = DyadicPartition::new(f.grid());
    dyadic_block_with(&part, f, j)
}

pub fn dyadic_block_with(part: &DyadicPartition, f: &SpectralField, j: i32) -> SpectralField {
    let mut out = SpectralField::zeros(f.grid());
    let src = f.coeffs();
    let dst = out.coeffs_mut();
    for &(i, w) in part.block(j) {
        dst[i] = src[i] * w;
    }
    out
}

pub fn fourier_lebesgue_norm(f: &SpectralField, p: f64) -> f64 {
    lebesgue_of_magnitudes(&magnitudes(f), p, f.grid().dxi_volume())
}

/// Combines block norms `b_j` (ordered from `j_min`) into
/// `|| 2^{sj} b_j ||_{l^sigma}`.
pub fn besov_from_blocks(block_norms: &[f64], j_min: i32, s: f64, sigma: f64) -> f64 {
    lq_norm(
        block_norms
            .iter()
            .enumerate()
            .map(|(k, &b)| 2f64.powf(s * (j_min + k as i32) as f64) * b),
        sigma,
    )
}

pub fn besov_norm(f: &SpectralField, spec: &NormSpec) -> Result<f64> {
    besov_norm_of_magnitudes(f.grid(), &magnitudes(f), spec)
}

/// Besov norm of a vector field with per-mode Euclidean magnitudes.
pub fn besov_norm_vector(v: &[&SpectralField], spec: &NormSpec) -> Result<f64> {
    let mags = vector_magnitudes(v)?;
    besov_norm_of_magnitudes(v[0].grid(), &mags, spec)
}

pub fn besov_norm_of_magnitudes(grid: &Grid, magnitudes: &[f64], spec: &NormSpec) -> Result<f64> {
    spec.validate()?;
    let part = DyadicPartition::new(grid);
    let blocks = part.block_norms(magnitudes, spec.p, grid.dxi_volume());
    Ok(besov_from_blocks(&blocks, part.j_min(), spec.s, spec.sigma))
}

/// `|| |nabla|^s f ||_{L^p hat}`. The DC mode never contributes; for `s < 0`
/// a nonzero DC coefficient is an error.
pub fn fourier_sobolev_norm(f: &SpectralField, s: f64, p: f64) -> Result<f64> {
    check_index("p", p)?;
    if s < 0.0 && f.coeffs()[0] != Complex64::default() {
        return Err(NskError::UndefinedAtOrigin { s });
    }
    let xi = f.grid().xi_norm();
    let mags: Vec<f64> = magnitudes(f)
        .iter()
        .zip(xi)
        .map(|(&m, &r)| if r == 0.0 { 0.0 } else { m * r.powf(s) })
        .collect();
    Ok(lebesgue_of_magnitudes(&mags, p, f.grid().dxi_volume()))
}

/// Time-norm accumulator for Chemin-Lerner and Bochner norms. Feed block
/// norms at increasing times; the inner `L^r` norm uses the trapezoid rule
/// on `g^r` (or a running maximum when `r = inf`).
#[derive(Debug, Clone)]
pub struct TimeNormAccumulator {
    spec: NormSpec,
    r: f64,
    j_min: i32,
    per_block: Vec<f64>,
    bochner: f64,
    last: Option<(f64, Vec<f64>, f64)>,
    samples: usize,
}

impl TimeNormAccumulator {
    pub fn new(spec: NormSpec, j_min: i32, blocks: usize) -> Result<Self> {
        spec.validate()?;
        let r = spec
            .r
            .ok_or_else(|| NskError::InvalidArgument("time norm needs an index r".into()))?;
        Ok(TimeNormAccumulator {
            spec,
            r,
            j_min,
            per_block: vec![0.0; blocks],
            bochner: 0.0,
            last: None,
            samples: 0,
        })
    }

    pub fn spec(&self) -> &NormSpec {
        &self.spec
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    /// Records the block norms `||Delta_j f(t)||_{L^p hat}` at time `t`.
    pub fn push(&mut self, t: f64, block_norms: &[f64]) -> Result<()> {
        if block_norms.len() != self.per_block.len() {
            return Err(NskError::SizeMismatch {
                expected: self.per_block.len(),
                got: block_norms.len(),
            });
        }
        let weighted: Vec<f64> = block_norms
            .iter()
            .enumerate()
            .map(|(k, &b)| 2f64.powf(self.spec.s * (self.j_min + k as i32) as f64) * b)
            .collect();
        let total = lq_norm(weighted.iter().cloned(), self.spec.sigma);
        if self.r.is_infinite() {
            for (acc, &w) in self.per_block.iter_mut().zip(&weighted) {
                *acc = acc.max(w);
            }
            self.bochner = self.bochner.max(total);
        } else if let Some((t0, prev, prev_total)) = &self.last {
            if t <= *t0 {
                return Err(NskError::InvalidArgument(format!(
                    "time samples must increase ({t} after {t0})"
                )));
            }
            let h = 0.5 * (t - t0);
            for ((acc, &w), &p) in self.per_block.iter_mut().zip(&weighted).zip(prev) {
                *acc += h * (w.powf(self.r) + p.powf(self.r));
            }
            self.bochner += h * (total.powf(self.r) + prev_total.powf(self.r));
        }
        self.last = Some((t, weighted, total));
        self.samples += 1;
        Ok(())
    }

    fn ready(&self) -> Result<()> {
        let needed = if self.r.is_infinite() { 1 } else { 2 };
        if self.samples < needed {
            return Err(NskError::InsufficientData(format!(
                "time norm with r = {} needs at least {needed} samples, got {}",
                self.r, self.samples
            )));
        }
        Ok(())
    }

    /// Block-first norm `|| 2^{sj} ||Delta_j f||_{L^r_t L^p hat} ||_{l^sigma}`.
    pub fn chemin_lerner(&self) -> Result<f64> {
        self.ready()?;
        let inner = self.per_block.iter().map(|&v| {
            if self.r.is_infinite() {
                v
            } else {
                v.powf(1.0 / self.r)
            }
        });
        Ok(lq_norm(inner, self.spec.sigma))
    }

    /// Time-outside norm `|| ||f(t)||_{B} ||_{L^r_t}`.
    pub fn bochner(&self) -> Result<f64> {
        self.ready()?;
        Ok(if self.r.is_infinite() {
            self.bochner
        } else {
            self.bochner.powf(1.0 / self.r)
        })
    }
}

fn time_norms(times: &[f64], series: &[Vec<f64>], grid: &Grid, spec: &NormSpec) -> Result<TimeNormAccumulator> {
    if times.len() != series.len() {
        return Err(NskError::SizeMismatch {
            expected: times.len(),
            got: series.len(),
        });
    }
    let part = DyadicPartition::new(grid);
    let mut acc = TimeNormAccumulator::new(*spec, part.j_min(), part.block_count())?;
    for (&t, mags) in times.iter().zip(series) {
        acc.push(t, &part.block_norms(mags, spec.p, grid.dxi_volume()))?;
    }
    Ok(acc)
}

fn series_magnitudes(fields: &[SpectralField]) -> Result<(Arc<Grid>, Vec<Vec<f64>>)> {
    let grid = fields
        .first()
        .ok_or_else(|| NskError::InsufficientData("empty time series".into()))?
        .grid()
        .clone();
    for f in fields {
        if **f.grid() != *grid {
            return Err(NskError::GridMismatch);
        }
    }
    Ok((grid, fields.iter().map(magnitudes).collect()))
}

/// Chemin-Lerner norm of a sampled scalar time series; `spec.r` is required.
pub fn chemin_lerner_norm(times: &[f64], fields: &[SpectralField], spec: &NormSpec) -> Result<f64> {
    let (grid, mags) = series_magnitudes(fields)?;
    time_norms(times, &mags, &grid, spec)?.chemin_lerner()
}

/// The same series measured in the Bochner space `L^r(I; B)`.
pub fn bochner_norm(times: &[f64], fields: &[SpectralField], spec: &NormSpec) -> Result<f64> {
    let (grid, mags) = series_magnitudes(fields)?;
    time_norms(times, &mags, &grid, spec)?.bochner()
}

/// Largest `t` for which the weight `e^{sqrt(c0 t)|xi|}` stays admissible.
pub fn gevrey_max_time(grid: &Grid, c0: f64) -> f64 {
    let x = GEVREY_EXPONENT_LIMIT / grid.xi_max();
    x * x / c0
}

pub fn gevrey_check(grid: &Grid, t: f64, c0: f64) -> Result<f64> {
    if !(t >= 0.0) || !(c0 > 0.0) {
        return Err(NskError::InvalidArgument(format!(
            "gevrey weight needs t >= 0 and c0 > 0 (t = {t}, c0 = {c0})"
        )));
    }
    let radius = (c0 * t).sqrt();
    let exponent = radius * grid.xi_max();
    if exponent > GEVREY_EXPONENT_LIMIT {
        return Err(NskError::GevreyOverflow {
            exponent,
            t_max: gevrey_max_time(grid, c0),
        });
    }
    Ok(radius)
}

/// Multiplies every coefficient by `e^{sqrt(c0 t)|xi|}`.
pub fn gevrey_weight(f: &SpectralField, t: f64, c0: f64) -> Result<SpectralField> {
    let radius = gevrey_check(f.grid(), t, c0)?;
    Ok(radial_exp(f, radius))
}

/// Multiplies every coefficient by `e^{-sqrt(c0 t)|xi|}`.
pub fn gevrey_unweight(f: &SpectralField, t: f64, c0: f64) -> Result<SpectralField> {
    let radius = gevrey_check(f.grid(), t, c0)?;
    Ok(radial_exp(f, -radius))
}

fn radial_exp(f: &SpectralField, radius: f64) -> SpectralField {
    if radius == 0.0 {
        return f.clone();
    }
    let xi = f.grid().xi_norm();
    f.map(|i, c| c * (radius * xi[i]).exp())
}

/// `e^{sqrt(c0 t)|nabla|}( e^{-sqrt(c0 t)|nabla|} f * e^{-sqrt(c0 t)|nabla|} g )`
/// with the product formed in physical space and dealiased.
pub fn bilinear_bt(f: &SpectralField, g: &SpectralField, t: f64, c0: f64) -> Result<SpectralField> {
    f.check_grid(g)?;
    let fu = gevrey_unweight(f, t, c0)?;
    let gu = gevrey_unweight(g, t, c0)?;
    gevrey_weight(&ops::product(&fu, &gu)?, t, c0)
}

/// Paraproduct decomposition `(sum S_{k-1}f g_k, sum f_k S_{k-1}g, sum f_k g~_k)`.
/// The DC part, which no block sees, is treated as one extra block below
/// `j_min`, so the three parts always add up to the dealiased product.
pub fn bony_split(f: &SpectralField, g: &SpectralField) -> Result<(SpectralField, SpectralField, SpectralField)> {
    f.check_grid(g)?;
    let grid = f.grid().clone();
    let part = DyadicPartition::new(&grid);
    let blocks = |h: &SpectralField| -> Vec<SpectralField> {
        let mut dc = SpectralField::zeros(&grid);
        dc.coeffs_mut()[0] = h.coeffs()[0];
        std::iter::once(dc)
            .chain((part.j_min()..=part.j_max()).map(|j| dyadic_block_with(&part, h, j)))
            .collect()
    };
    let fb = blocks(f);
    let gb = blocks(g);
    let k = fb.len();
    let mut low_high = SpectralField::zeros(&grid);
    let mut high_low = SpectralField::zeros(&grid);
    let mut diag = SpectralField::zeros(&grid);
    // S_{k-1} h = sum of blocks up to k - 2
    let mut sf = SpectralField::zeros(&grid);
    let mut sg = SpectralField::zeros(&grid);
    for i in 0..k {
        if i >= 2 {
            sf.axpy(1.0, &fb[i - 2]);
            sg.axpy(1.0, &gb[i - 2]);
        }
        if i >= 2 {
            low_high.axpy(1.0, &ops::product(&sf, &gb[i])?);
            high_low.axpy(1.0, &ops::product(&fb[i], &sg)?);
        }
        let mut near = SpectralField::zeros(&grid);
        for n in i.saturating_sub(1)..(i + 2).min(k) {
            near.axpy(1.0, &gb[n]);
        }
        diag.axpy(1.0, &ops::product(&fb[i], &near)?);
    }
    Ok((low_high, high_low, diag))
}

/// `sum_j (t^{1/2} 2^j)^sigma e^{-t delta0 4^j}` over all integers `j`
/// (terms beyond `|j| = 80` are below double precision for `t` in `[1e-12, 1e12]`).
pub fn heat_block_sum(t: f64, sigma: f64, delta0: f64) -> f64 {
    (-80..=80)
        .map(|j| {
            let x = t.sqrt() * 2f64.powi(j);
            x.powf(sigma) * (-delta0 * x * x).exp()
        })
        .sum()
}

/// One row of a norm report.
#[derive(Debug, Clone, Serialize)]
pub struct NormRow {
    pub name: String,
    pub s: f64,
    pub p: f64,
    pub sigma: f64,
    pub r: Option<f64>,
    pub value: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::relative_difference;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn mode_at(grid: &Arc<Grid>, modes: &[i64], amp: f64) -> SpectralField {
        let mut f = SpectralField::zeros(grid);
        let i = grid.index_of_modes(modes);
        let j = grid.negated_index(i);
        f.coeffs_mut()[i] = Complex64::new(amp, 0.0);
        f.coeffs_mut()[j] = Complex64::new(amp, 0.0);
        f
    }

    #[test]
    fn chi_and_phi_shape() {
        assert_eq!(chi(0.0), 1.0);
        assert_eq!(chi(0.625), 1.0);
        assert_eq!(chi(1.1), 0.0);
        assert!((chi(0.8625) - 0.5).abs() < 1e-15);
        assert_eq!(phi(1.2), 1.0);
        assert_eq!(phi(0.6), 0.0);
        assert_eq!(phi(2.4), 0.0);
        assert_eq!(phi(2.2), 0.0);
        let mut prev = 1.0;
        for k in 0..200 {
            let v = chi(0.5 + k as f64 * 0.005);
            assert!(v <= prev);
            prev = v;
        }
    }

    #[test]
    fn partition_of_unity_on_several_grids() {
        for grid in [
            Grid::cube(1, 64, 10.0).unwrap(),
            Grid::new(&[16, 24], &[3.0, 7.0]).unwrap(),
            Grid::cube(3, 16, 100.0).unwrap(),
        ] {
            let part = DyadicPartition::new(&grid);
            assert!(part.unity_defect(&grid) < 1e-12);
            assert!(part.max_overlap(&grid) <= 3);
        }
    }

    #[test]
    fn single_mode_in_block_zero_only() {
        // L = 2 pi / 1.2 puts mode 1 at |xi| = 1.2
        let g = Grid::cube(1, 16, 2.0 * PI / 1.2).unwrap();
        let f = mode_at(&g, &[1], 1.0);
        assert!(relative_difference(&dyadic_block(&f, 0), &f) < 1e-15);
        assert!(dyadic_block(&f, 1).is_zero());
        assert!(dyadic_block(&f, -1).is_zero());
        assert!(dyadic_block(&f, 1000).is_zero());
    }

    #[test]
    fn blocks_sum_to_field_without_dc() {
        let g = Grid::new(&[16, 12], &[5.0, 3.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut f = SpectralField::random_hermitian(&g, &mut rng, |_| true);
        f.coeffs_mut()[0] = Complex64::default();
        let part = DyadicPartition::new(&g);
        let mut sum = SpectralField::zeros(&g);
        for j in part.j_min()..=part.j_max() {
            sum.axpy(1.0, &dyadic_block_with(&part, &f, j));
        }
        assert!(relative_difference(&sum, &f) < 1e-12);
    }

    #[test]
    fn lebesgue_single_mode_and_homogeneity() {
        let g = Grid::cube(2, 8, 4.0).unwrap();
        let mut f = SpectralField::zeros(&g);
        let amp = 0.75;
        f.coeffs_mut()[3] = Complex64::new(amp / g.fourier_scale(), 0.0);
        let expect = amp * g.dxi_volume().sqrt();
        assert!((fourier_lebesgue_norm(&f, 2.0) - expect).abs() < 1e-14);
        assert!((fourier_lebesgue_norm(&f, 1.0) - amp).abs() < 1e-15);
        assert_eq!(fourier_lebesgue_norm(&SpectralField::zeros(&g), 2.0), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r = SpectralField::random_hermitian(&g, &mut rng, |_| true);
        for p in [1.0, 1.5, 2.0, f64::INFINITY] {
            let a = fourier_lebesgue_norm(&r.scaled(2.0), p);
            let b = fourier_lebesgue_norm(&r, p);
            assert!((a - 2.0 * b).abs() <= 1e-13 * a);
        }
    }

    #[test]
    fn besov_block_scaling() {
        let g = Grid::cube(1, 64, 2.0 * PI / 1.2).unwrap();
        let amp = 0.3;
        let mut f = SpectralField::zeros(&g);
        let i = g.index_of_modes(&[1]);
        f.coeffs_mut()[i] = Complex64::new(amp / g.fourier_scale(), 0.0);
        let single = amp * g.dxi_volume().sqrt();
        let v = besov_norm(&f, &NormSpec::new(2.0, 2.0, 1.0)).unwrap();
        assert!((v - single).abs() < 1e-14);

        // mode 8 sits at |xi| = 9.6, pure in block 3
        let mut h = SpectralField::zeros(&g);
        h.coeffs_mut()[g.index_of_modes(&[8])] = Complex64::new(1.0, 0.0);
        let s2 = besov_norm(&h, &NormSpec::new(2.0, 2.0, 1.0)).unwrap();
        let s0 = besov_norm(&h, &NormSpec::new(0.0, 2.0, 1.0)).unwrap();
        assert!((s2 / s0 - 64.0).abs() < 1e-12);
    }

    #[test]
    fn sobolev_norm_cases() {
        let g = Grid::cube(1, 16, PI).unwrap();
        // mode 1 sits at |xi| = 2
        let mut f = SpectralField::zeros(&g);
        let amp = 1.25;
        f.coeffs_mut()[1] = Complex64::new(amp / g.fourier_scale(), 0.0);
        let v = fourier_sobolev_norm(&f, 1.0, 2.0).unwrap();
        assert!((v - 2.0 * amp * g.dxi_volume().sqrt()).abs() < 1e-14);
        assert!((fourier_sobolev_norm(&f, 0.0, 1.5).unwrap() - fourier_lebesgue_norm(&f, 1.5)).abs() < 1e-15);
        f.coeffs_mut()[0] = Complex64::new(1.0, 0.0);
        assert!(matches!(
            fourier_sobolev_norm(&f, -0.5, 2.0),
            Err(NskError::UndefinedAtOrigin { .. })
        ));
    }

    #[test]
    fn sobolev_and_besov_are_equivalent_within_overlap() {
        let g = Grid::cube(2, 32, 10.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut f = SpectralField::random_hermitian(&g, &mut rng, |_| true);
        f.coeffs_mut()[0] = Complex64::default();
        for (s, p) in [(0.0, 2.0), (1.0, 2.0), (0.5, 1.5)] {
            let b = besov_norm(&f, &NormSpec::new(s, p, conjugate(p))).unwrap();
            let h = fourier_sobolev_norm(&f, s, p).unwrap();
            let ratio = b / h;
            assert!(ratio > 1.0 / 3.0 * 2f64.powf(-s.abs() * 2.0) && ratio < 3.0 * 2f64.powf(s.abs() * 2.0), "{ratio}");
        }
    }

    #[test]
    fn chemin_lerner_constant_series() {
        let g = Grid::cube(1, 32, 10.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let f = SpectralField::random_hermitian(&g, &mut rng, |_| true);
        let spec = NormSpec::new(0.5, 2.0, 1.0);
        let b = besov_norm(&f, &spec).unwrap();
        let inf = chemin_lerner_norm(&[0.0, 1.0], &[f.clone(), f.clone()], &spec.with_time_index(f64::INFINITY)).unwrap();
        assert!((inf - b).abs() <= 1e-14 * b);
        let one = chemin_lerner_norm(&[0.0, 0.5, 2.0], &[f.clone(), f.clone(), f.clone()], &spec.with_time_index(1.0)).unwrap();
        assert!((one - 2.0 * b).abs() <= 1e-13 * b);
        assert!(matches!(
            chemin_lerner_norm(&[0.0], &[f], &spec.with_time_index(2.0)),
            Err(NskError::InsufficientData(_))
        ));
    }

    #[test]
    fn chemin_lerner_dominates_bochner_when_r_at_least_sigma() {
        let g = Grid::cube(2, 16, 6.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        for _ in 0..20 {
            let a = SpectralField::random_hermitian(&g, &mut rng, |_| true);
            let b = SpectralField::random_hermitian(&g, &mut rng, |_| true);
            let spec = NormSpec::new(0.0, 2.0, 1.0).with_time_index(2.0);
            let cl = chemin_lerner_norm(&[0.0, 1.0], &[a.clone(), b.clone()], &spec).unwrap();
            let bo = bochner_norm(&[0.0, 1.0], &[a, b], &spec).unwrap();
            assert!(cl >= bo * (1.0 - 1e-12), "{cl} < {bo}");
        }
    }

    #[test]
    fn gevrey_weight_cases() {
        let g = Grid::cube(1, 16, 2.0 * PI).unwrap();
        let f = mode_at(&g, &[1], 1.0);
        let w0 = gevrey_weight(&f, 0.0, 1.0).unwrap();
        assert_eq!(w0.coeffs(), f.coeffs());
        let w = gevrey_weight(&f, 1.0, 1.0).unwrap();
        assert!((w.coeffs()[1].re - std::f64::consts::E).abs() < 1e-14);
        let back = gevrey_unweight(&w, 1.0, 1.0).unwrap();
        assert!(relative_difference(&back, &f) < 1e-12);
        match gevrey_weight(&f, 1e6, 1.0) {
            Err(NskError::GevreyOverflow { t_max, .. }) => {
                assert!((t_max - (700.0 / g.xi_max()).powi(2)).abs() < 1e-9)
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn gevrey_radii_compose() {
        let g = Grid::cube(2, 16, 5.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let f = SpectralField::random_hermitian(&g, &mut rng, |_| true);
        let (c0, t1, t2) = (0.7, 0.4, 0.9);
        let two = gevrey_weight(&gevrey_weight(&f, t1, c0).unwrap(), t2, c0).unwrap();
        let r = (c0 * t1).sqrt() + (c0 * t2).sqrt();
        let one = gevrey_weight(&f, r * r / c0, c0).unwrap();
        assert!(relative_difference(&one, &two) < 1e-13);
    }

    #[test]
    fn bilinear_bt_cases() {
        // coarse grid: roundoff at high modes is amplified by the weight
        let g = Grid::cube(1, 16, 2.0 * PI).unwrap();
        let f = SpectralField::from_fn(&g, |x| x[0].cos() + 0.5 * (2.0 * x[0]).sin());
        let h = SpectralField::from_fn(&g, |x| (3.0 * x[0]).cos());
        let plain = ops::product(&f, &h).unwrap();
        assert!(relative_difference(&bilinear_bt(&f, &h, 0.0, 1.0).unwrap(), &plain) < 1e-15);
        let c = SpectralField::from_fn(&g, |_| 2.5);
        for t in [0.1, 0.5] {
            let b = bilinear_bt(&f, &c, t, 1.0).unwrap();
            assert!(relative_difference(&b, &f.scaled(2.5)) < 1e-12);
        }
    }

    #[test]
    fn bony_parts_reconstruct_product() {
        let g = Grid::cube(2, 32, 8.0).unwrap();
        let mask: Vec<bool> = g.dealias_mask().to_vec();
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let f = SpectralField::random_hermitian(&g, &mut rng, |i| mask[i]);
        let h = SpectralField::random_hermitian(&g, &mut rng, |i| mask[i]);
        let (a, b, c) = bony_split(&f, &h).unwrap();
        let sum = a.add(&b).unwrap().add(&c).unwrap();
        assert!(relative_difference(&sum, &ops::product(&f, &h).unwrap()) < 1e-10);

        let k = SpectralField::from_fn(&g, |_| -1.5);
        let (a, b, c) = bony_split(&f, &k).unwrap();
        assert!(a.max_abs() < 1e-12 * f.max_abs());
        let sum = a.add(&b).unwrap().add(&c).unwrap();
        assert!(relative_difference(&sum, &ops::product(&f, &k).unwrap()) < 1e-10);
    }

    #[test]
    fn bony_separated_blocks_have_no_remainder() {
        // fundamental 2 pi / L = 0.6: mode 2 -> |xi| 1.2 (block 0), mode 64 -> 38.4 (block 5)
        let g = Grid::cube(1, 256, 2.0 * PI / 0.6).unwrap();
        let f = mode_at(&g, &[2], 1.0);
        let h = mode_at(&g, &[64], 1.0);
        let (lh, hl, r) = bony_split(&f, &h).unwrap();
        assert!(r.max_abs() < 1e-12);
        assert!(hl.max_abs() < 1e-12);
        assert!(relative_difference(&lh, &ops::product(&f, &h).unwrap()) < 1e-12);

        let (lh, hl, r) = bony_split(&f, &f).unwrap();
        assert!(lh.max_abs() < 1e-12 && hl.max_abs() < 1e-12);
        assert!(relative_difference(&r, &ops::product(&f, &f).unwrap()) < 1e-12);
    }

    #[test]
    fn heat_block_sum_is_bounded_in_t() {
        for sigma in [1.0, 2.0] {
            for delta0 in [0.25, 1.0] {
                let vals: Vec<f64> = (-30..=30).map(|k| heat_block_sum(10f64.powf(k as f64 * 0.3), sigma, delta0)).collect();
                let max = vals.iter().cloned().fold(0.0, f64::max);
                let min = vals.iter().cloned().fold(f64::INFINITY, f64::min);
                assert!(max.is_finite() && max < 20.0);
                // log-periodic in t, so the range stays within a fixed band
                assert!(max / min < 1.5);
            }
        }
    }
}
