//! Empirical constants for the norm inequalities used in the analysis.
//!
//! Each trial draws random band-limited Hermitian fields from a small fixed
//! set of band configurations (jittered amplitudes, random common
//! translation) and records `LHS / RHS`. Trials where both
//! sides vanish are skipped. A run passes when the maximum ratio is finite
//! and the second half of the trials does not raise it by more than 5%.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::besov::{self, DyadicPartition, NormSpec};
use crate::error::{NskError, Result};
use crate::field::SpectralField;
use crate::grid::Grid;
use crate::ops;

/// Registered inequality names.
pub const INEQUALITIES: [&str; 7] = [
    "bernstein",
    "bilinear",
    "product",
    "banach_ring",
    "bilinear_neg",
    "bt_holder",
    "embedding",
];

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct HarnessReport {
    pub inequality: String,
    pub trials: usize,
    pub max_ratio: f64,
    pub pass: bool,
    #[serde(skip)]
    pub first_half_max: f64,
    #[serde(skip)]
    pub second_half_max: f64,
    #[serde(skip)]
    pub skipped: usize,
}

/// Radial bands in units of the fundamental wavenumber.
const BANDS: [(f64, f64); 4] = [(1.0, 2.0), (1.0, 3.0), (2.0, 4.0), (1.0, 5.0)];

/// Relative amplitude jitter of the trial fields.
const JITTER: f64 = 0.1;

/// Field with coefficients `(1 + JITTER u_k) e^{-i xi . x0}` on the modes where
/// `keep` holds. A common shift `x0` keeps products phase-coherent, which is
/// where Fourier-side product bounds are sharpest.
fn coherent_field(grid: &Arc<Grid>, rng: &mut ChaCha8Rng, shift: &[f64], keep: impl Fn(usize) -> bool) -> SpectralField {
    let mut amp: Vec<f64> = (0..grid.mode_count())
        .map(|i| if keep(i) { 1.0 + JITTER * rng.gen_range(-1.0..1.0) } else { 0.0 })
        .collect();
    for i in 0..amp.len() {
        let j = grid.negated_index(i);
        if j > i {
            amp[j] = amp[i];
        }
    }
    let coeffs = amp
        .iter()
        .enumerate()
        .map(|(i, &a)| {
            let xi = grid.wavevector(i).expect("index in range");
            let phase: f64 = xi.iter().zip(shift).map(|(x, c)| x * c).sum();
            Complex64::from_polar(a, -phase)
        })
        .collect();
    SpectralField::from_coeffs(grid, coeffs).expect("sized from the grid")
}

fn random_shift(grid: &Grid, rng: &mut ChaCha8Rng) -> Vec<f64> {
    grid.lengths().iter().map(|&l| rng.gen_range(0.0..l)).collect()
}

fn band_field(grid: &Arc<Grid>, rng: &mut ChaCha8Rng, shift: &[f64]) -> SpectralField {
    let band = BANDS[rng.gen_range(0..BANDS.len())];
    field_in_band(grid, rng, shift, band)
}

fn field_in_band(grid: &Arc<Grid>, rng: &mut ChaCha8Rng, shift: &[f64], band: (f64, f64)) -> SpectralField {
    let mask = grid.dealias_mask().to_vec();
    let xi = grid.xi_norm().to_vec();
    let unit = grid.xi_min();
    coherent_field(grid, rng, shift, |i| mask[i] && xi[i] >= band.0 * unit && xi[i] <= band.1 * unit)
}

/// Two band fields sharing one random shift.
fn band_pair(grid: &Arc<Grid>, rng: &mut ChaCha8Rng) -> (SpectralField, SpectralField) {
    let shift = random_shift(grid, rng);
    let f = band_field(grid, rng, &shift);
    let g = band_field(grid, rng, &shift);
    (f, g)
}

fn ratio(lhs: f64, rhs: f64) -> Option<f64> {
    if lhs == 0.0 && rhs == 0.0 {
        None
    } else {
        Some(lhs / rhs)
    }
}

struct Setup {
    grid: Arc<Grid>,
    part: DyadicPartition,
}

impl Setup {
    fn new(d: usize, n: usize) -> Result<Self> {
        let grid = Grid::cube(d, n, 2.0 * PI)?;
        let part = DyadicPartition::new(&grid);
        Ok(Setup { grid, part })
    }
}

/// One trial of the named inequality; `None` for a degenerate draw.
type Trial = Box<dyn FnMut(&mut ChaCha8Rng) -> Result<Option<f64>>>;

fn trial_for(name: &str) -> Result<Trial> {
    Ok(match name {
        // || |nabla| f_j ||_{L^p} <= C 2^j || f_j ||_{L^p}
        "bernstein" => {
            let st = Setup::new(3, 32)?;
            Box::new(move |rng| {
                let j = rng.gen_range(st.part.j_min()..=st.part.j_max());
                let p = [1.0, 4.0 / 3.0, 2.0, 4.0, f64::INFINITY][rng.gen_range(0..5)];
                let f = SpectralField::random_hermitian(&st.grid, rng, |_| true);
                let fj = besov::dyadic_block_with(&st.part, &f, j);
                let lhs = besov::fourier_sobolev_norm(&fj, 1.0, p)?;
                let rhs = 2f64.powi(j) * besov::fourier_lebesgue_norm(&fj, p);
                Ok(ratio(lhs, rhs))
            })
        }
        // || f g ||_{L^p} <= C || f ||_{L^inf} || g ||_{L^p}
        "bilinear" => {
            let st = Setup::new(3, 16)?;
            Box::new(move |rng| {
                let p = [1.0, 1.5, 2.0][rng.gen_range(0..3)];
                let (f, g) = band_pair(&st.grid, rng);
                let fg = ops::product(&f, &g)?;
                let lhs = besov::fourier_lebesgue_norm(&fg, p);
                let rhs = besov::fourier_lebesgue_norm(&f, f64::INFINITY) * besov::fourier_lebesgue_norm(&g, p);
                Ok(ratio(lhs, rhs))
            })
        }
        // || f g ||_{B^s_{2,1}} <= C (||f||_{B^s} ||g||_{B^{d/2}} + ||f||_{B^{d/2}} ||g||_{B^s}), s = 1/2
        "product" => {
            let st = Setup::new(3, 16)?;
            let bs = NormSpec::new(0.5, 2.0, 1.0);
            let bd = NormSpec::new(1.5, 2.0, 1.0);
            Box::new(move |rng| {
                let (f, g) = band_pair(&st.grid, rng);
                let fg = ops::product(&f, &g)?;
                let lhs = besov::besov_norm(&fg, &bs)?;
                let rhs = besov::besov_norm(&f, &bs)? * besov::besov_norm(&g, &bd)?
                    + besov::besov_norm(&f, &bd)? * besov::besov_norm(&g, &bs)?;
                Ok(ratio(lhs, rhs))
            })
        }
        // || f g ||_{B^{d/p}_{p,1}} <= C ||f||_{B^{d/p}_{p,1}} ||g||_{B^{d/p}_{p,1}}, p = 2, d = 3
        "banach_ring" => {
            let st = Setup::new(3, 16)?;
            let bd = NormSpec::new(1.5, 2.0, 1.0);
            Box::new(move |rng| {
                let (f, g) = band_pair(&st.grid, rng);
                let fg = ops::product(&f, &g)?;
                let lhs = besov::besov_norm(&fg, &bd)?;
                let rhs = besov::besov_norm(&f, &bd)? * besov::besov_norm(&g, &bd)?;
                Ok(ratio(lhs, rhs))
            })
        }
        // || f g ||_{B^{-2+d/p}_{p,sigma}} <= C ||f||_{B^{-2+d/p}_{p,sigma}} ||g||_{B^{d/p}_{p,1}}, p = 2 < d = 3, sigma = 1
        "bilinear_neg" => {
            let st = Setup::new(3, 16)?;
            let bn = NormSpec::new(-0.5, 2.0, 1.0);
            let bd = NormSpec::new(1.5, 2.0, 1.0);
            Box::new(move |rng| {
                let (f, g) = band_pair(&st.grid, rng);
                let fg = ops::product(&f, &g)?;
                let lhs = besov::besov_norm(&fg, &bn)?;
                let rhs = besov::besov_norm(&f, &bn)? * besov::besov_norm(&g, &bd)?;
                Ok(ratio(lhs, rhs))
            })
        }
        // || B_t(f, g) ||_{L^1} <= C ||f||_{L^2} ||g||_{L^2} for t in {0, 1, 10}
        "bt_holder" => {
            let grid = Grid::cube(3, 24, 2.0 * PI)?;
            Box::new(move |rng| {
                let t = [0.0, 1.0, 10.0][rng.gen_range(0..3)];
                let limit = 4i64;
                let g2 = grid.clone();
                let keep = move |i: usize| g2.mode_numbers(i).iter().all(|k| k.abs() <= limit);
                let shift = random_shift(&grid, rng);
                let f = coherent_field(&grid, rng, &shift, &keep);
                let g = coherent_field(&grid, rng, &shift, &keep);
                let bt = besov::bilinear_bt(&f, &g, t, 0.01)?;
                let lhs = besov::fourier_lebesgue_norm(&bt, 1.0);
                let rhs = besov::fourier_lebesgue_norm(&f, 2.0) * besov::fourier_lebesgue_norm(&g, 2.0);
                Ok(ratio(lhs, rhs))
            })
        }
        // || f ||_{B^{s - d(1/p1 - 1/p2)}_{p2,sigma}} <= C || f ||_{B^s_{p1,sigma}}, p1 <= p2
        "embedding" => {
            let st = Setup::new(3, 16)?;
            // Configurations are cycled so that any 100 consecutive trials see
            // each one equally often.
            let pairs = [(1.0, 2.0), (4.0 / 3.0, 2.0), (2.0, 4.0), (1.0, f64::INFINITY)];
            let bands = [(1.0, 2.0), (1.0, 3.0), (2.0, 3.0), (2.0, 4.0), (1.0, 5.0)];
            let weights = [(0.0, 2.0), (0.5, f64::INFINITY), (1.5, 1.0), (0.0, 1.0), (0.5, 2.0)];
            let mut k = 0usize;
            Box::new(move |rng| {
                let (p1, p2) = pairs[k % pairs.len()];
                let band = (k / pairs.len()) % bands.len();
                let (s, sigma) = weights[band];
                k += 1;
                let shift = random_shift(&st.grid, rng);
                let f = field_in_band(&st.grid, rng, &shift, bands[band]);
                let s2 = s - 3.0 * (1.0 / p1 - 1.0 / p2);
                let lhs = besov::besov_norm(&f, &NormSpec::new(s2, p2, sigma))?;
                let rhs = besov::besov_norm(&f, &NormSpec::new(s, p1, sigma))?;
                Ok(ratio(lhs, rhs))
            })
        }
        other => return Err(NskError::UnknownName(format!("inequality {other:?}"))),
    })
}

/// Runs `trials` non-degenerate trials of the named inequality.
pub fn inequality_harness(name: &str, trials: usize, seed: u64) -> Result<HarnessReport> {
    let mut trial = trial_for(name)?;
    if trials < 2 {
        return Err(NskError::InvalidArgument("the harness needs at least 2 trials".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ratios = Vec::with_capacity(trials);
    let mut skipped = 0usize;
    while ratios.len() < trials {
        match trial(&mut rng)? {
            Some(r) => ratios.push(r),
            None => {
                skipped += 1;
                if skipped > 10 * trials {
                    return Err(NskError::InsufficientData(format!("{name}: too many degenerate trials")));
                }
            }
        }
    }
    let half = trials / 2;
    let max_of = |v: &[f64]| v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let first = max_of(&ratios[..half]);
    let second = max_of(&ratios[half..]);
    let max_ratio = first.max(second);
    Ok(HarnessReport {
        inequality: name.to_string(),
        trials,
        max_ratio,
        pass: max_ratio.is_finite() && second <= 1.05 * first,
        first_half_max: first,
        second_half_max: second,
        skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_name_errors() {
        assert!(matches!(inequality_harness("nope", 10, 0), Err(NskError::UnknownName(_))));
    }

    #[test]
    fn bernstein_ratio_respects_block_support() {
        let r = inequality_harness("bernstein", 40, 3).unwrap();
        assert!(r.max_ratio <= 2.2 + 1e-12, "{r:?}");
        assert!(r.max_ratio >= 0.625);
    }

    #[test]
    fn fourier_lebesgue_product_constant_is_young() {
        // ||f g||_{L^p} <= (2 pi)^{-d/2} ||f||_{L^inf} ||g||_{L^p}
        let r = inequality_harness("bilinear", 20, 1).unwrap();
        assert!(r.max_ratio <= (2.0 * PI).powf(-1.5) * (1.0 + 1e-12), "{r:?}");
    }

    #[test]
    fn report_json_shape() {
        let r = inequality_harness("embedding", 10, 5).unwrap();
        let v = serde_json::to_value(&r).unwrap();
        let keys: Vec<&str> = v.as_object().unwrap().keys().map(|k| k.as_str()).collect();
        assert_eq!(keys.len(), 4);
        for k in ["inequality", "trials", "max_ratio", "pass"] {
            assert!(keys.contains(&k));
        }
    }

    #[test]
    fn all_registered_run() {
        for name in INEQUALITIES {
            let r = inequality_harness(name, 6, 11).unwrap();
            assert!(r.max_ratio.is_finite() && r.max_ratio > 0.0, "{name}: {r:?}");
        }
    }
}
