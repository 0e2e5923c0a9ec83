//! Large-time profiles, their moments and decay-rate regression.
//!
//! The symbols are written through `lam = -nu |xi|^2 / 2` and
//! `z = t^2 |xi|^4 (nu^2 - 4 kappa) / 4`:
//!
//! ```text
//! E  = e^{lam t},  C = cosh(sqrt z),  Sh = t sinh(sqrt z)/sqrt z
//! G1 = E (C - lam Sh),   G2 = |xi|^2 E Sh,   G3 = E (C + lam Sh)
//! ```
//!
//! which covers all three regimes (for `z < 0` the hyperbolic functions turn
//! trigonometric, near `z = 0` a series is used). The profile coefficients
//! follow from the linear Duhamel formula of the implemented system.

use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::besov::{self, conjugate};
use crate::error::{NskError, Result};
use crate::field::{SpectralField, State};
use crate::grid::Grid;
use crate::linear::LinearParams;
use crate::ops;
use crate::physics::{self, PressureModel};
use crate::solver::{least_squares, InitialData, MomentAccumulator};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProfileName {
    G1,
    G2,
    G3,
    G2Tilde,
    G3Tilde,
    SMu,
}

impl ProfileName {
    pub const ALL: [ProfileName; 6] = [
        ProfileName::G1,
        ProfileName::G2,
        ProfileName::G3,
        ProfileName::G2Tilde,
        ProfileName::G3Tilde,
        ProfileName::SMu,
    ];

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "G1" => Ok(ProfileName::G1),
            "G2" => Ok(ProfileName::G2),
            "G3" => Ok(ProfileName::G3),
            "G2~" | "G2tilde" => Ok(ProfileName::G2Tilde),
            "G3~" | "G3tilde" => Ok(ProfileName::G3Tilde),
            "S_mu" | "Smu" => Ok(ProfileName::SMu),
            other => Err(NskError::UnknownName(format!("profile symbol {other:?}"))),
        }
    }

    pub fn is_block(self) -> bool {
        matches!(self, ProfileName::G2Tilde | ProfileName::G3Tilde | ProfileName::SMu)
    }
}

/// A scalar symbol or a row-major `d x d` block. All profile symbols are real.
#[derive(Debug, Clone, PartialEq)]
pub enum SymbolValue {
    Scalar(f64),
    Block(Vec<f64>),
}

impl SymbolValue {
    pub fn scalar(&self) -> Option<f64> {
        match self {
            SymbolValue::Scalar(v) => Some(*v),
            SymbolValue::Block(_) => None,
        }
    }

    pub fn block(&self) -> Option<&[f64]> {
        match self {
            SymbolValue::Scalar(_) => None,
            SymbolValue::Block(b) => Some(b),
        }
    }
}

/// `(E C, E Sh)` at `(t, |xi|^2)`.
fn even_odd(t: f64, xi_sq: f64, params: &LinearParams) -> (f64, f64) {
    let lam_t = -0.5 * params.nu() * xi_sq * t;
    let z = 0.25 * xi_sq * xi_sq * params.discriminant() * t * t;
    if z.abs() < 1e-3 {
        let e = lam_t.exp();
        let c = 1.0 + z / 2.0 + z * z / 24.0 + z * z * z / 720.0;
        let sh = 1.0 + z / 6.0 + z * z / 120.0 + z * z * z / 5040.0;
        (e * c, e * t * sh)
    } else if z > 0.0 {
        let r = z.sqrt();
        let ep = (lam_t + r).exp();
        let em = (lam_t - r).exp();
        (0.5 * (ep + em), t * (ep - em) / (2.0 * r))
    } else {
        let r = (-z).sqrt();
        let e = lam_t.exp();
        (e * r.cos(), e * t * r.sin() / r)
    }
}

/// Scalar symbols `(G1, G2, G3)` at `(t, |xi|^2)`.
pub fn base_symbols(t: f64, xi_sq: f64, params: &LinearParams) -> (f64, f64, f64) {
    let lam = -0.5 * params.nu() * xi_sq;
    let (ec, esh) = even_odd(t, xi_sq, params);
    (ec - lam * esh, xi_sq * esh, ec + lam * esh)
}

/// `-xi_j xi_k / |xi|^2` (the symbol of `R_j R_k`), zero at the origin.
fn riesz_pair(xi: &[f64], xi_sq: f64) -> Vec<f64> {
    let d = xi.len();
    let mut out = vec![0.0; d * d];
    if xi_sq > 0.0 {
        for j in 0..d {
            for k in 0..d {
                out[j * d + k] = -xi[j] * xi[k] / xi_sq;
            }
        }
    }
    out
}

pub fn profile_symbol(name: ProfileName, t: f64, xi: &[f64], params: &LinearParams) -> Result<SymbolValue> {
    if !(t >= 0.0) {
        return Err(NskError::InvalidArgument(format!("profile symbols need t >= 0, got {t}")));
    }
    params.validate()?;
    let xi_sq: f64 = xi.iter().map(|x| x * x).sum();
    let (g1, g2, g3) = base_symbols(t, xi_sq, params);
    Ok(match name {
        ProfileName::G1 => SymbolValue::Scalar(g1),
        ProfileName::G2 => SymbolValue::Scalar(g2),
        ProfileName::G3 => SymbolValue::Scalar(g3),
        ProfileName::G2Tilde => SymbolValue::Block(riesz_pair(xi, xi_sq).into_iter().map(|r| r * g2).collect()),
        ProfileName::G3Tilde => SymbolValue::Block(riesz_pair(xi, xi_sq).into_iter().map(|r| r * g3).collect()),
        ProfileName::SMu => {
            let d = xi.len();
            let heat = (-params.mu * xi_sq * t).exp();
            let r = riesz_pair(xi, xi_sq);
            SymbolValue::Block(
                (0..d * d)
                    .map(|i| {
                        let delta = if i / d == i % d { 1.0 } else { 0.0 };
                        (delta + r[i]) * heat
                    })
                    .collect(),
            )
        }
    })
}

/// Tail of a moment integral beyond the last sample.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TailEstimate {
    pub estimable: bool,
    /// Fitted log-log slope of the integrand over the last decade.
    pub slope_pressure: Option<f64>,
    pub slope_stress: Option<f64>,
    pub pi_p: f64,
    pub m: Vec<f64>,
}

impl TailEstimate {
    pub fn none(dim: usize) -> Self {
        TailEstimate {
            estimable: true,
            slope_pressure: None,
            slope_stress: None,
            pi_p: 0.0,
            m: vec![0.0; dim * dim],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct AsymptoticMoments {
    pub alpha: f64,
    pub beta: f64,
    pub pi_p: f64,
    /// Row-major `d x d`, symmetric.
    pub m: Vec<f64>,
    /// Point about which the profiles are centred.
    pub center: Vec<f64>,
    /// Upper end of the time quadrature (0 when no integrals were taken).
    pub t_final: f64,
    pub tail: TailEstimate,
}

impl AsymptoticMoments {
    pub fn zero(dim: usize) -> Self {
        AsymptoticMoments {
            alpha: 0.0,
            beta: 0.0,
            pi_p: 0.0,
            m: vec![0.0; dim * dim],
            center: vec![0.0; dim],
            t_final: 0.0,
            tail: TailEstimate::none(dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    /// `alpha` and `beta` from the data; nonlinear moments zero.
    pub fn from_data(data: &InitialData) -> Self {
        let d = data.state.grid().dim();
        AsymptoticMoments {
            alpha: ops::moment(&data.state.a),
            beta: ops::moment(&data.potential),
            center: data.center.clone(),
            ..Self::zero(d)
        }
    }

    /// Adds the truncated time integrals of `acc` plus their tails (when estimable).
    pub fn with_integrals(mut self, acc: &MomentAccumulator) -> Result<Self> {
        let (pi_p, m) = acc.integrals();
        let tail = tail_estimate(&acc.times, &acc.pressure_series, &acc.stress_series, acc.dim())?;
        self.pi_p = pi_p + tail.pi_p;
        self.m = m.iter().zip(&tail.m).map(|(a, b)| a + b).collect();
        symmetrize(&mut self.m, acc.dim());
        self.t_final = acc.times.last().copied().unwrap_or(0.0);
        self.tail = tail;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        if self.m.len() != d * d {
            return Err(NskError::SizeMismatch { expected: d * d, got: self.m.len() });
        }
        let finite = [self.alpha, self.beta, self.pi_p].iter().chain(&self.m).all(|v| v.is_finite());
        if !finite {
            return Err(NskError::InvalidArgument("moments must be finite".into()));
        }
        Ok(())
    }
}

fn symmetrize(m: &mut [f64], d: usize) {
    for j in 0..d {
        for k in j + 1..d {
            let v = 0.5 * (m[j * d + k] + m[k * d + j]);
            m[j * d + k] = v;
            m[k * d + j] = v;
        }
    }
}

/// Log-log slope of `|v|` over `[T/10, T]`, or `None` with fewer than three usable points.
fn last_decade_slope(times: &[f64], values: &[f64]) -> Option<f64> {
    let t_end = *times.last()?;
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(values)
        .filter(|(&t, &v)| t > 0.0 && t >= 0.1 * t_end && v != 0.0)
        .map(|(&t, &v)| (t.ln(), v.abs().ln()))
        .collect();
    if pts.len() < 3 {
        return None;
    }
    Some(least_squares(&pts).0)
}

/// Extrapolates `int_T^inf` of each integrand as `I(T) T / (-slope - 1)` using the
/// last decade's power law; integrands that are already zero contribute nothing.
pub fn tail_estimate(times: &[f64], pressure: &[f64], stress: &[Vec<f64>], dim: usize) -> Result<TailEstimate> {
    if times.len() < 2 {
        return Err(NskError::InsufficientData(format!(
            "moment quadrature needs at least 2 samples, got {}",
            times.len()
        )));
    }
    let t_end = *times.last().unwrap();
    let mut out = TailEstimate::none(dim);
    let tail_of = |slope: Option<f64>, last: f64| -> Option<f64> {
        match slope {
            Some(s) if s < -1.0 => Some(last * t_end / (-s - 1.0)),
            _ => None,
        }
    };
    let p_last = *pressure.last().unwrap();
    if p_last != 0.0 {
        out.slope_pressure = last_decade_slope(times, pressure);
        match tail_of(out.slope_pressure, p_last) {
            Some(v) => out.pi_p = v,
            None => out.estimable = false,
        }
    }
    let frob: Vec<f64> = stress.iter().map(|s| s.iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
    let s_last = stress.last().unwrap();
    if frob.last().copied().unwrap_or(0.0) != 0.0 {
        out.slope_stress = last_decade_slope(times, &frob);
        match out.slope_stress {
            Some(s) if s < -1.0 => {
                out.m = s_last.iter().map(|v| v * t_end / (-s - 1.0)).collect();
            }
            _ => out.estimable = false,
        }
    }
    Ok(out)
}

/// Trapezoid in time over stored states of the spatial moments of
/// `a^2 I~_P(a)` and `m_j m_k/(1+a) + K~^{jk}(a)`, plus tails.
pub fn accumulate_nonlinear_moments(
    times: &[f64],
    states: &[State],
    pressure: &PressureModel,
    kappa: f64,
) -> Result<(f64, Vec<f64>, TailEstimate)> {
    if states.len() < 2 || times.len() != states.len() {
        return Err(NskError::InsufficientData(format!(
            "moment quadrature needs at least 2 snapshots with times, got {} states and {} times",
            states.len(),
            times.len()
        )));
    }
    let d = states[0].grid().dim();
    let mut p_series = Vec::with_capacity(states.len());
    let mut s_series = Vec::with_capacity(states.len());
    for st in states {
        let integ = physics::moment_integrands(st, kappa, pressure);
        let dv = st.grid().cell_volume();
        p_series.push(integ.pressure.iter().sum::<f64>() * dv);
        s_series.push(integ.stress.iter().map(|c| c.iter().sum::<f64>() * dv).collect::<Vec<f64>>());
    }
    let mut pi_p = 0.0;
    let mut m = vec![0.0; d * d];
    for k in 1..states.len() {
        let h = 0.5 * (times[k] - times[k - 1]);
        pi_p += h * (p_series[k] + p_series[k - 1]);
        for (idx, acc) in m.iter_mut().enumerate() {
            *acc += h * (s_series[k][idx] + s_series[k - 1][idx]);
        }
    }
    symmetrize(&mut m, d);
    let tail = tail_estimate(times, &p_series, &s_series, d)?;
    Ok((pi_p, m, tail))
}

/// `e^{-i xi . c}`, real at Nyquist modes only when `c` sits on the lattice.
fn shift(grid: &Grid, i: usize, center: &[f64]) -> Complex64 {
    let xi = grid.wavevector(i).expect("index in range");
    let phase: f64 = xi.iter().zip(center).map(|(x, c)| x * c).sum();
    Complex64::from_polar(1.0, -phase)
}

/// Wavevector as seen by the derivative operators (Nyquist components zeroed).
fn lattice_xi(grid: &Grid, i: usize) -> (Vec<f64>, f64) {
    let xi: Vec<f64> = (0..grid.dim()).map(|j| grid.deriv_k(j)[i]).collect();
    (xi, grid.deriv_k_sq()[i])
}

fn coeff_field(grid: &Arc<Grid>, f: impl Fn(usize) -> Complex64) -> SpectralField {
    let coeffs = (0..grid.mode_count()).map(f).collect();
    SpectralField::from_coeffs(grid, coeffs).expect("sized from the grid")
}

fn check_moments(moments: &AsymptoticMoments, grid: &Grid) -> Result<()> {
    moments.validate()?;
    if moments.dim() != grid.dim() {
        return Err(NskError::SizeMismatch {
            expected: grid.dim(),
            got: moments.dim(),
        });
    }
    Ok(())
}

/// `G1 alpha + G2 beta - G2 pi_P + G2~^{jk} M^{jk}` on the grid, centred at
/// `moments.center`. The DC coefficient carries `alpha` exactly.
pub fn density_profile(t: f64, moments: &AsymptoticMoments, grid: &Arc<Grid>, params: &LinearParams) -> Result<SpectralField> {
    check_moments(moments, grid)?;
    params.validate()?;
    if !(t >= 0.0) {
        return Err(NskError::InvalidArgument(format!("profile time must be >= 0, got {t}")));
    }
    let d = grid.dim();
    let inv_dv = 1.0 / grid.cell_volume();
    let mut f = coeff_field(grid, |i| {
        let (xi, xi_sq) = lattice_xi(grid, i);
        let (g1, g2, _) = base_symbols(t, xi_sq, params);
        let r = riesz_pair(&xi, xi_sq);
        let mm: f64 = (0..d * d).map(|k| r[k] * moments.m[k]).sum();
        let v = g1 * moments.alpha + g2 * (moments.beta - moments.pi_p) + g2 * mm;
        shift(grid, i, &moments.center) * (v * inv_dv)
    });
    f.symmetrize();
    Ok(f)
}

/// `(solenoidal, potential)` momentum profiles:
/// `-d_k S_mu^{jl} M^{lk}` and `d_j(-kappa G2 alpha + G3 beta - G3 pi_P + G3~^{lk} M^{lk})`.
pub fn momentum_profiles(
    t: f64,
    moments: &AsymptoticMoments,
    grid: &Arc<Grid>,
    params: &LinearParams,
) -> Result<(Vec<SpectralField>, Vec<SpectralField>)> {
    check_moments(moments, grid)?;
    params.validate()?;
    if !(t >= 0.0) {
        return Err(NskError::InvalidArgument(format!("profile time must be >= 0, got {t}")));
    }
    let d = grid.dim();
    let inv_dv = 1.0 / grid.cell_volume();
    let i_unit = Complex64::new(0.0, 1.0);
    let mut sol = Vec::with_capacity(d);
    let mut pot = Vec::with_capacity(d);
    for j in 0..d {
        let kj = grid.deriv_k(j);
        let mut s = coeff_field(grid, |i| {
            let (xi, xi_sq) = lattice_xi(grid, i);
            let heat = (-params.mu * xi_sq * t).exp();
            let r = riesz_pair(&xi, xi_sq);
            let mut acc = 0.0;
            for l in 0..d {
                let proj = if l == j { 1.0 } else { 0.0 } + r[j * d + l];
                for k in 0..d {
                    acc += proj * grid.deriv_k(k)[i] * moments.m[l * d + k];
                }
            }
            -i_unit * shift(grid, i, &moments.center) * (acc * heat * inv_dv)
        });
        let mut p = coeff_field(grid, |i| {
            let (xi, xi_sq) = lattice_xi(grid, i);
            let (_, g2, g3) = base_symbols(t, xi_sq, params);
            let r = riesz_pair(&xi, xi_sq);
            let mm: f64 = (0..d * d).map(|k| r[k] * moments.m[k]).sum();
            let phi = -params.kappa * g2 * moments.alpha + g3 * (moments.beta - moments.pi_p) + g3 * mm;
            i_unit * kj[i] * shift(grid, i, &moments.center) * (phi * inv_dv)
        });
        s.symmetrize();
        p.symmetrize();
        sol.push(s);
        pot.push(p);
    }
    Ok((sol, pot))
}

/// Time-weight exponent `d/2 (1 - 1/p) + s/2`.
pub fn error_weight_exponent(d: usize, p: f64, s: f64) -> f64 {
    0.5 * d as f64 * (1.0 - 1.0 / p) + 0.5 * s
}

/// `t^{d/2(1-1/p)+s/2} || |xi|^s (a_hat - profile_hat) ||_{L^p'}` restricted to the
/// 2/3 band, for each `(t, a)`.
pub fn asymptotic_error(
    times: &[f64],
    densities: &[&SpectralField],
    moments: &AsymptoticMoments,
    s: f64,
    p: f64,
    params: &LinearParams,
) -> Result<Vec<f64>> {
    if !(p > 1.0 && p <= 2.0) {
        return Err(NskError::InvalidArgument(format!(
            "asymptotic comparison requires 1 < p <= 2, got p = {p}"
        )));
    }
    let Some(first) = densities.first() else {
        return Ok(Vec::new());
    };
    let grid = first.grid().clone();
    let d = grid.dim();
    let s_min = -(d as f64) / conjugate(p);
    if !(s > s_min) {
        return Err(NskError::InvalidArgument(format!(
            "asymptotic comparison requires s > -d/p' = {s_min}, got s = {s}"
        )));
    }
    if times.len() != densities.len() {
        return Err(NskError::SizeMismatch {
            expected: densities.len(),
            got: times.len(),
        });
    }
    let scale = grid.fourier_scale();
    let mask = grid.dealias_mask();
    let xi = grid.xi_norm();
    let expo = error_weight_exponent(d, p, s);
    let mut out = Vec::with_capacity(times.len());
    for (&t, a) in times.iter().zip(densities) {
        first.check_grid(a)?;
        let prof = density_profile(t, moments, &grid, params)?;
        let mags: Vec<f64> = a
            .coeffs()
            .iter()
            .zip(prof.coeffs())
            .enumerate()
            .map(|(i, (x, y))| {
                if !mask[i] || (xi[i] == 0.0 && s < 0.0) {
                    0.0
                } else {
                    xi[i].powf(s) * (x - y).norm() * scale
                }
            })
            .collect();
        let norm = besov::lebesgue_of_magnitudes(&mags, p, grid.dxi_volume());
        out.push(t.powf(expo) * norm);
    }
    Ok(out)
}

/// Verdict of the comparator on an error series.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct ErrorVerdict {
    /// `last / first` over the final decade.
    pub ratio: f64,
    /// Largest relative increase between neighbouring samples.
    pub max_uptick: f64,
    /// `ratio <= 0.7`.
    pub decreased: bool,
    /// `max_uptick <= 0.05`.
    pub monotone: bool,
}

/// Judges the samples with `t >= T/10`.
pub fn judge_error_series(times: &[f64], errors: &[f64]) -> Result<ErrorVerdict> {
    let t_end = times.last().copied().unwrap_or(0.0);
    let sel: Vec<f64> = times
        .iter()
        .zip(errors)
        .filter(|(&t, _)| t >= 0.1 * t_end * (1.0 - 1e-12))
        .map(|(_, &e)| e)
        .collect();
    if sel.len() < 2 {
        return Err(NskError::InsufficientData("error series needs at least two samples in its last decade".into()));
    }
    let ratio = sel[sel.len() - 1] / sel[0];
    let max_uptick = sel
        .windows(2)
        .map(|w| if w[0] > 0.0 { w[1] / w[0] - 1.0 } else { 0.0 })
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(ErrorVerdict {
        ratio,
        max_uptick,
        decreased: ratio <= 0.7,
        monotone: max_uptick <= 0.05,
    })
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct DecayFit {
    pub slope: f64,
    pub intercept: f64,
    pub residual: f64,
    pub points: usize,
}

/// Least-squares slope of `ln(norm)` against `ln(t)` on samples with `t` in `window`.
pub fn decay_fit(times: &[f64], values: &[f64], window: (f64, f64)) -> Result<DecayFit> {
    if times.len() != values.len() {
        return Err(NskError::SizeMismatch {
            expected: times.len(),
            got: values.len(),
        });
    }
    let (t0, t1) = window;
    if !(t0 > 0.0 && t1 > t0) {
        return Err(NskError::InvalidArgument(format!("decay window [{t0}, {t1}] must satisfy 0 < t0 < t1")));
    }
    let mut pts = Vec::new();
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    for (&t, &v) in times.iter().zip(values) {
        if t < t0 * (1.0 - 1e-12) || t > t1 * (1.0 + 1e-12) {
            continue;
        }
        if !(v > 0.0) {
            return Err(NskError::InvalidArgument(format!("non-positive norm {v} at t = {t} inside the fit window")));
        }
        lo = lo.min(t);
        hi = hi.max(t);
        pts.push((t.ln(), v.ln()));
    }
    if pts.len() < 8 {
        return Err(NskError::InsufficientData(format!("decay fit needs at least 8 points, got {}", pts.len())));
    }
    if hi / lo < 10.0 * (1.0 - 1e-9) {
        return Err(NskError::InsufficientData(format!("decay fit window spans only [{lo}, {hi}], less than a decade")));
    }
    let (slope, intercept, residual) = least_squares(&pts);
    Ok(DecayFit {
        slope,
        intercept,
        residual,
        points: pts.len(),
    })
}

/// Decay exponent of `|| |nabla|^s a(t) ||` in `B^0_{p,1}`.
pub fn density_decay_exponent(d: usize, p: f64, s: f64) -> f64 {
    -0.5 * d as f64 * (1.0 - 1.0 / p) - 0.5 * s
}

/// Decay exponent of `|| |nabla|^s m(t) ||` in `B^0_{p,1}`.
pub fn momentum_decay_exponent(d: usize, p: f64, s: f64) -> f64 {
    -0.5 * d as f64 * (1.0 - 1.0 / p) - 0.5 * (s + 1.0)
}
