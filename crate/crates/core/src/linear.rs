//! Exact solution operator of the linearized system
//!
//! ```text
//! a_t + div m = 0,    m_t - mu Lap m - (lambda + mu) grad div m - kappa grad Lap a = 0
//! ```
//!
//! Per mode the longitudinal pair `(a_hat, i xi.m_hat)` obeys a 2x2 system
//! with characteristic roots of `l^2 + nu |xi|^2 l + kappa |xi|^4 = 0`, and
//! the transverse part of `m_hat` decays like the heat kernel.

use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{NskError, Result};
use crate::field::{SpectralField, State};
use crate::grid::Grid;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Relative width of the band around `nu^2 = 4 kappa` handled by the
/// critical-regime expansion.
pub const DEFAULT_EPS_DEG: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Underdamped,
    Critical,
    Overdamped,
}

impl Regime {
    pub fn name(&self) -> &'static str {
        match self {
            Regime::Underdamped => "underdamped",
            Regime::Critical => "critical",
            Regime::Overdamped => "overdamped",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearParams {
    pub mu: f64,
    pub lambda_visc: f64,
    pub kappa: f64,
    pub eps_deg: f64,
}

impl LinearParams {
    pub fn new(mu: f64, lambda_visc: f64, kappa: f64) -> Result<Self> {
        let p = LinearParams {
            mu,
            lambda_visc,
            kappa,
            eps_deg: DEFAULT_EPS_DEG,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu > 0.0) {
            return Err(NskError::Config(format!("mu = {} must be positive", self.mu)));
        }
        if !(self.nu() > 0.0) {
            return Err(NskError::Config(format!(
                "nu = lambda + 2 mu = {} must be positive",
                self.nu()
            )));
        }
        if !(self.kappa > 0.0) {
            return Err(NskError::Config(format!("kappa = {} must be positive", self.kappa)));
        }
        if !(self.eps_deg >= 0.0 && self.eps_deg < 1.0) {
            return Err(NskError::Config(format!("eps_deg = {} must lie in [0, 1)", self.eps_deg)));
        }
        Ok(())
    }

    pub fn nu(&self) -> f64 {
        self.lambda_visc + 2.0 * self.mu
    }

    /// `nu^2 - 4 kappa`.
    pub fn discriminant(&self) -> f64 {
        self.nu() * self.nu() - 4.0 * self.kappa
    }

    pub fn regime(&self) -> Regime {
        let disc = self.discriminant();
        let nu2 = self.nu() * self.nu();
        if disc.abs() < self.eps_deg * nu2 {
            Regime::Critical
        } else if disc < 0.0 {
            Regime::Underdamped
        } else {
            Regime::Overdamped
        }
    }
}

/// `(lambda_+, lambda_-)` with `lambda_+ = -(nu/2)|xi|^2 (1 + sqrt(1 - 4 kappa / nu^2))`.
pub fn characteristic_roots(xi_sq: f64, params: &LinearParams) -> (Complex64, Complex64) {
    let nu = params.nu();
    let disc = params.discriminant();
    if disc > 0.0 {
        let big = nu + disc.sqrt();
        // the smaller root through the product to avoid cancellation
        let plus = -0.5 * big * xi_sq;
        let minus = -2.0 * params.kappa * xi_sq / big;
        (Complex64::new(plus, 0.0), Complex64::new(minus, 0.0))
    } else {
        let re = -0.5 * nu * xi_sq;
        let im = 0.5 * (-disc).sqrt() * xi_sq;
        (Complex64::new(re, -im), Complex64::new(re, im))
    }
}

fn expm1_complex(z: Complex64) -> Complex64 {
    let half = (0.5 * z.im).sin();
    Complex64::new(
        z.re.exp_m1() * z.im.cos() - 2.0 * half * half,
        z.re.exp() * z.im.sin(),
    )
}

/// Real scalars that determine the Green matrix at one `(t, |xi|^2)`:
/// `g11 = (l+ e^{l- t} - l- e^{l+ t})/(l+ - l-)`,
/// `d = (e^{l+ t} - e^{l- t})/(l+ - l-)`,
/// `g22l = (l+ e^{l+ t} - l- e^{l- t})/(l+ - l-)` and `heat = e^{-mu |xi|^2 t}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GreenScalars {
    pub g11: f64,
    pub d: f64,
    pub g22l: f64,
    pub heat: f64,
}

impl GreenScalars {
    pub const IDENTITY: GreenScalars = GreenScalars {
        g11: 1.0,
        d: 0.0,
        g22l: 1.0,
        heat: 1.0,
    };
}

pub fn green_scalars(t: f64, xi_sq: f64, params: &LinearParams) -> GreenScalars {
    if xi_sq == 0.0 || t == 0.0 {
        return GreenScalars::IDENTITY;
    }
    let heat = (-params.mu * xi_sq * t).exp();
    match params.regime() {
        Regime::Critical => critical_scalars(t, xi_sq, params, heat),
        _ => {
            let (lp, lm) = characteristic_roots(xi_sq, params);
            let delta = lp - lm;
            let em = (lm * t).exp();
            let d = em * expm1_complex(delta * t) / delta;
            let g11 = em - lm * d;
            let g22l = em + lp * d;
            GreenScalars {
                g11: g11.re,
                d: d.re,
                g22l: g22l.re,
                heat,
            }
        }
    }
}

/// Double-root formulas corrected to second order in `q = |xi|^4 (nu^2 - 4 kappa)/4`.
fn critical_scalars(t: f64, xi_sq: f64, params: &LinearParams, heat: f64) -> GreenScalars {
    let lbar = -0.5 * params.nu() * xi_sq;
    let q = 0.25 * xi_sq * xi_sq * params.discriminant();
    let z = q * t * t;
    let cosh = 1.0 + z / 2.0 + z * z / 24.0;
    let sinhq = t * (1.0 + z / 6.0 + z * z / 120.0);
    let e = (lbar * t).exp();
    GreenScalars {
        g11: e * (cosh - lbar * sinhq),
        d: e * sinhq,
        g22l: e * (cosh + lbar * sinhq),
        heat,
    }
}

/// Critical branch forced regardless of the regime flag (for continuity checks).
pub fn green_scalars_critical_branch(t: f64, xi_sq: f64, params: &LinearParams) -> GreenScalars {
    if xi_sq == 0.0 || t == 0.0 {
        return GreenScalars::IDENTITY;
    }
    critical_scalars(t, xi_sq, params, (-params.mu * xi_sq * t).exp())
}

/// Generic branch forced regardless of the regime flag.
pub fn green_scalars_generic_branch(t: f64, xi_sq: f64, params: &LinearParams) -> GreenScalars {
    let mut p = *params;
    p.eps_deg = 0.0;
    green_scalars(t, xi_sq, &p)
}

/// Dense `(1+d) x (1+d)` complex matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GreenMatrix {
    n: usize,
    data: Vec<Complex64>,
}

impl GreenMatrix {
    pub fn identity(n: usize) -> Self {
        let mut data = vec![Complex64::default(); n * n];
        for i in 0..n {
            data[i * n + i] = Complex64::new(1.0, 0.0);
        }
        GreenMatrix { n, data }
    }

    pub fn zeros(n: usize) -> Self {
        GreenMatrix {
            n,
            data: vec![Complex64::default(); n * n],
        }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.data[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: Complex64) {
        self.data[i * self.n + j] = v;
    }

    pub fn matmul(&self, other: &GreenMatrix) -> GreenMatrix {
        let n = self.n;
        let mut out = GreenMatrix::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.get(i, k);
                for j in 0..n {
                    out.data[i * n + j] += a * other.get(k, j);
                }
            }
        }
        out
    }

    pub fn sub(&self, other: &GreenMatrix) -> GreenMatrix {
        GreenMatrix {
            n: self.n,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn scaled(&self, s: f64) -> GreenMatrix {
        GreenMatrix {
            n: self.n,
            data: self.data.iter().map(|a| a * s).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }

    /// The block `G^{1,1}`.
    pub fn g11(&self) -> Complex64 {
        self.get(0, 0)
    }
}

/// The symbol of the linear generator, so that `dG/dt = A G`.
pub fn generator_matrix(xi: &[f64], params: &LinearParams) -> GreenMatrix {
    let d = xi.len();
    let s: f64 = xi.iter().map(|x| x * x).sum();
    let mut a = GreenMatrix::zeros(d + 1);
    for j in 0..d {
        a.set(0, j + 1, -I * xi[j]);
        a.set(j + 1, 0, -I * params.kappa * s * xi[j]);
        for k in 0..d {
            let mut v = -(params.lambda_visc + params.mu) * xi[j] * xi[k];
            if j == k {
                v -= params.mu * s;
            }
            a.set(j + 1, k + 1, Complex64::new(v, 0.0));
        }
    }
    a
}

fn assemble(xi: &[f64], g: &GreenScalars, params: &LinearParams) -> GreenMatrix {
    let d = xi.len();
    let s: f64 = xi.iter().map(|x| x * x).sum();
    let mut m = GreenMatrix::identity(d + 1);
    if s == 0.0 {
        return m;
    }
    m.set(0, 0, Complex64::new(g.g11, 0.0));
    for j in 0..d {
        m.set(0, j + 1, -I * xi[j] * g.d);
        m.set(j + 1, 0, -I * params.kappa * s * xi[j] * g.d);
        for k in 0..d {
            let proj = xi[j] * xi[k] / s;
            let delta = if j == k { 1.0 } else { 0.0 };
            m.set(j + 1, k + 1, Complex64::new(g.g22l * proj + g.heat * (delta - proj), 0.0));
        }
    }
    m
}

/// `G(t, xi)` for an arbitrary wavevector.
pub fn green_matrix(t: f64, xi: &[f64], params: &LinearParams) -> Result<GreenMatrix> {
    if !(t >= 0.0) {
        return Err(NskError::InvalidArgument(format!("green matrix needs t >= 0, got {t}")));
    }
    let s: f64 = xi.iter().map(|x| x * x).sum();
    Ok(assemble(xi, &green_scalars(t, s, params), params))
}

/// Relative residual of the columnwise ODE `dG/dt = A G` under a central
/// difference with step `h`.
pub fn ode_residual(t: f64, xi: &[f64], params: &LinearParams, h: f64) -> Result<f64> {
    let t = t.max(h);
    let gp = green_matrix(t + h, xi, params)?;
    let gm = green_matrix(t - h, xi, params)?;
    let ag = generator_matrix(xi, params).matmul(&green_matrix(t, xi, params)?);
    let fd = gp.sub(&gm).scaled(0.5 / h);
    let scale = ag.frobenius();
    if scale == 0.0 {
        return Ok(fd.frobenius());
    }
    Ok(fd.sub(&ag).frobenius() / scale)
}

/// Relative deviation of `det` of the longitudinal fundamental matrix from
/// `e^{-nu |xi|^2 t}`.
pub fn longitudinal_det_defect(t: f64, xi_sq: f64, params: &LinearParams) -> f64 {
    let g = green_scalars(t, xi_sq, params);
    let det = g.g11 * g.g22l + params.kappa * xi_sq * xi_sq * g.d * g.d;
    let expect = (-params.nu() * xi_sq * t).exp();
    ((det - expect) / expect).abs()
}

/// Per-mode propagator for one fixed time on one grid. Odd symbols use the
/// grid's derivative wavenumbers so Hermitian symmetry is kept exactly.
#[derive(Debug, Clone)]
pub struct Propagator {
    grid: Arc<Grid>,
    params: LinearParams,
    t: f64,
    scalars: Vec<GreenScalars>,
}

impl Propagator {
    pub fn new(grid: &Arc<Grid>, params: &LinearParams, t: f64) -> Result<Self> {
        if !(t >= 0.0) {
            return Err(NskError::InvalidArgument(format!("propagator needs t >= 0, got {t}")));
        }
        let scalars = grid
            .deriv_k_sq()
            .iter()
            .map(|&s| green_scalars(t, s, params))
            .collect();
        Ok(Propagator {
            grid: grid.clone(),
            params: *params,
            t,
            scalars,
        })
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn params(&self) -> &LinearParams {
        &self.params
    }

    pub fn scalars(&self) -> &[GreenScalars] {
        &self.scalars
    }

    fn check(&self, a: &SpectralField, m: &[SpectralField]) -> Result<()> {
        if **a.grid() != *self.grid {
            return Err(NskError::GridMismatch);
        }
        if m.len() != self.grid.dim() {
            return Err(NskError::SizeMismatch {
                expected: self.grid.dim(),
                got: m.len(),
            });
        }
        for c in m {
            a.check_grid(c)?;
        }
        Ok(())
    }

    /// `G(t) (a, m)`.
    pub fn apply_parts(&self, a: &SpectralField, m: &[SpectralField]) -> Result<(SpectralField, Vec<SpectralField>)> {
        self.check(a, m)?;
        let mut a_out = a.clone();
        let mut m_out: Vec<SpectralField> = m.to_vec();
        self.apply_in_place(&mut a_out, &mut m_out);
        Ok((a_out, m_out))
    }

    pub(crate) fn apply_in_place(&self, a: &mut SpectralField, m: &mut [SpectralField]) {
        let grid = self.grid.clone();
        let d = grid.dim();
        let k2 = grid.deriv_k_sq();
        let kappa = self.params.kappa;
        let mut mv = [Complex64::default(); 3];
        let mut kv = [0.0; 3];
        for i in 0..grid.mode_count() {
            let s = k2[i];
            if s == 0.0 {
                continue;
            }
            let g = &self.scalars[i];
            let mut kdotm = Complex64::default();
            for j in 0..d {
                kv[j] = grid.deriv_k(j)[i];
                mv[j] = m[j].coeffs()[i];
                kdotm += kv[j] * mv[j];
            }
            let ai = a.coeffs()[i];
            a.coeffs_mut()[i] = g.g11 * ai - I * g.d * kdotm;
            let long = (g.g22l - g.heat) * kdotm / s;
            let from_a = -I * kappa * s * g.d * ai;
            for j in 0..d {
                m[j].coeffs_mut()[i] = g.heat * mv[j] + kv[j] * (long + from_a);
            }
        }
    }

    /// `G(t)(0, f)`: the response to a momentum forcing.
    pub fn apply_forcing(&self, f: &[SpectralField]) -> Result<(SpectralField, Vec<SpectralField>)> {
        let zero = SpectralField::zeros(&self.grid);
        self.apply_parts(&zero, f)
    }

    pub fn apply(&self, state: &State) -> Result<State> {
        let (a, m) = self.apply_parts(&state.a, &state.m)?;
        Ok(State {
            a,
            m,
            t: state.t + self.t,
        })
    }
}

/// `G(t) * U` on a state; the state's clock advances by `t`.
pub fn apply_semigroup(state: &State, t: f64, params: &LinearParams) -> Result<State> {
    Propagator::new(state.grid(), params, t)?.apply(state)
}

/// Composite trapezoid of `int_0^t G(t - tau)(0, F(tau)) dtau` over the
/// given `(tau, F(tau))` nodes, which must be increasing and end at `t`.
pub fn duhamel_convolve(
    params: &LinearParams,
    t: f64,
    nodes: &[(f64, Vec<SpectralField>)],
) -> Result<State> {
    if nodes.len() < 2 {
        return Err(NskError::InsufficientData(
            "duhamel quadrature needs at least two forcing nodes".into(),
        ));
    }
    let grid = nodes[0]
        .1
        .first()
        .ok_or_else(|| NskError::InvalidArgument("empty forcing".into()))?
        .grid()
        .clone();
    let mut acc = State::zeros(&grid);
    for w in nodes.windows(2) {
        let (t0, f0) = &w[0];
        let (t1, f1) = &w[1];
        if !(t1 > t0) || *t1 > t + 1e-12 * t.abs().max(1.0) {
            return Err(NskError::InvalidArgument(
                "forcing nodes must increase and lie in [0, t]".into(),
            ));
        }
        let h = 0.5 * (t1 - t0);
        for (tau, f) in [(t0, f0), (t1, f1)] {
            let (a, m) = Propagator::new(&grid, params, (t - tau).max(0.0))?.apply_forcing(f)?;
            acc.a.axpy(h, &a);
            for (acc_m, mj) in acc.m.iter_mut().zip(&m) {
                acc_m.axpy(h, mj);
            }
        }
    }
    acc.t = 0.0;
    Ok(acc)
}

/// Operator norm of `D G(tau) D^{-1}` with `D = diag(|xi|, Id)`, which only
/// depends on `tau = t |xi|^2`. It splits into the longitudinal 2x2 block
/// acting on `(|xi| a_hat, xi.m_hat/|xi|)` and transverse heat factors.
pub fn weighted_green_norm(tau: f64, params: &LinearParams, dim: usize) -> f64 {
    let g = green_scalars(tau, 1.0, params);
    let b = [
        [Complex64::new(g.g11, 0.0), -I * g.d],
        [-I * params.kappa * g.d, Complex64::new(g.g22l, 0.0)],
    ];
    let long = spectral_norm_2x2(&b);
    if dim >= 2 {
        long.max(g.heat)
    } else {
        long
    }
}

fn spectral_norm_2x2(b: &[[Complex64; 2]; 2]) -> f64 {
    // eigenvalues of B^H B
    let h00 = b[0][0].norm_sqr() + b[1][0].norm_sqr();
    let h11 = b[0][1].norm_sqr() + b[1][1].norm_sqr();
    let h01 = b[0][0].conj() * b[0][1] + b[1][0].conj() * b[1][1];
    let tr = h00 + h11;
    let det = h00 * h11 - h01.norm_sqr();
    let disc = (0.25 * tr * tr - det).max(0.0).sqrt();
    (0.5 * tr + disc).sqrt()
}

/// Fits `norms[i] <= C e^{-c0 taus[i]}`. The decay rate is the largest `c0`
/// for which the envelope `norms e^{c0 tau}` over the upper half of the tau
/// range never exceeds its maximum over the lower half, so the constant is
/// fixed by early times and does not grow with the sampling horizon.
pub fn fit_exponential_envelope(taus: &[f64], norms: &[f64]) -> Result<(f64, f64)> {
    if taus.len() != norms.len() || taus.len() < 4 {
        return Err(NskError::InsufficientData(
            "envelope fit needs at least four (tau, norm) samples".into(),
        ));
    }
    let mut pairs: Vec<(f64, f64)> = taus.iter().cloned().zip(norms.iter().cloned()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let half = pairs.len() / 2;
    let envelope = |c0: f64, range: &[(f64, f64)]| -> f64 {
        range
            .iter()
            .map(|&(tau, n)| n * (c0 * tau).exp())
            .fold(0.0, f64::max)
    };
    let ok = |c0: f64| envelope(c0, &pairs[half..]) <= envelope(c0, &pairs[..half]);
    if !ok(0.0) {
        return Err(NskError::InsufficientData(
            "bound violated for every c0 > 0: the norm grows over the sampled range".into(),
        ));
    }
    let mut lo = 0.0;
    let mut hi = 1.0;
    while ok(hi) {
        lo = hi;
        hi *= 2.0;
        if hi > 1e12 {
            break;
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if ok(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-14 * hi {
            break;
        }
    }
    let c = envelope(lo, &pairs);
    Ok((c, lo))
}

/// Fits the pointwise bound `|(|xi| a, m)(t)| <= C e^{-c0 t |xi|^2} |(|xi| a, m)(0)|`
/// over all `(t, |xi|)` sample pairs. Returns `(C_fit, c0_fit)`.
pub fn pointwise_bound_fit(params: &LinearParams, ts: &[f64], xis: &[f64], dim: usize) -> Result<(f64, f64)> {
    if ts.is_empty() || xis.is_empty() {
        return Err(NskError::InsufficientData("empty sampling grid".into()));
    }
    let mut taus = Vec::with_capacity(ts.len() * xis.len());
    let mut norms = Vec::with_capacity(ts.len() * xis.len());
    for &t in ts {
        for &x in xis {
            let tau = t * x * x;
            taus.push(tau);
            norms.push(weighted_green_norm(tau, params, dim));
        }
    }
    let (c, c0) = fit_exponential_envelope(&taus, &norms)?;
    if !(c0 > 0.0) {
        return Err(NskError::InsufficientData(format!(
            "pointwise bound fit found no positive decay rate (c0 = {c0})"
        )));
    }
    Ok((c, c0))
}

/// Default sampling used by `linear-verify`: `tau = t |xi|^2` covers `[0, 40]`.
pub fn default_fit_grids() -> (Vec<f64>, Vec<f64>) {
    let ts: Vec<f64> = (0..=200).map(|k| 0.2 * k as f64).collect();
    let xis = vec![0.5, 1.0, 1.5];
    (ts, xis)
}

#[derive(Debug, Clone, Serialize)]
pub struct LinearReport {
    pub regime: Regime,
    pub c0_fit: f64,
    #[serde(rename = "C_fit")]
    pub c_fit: f64,
    pub ode_residual_max: f64,
    pub semigroup_err_max: f64,
    pub identity_err_max: f64,
    pub det_err_max: f64,
}

/// Random-sample verification of the Green matrix for one parameter set.
pub fn linear_verify(params: &LinearParams, dim: usize, samples: usize, seed: u64) -> Result<LinearReport> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ode = 0.0f64;
    let mut semi = 0.0f64;
    let mut ident = 0.0f64;
    let mut det = 0.0f64;
    for _ in 0..samples {
        let xi: Vec<f64> = (0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let t = rng.gen_range(0.01..3.0);
        let s = rng.gen_range(0.01..3.0);
        ode = ode.max(ode_residual(t, &xi, params, 1e-4)?);
        let id = green_matrix(0.0, &xi, params)?.sub(&GreenMatrix::identity(dim + 1));
        ident = ident.max(id.max_abs());
        let composed = green_matrix(t, &xi, params)?.matmul(&green_matrix(s, &xi, params)?);
        let direct = green_matrix(t + s, &xi, params)?;
        semi = semi.max(composed.sub(&direct).max_abs() / direct.max_abs().max(f64::MIN_POSITIVE));
        let xs: f64 = xi.iter().map(|x| x * x).sum();
        det = det.max(longitudinal_det_defect(t, xs, params));
    }
    let (ts, xis) = default_fit_grids();
    let (c_fit, c0_fit) = pointwise_bound_fit(params, &ts, &xis, dim)?;
    Ok(LinearReport {
        regime: params.regime(),
        c0_fit,
        c_fit,
        ode_residual_max: ode,
        semigroup_err_max: semi,
        identity_err_max: ident,
        det_err_max: det,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::relative_difference;

    fn params(mu: f64, lambda: f64, kappa: f64) -> LinearParams {
        LinearParams::new(mu, lambda, kappa).unwrap()
    }

    #[test]
    fn validation_and_regimes() {
        assert!(LinearParams::new(0.0, 1.0, 1.0).is_err());
        assert!(LinearParams::new(1.0, -2.5, 1.0).is_err());
        assert!(LinearParams::new(1.0, 0.0, 0.0).is_err());
        assert_eq!(params(1.0, 0.0, 0.5).regime(), Regime::Overdamped);
        assert_eq!(params(1.0, 0.0, 1.0).regime(), Regime::Critical);
        assert_eq!(params(1.0, 0.0, 2.0).regime(), Regime::Underdamped);
        assert_eq!(params(1.0, 0.0, 1.0 + 1e-8).regime(), Regime::Critical);
    }

    #[test]
    fn roots_examples() {
        let (p, m) = characteristic_roots(1.0, &params(1.0, 0.0, 1.0));
        assert!((p - Complex64::new(-1.0, 0.0)).norm() < 1e-15);
        assert!((m - Complex64::new(-1.0, 0.0)).norm() < 1e-15);
        let (p, m) = characteristic_roots(1.0, &params(1.0, 1.0, 2.0));
        assert!((p.re + 2.0).abs() < 1e-15 && (m.re + 1.0).abs() < 1e-15);
        let (p, m) = characteristic_roots(1.0, &params(0.5, 0.0, 1.0));
        let h = 3f64.sqrt() / 2.0;
        assert!((p - Complex64::new(-0.5, -h)).norm() < 1e-15);
        assert!((m - Complex64::new(-0.5, h)).norm() < 1e-15);
    }

    #[test]
    fn roots_satisfy_vieta() {
        for (mu, lam, kappa) in [(1.0, 1.0, 2.0), (0.5, 0.0, 1.0), (1.0, 0.0, 1.0), (2.0, 5.0, 0.01)] {
            let p = params(mu, lam, kappa);
            for s in [1e-3, 0.7, 5.0] {
                let (lp, lm) = characteristic_roots(s, &p);
                let sum = lp + lm + p.nu() * s;
                let prod = lp * lm - kappa * s * s;
                assert!(sum.norm() <= 1e-12 * p.nu() * s);
                assert!(prod.norm() <= 1e-12 * kappa * s * s);
                assert!(lp.re <= 0.0 && lm.re <= 0.0);
            }
        }
    }

    #[test]
    fn green_spot_values() {
        let g = green_matrix(1.0, &[1.0], &params(1.0, 1.0, 2.0)).unwrap();
        let e = (-1f64).exp();
        assert!((g.g11().re - (2.0 * e - e * e)).abs() < 1e-14);
        assert!((g.g11().re - 0.600424).abs() < 1e-6);

        let g = green_matrix(1.0, &[1.0, 0.0, 0.0], &params(1.0, 0.0, 1.0)).unwrap();
        assert!((g.g11().re - 2.0 * e).abs() < 1e-14);
        assert!(g.get(1, 1).norm() < 1e-15);
        // transverse heat factor survives
        assert!((g.get(2, 2).re - e).abs() < 1e-15);

        for p in [params(1.0, 1.0, 2.0), params(0.5, 0.0, 1.0), params(1.0, 0.0, 1.0)] {
            let g = green_matrix(0.0, &[0.3, -1.2], &p).unwrap();
            assert_eq!(g, GreenMatrix::identity(3));
            let g = green_matrix(4.0, &[0.0, 0.0], &p).unwrap();
            assert_eq!(g, GreenMatrix::identity(3));
        }
        assert!(green_matrix(-1.0, &[1.0], &params(1.0, 0.0, 1.0)).is_err());
    }

    #[test]
    fn ode_residual_and_det_in_all_regimes() {
        for p in [params(1.0, 1.0, 2.0), params(0.5, 0.0, 1.0), params(1.0, 0.0, 1.0)] {
            for xi in [[0.3, 0.1, -0.2], [1.0, -0.5, 0.7], [0.0, 2.0, 0.0]] {
                for t in [0.05, 0.7, 3.0] {
                    assert!(ode_residual(t, &xi, &p, 1e-4).unwrap() < 1e-6);
                    let s: f64 = xi.iter().map(|x| x * x).sum();
                    assert!(longitudinal_det_defect(t, s, &p) < 1e-10);
                }
            }
        }
    }

    #[test]
    fn branches_agree_near_degeneracy() {
        let mut p = params(1.0, 0.0, 1.0);
        // |nu^2 - 4 kappa| / nu^2 = 2 eps_deg on both sides
        for sign in [1.0, -1.0] {
            p.kappa = 1.0 - sign * 2.0 * p.eps_deg;
            for s in [0.1, 1.0, 4.0] {
                for t in [0.1, 1.0, 5.0] {
                    let a = green_scalars_generic_branch(t, s, &p);
                    let b = green_scalars_critical_branch(t, s, &p);
                    let scale = a.g11.abs().max(a.d.abs()).max(a.g22l.abs());
                    for (x, y) in [(a.g11, b.g11), (a.d, b.d), (a.g22l, b.g22l)] {
                        assert!((x - y).abs() <= 1e-8 * scale, "{x} vs {y} at s={s}, t={t}");
                    }
                }
            }
        }
    }

    #[test]
    fn semigroup_law_on_states() {
        use rand::SeedableRng;
        let g = Grid::cube(3, 8, 7.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let a = SpectralField::random_hermitian(&g, &mut rng, |_| true);
        let m: Vec<_> = (0..3).map(|_| SpectralField::random_hermitian(&g, &mut rng, |_| true)).collect();
        let u = State::new(a, m, 0.0).unwrap();
        for p in [params(1.0, 1.0, 2.0), params(0.5, 0.0, 1.0), params(1.0, 0.0, 1.0)] {
            let two = apply_semigroup(&apply_semigroup(&u, 0.5, &p).unwrap(), 0.5, &p).unwrap();
            let one = apply_semigroup(&u, 1.0, &p).unwrap();
            assert!(two.relative_difference(&one) <= 1e-10);
            assert!(one.hermitian_defect() <= 1e-12);
            assert!((one.t - 1.0).abs() < 1e-15);
            let same = apply_semigroup(&u, 0.0, &p).unwrap();
            assert_eq!(same.relative_difference(&u), 0.0);
        }
    }

    #[test]
    fn transverse_momentum_follows_heat_flow() {
        let g = Grid::cube(3, 8, 2.0 * std::f64::consts::PI).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let raw: Vec<_> = (0..3).map(|_| SpectralField::random_hermitian(&g, &mut rng, |_| true)).collect();
        let (sol, _) = crate::ops::helmholtz_project(&raw).unwrap();
        let u = State::new(SpectralField::zeros(&g), sol.clone(), 0.0).unwrap();
        let p = params(0.7, 0.3, 2.0);
        let t = 0.8;
        let out = apply_semigroup(&u, t, &p).unwrap();
        assert!(out.a.max_abs() < 1e-14);
        let k2 = g.deriv_k_sq();
        for (mo, mi) in out.m.iter().zip(&sol) {
            let expect = mi.map(|i, c| c * (-p.mu * k2[i] * t).exp());
            assert!(relative_difference(mo, &expect) < 1e-13);
        }
    }

    #[test]
    fn duhamel_cases() {
        let g = Grid::cube(3, 8, 2.0 * std::f64::consts::PI).unwrap();
        let p = params(1.0, 0.0, 2.0);
        let zero: Vec<_> = (0..3).map(|_| SpectralField::zeros(&g)).collect();
        let inc = duhamel_convolve(&p, 0.1, &[(0.0, zero.clone()), (0.1, zero.clone())]).unwrap();
        assert!(inc.is_zero());
        assert!(duhamel_convolve(&p, 0.1, &[]).is_err());

        // DC forcing integrates to dt * F
        let mut f = zero.clone();
        f[0].coeffs_mut()[0] = Complex64::new(2.0, 0.0);
        let inc = duhamel_convolve(&p, 0.3, &[(0.0, f.clone()), (0.3, f.clone())]).unwrap();
        assert!((inc.m[0].coeffs()[0].re - 0.6).abs() < 1e-15);

        // transverse constant forcing against the exact integral
        let idx = g.index_of_modes(&[1, 0, 0]);
        let mut f = zero.clone();
        f[1].coeffs_mut()[idx] = Complex64::new(1.0, 0.0);
        let exact = |dt: f64| (1.0 - (-dt).exp()) / 1.0;
        let err = |dt: f64| {
            let inc = duhamel_convolve(&p, dt, &[(0.0, f.clone()), (dt, f.clone())]).unwrap();
            (inc.m[1].coeffs()[idx].re - exact(dt)).abs()
        };
        let ratio = err(0.1) / err(0.05);
        assert!((ratio - 8.0).abs() < 0.2, "{ratio}");
    }

    #[test]
    fn envelope_fit_examples() {
        let taus: Vec<f64> = (0..400).map(|k| 0.1 * k as f64).collect();
        let heat: Vec<f64> = taus.iter().map(|t| (-0.8 * t).exp()).collect();
        let (c, c0) = fit_exponential_envelope(&taus, &heat).unwrap();
        assert!(c0 >= 0.8 - 1e-9 && c <= 1.0 + 1e-9);

        let (ts, xis) = default_fit_grids();
        let (c, c0) = pointwise_bound_fit(&params(1.0, 0.0, 1.0), &ts, &xis, 3).unwrap();
        assert!(c0 > 0.0 && c0 < 1.0 && c.is_finite());
        let (_, c0) = pointwise_bound_fit(&params(1.0, 1.0, 2.0), &ts, &xis, 3).unwrap();
        assert!(c0 >= 0.99);
        let (c, c0) = pointwise_bound_fit(&params(0.5, 0.0, 1.0), &ts, &xis, 3).unwrap();
        assert!(c0 > 0.0 && c.is_finite());

        let grow: Vec<f64> = taus.iter().map(|t| (0.1 * t).exp()).collect();
        assert!(fit_exponential_envelope(&taus, &grow).is_err());
    }
}
