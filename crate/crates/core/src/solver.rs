//! Exponential time differencing for the full system, initial data and
//! trajectory instrumentation.
//!
//! With `G = G(dt)` and `N_n = N(U_n)` the steps are
//!
//! ```text
//! ETD1:    U_{n+1} = G U_n + (dt/2)(G + Id)(0, N_n)
//! ETD-RK2: U*      = ETD1 step
//!          U_{n+1} = G U_n + (dt/2)(G (0, N_n) + (0, N(U*)))
//! ```
//!
//! Both reduce to the exact propagator when the forcing vanishes, and the
//! density equation is never forced, so `int a` is conserved exactly.

use std::sync::Arc;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::besov::{self, DyadicPartition, NormSpec, TimeNormAccumulator};
use crate::error::{NskError, Result};
use crate::field::{SpectralField, State};
use crate::grid::Grid;
use crate::linear::{LinearParams, Propagator};
use crate::ops;
use crate::physics::{self, Guards, PressureModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scheme {
    #[serde(rename = "ETD1")]
    Etd1,
    #[serde(rename = "ETD-RK2")]
    EtdRk2,
}

/// When full states are kept in the trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum SnapshotPlan {
    /// `count` targets spaced geometrically between `max(dt, T/1000)` and `T`.
    Geometric { count: usize },
    /// Every `steps` accepted steps.
    Uniform { steps: usize },
}

impl Default for SnapshotPlan {
    fn default() -> Self {
        SnapshotPlan::Geometric { count: 30 }
    }
}

impl SnapshotPlan {
    /// Step indices at which a snapshot is stored (always includes 0 and the last step).
    pub fn steps(&self, dt: f64, total_steps: usize) -> Vec<usize> {
        let mut out = vec![0];
        match *self {
            SnapshotPlan::Uniform { steps } => {
                let every = steps.max(1);
                out.extend((1..=total_steps).filter(|k| k % every == 0));
            }
            SnapshotPlan::Geometric { count } => {
                let t_final = dt * total_steps as f64;
                let first = dt.max(t_final * 1e-3);
                if count >= 2 && t_final > first {
                    let ratio = (t_final / first).powf(1.0 / (count - 1) as f64);
                    for k in 0..count {
                        let target = first * ratio.powi(k as i32);
                        let step = ((target / dt).ceil() as usize).min(total_steps);
                        out.push(step);
                    }
                }
            }
        }
        out.push(total_steps);
        out.sort_unstable();
        out.dedup();
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepperConfig {
    pub dt: f64,
    pub scheme: Scheme,
    pub t_final: f64,
    #[serde(default)]
    pub snapshots: SnapshotPlan,
    /// Only the 2/3 rule is implemented.
    #[serde(default = "default_dealias")]
    pub dealias: String,
    #[serde(default)]
    pub guards: Guards,
    /// Largest tolerated fraction of the solution energy near the cell boundary.
    #[serde(default = "default_wrap")]
    pub wrap_threshold: f64,
    /// Drops the nonlinear forcing, leaving the exact linear flow.
    #[serde(default)]
    pub linear_only: bool,
}

fn default_dealias() -> String {
    "two-thirds".into()
}

fn default_wrap() -> f64 {
    1e-6
}

impl StepperConfig {
    pub fn new(dt: f64, scheme: Scheme, t_final: f64) -> Self {
        StepperConfig {
            dt,
            scheme,
            t_final,
            snapshots: SnapshotPlan::default(),
            dealias: default_dealias(),
            guards: Guards::default(),
            wrap_threshold: default_wrap(),
            linear_only: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(NskError::Config(format!("time.dt = {} must be positive", self.dt)));
        }
        if !(self.t_final >= 0.0) {
            return Err(NskError::Config(format!("time.t_final = {} must be >= 0", self.t_final)));
        }
        if self.t_final > 0.0 && self.t_final < self.dt * (1.0 - 1e-12) {
            return Err(NskError::Config(format!(
                "time.t_final = {} must be at least dt = {}",
                self.t_final, self.dt
            )));
        }
        if self.dealias != "two-thirds" {
            return Err(NskError::Config(format!(
                "time.dealias = {:?}: only \"two-thirds\" is supported",
                self.dealias
            )));
        }
        if !(self.wrap_threshold > 0.0) {
            return Err(NskError::Config("time.wrap_threshold must be positive".into()));
        }
        self.guards.validate()
    }

    pub fn total_steps(&self) -> usize {
        (self.t_final / self.dt - 1e-9).ceil().max(0.0) as usize
    }
}

/// Owns the per-mode propagator for one step size.
pub struct Stepper {
    params: LinearParams,
    pressure: PressureModel,
    guards: Guards,
    scheme: Scheme,
    dt: f64,
    linear_only: bool,
    prop: Propagator,
}

impl Stepper {
    pub fn new(
        grid: &Arc<Grid>,
        params: &LinearParams,
        pressure: &PressureModel,
        config: &StepperConfig,
    ) -> Result<Self> {
        config.validate()?;
        params.validate()?;
        pressure.validate()?;
        Ok(Stepper {
            params: *params,
            pressure: pressure.clone(),
            guards: config.guards,
            scheme: config.scheme,
            dt: config.dt,
            linear_only: config.linear_only,
            prop: Propagator::new(grid, params, config.dt)?,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn params(&self) -> &LinearParams {
        &self.params
    }

    pub fn pressure(&self) -> &PressureModel {
        &self.pressure
    }

    pub fn forcing(&self, state: &State) -> Result<Option<Vec<SpectralField>>> {
        if self.linear_only {
            return Ok(None);
        }
        physics::nonlinearity(state, &self.params, &self.pressure, &self.guards).map(Some)
    }

    pub fn step(&self, state: &State) -> Result<State> {
        let half = 0.5 * self.dt;
        let n0 = self.forcing(state)?;
        let mut base_a = state.a.clone();
        let mut base_m = state.m.clone();
        if let Some(n0) = &n0 {
            for (m, f) in base_m.iter_mut().zip(n0) {
                m.axpy(half, f);
            }
        }
        self.prop.apply_in_place(&mut base_a, &mut base_m);
        let t_next = state.t + self.dt;
        let Some(n0) = n0 else {
            return Ok(State { a: base_a, m: base_m, t: t_next });
        };
        let mut pred_m = base_m.clone();
        for (m, f) in pred_m.iter_mut().zip(&n0) {
            m.axpy(half, f);
        }
        let predicted = State {
            a: base_a.clone(),
            m: pred_m,
            t: t_next,
        };
        match self.scheme {
            Scheme::Etd1 => Ok(predicted),
            Scheme::EtdRk2 => {
                let n1 = physics::nonlinearity(&predicted, &self.params, &self.pressure, &self.guards)?;
                for (m, f) in base_m.iter_mut().zip(&n1) {
                    m.axpy(half, f);
                }
                Ok(State { a: base_a, m: base_m, t: t_next })
            }
        }
    }
}

/// Receives every accepted state, starting with the initial one.
pub trait Observer {
    fn observe(&mut self, state: &State, step: usize) -> Result<()>;
}

#[derive(Debug, Clone)]
pub struct Abort {
    pub t: f64,
    pub reason: String,
    /// Last accepted state before the failing step.
    pub state: State,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub mass: Vec<f64>,
    pub snapshot_times: Vec<f64>,
    pub snapshots: Vec<State>,
    pub wrap_max: f64,
    pub abort: Option<Abort>,
}

impl Trajectory {
    pub fn final_state(&self) -> Option<&State> {
        self.snapshots.last()
    }

    pub fn mass_drift(&self) -> f64 {
        let m0 = self.mass.first().copied().unwrap_or(0.0);
        self.mass.iter().map(|m| (m - m0).abs()).fold(0.0, f64::max)
    }
}

/// Fraction of the state's energy within `L/10` of the cell boundary.
pub fn wrap_fraction(state: &State) -> f64 {
    let samples: Vec<Vec<f64>> = state.components().map(|f| f.to_physical()).collect();
    let refs: Vec<&[f64]> = samples.iter().map(|s| s.as_slice()).collect();
    ops::boundary_shell_fraction(&refs, state.grid())
}

/// Runs the stepper to `config.t_final`. Guard violations end the run early
/// and are reported in [`Trajectory::abort`].
pub fn simulate(
    initial: &State,
    stepper: &Stepper,
    config: &StepperConfig,
    observers: &mut [&mut dyn Observer],
) -> Result<Trajectory> {
    config.validate()?;
    if (stepper.dt() - config.dt).abs() > 0.0 {
        return Err(NskError::Config("stepper and config disagree on dt".into()));
    }
    let total = config.total_steps();
    let snap_steps = config.snapshots.steps(config.dt, total);
    let mut next_snap = 0usize;
    let t0 = initial.t;
    let mut traj = Trajectory {
        times: Vec::with_capacity(total + 1),
        mass: Vec::with_capacity(total + 1),
        snapshot_times: Vec::new(),
        snapshots: Vec::new(),
        wrap_max: 0.0,
        abort: None,
    };
    let mut state = initial.clone();
    for k in 0..=total {
        if k > 0 {
            match stepper.step(&state) {
                Ok(mut next) => {
                    next.t = t0 + k as f64 * config.dt;
                    state = next;
                }
                Err(e @ (NskError::Vacuum { .. } | NskError::PressureRadius { .. })) => {
                    traj.abort = Some(Abort {
                        t: state.t,
                        reason: e.to_string(),
                        state: state.clone(),
                    });
                    return Ok(traj);
                }
                Err(e) => return Err(e),
            }
        }
        traj.times.push(state.t);
        traj.mass.push(ops::moment(&state.a));
        for obs in observers.iter_mut() {
            obs.observe(&state, k)?;
        }
        if next_snap < snap_steps.len() && snap_steps[next_snap] == k {
            traj.wrap_max = traj.wrap_max.max(wrap_fraction(&state));
            traj.snapshot_times.push(state.t);
            traj.snapshots.push(state.clone());
            next_snap += 1;
        }
    }
    Ok(traj)
}

/// Which quantity a diagnostic norm is taken of.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormTarget {
    /// The density perturbation `a`.
    A,
    /// The momentum `m` (Euclidean magnitude per mode).
    M,
    /// The pair `(|nabla| a, m)`.
    U,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormRequest {
    pub name: String,
    pub target: NormTarget,
    #[serde(flatten)]
    pub spec: NormSpec,
}

/// Per-mode magnitudes of the requested quantity.
pub fn target_magnitudes(state: &State, target: NormTarget) -> Vec<f64> {
    let scale = state.grid().fourier_scale();
    let n = state.grid().mode_count();
    let mut sq = vec![0.0; n];
    match target {
        NormTarget::A => {
            for (o, c) in sq.iter_mut().zip(state.a.coeffs()) {
                *o = c.norm_sqr();
            }
        }
        NormTarget::M | NormTarget::U => {
            for m in &state.m {
                for (o, c) in sq.iter_mut().zip(m.coeffs()) {
                    *o += c.norm_sqr();
                }
            }
            if target == NormTarget::U {
                let xi = state.grid().xi_norm();
                for (i, (o, c)) in sq.iter_mut().zip(state.a.coeffs()).enumerate() {
                    *o += xi[i] * xi[i] * c.norm_sqr();
                }
            }
        }
    }
    sq.into_iter().map(|v| v.sqrt() * scale).collect()
}

/// Records the requested Besov norms at every observed step.
pub struct NormObserver {
    requests: Vec<NormRequest>,
    partition: DyadicPartition,
    dxi: f64,
    every: usize,
    pub times: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

impl NormObserver {
    pub fn new(grid: &Grid, requests: Vec<NormRequest>, every: usize) -> Result<Self> {
        for r in &requests {
            r.spec.validate()?;
        }
        Ok(NormObserver {
            requests,
            partition: DyadicPartition::new(grid),
            dxi: grid.dxi_volume(),
            every: every.max(1),
            times: Vec::new(),
            values: Vec::new(),
        })
    }

    pub fn requests(&self) -> &[NormRequest] {
        &self.requests
    }

    pub fn measure(&self, state: &State) -> Vec<f64> {
        self.requests
            .iter()
            .map(|r| {
                let mags = target_magnitudes(state, r.target);
                let blocks = self.partition.block_norms(&mags, r.spec.p, self.dxi);
                besov::besov_from_blocks(&blocks, self.partition.j_min(), r.spec.s, r.spec.sigma)
            })
            .collect()
    }

    /// The time series of request `k`.
    pub fn series(&self, k: usize) -> Vec<f64> {
        self.values.iter().map(|v| v[k]).collect()
    }
}

impl Observer for NormObserver {
    fn observe(&mut self, state: &State, step: usize) -> Result<()> {
        if step % self.every == 0 {
            self.times.push(state.t);
            self.values.push(self.measure(state));
        }
        Ok(())
    }
}

/// Initial-data recipe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialDataSpec {
    /// Overall amplitude.
    pub epsilon: f64,
    #[serde(default)]
    pub family: DataFamily,
    /// Gaussian width (length units).
    #[serde(default = "default_width")]
    pub width: f64,
    /// Bump centre; defaults to the cell centre.
    #[serde(default)]
    pub center: Option<Vec<f64>>,
    /// Relative weight of `a_0`.
    #[serde(default = "one")]
    pub density: f64,
    /// Relative weight of the momentum potential `m~_0` (so `m_0 = grad m~_0`).
    #[serde(default = "one")]
    pub potential: f64,
    /// Relative weight of a divergence-free momentum part.
    #[serde(default)]
    pub transverse: f64,
    /// Radial band `[lo, hi]` in `|xi|` for the random family.
    #[serde(default)]
    pub band: Option<[f64; 2]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataFamily {
    #[default]
    Gaussian,
    Random,
}

fn default_width() -> f64 {
    1.5
}

fn one() -> f64 {
    1.0
}

impl InitialDataSpec {
    pub fn gaussian(epsilon: f64, width: f64) -> Self {
        InitialDataSpec {
            epsilon,
            family: DataFamily::Gaussian,
            width,
            center: None,
            density: 1.0,
            potential: 1.0,
            transverse: 0.0,
            band: None,
        }
    }

    pub fn validate(&self, grid: &Grid) -> Result<()> {
        if !self.epsilon.is_finite() || self.epsilon < 0.0 {
            return Err(NskError::Config(format!("initial.epsilon = {} must be >= 0", self.epsilon)));
        }
        if !(self.width > 0.0) {
            return Err(NskError::Config(format!("initial.width = {} must be positive", self.width)));
        }
        if let Some(c) = &self.center {
            if c.len() != grid.dim() {
                return Err(NskError::Config(format!(
                    "initial.center has {} entries for a {}-d grid",
                    c.len(),
                    grid.dim()
                )));
            }
        }
        if let Some([lo, hi]) = self.band {
            if !(lo >= 0.0 && hi > lo) {
                return Err(NskError::Config(format!("initial.band = [{lo}, {hi}] is not an interval")));
            }
        }
        Ok(())
    }

    pub fn center(&self, grid: &Grid) -> Vec<f64> {
        self.center
            .clone()
            .unwrap_or_else(|| grid.lengths().iter().map(|l| 0.5 * l).collect())
    }
}

/// Data norms appearing in the smallness assumption, for `p` and `sigma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DataNorms {
    pub p: f64,
    pub sigma: f64,
    /// `||a_0||` in `B^{-2+d/p}_{p,sigma} cap B^{d/p}_{p,1}`.
    pub a0: f64,
    /// `||m_0||` in `B^{-3+d/p}_{p,sigma} cap B^{-1+d/p}_{p,1}`.
    pub m0: f64,
}

pub fn data_norms(state: &State, p: f64, sigma: f64) -> Result<DataNorms> {
    let grid = state.grid();
    let dp = grid.dim() as f64 / p;
    let a_mags = target_magnitudes(state, NormTarget::A);
    let m_mags = target_magnitudes(state, NormTarget::M);
    let b = |mags: &[f64], s: f64, sig: f64| besov::besov_norm_of_magnitudes(grid, mags, &NormSpec::new(s, p, sig));
    Ok(DataNorms {
        p,
        sigma,
        a0: b(&a_mags, -2.0 + dp, sigma)? + b(&a_mags, dp, 1.0)?,
        m0: b(&m_mags, -3.0 + dp, sigma)? + b(&m_mags, -1.0 + dp, 1.0)?,
    })
}

#[derive(Debug, Clone)]
pub struct InitialData {
    pub state: State,
    /// The momentum potential `m~_0`.
    pub potential: SpectralField,
    pub center: Vec<f64>,
    pub norms: DataNorms,
}

/// Gaussian `exp(-|x - c|^2 / (2 w^2))` built from its transform, so the
/// periodic images are summed exactly; the 2/3 rule is applied.
pub fn gaussian_bump(grid: &Arc<Grid>, width: f64, center: &[f64]) -> SpectralField {
    let d = grid.dim() as f64;
    let mut f = SpectralField::from_symbol(grid, |i| {
        let xi = grid.wavevector(i).expect("index in range");
        let r2: f64 = xi.iter().map(|x| x * x).sum();
        let phase: f64 = xi.iter().zip(center).map(|(x, c)| x * c).sum();
        let amp = width.powf(d) * (-0.5 * width * width * r2).exp();
        amp * Complex64::from_polar(1.0, -phase)
    });
    f.symmetrize();
    ops::dealias(&mut f);
    f
}

fn random_band(grid: &Arc<Grid>, rng: &mut ChaCha8Rng, band: [f64; 2]) -> SpectralField {
    let g = grid.clone();
    let mask = grid.dealias_mask().to_vec();
    let f = SpectralField::random_hermitian(grid, rng, |i| {
        let r = g.xi_norm()[i];
        mask[i] && r >= band[0] && r <= band[1]
    });
    let peak = f.to_physical().iter().map(|x| x.abs()).fold(0.0, f64::max);
    if peak > 0.0 {
        f.scaled(1.0 / peak)
    } else {
        f
    }
}

/// Builds `(a_0, m_0 = grad m~_0 + transverse part)` and reports the data norms
/// for `p = 2`, `sigma = 1`.
pub fn build_initial_data(grid: &Arc<Grid>, spec: &InitialDataSpec, seed: u64) -> Result<InitialData> {
    spec.validate(grid)?;
    let center = spec.center(grid);
    let eps = spec.epsilon;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (a0, pot, trans_src): (SpectralField, SpectralField, Vec<SpectralField>) = match spec.family {
        DataFamily::Gaussian => {
            let g = gaussian_bump(grid, spec.width, &center);
            let trans = (0..grid.dim()).map(|_| g.clone()).collect();
            (g.clone(), g, trans)
        }
        DataFamily::Random => {
            let band = spec.band.unwrap_or([0.0, f64::INFINITY]);
            let a = random_band(grid, &mut rng, band);
            let p = random_band(grid, &mut rng, band);
            let trans = (0..grid.dim()).map(|_| random_band(grid, &mut rng, band)).collect();
            (a, p, trans)
        }
    };
    let a = a0.scaled(eps * spec.density);
    let potential = pot.scaled(eps * spec.potential);
    let mut m = ops::gradient(&potential);
    if spec.transverse != 0.0 {
        let (sol, _) = ops::helmholtz_project(&trans_src)?;
        for (mj, sj) in m.iter_mut().zip(&sol) {
            mj.axpy(eps * spec.transverse, sj);
        }
    }
    let state = State::new(a, m, 0.0)?;
    let norms = data_norms(&state, 2.0, 1.0)?;
    Ok(InitialData {
        state,
        potential,
        center,
        norms,
    })
}

/// Gevrey-weighted Chemin-Lerner components of `U = e^{sqrt(c0 t)|nabla|}(|nabla| a, m)`:
/// `L~^inf B^{-3+d/p}_{p,sigma}`, `L~^1 B^{-1+d/p}_{p,sigma}`,
/// `L~^inf B^{-1+d/p}_{p,1}` and `L^1 B^{1+d/p}_{p,1}`.
pub struct GevreyTracker {
    c0: f64,
    partition: DyadicPartition,
    dxi: f64,
    xi: Vec<f64>,
    p: f64,
    every: usize,
    weighted: [TimeNormAccumulator; 4],
    plain: [TimeNormAccumulator; 4],
    pub times: Vec<f64>,
    /// Instantaneous weighted norm in `B^{-1+d/p}_{p,1}`.
    pub weighted_series: Vec<f64>,
    pub radius_times: Vec<f64>,
    pub radii: Vec<Option<f64>>,
    radius_every: usize,
}

/// Names of the four CL components, in tracker order.
pub const CL_COMPONENTS: [&str; 4] = ["Linf_B(-3+d/p)_(p,sigma)", "L1_B(-1+d/p)_(p,sigma)", "Linf_B(-1+d/p)_(p,1)", "L1_B(1+d/p)_(p,1)"];

impl GevreyTracker {
    /// `c0_limit` is the largest admissible rate (fitted linear `c0` times a
    /// safety factor at most one); larger `c0` is rejected up front.
    pub fn new(grid: &Grid, c0: f64, c0_limit: f64, p: f64, sigma: f64, every: usize, radius_every: usize) -> Result<Self> {
        if !(c0 > 0.0) {
            return Err(NskError::InvalidArgument(format!("gevrey c0 = {c0} must be positive")));
        }
        if c0 > c0_limit {
            return Err(NskError::InvalidArgument(format!(
                "gevrey c0 = {c0} exceeds the admissible limit {c0_limit} from the linear fit"
            )));
        }
        let part = DyadicPartition::new(grid);
        let dp = grid.dim() as f64 / p;
        let specs = [
            NormSpec::new(-3.0 + dp, p, sigma).with_time_index(f64::INFINITY),
            NormSpec::new(-1.0 + dp, p, sigma).with_time_index(1.0),
            NormSpec::new(-1.0 + dp, p, 1.0).with_time_index(f64::INFINITY),
            NormSpec::new(1.0 + dp, p, 1.0).with_time_index(1.0),
        ];
        let mk = |s: &NormSpec| TimeNormAccumulator::new(*s, part.j_min(), part.block_count());
        let weighted = [mk(&specs[0])?, mk(&specs[1])?, mk(&specs[2])?, mk(&specs[3])?];
        let plain = weighted.clone();
        Ok(GevreyTracker {
            c0,
            dxi: grid.dxi_volume(),
            xi: grid.xi_norm().to_vec(),
            partition: part,
            p,
            every: every.max(1),
            weighted,
            plain,
            times: Vec::new(),
            weighted_series: Vec::new(),
            radius_times: Vec::new(),
            radii: Vec::new(),
            radius_every: radius_every.max(1),
        })
    }

    pub fn c0(&self) -> f64 {
        self.c0
    }

    /// Current values of the four weighted components (index 3 is Bochner).
    pub fn weighted_components(&self) -> Result<[f64; 4]> {
        Self::components(&self.weighted)
    }

    pub fn plain_components(&self) -> Result<[f64; 4]> {
        Self::components(&self.plain)
    }

    fn components(acc: &[TimeNormAccumulator; 4]) -> Result<[f64; 4]> {
        Ok([
            acc[0].chemin_lerner()?,
            acc[1].chemin_lerner()?,
            acc[2].chemin_lerner()?,
            acc[3].bochner()?,
        ])
    }

    pub fn weighted_total(&self) -> Result<f64> {
        Ok(self.weighted_components()?.iter().sum())
    }
}

impl Observer for GevreyTracker {
    fn observe(&mut self, state: &State, step: usize) -> Result<()> {
        if step % self.radius_every == 0 {
            self.radius_times.push(state.t);
            self.radii.push(fit_decay_radius(state));
        }
        if step % self.every != 0 {
            return Ok(());
        }
        let radius = besov::gevrey_check(state.grid(), state.t, self.c0)?;
        let plain = target_magnitudes(state, NormTarget::U);
        let weighted: Vec<f64> = plain.iter().zip(&self.xi).map(|(m, x)| m * (radius * x).exp()).collect();
        let wb = self.partition.block_norms(&weighted, self.p, self.dxi);
        let pb = self.partition.block_norms(&plain, self.p, self.dxi);
        for acc in &mut self.weighted {
            acc.push(state.t, &wb)?;
        }
        for acc in &mut self.plain {
            acc.push(state.t, &pb)?;
        }
        self.times.push(state.t);
        let s = self.weighted[2].spec().s;
        self.weighted_series
            .push(besov::besov_from_blocks(&wb, self.partition.j_min(), s, 1.0));
        Ok(())
    }
}

/// Exponential decay rate `r` of `|U_hat(xi)| ~ e^{-r |xi|}` for
/// `U = (|xi| a_hat, m_hat)`: least squares of `ln|U_hat|` against `|xi|` over
/// the individual modes inside the 2/3 band whose level lies between `e^-8`
/// and `e^-1` of the peak. `None` when fewer than eight modes qualify.
pub fn fit_decay_radius(state: &State) -> Option<f64> {
    fit_decay_radius_band(state, -8.0, -1.0)
}

/// As [`fit_decay_radius`] with the level window `[e^lo, e^hi]`.
pub fn fit_decay_radius_band(state: &State, lo: f64, hi: f64) -> Option<f64> {
    let grid = state.grid();
    let mags = target_magnitudes(state, NormTarget::U);
    let mask = grid.dealias_mask();
    let peak = mags
        .iter()
        .zip(mask)
        .filter(|(_, &k)| k)
        .map(|(m, _)| *m)
        .fold(0.0, f64::max);
    if peak == 0.0 {
        return None;
    }
    let pts: Vec<(f64, f64)> = mags
        .iter()
        .zip(grid.xi_norm())
        .zip(mask)
        .filter(|((&v, &r), &k)| k && r > 0.0 && v > 0.0)
        .map(|((&v, &r), _)| (r, (v / peak).ln()))
        .filter(|&(_, l)| (lo..=hi).contains(&l))
        .collect();
    if pts.len() < 8 {
        return None;
    }
    let (slope, _, _) = least_squares(&pts);
    if slope < 0.0 {
        Some(-slope)
    } else {
        None
    }
}

/// Ordinary least squares `y = slope x + intercept`; returns the RMS residual too.
pub fn least_squares(pts: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rms = (pts
        .iter()
        .map(|p| {
            let e = p.1 - slope * p.0 - intercept;
            e * e
        })
        .sum::<f64>()
        / n)
        .sqrt();
    (slope, intercept, rms)
}

/// Running time integrals of the nonlinear moment integrands
/// `int a^2 I~_P(a) dy` and `int (m_j m_k/(1+a) + K~^{jk}(a)) dy`.
pub struct MomentAccumulator {
    kappa: f64,
    pressure: PressureModel,
    every: usize,
    dim: usize,
    pub times: Vec<f64>,
    pub pressure_series: Vec<f64>,
    pub stress_series: Vec<Vec<f64>>,
    pi_p: f64,
    m: Vec<f64>,
}

impl MomentAccumulator {
    pub fn new(dim: usize, kappa: f64, pressure: &PressureModel, every: usize) -> Self {
        MomentAccumulator {
            kappa,
            pressure: pressure.clone(),
            every: every.max(1),
            dim,
            times: Vec::new(),
            pressure_series: Vec::new(),
            stress_series: Vec::new(),
            pi_p: 0.0,
            m: vec![0.0; dim * dim],
        }
    }

    fn record(&mut self, state: &State) {
        let integ = physics::moment_integrands(state, self.kappa, &self.pressure);
        let dv = state.grid().cell_volume();
        let p = integ.pressure.iter().sum::<f64>() * dv;
        let s: Vec<f64> = integ.stress.iter().map(|c| c.iter().sum::<f64>() * dv).collect();
        if let (Some(&t0), Some(&p0), Some(s0)) = (self.times.last(), self.pressure_series.last(), self.stress_series.last()) {
            let h = 0.5 * (state.t - t0);
            self.pi_p += h * (p + p0);
            for ((acc, &v), &v0) in self.m.iter_mut().zip(&s).zip(s0) {
                *acc += h * (v + v0);
            }
        }
        self.times.push(state.t);
        self.pressure_series.push(p);
        self.stress_series.push(s);
    }

    /// Truncated integrals `(pi_P, M)` with `M` row-major `d x d`.
    pub fn integrals(&self) -> (f64, Vec<f64>) {
        (self.pi_p, self.m.clone())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
}

impl Observer for MomentAccumulator {
    fn observe(&mut self, state: &State, step: usize) -> Result<()> {
        if step % self.every == 0 {
            self.record(state);
        }
        Ok(())
    }
}
