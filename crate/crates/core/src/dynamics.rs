//! Right-hand sides, the nonlinear phase-rotation rate and the time integrators.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{self, ComplexField, Grid, RealField};
use crate::verify;
use crate::wavefield::{observables, MadelungField, Observables, PhysParams, WaveField};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const GUARD_LIMIT: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Strang,
    Rk4,
    Madelung,
}

impl FromStr for Scheme {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "strang" => Ok(Scheme::Strang),
            "rk4" => Ok(Scheme::Rk4),
            "madelung" => Ok(Scheme::Madelung),
            other => Err(format!("unknown scheme `{other}` (strang, rk4, madelung)")),
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Strang => "strang",
            Scheme::Rk4 => "rk4",
            Scheme::Madelung => "madelung",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepperConfig {
    pub scheme: Scheme,
    pub dt: f64,
    pub snapshot_every: usize,
    pub max_steps: usize,
    /// Relative norm drift `|N(t)/N(0) − 1|` that aborts a run.
    pub norm_drift_abort: f64,
}

impl Default for StepperConfig {
    fn default() -> Self {
        StepperConfig {
            scheme: Scheme::Strang,
            dt: 1e-3,
            snapshot_every: 100,
            max_steps: 10_000_000,
            norm_drift_abort: 1e-6,
        }
    }
}

impl StepperConfig {
    pub fn new(scheme: Scheme, dt: f64) -> Self {
        StepperConfig {
            scheme,
            dt,
            ..Default::default()
        }
    }

    pub fn every(mut self, steps: usize) -> Self {
        self.snapshot_every = steps.max(1);
        self
    }
}

/// Keeps modes with `|k_d| ≤ cutoff` on every axis.
fn band_mask(grid: &Grid, cutoff: f64) -> Vec<bool> {
    (0..grid.len())
        .map(|idx| {
            grid.unravel(idx)
                .iter()
                .enumerate()
                .all(|(d, &i)| grid.axis(d).wavenumbers()[i].abs() <= cutoff)
        })
        .collect()
}

/// Evaluates `ω_nl` with reusable buffers.
pub(crate) struct RateKernel {
    grid: Grid,
    prefactor: f64,
    eps2: f64,
    band: Option<Vec<bool>>,
    spec: Vec<Complex64>,
    filtered: Vec<Complex64>,
    lap: Vec<Complex64>,
}

impl RateKernel {
    pub(crate) fn new(grid: &Grid, params: &PhysParams) -> Self {
        let n = grid.len();
        RateKernel {
            grid: grid.clone(),
            prefactor: params.nl_prefactor(),
            eps2: params.eps_reg * params.eps_reg,
            band: params.nl_cutoff.map(|c| band_mask(grid, c)),
            spec: vec![ZERO; n],
            filtered: vec![ZERO; n],
            lap: vec![ZERO; n],
        }
    }

    pub(crate) fn is_active(&self) -> bool {
        self.prefactor != 0.0
    }

    /// Writes ω into `out` and returns `max|ω|`.
    pub(crate) fn eval(&mut self, psi: &[Complex64], out: &mut [f64]) -> f64 {
        if !self.is_active() {
            out.iter_mut().for_each(|w| *w = 0.0);
            return 0.0;
        }
        let k_sq = self.grid.k_squared();
        let src: &[Complex64] = match &self.band {
            None => {
                grid::laplacian_into(&self.grid, psi, &mut self.lap);
                psi
            }
            Some(band) => {
                self.spec.copy_from_slice(psi);
                self.grid.forward(&mut self.spec);
                for (i, v) in self.spec.iter_mut().enumerate() {
                    if !band[i] {
                        *v = ZERO;
                    }
                }
                for ((l, f), (s, &k2)) in self
                    .lap
                    .iter_mut()
                    .zip(self.filtered.iter_mut())
                    .zip(self.spec.iter().zip(k_sq))
                {
                    *f = *s;
                    *l = *s * -k2;
                }
                self.grid.inverse(&mut self.filtered);
                self.grid.inverse(&mut self.lap);
                &self.filtered
            }
        };
        let peak = src.iter().fold(0.0, |m: f64, z| m.max(z.norm_sqr()));
        let floor = self.eps2 * peak;
        let mut max = 0.0f64;
        for ((w, z), l) in out.iter_mut().zip(src).zip(&self.lap) {
            let den = z.norm_sqr() + floor;
            *w = if den > 0.0 {
                self.prefactor * (z.conj() * l).re / den
            } else {
                0.0
            };
            max = max.max(w.abs());
        }
        max
    }
}

/// Local nonlinear rotation rate `ω_nl = (ħ/2μ)·Re(Ψ*ΔΨ)/(|Ψ|² + ε²·max|Ψ|²)`.
pub fn omega_nl(wf: &WaveField, params: &PhysParams) -> RealField {
    let grid = wf.grid();
    let mut out = vec![0.0; grid.len()];
    RateKernel::new(grid, params).eval(wf.psi.as_slice(), &mut out);
    RealField::new(grid.clone(), out).expect("same grid")
}

struct RhsKernel {
    grid: Grid,
    rate: RateKernel,
    v: Vec<f64>,
    kinetic: f64,
    inv_hbar: f64,
    lap: Vec<Complex64>,
    omega: Vec<f64>,
}

impl RhsKernel {
    fn new(grid: &Grid, params: &PhysParams) -> Result<Self> {
        Ok(RhsKernel {
            grid: grid.clone(),
            rate: RateKernel::new(grid, params),
            v: params.potential.sample(grid)?,
            kinetic: params.hbar / (2.0 * params.mass),
            inv_hbar: 1.0 / params.hbar,
            lap: vec![ZERO; grid.len()],
            omega: vec![0.0; grid.len()],
        })
    }

    /// `Ψ̇` into `out`; returns `max|ω_nl|`.
    fn eval(&mut self, psi: &[Complex64], out: &mut [Complex64]) -> f64 {
        grid::laplacian_into(&self.grid, psi, &mut self.lap);
        let max = self.rate.eval(psi, &mut self.omega);
        let i = Complex64::i();
        for (((o, z), l), (v, w)) in out
            .iter_mut()
            .zip(psi)
            .zip(&self.lap)
            .zip(self.v.iter().zip(&self.omega))
        {
            *o = i * (l * self.kinetic - z * (v * self.inv_hbar + w));
        }
        max
    }
}

/// `Ψ̇ = −(i/ħ)(−(ħ²/2M)ΔΨ + VΨ) − i·ω_nl·Ψ`.
pub fn rhs_full(wf: &WaveField, params: &PhysParams) -> Result<ComplexField> {
    let grid = wf.grid();
    let mut out = ComplexField::zeros(grid);
    RhsKernel::new(grid, params)?.eval(wf.psi.as_slice(), out.as_mut_slice());
    Ok(out)
}

/// The nonlinear part of the flow, `−i·ω_nl·Ψ`.
pub fn rhs_nonlinear(wf: &WaveField, params: &PhysParams) -> ComplexField {
    let omega = omega_nl(wf, params);
    let data = wf
        .psi
        .as_slice()
        .iter()
        .zip(omega.as_slice())
        .map(|(z, &w)| Complex64::new(0.0, -w) * z)
        .collect();
    ComplexField::new(wf.grid().clone(), data).expect("same grid")
}

/// Amplitude/phase right-hand side on raw arrays. Phase gradients come from
/// `Im(Ψ*∇Ψ)` of the recomposed field, so unwrapping is not required.
struct MadelungKernel {
    grid: Grid,
    v: Vec<f64>,
    hbar: f64,
    mass: f64,
    coeff: f64,
    eps2: f64,
    psi: Vec<Complex64>,
    grad: Vec<Complex64>,
    flux: Vec<Complex64>,
    lap: Vec<Complex64>,
    grad_phi_sq: Vec<f64>,
}

impl MadelungKernel {
    fn new(grid: &Grid, params: &PhysParams) -> Result<Self> {
        let n = grid.len();
        let inv_mu = if params.is_linear() { 0.0 } else { 1.0 / params.mu };
        Ok(MadelungKernel {
            grid: grid.clone(),
            v: params.potential.sample(grid)?,
            hbar: params.hbar,
            mass: params.mass,
            coeff: 0.5 * params.hbar * (inv_mu - 1.0 / params.mass),
            eps2: params.eps_reg * params.eps_reg,
            psi: vec![ZERO; n],
            grad: vec![ZERO; n],
            flux: vec![ZERO; n],
            lap: vec![ZERO; n],
            grad_phi_sq: vec![0.0; n],
        })
    }

    fn node_fraction(&self, rho: &[f64]) -> f64 {
        let floor = self.eps2 * rho.iter().fold(0.0, |m: f64, &r| m.max(r));
        rho.iter().filter(|&&r| r < floor).count() as f64 / rho.len() as f64
    }

    fn eval(&mut self, rho: &[f64], phi: &[f64], drho: &mut [f64], dphi: &mut [f64]) -> Result<()> {
        let fraction = self.node_fraction(rho);
        if fraction >= 0.01 {
            return Err(Error::TooManyNodes(100.0 * fraction));
        }
        let peak = rho.iter().fold(0.0, |m: f64, &r| m.max(r));
        let floor = self.eps2 * peak;
        for ((p, &r), &f) in self.psi.iter_mut().zip(rho).zip(phi) {
            *p = Complex64::from_polar(r.max(0.0).sqrt(), f);
        }
        drho.iter_mut().for_each(|v| *v = 0.0);
        self.grad_phi_sq.iter_mut().for_each(|v| *v = 0.0);
        for d in 0..self.grid.ndim() {
            grid::derivative_into(&self.grid, d, &self.psi, &mut self.grad);
            for (i, (p, g)) in self.psi.iter().zip(&self.grad).enumerate() {
                let im = (p.conj() * g).im;
                let gp = im / (rho[i].max(0.0) + floor);
                self.grad_phi_sq[i] += gp * gp;
                self.lap[i] = Complex64::new(self.hbar / self.mass * im, 0.0);
            }
            grid::derivative_into(&self.grid, d, &self.lap, &mut self.flux);
            for (r, f) in drho.iter_mut().zip(&self.flux) {
                *r -= f.re;
            }
        }
        for (l, &r) in self.lap.iter_mut().zip(rho) {
            *l = Complex64::new(r.max(0.0).sqrt(), 0.0);
        }
        let amp: Vec<Complex64> = self.lap.clone();
        grid::laplacian_into(&self.grid, &amp, &mut self.lap);
        for i in 0..rho.len() {
            let quantum = self.lap[i].re * amp[i].re / (rho[i].max(0.0) + floor);
            dphi[i] = self.coeff * (self.grad_phi_sq[i] - quantum) - self.v[i] / self.hbar;
        }
        Ok(())
    }
}

/// `(∂t A², ∂t φ)` for a node-free amplitude/phase pair:
/// `∂t A² = −∇·(A²ħ∇φ/M)`, `∂t φ = (ħ/2)(1/μ − 1/M)(|∇φ|² − ΔA/A) − V/ħ`.
pub fn madelung_rhs(mf: &MadelungField, params: &PhysParams) -> Result<(RealField, RealField)> {
    let grid = mf.grid();
    let n = grid.len();
    if mf.node_fraction() >= 0.01 {
        return Err(Error::TooManyNodes(100.0 * mf.node_fraction()));
    }
    let rho: Vec<f64> = mf.amplitude.as_slice().iter().map(|a| a * a).collect();
    let mut drho = vec![0.0; n];
    let mut dphi = vec![0.0; n];
    MadelungKernel::new(grid, params)?.eval(&rho, mf.phase.as_slice(), &mut drho, &mut dphi)?;
    Ok((
        RealField::new(grid.clone(), drho)?,
        RealField::new(grid.clone(), dphi)?,
    ))
}

/// Per-step diagnostics.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StepInfo {
    pub max_omega: f64,
    /// `max_x ||Ψ|²_after − |Ψ|²_before|` across the nonlinear substep (strang only).
    pub modulus_change: f64,
}

enum Engine {
    Strang {
        kin_half: Vec<Complex64>,
        pot_half: Option<Vec<Complex64>>,
        rate: RateKernel,
        omega: Vec<f64>,
        mid: Vec<Complex64>,
    },
    Rk4 {
        rhs: RhsKernel,
        stage: Vec<Complex64>,
        acc: Vec<Complex64>,
        k: Vec<Complex64>,
    },
    Madelung {
        rhs: MadelungKernel,
        rho: [Vec<f64>; 3],
        phi: [Vec<f64>; 3],
        drho: Vec<f64>,
        dphi: Vec<f64>,
    },
}

/// Advances Ψ by fixed steps with one scheme.
pub struct Propagator {
    grid: Grid,
    dt: f64,
    /// Linear rate entering the stability guard.
    base_rate: f64,
    engine: Engine,
}

impl Propagator {
    pub fn new(grid: &Grid, params: &PhysParams, scheme: Scheme, dt: f64) -> Result<Self> {
        params.validate()?;
        params.potential.validate(grid)?;
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidParams(format!("dt must be positive, got {dt}")));
        }
        let n = grid.len();
        let v = params.potential.sample(grid)?;
        let v_max = v.iter().fold(0.0, |m: f64, x| m.max(x.abs())) / params.hbar;
        let mut base_rate = params.band_edge_rate(grid);
        let engine = match scheme {
            Scheme::Strang => {
                let c = params.hbar * dt / (4.0 * params.mass);
                Engine::Strang {
                    kin_half: grid
                        .k_squared()
                        .iter()
                        .map(|&k2| Complex64::from_polar(1.0, -c * k2))
                        .collect(),
                    pot_half: (!params.potential.is_none()).then(|| {
                        v.iter()
                            .map(|&x| Complex64::from_polar(1.0, -x * dt / (2.0 * params.hbar)))
                            .collect()
                    }),
                    rate: RateKernel::new(grid, params),
                    omega: vec![0.0; n],
                    mid: vec![ZERO; n],
                }
            }
            Scheme::Rk4 => {
                // explicit schemes also resolve the potential phase
                base_rate += v_max;
                Engine::Rk4 {
                    rhs: RhsKernel::new(grid, params)?,
                    stage: vec![ZERO; n],
                    acc: vec![ZERO; n],
                    k: vec![ZERO; n],
                }
            }
            Scheme::Madelung => {
                base_rate += v_max;
                Engine::Madelung {
                    rhs: MadelungKernel::new(grid, params)?,
                    rho: [vec![0.0; n], vec![0.0; n], vec![0.0; n]],
                    phi: [vec![0.0; n], vec![0.0; n], vec![0.0; n]],
                    drho: vec![0.0; n],
                    dphi: vec![0.0; n],
                }
            }
        };
        Ok(Propagator {
            grid: grid.clone(),
            dt,
            base_rate,
            engine,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    fn guard(&self, max_omega: f64) -> Result<()> {
        let rate = self.base_rate + max_omega;
        let product = rate * self.dt;
        if !(product < GUARD_LIMIT) {
            return Err(Error::StabilityGuardTripped {
                rate,
                dt: self.dt,
                product,
            });
        }
        Ok(())
    }

    /// One step in place.
    pub fn step(&mut self, psi: &mut [Complex64]) -> Result<StepInfo> {
        let dt = self.dt;
        let grid = &self.grid;
        let base_rate = self.base_rate;
        let guard = |w: f64| {
            let rate = base_rate + w;
            let product = rate * dt;
            if product < GUARD_LIMIT {
                Ok(())
            } else {
                Err(Error::StabilityGuardTripped { rate, dt, product })
            }
        };
        match &mut self.engine {
            Engine::Strang {
                kin_half,
                pot_half,
                rate,
                omega,
                mid,
            } => {
                let linear_half = |psi: &mut [Complex64], first: bool| {
                    let apply_pot = |psi: &mut [Complex64]| {
                        if let Some(p) = pot_half.as_ref() {
                            psi.iter_mut().zip(p).for_each(|(z, m)| *z *= m);
                        }
                    };
                    if !first {
                        apply_pot(psi);
                    }
                    grid.forward(psi);
                    psi.iter_mut().zip(kin_half.iter()).for_each(|(z, m)| *z *= m);
                    grid.inverse(psi);
                    if first {
                        apply_pot(psi);
                    }
                };
                linear_half(psi, true);
                let mut info = StepInfo::default();
                if rate.is_active() {
                    let w1 = rate.eval(psi, omega);
                    guard(w1)?;
                    for ((m, z), w) in mid.iter_mut().zip(psi.iter()).zip(omega.iter()) {
                        *m = z * Complex64::from_polar(1.0, -0.5 * w * dt);
                    }
                    info.max_omega = rate.eval(mid, omega);
                    let mut change = 0.0f64;
                    for (z, w) in psi.iter_mut().zip(omega.iter()) {
                        let before = z.norm_sqr();
                        *z *= Complex64::from_polar(1.0, -w * dt);
                        change = change.max((z.norm_sqr() - before).abs());
                    }
                    info.modulus_change = change;
                } else {
                    guard(0.0)?;
                }
                linear_half(psi, false);
                Ok(info)
            }
            Engine::Rk4 { rhs, stage, acc, k } => {
                let w = rhs.eval(psi, k);
                guard(w)?;
                let h = Complex64::new(dt, 0.0);
                for ((a, s), (z, kk)) in acc.iter_mut().zip(stage.iter_mut()).zip(psi.iter().zip(k.iter())) {
                    *a = kk * (dt / 6.0);
                    *s = z + kk * (0.5 * h);
                }
                for (c, weight) in [(0.5, 1.0 / 3.0), (1.0, 1.0 / 3.0)] {
                    rhs.eval(stage, k);
                    for ((a, s), (z, kk)) in acc.iter_mut().zip(stage.iter_mut()).zip(psi.iter().zip(k.iter())) {
                        *a += kk * (weight * dt);
                        *s = z + kk * (c * dt);
                    }
                }
                rhs.eval(stage, k);
                for ((z, a), kk) in psi.iter_mut().zip(acc.iter()).zip(k.iter()) {
                    *z += a + kk * (dt / 6.0);
                }
                Ok(StepInfo {
                    max_omega: w,
                    modulus_change: 0.0,
                })
            }
            Engine::Madelung {
                rhs,
                rho,
                phi,
                drho,
                dphi,
            } => {
                // start, stage and accumulator copies of (rho, phi)
                let [r0, r1, r2] = rho;
                let [p0, p1, p2] = phi;
                for (i, z) in psi.iter().enumerate() {
                    r0[i] = z.norm_sqr();
                    p0[i] = z.arg();
                }
                guard(0.0)?;
                let weights = [1.0 / 6.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0];
                let advance = [0.5, 0.5, 1.0];
                r1.copy_from_slice(r0);
                p1.copy_from_slice(p0);
                r2.copy_from_slice(r0);
                p2.copy_from_slice(p0);
                for s in 0..4 {
                    rhs.eval(r1, p1, drho, dphi)?;
                    for i in 0..psi.len() {
                        r2[i] += weights[s] * dt * drho[i];
                        p2[i] += weights[s] * dt * dphi[i];
                        if s < 3 {
                            r1[i] = r0[i] + advance[s] * dt * drho[i];
                            p1[i] = p0[i] + advance[s] * dt * dphi[i];
                        }
                    }
                }
                for (i, z) in psi.iter_mut().enumerate() {
                    *z = Complex64::from_polar(r2[i].max(0.0).sqrt(), p2[i]);
                }
                Ok(StepInfo::default())
            }
        }
    }

    /// Checks the guard for the current state without stepping.
    pub fn check_guard(&self, psi: &[Complex64], params: &PhysParams) -> Result<()> {
        let mut out = vec![0.0; psi.len()];
        let w = RateKernel::new(&self.grid, params).eval(psi, &mut out);
        self.guard(w)
    }
}

/// One strang step.
pub fn step_strang(wf: &WaveField, dt: f64, params: &PhysParams) -> Result<WaveField> {
    single_step(wf, dt, params, Scheme::Strang)
}

/// One classical RK4 step on the full right-hand side (no renormalization).
pub fn step_rk4(wf: &WaveField, dt: f64, params: &PhysParams) -> Result<WaveField> {
    single_step(wf, dt, params, Scheme::Rk4)
}

fn single_step(wf: &WaveField, dt: f64, params: &PhysParams, scheme: Scheme) -> Result<WaveField> {
    let mut prop = Propagator::new(wf.grid(), params, scheme, dt)?;
    let mut out = wf.clone();
    prop.step(out.psi.as_mut_slice())?;
    out.time += dt;
    out.params_id = params.fingerprint();
    Ok(out)
}

/// One recorded state with its diagnostics.
#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub state: WaveField,
    pub obs: Observables,
    pub max_omega: f64,
    pub nonsignaling: f64,
    pub current_linearity: f64,
    /// `N(t)/N(0) − 1`.
    pub norm_drift: f64,
}

impl Snapshot {
    pub fn time(&self) -> f64 {
        self.state.time
    }

    pub(crate) fn record(state: WaveField, params: &PhysParams, norm0: f64) -> Result<Snapshot> {
        let obs = observables(&state, params)?;
        let omega = omega_nl(&state, params);
        let nonsignaling = verify::check_nonsignaling(&state, params).max_residual;
        let current_linearity = verify::check_current_linearity(&state, params)?.max_residual;
        Ok(Snapshot {
            norm_drift: obs.norm / norm0 - 1.0,
            max_omega: omega.max_abs(),
            obs,
            nonsignaling,
            current_linearity,
            state,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub snapshots: Vec<Snapshot>,
    pub params: PhysParams,
    pub stepper: StepperConfig,
    pub grid: Grid,
    pub steps: usize,
    /// Step actually used (`t_final` divided into whole steps).
    pub dt: f64,
    pub max_modulus_change: f64,
    pub max_norm_drift: f64,
}

impl Trajectory {
    pub fn last(&self) -> &Snapshot {
        self.snapshots.last().expect("trajectory holds the initial state")
    }

    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(Snapshot::time).collect()
    }
}

/// Number of whole steps and the step length covering `t_final`.
pub fn step_plan(t_final: f64, dt: f64, max_steps: usize) -> Result<(usize, f64)> {
    if !(t_final > 0.0) || !t_final.is_finite() {
        return Err(Error::InvalidParams(format!("t_final must be positive, got {t_final}")));
    }
    if !(dt > 0.0) {
        return Err(Error::InvalidParams(format!("dt must be positive, got {dt}")));
    }
    let steps = ((t_final / dt) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
    if steps > max_steps {
        return Err(Error::StepLimit {
            needed: steps,
            max: max_steps,
        });
    }
    Ok((steps, t_final / steps as f64))
}

/// Integrates to `t_final`, recording snapshots every `snapshot_every` steps
/// and always at the final time.
pub fn evolve(
    wf0: &WaveField,
    t_final: f64,
    stepper: &StepperConfig,
    params: &PhysParams,
) -> Result<Trajectory> {
    evolve_until(wf0, t_final, stepper, params, |_| false)
}

/// Like [`evolve`], with an early stop tested at every snapshot.
pub fn evolve_until(
    wf0: &WaveField,
    t_final: f64,
    stepper: &StepperConfig,
    params: &PhysParams,
    mut stop: impl FnMut(&Snapshot) -> bool,
) -> Result<Trajectory> {
    if !wf0.psi.is_finite() {
        return Err(Error::NonFinite("initial state"));
    }
    let (steps, dt) = step_plan(t_final, stepper.dt, stepper.max_steps)?;
    let grid = wf0.grid().clone();
    let mut prop = Propagator::new(&grid, params, stepper.scheme, dt)?;
    let id = params.fingerprint();
    let mut state = wf0.clone();
    state.params_id = id;
    let t0 = state.time;
    let norm0 = state.norm();
    if !(norm0 > 0.0) {
        return Err(Error::AllNodes);
    }
    let every = stepper.snapshot_every.max(1);
    let mut traj = Trajectory {
        snapshots: vec![Snapshot::record(state.clone(), params, norm0)?],
        params: params.clone(),
        stepper: stepper.clone(),
        grid,
        steps: 0,
        dt,
        max_modulus_change: 0.0,
        max_norm_drift: 0.0,
    };
    let dv = traj.grid.cell_volume();
    for n in 1..=steps {
        let info = prop.step(state.psi.as_mut_slice())?;
        state.time = t0 + n as f64 * dt;
        traj.steps = n;
        traj.max_modulus_change = traj.max_modulus_change.max(info.modulus_change);
        let norm: f64 = state.psi.as_slice().iter().map(|z| z.norm_sqr()).sum::<f64>() * dv;
        if !norm.is_finite() {
            return Err(Error::NonFinite("time step"));
        }
        let drift = (norm / norm0 - 1.0).abs();
        traj.max_norm_drift = traj.max_norm_drift.max(drift);
        if drift > stepper.norm_drift_abort {
            return Err(Error::NormDriftAbort {
                drift,
                threshold: stepper.norm_drift_abort,
                time: state.time,
            });
        }
        if n % every == 0 || n == steps {
            let snap = Snapshot::record(state.clone(), params, norm0)?;
            let halt = stop(&snap);
            traj.snapshots.push(snap);
            if halt {
                break;
            }
        }
    }
    Ok(traj)
}
