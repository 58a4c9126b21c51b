//! Scenario runners: mass sweep, few-slit interference, double-well pointer
//! and two-detector branch correlation.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{evolve, evolve_until, StepperConfig, Trajectory};
use crate::error::{Error, Result};
use crate::grid::{make_grid, ComplexField, Grid};
use crate::oracle::{self, GaussianMomentState, MomentSolution};
use crate::verify::{self, BranchMasks, BranchSample, CheckReport, ThresholdClass};
use crate::wavefield::{edge_density, gaussian_packet, observables, PhysParams, PotentialSpec, WaveField};

/// Summary checks over every snapshot of a trajectory.
pub fn trajectory_reports(traj: &Trajectory) -> Vec<CheckReport> {
    let max = |f: &dyn Fn(&crate::dynamics::Snapshot) -> f64| traj.snapshots.iter().map(f).fold(0.0, f64::max);
    let ctx = format!("{} snapshots, {} steps of {:e}", traj.snapshots.len(), traj.steps, traj.dt);
    let mut out = vec![
        CheckReport::new(
            "nonsignaling",
            max(&|s| s.nonsignaling),
            verify::MACHINE_THRESHOLD,
            ThresholdClass::MachinePrecision,
            ctx.clone(),
        ),
        CheckReport::new(
            "current_linearity",
            max(&|s| s.current_linearity),
            verify::DISCRETIZATION_THRESHOLD,
            ThresholdClass::Discretization,
            ctx.clone(),
        ),
    ];
    if traj.stepper.scheme == crate::dynamics::Scheme::Strang {
        out.push(CheckReport::new(
            "modulus_preservation",
            traj.max_modulus_change,
            1e-13,
            ThresholdClass::MachinePrecision,
            ctx.clone(),
        ));
    }
    out.push(CheckReport::new(
        "norm_drift",
        traj.max_norm_drift,
        1e-9,
        ThresholdClass::Discretization,
        ctx,
    ));
    out
}

/// An experiment is invalid when any machine-precision check fails.
pub fn bundle_valid(reports: &[CheckReport]) -> bool {
    reports
        .iter()
        .all(|r| r.pass || r.class != ThresholdClass::MachinePrecision)
}

/// Least-squares slope of `y` against `t`.
fn slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let (mt, my) = points.iter().fold((0.0, 0.0), |(a, b), (t, y)| (a + t / n, b + y / n));
    let num: f64 = points.iter().map(|(t, y)| (t - mt) * (y - my)).sum();
    let den: f64 = points.iter().map(|(t, _)| (t - mt).powi(2)).sum();
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

fn sign(v: f64, tol: f64) -> i8 {
    if v > tol {
        1
    } else if v < -tol {
        -1
    } else {
        0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    /// M/μ values; positive, sorted, unique.
    pub ratios: Vec<f64>,
    pub n: usize,
    pub length: f64,
    pub sigma0: f64,
    pub mu: f64,
    pub hbar: f64,
    pub eps_reg: f64,
    /// Band limit of the nonlinear rate, applied to heavy rows (M > μ) only.
    pub heavy_cutoff: Option<f64>,
    pub stepper: StepperConfig,
    /// Upper end of every row's window; rows also stop at the oracle's
    /// halving or doubling time.
    pub t_max: f64,
    /// Time between recorded widths.
    pub sample_interval: f64,
    pub slope_window: (f64, f64),
    /// Slopes with magnitude at or below this count as zero.
    pub zero_tol: f64,
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec {
            ratios: vec![0.25, 0.5, 1.0, 2.0, 4.0],
            n: 256,
            length: 32.0,
            sigma0: 1.0,
            mu: 1.0,
            hbar: 1.0,
            eps_reg: crate::wavefield::DEFAULT_EPS_REG,
            heavy_cutoff: Some(4.5),
            stepper: StepperConfig::new(crate::dynamics::Scheme::Strang, 2.5e-4),
            t_max: 6.0,
            sample_interval: 0.05,
            slope_window: (0.1, 0.5),
            zero_tol: 1e-6,
        }
    }
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.ratios.is_empty() {
            return Err(Error::Validation("sweep needs at least one ratio".into()));
        }
        if self.ratios.iter().any(|r| !(*r > 0.0) || !r.is_finite()) {
            return Err(Error::Validation("sweep ratios must be positive".into()));
        }
        if self.ratios.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Validation("sweep ratios must be sorted and unique".into()));
        }
        if !(self.slope_window.1 > self.slope_window.0) || self.slope_window.0 < 0.0 {
            return Err(Error::Validation("slope window must be an increasing pair".into()));
        }
        if !(self.sample_interval > 0.0) || !(self.t_max > self.slope_window.1) {
            return Err(Error::Validation("t_max must extend past the slope window".into()));
        }
        Ok(())
    }

    pub fn params_for(&self, ratio: f64) -> PhysParams {
        PhysParams {
            mass: ratio * self.mu,
            mu: self.mu,
            hbar: self.hbar,
            potential: PotentialSpec::None,
            eps_reg: self.eps_reg,
            nl_cutoff: if ratio > 1.0 { self.heavy_cutoff } else { None },
        }
    }
}

/// PDE width against the moment oracle at one sample time.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WidthSample {
    pub time: f64,
    pub sigma_pde: f64,
    pub sigma_ode: f64,
}

impl WidthSample {
    pub fn rel_dev(&self) -> f64 {
        (self.sigma_pde - self.sigma_ode).abs() / self.sigma_ode
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub ratio: f64,
    /// Sign of dσ/dt over the slope window from the PDE run.
    pub sign: i8,
    pub oracle_sign: i8,
    pub slope: f64,
    pub oracle_slope: f64,
    /// Oracle time at which σ halves (M > μ) or doubles (M < μ), if reached.
    pub event_time: Option<f64>,
    /// End of the compared window.
    pub window_end: f64,
    pub max_rel_dev: f64,
    pub samples: Vec<WidthSample>,
    pub reports: Vec<CheckReport>,
    pub valid: bool,
    pub error: Option<String>,
}

/// Compares a free Gaussian run with the refined moment oracle.
pub fn compare_with_oracle(
    grid: &Grid,
    sigma0: f64,
    params: &PhysParams,
    stepper: &StepperConfig,
    t_final: f64,
    sample_interval: f64,
) -> Result<(Vec<WidthSample>, Trajectory)> {
    let wf = gaussian_packet(grid, &vec![0.0; grid.ndim()], sigma0, &vec![0.0; grid.ndim()])?;
    let (steps, dt) = crate::dynamics::step_plan(t_final, stepper.dt, stepper.max_steps)?;
    let every = ((sample_interval / dt).round() as usize).clamp(1, steps);
    let traj = evolve(&wf, t_final, &stepper.clone().every(every), params)?;
    let sol = MomentSolution::solve(GaussianMomentState::at_rest(sigma0), t_final, params, 1e-10)?;
    let samples = traj
        .snapshots
        .iter()
        .map(|s| WidthSample {
            time: s.time(),
            sigma_pde: s.obs.width[0],
            sigma_ode: sol.sigma(s.time()),
        })
        .collect();
    Ok((samples, traj))
}

fn sweep_row(spec: &SweepSpec, ratio: f64) -> Result<SweepRow> {
    let params = spec.params_for(ratio);
    let grid = make_grid(&[(spec.n, spec.length)])?;
    let horizon = spec.t_max;
    let sol = MomentSolution::solve(GaussianMomentState::at_rest(spec.sigma0), horizon, &params, 1e-10);
    let sol = match sol {
        Ok(s) => s,
        // the oracle collapses before t_max: keep the part before underflow
        Err(Error::SigmaUnderflow(t)) => {
            MomentSolution::solve(GaussianMomentState::at_rest(spec.sigma0), 0.95 * t, &params, 1e-10)?
        }
        Err(e) => return Err(e),
    };
    let event_time = if ratio > 1.0 {
        sol.crossing(0.5)
    } else if ratio < 1.0 {
        sol.crossing(2.0)
    } else {
        None
    };
    let window_end = event_time.unwrap_or(horizon).min(horizon);
    let (samples, traj) = compare_with_oracle(
        &grid,
        spec.sigma0,
        &params,
        &spec.stepper,
        window_end,
        spec.sample_interval,
    )?;
    let (a, b) = spec.slope_window;
    let pts: Vec<(f64, f64)> = samples
        .iter()
        .filter(|s| s.time >= a - 1e-12 && s.time <= b + 1e-12)
        .map(|s| (s.time, s.sigma_pde))
        .collect();
    let ode_pts: Vec<(f64, f64)> = pts.iter().map(|&(t, _)| (t, sol.sigma(t))).collect();
    let (s_pde, s_ode) = (slope(&pts), slope(&ode_pts));
    let max_rel_dev = samples.iter().map(WidthSample::rel_dev).fold(0.0, f64::max);
    let mut reports = trajectory_reports(&traj);
    reports.push(CheckReport::new(
        "oracle_equivalence",
        max_rel_dev,
        5e-3,
        ThresholdClass::Discretization,
        format!("M/mu = {ratio}, window [0, {window_end}]"),
    ));
    Ok(SweepRow {
        ratio,
        sign: sign(s_pde, spec.zero_tol),
        oracle_sign: sign(s_ode, spec.zero_tol),
        slope: s_pde,
        oracle_slope: s_ode,
        event_time,
        window_end,
        max_rel_dev,
        samples,
        valid: bundle_valid(&reports),
        reports,
        error: None,
    })
}

/// One row per ratio, in the order given. Rows run concurrently; a failing row
/// records its error instead of aborting the sweep.
pub fn run_mass_sweep(spec: &SweepSpec) -> Result<Vec<SweepRow>> {
    spec.validate()?;
    Ok(spec
        .ratios
        .par_iter()
        .map(|&ratio| {
            sweep_row(spec, ratio).unwrap_or_else(|e| SweepRow {
                ratio,
                sign: 0,
                oracle_sign: 0,
                slope: f64::NAN,
                oracle_slope: f64::NAN,
                event_time: None,
                window_end: 0.0,
                max_rel_dev: f64::NAN,
                samples: Vec::new(),
                reports: Vec::new(),
                valid: false,
                error: Some(e.to_string()),
            })
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlitConfig {
    /// 2 to 4 slits.
    pub slits: usize,
    /// Gaussian width σ of the wave leaving each slit.
    pub width: f64,
    /// Centre-to-centre slit distance.
    pub separation: f64,
    pub t_screen: f64,
    pub k0: f64,
    pub n: usize,
    pub length: f64,
    /// Linear mass M; the nonlinear runs use μ = M / (M/μ).
    pub mass: f64,
    pub hbar: f64,
    pub eps_reg: f64,
    pub nl_cutoff: Option<f64>,
    pub stepper: StepperConfig,
}

impl Default for SlitConfig {
    fn default() -> Self {
        SlitConfig {
            slits: 2,
            width: 1.0,
            separation: 6.0,
            t_screen: 1.0,
            k0: 0.0,
            n: 256,
            length: 32.0,
            mass: 1.0,
            hbar: 1.0,
            eps_reg: crate::wavefield::DEFAULT_EPS_REG,
            nl_cutoff: Some(4.5),
            stepper: StepperConfig::new(crate::dynamics::Scheme::Strang, 1e-4),
        }
    }
}

impl SlitConfig {
    pub fn validate(&self) -> Result<Grid> {
        if !(2..=4).contains(&self.slits) {
            return Err(Error::Validation(format!("slit count {} outside 2..=4", self.slits)));
        }
        let grid = make_grid(&[(self.n, self.length)])?;
        if self.width < 4.0 * grid.axis(0).dx() {
            return Err(Error::UnresolvedWidth {
                sigma: self.width,
                min: 4.0 * grid.axis(0).dx(),
            });
        }
        if !(self.separation > 0.0) || !(self.t_screen > 0.0) {
            return Err(Error::Validation("slit separation and screen time must be positive".into()));
        }
        Ok(grid)
    }

    pub fn centres(&self) -> Vec<f64> {
        let mid = (self.slits as f64 - 1.0) / 2.0;
        (0..self.slits).map(|j| (j as f64 - mid) * self.separation).collect()
    }

    /// Params for a given M/μ; zero means the linear control.
    pub fn params_for(&self, ratio: f64) -> PhysParams {
        PhysParams {
            mass: self.mass,
            mu: if ratio == 0.0 { f64::INFINITY } else { self.mass / ratio },
            hbar: self.hbar,
            potential: PotentialSpec::None,
            eps_reg: self.eps_reg,
            nl_cutoff: if ratio == 0.0 { None } else { self.nl_cutoff },
        }
    }

    /// Post-slit state: sum of Gaussians, each cut where it drops below 1e-12
    /// of its peak.
    pub fn initial_state(&self) -> Result<WaveField> {
        let grid = self.validate()?;
        let centres = self.centres();
        let reach = self.width * (4.0 * 12.0 * std::f64::consts::LN_10).sqrt();
        let psi = ComplexField::from_fn(&grid, |x| {
            let amp: f64 = centres
                .iter()
                .filter(|c| (x[0] - *c).abs() <= reach)
                .map(|c| (-(x[0] - c).powi(2) / (4.0 * self.width * self.width)).exp())
                .sum();
            Complex64::from_polar(amp, self.k0 * x[0])
        });
        let tail = edge_density(&psi);
        if tail >= 1e-12 {
            return Err(Error::TailOverflow(tail));
        }
        WaveField::new(psi).normalized()
    }
}

/// `(Imax − Imin)/(Imax + Imin)` over the central half of the box.
pub fn visibility(grid: &Grid, density: &[f64]) -> f64 {
    let quarter = grid.axis(0).length() / 4.0;
    let (lo, hi) = grid
        .axis(0)
        .coords()
        .iter()
        .zip(density)
        .filter(|(x, _)| x.abs() <= quarter)
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), (_, &d)| (lo.min(d), hi.max(d)));
    (hi - lo) / (hi + lo)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FringeRecord {
    /// M/μ (zero for the linear control).
    pub ratio: f64,
    pub visibility: f64,
    pub envelope_width: f64,
    pub x: Vec<f64>,
    pub density: Vec<f64>,
    pub reports: Vec<CheckReport>,
    pub valid: bool,
}

/// Evolves the slit state to the screen time and measures the fringes.
pub fn run_interference(cfg: &SlitConfig, ratio: f64) -> Result<FringeRecord> {
    let wf = cfg.initial_state()?;
    let params = cfg.params_for(ratio);
    let quiet = StepperConfig {
        snapshot_every: usize::MAX,
        ..cfg.stepper.clone()
    };
    let traj = evolve(&wf, cfg.t_screen, &quiet, &params)?;
    let last = &traj.last().state;
    let tail = edge_density(&last.psi);
    if tail >= 1e-10 {
        return Err(Error::TailOverflow(tail));
    }
    let density: Vec<f64> = last.psi.as_slice().iter().map(|z| z.norm_sqr()).collect();
    let reports = trajectory_reports(&traj);
    Ok(FringeRecord {
        ratio,
        visibility: visibility(wf.grid(), &density),
        envelope_width: traj.last().obs.width[0],
        x: wf.grid().axis(0).coords().to_vec(),
        density,
        valid: bundle_valid(&reports),
        reports,
    })
}

/// Closed-form linear fringe pattern: superposed free Gaussians.
pub fn analytic_linear_fringes(cfg: &SlitConfig) -> Result<FringeRecord> {
    let grid = cfg.validate()?;
    let mut sum = vec![Complex64::new(0.0, 0.0); grid.len()];
    for c in cfg.centres() {
        let one = oracle::linear_free_gaussian(&grid, cfg.t_screen, &[c], cfg.width, &[cfg.k0], cfg.mass, cfg.hbar)?;
        sum.iter_mut().zip(one.psi.as_slice()).for_each(|(s, z)| *s += z);
    }
    let wf = WaveField::new(ComplexField::new(grid.clone(), sum)?).normalized()?;
    let density: Vec<f64> = wf.psi.as_slice().iter().map(|z| z.norm_sqr()).collect();
    Ok(FringeRecord {
        ratio: 0.0,
        visibility: visibility(&grid, &density),
        envelope_width: observables(&wf, &cfg.params_for(0.0))?.width[0],
        x: grid.axis(0).coords().to_vec(),
        density,
        reports: Vec::new(),
        valid: true,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointerConfig {
    pub n: usize,
    pub length: f64,
    /// `V = a·x⁴ − b·x²`
    pub a: f64,
    pub b: f64,
    pub sigma0: f64,
    /// Initial packet centre; zero gives the parity-symmetric state.
    pub x0: f64,
    /// M/μ with μ = 1.
    pub ratio: f64,
    pub eps_reg: f64,
    pub nl_cutoff: Option<f64>,
    pub t_final: f64,
    pub stepper: StepperConfig,
}

impl Default for PointerConfig {
    fn default() -> Self {
        PointerConfig {
            n: 256,
            length: 16.0,
            a: 0.01,
            b: 0.16,
            sigma0: 1.0,
            x0: 0.0,
            ratio: 2.0,
            eps_reg: crate::wavefield::DEFAULT_EPS_REG,
            nl_cutoff: Some(4.5),
            t_final: 3.0,
            stepper: StepperConfig::new(crate::dynamics::Scheme::Strang, 1e-4).every(500),
        }
    }
}

impl PointerConfig {
    pub fn params(&self) -> PhysParams {
        let base = if self.ratio == 0.0 {
            PhysParams::linear(1.0)
        } else {
            PhysParams::with_ratio(self.ratio)
        };
        PhysParams {
            potential: PotentialSpec::DoubleWell { a: self.a, b: self.b },
            eps_reg: self.eps_reg,
            nl_cutoff: if self.ratio == 0.0 { None } else { self.nl_cutoff },
            ..base
        }
    }

    /// Packet centred at `x0`. A centred packet is placed on the grid's
    /// mirror point so that the discrete state is exactly parity symmetric.
    pub fn initial_state(&self) -> Result<WaveField> {
        let grid = make_grid(&[(self.n, self.length)])?;
        gaussian_packet(&grid, &[self.x0], self.sigma0, &[0.0])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WellSample {
    pub time: f64,
    pub left: f64,
    pub right: f64,
    pub norm: f64,
}

/// Mass left and right of the barrier at x = 0; cells on the mirror axis
/// (x = 0 and the wrap point) count half to each side.
pub fn well_masses(wf: &WaveField) -> (f64, f64) {
    let grid = wf.grid();
    let n = grid.axis(0).n();
    let dv = grid.cell_volume();
    let d = wf.psi.as_slice();
    let (mut left, mut right) = (0.0, 0.0);
    for (i, z) in d.iter().enumerate() {
        let w = z.norm_sqr();
        if i == 0 || i == n / 2 {
            left += 0.5 * w;
            right += 0.5 * w;
        } else if i < n / 2 {
            left += w;
        } else {
            right += w;
        }
    }
    (left * dv, right * dv)
}

#[derive(Clone, Debug, PartialEq)]
pub struct PointerRecord {
    pub trajectory: Trajectory,
    pub wells: Vec<WellSample>,
    pub reports: Vec<CheckReport>,
    pub valid: bool,
}

pub fn run_pointer_collapse(cfg: &PointerConfig) -> Result<PointerRecord> {
    let wf = cfg.initial_state()?;
    let traj = evolve(&wf, cfg.t_final, &cfg.stepper, &cfg.params())?;
    let wells: Vec<WellSample> = traj
        .snapshots
        .iter()
        .map(|s| {
            let (left, right) = well_masses(&s.state);
            WellSample {
                time: s.time(),
                left,
                right,
                norm: s.obs.norm,
            }
        })
        .collect();
    let mut reports = trajectory_reports(&traj);
    if cfg.x0 == 0.0 {
        let split = wells.iter().map(|w| (w.left - w.right).abs() / 2.0).fold(0.0, f64::max);
        reports.push(CheckReport::new(
            "parity_split",
            split,
            1e-8,
            ThresholdClass::Discretization,
            "max |left − right|/2 over snapshots".into(),
        ));
    }
    Ok(PointerRecord {
        valid: bundle_valid(&reports),
        trajectory: traj,
        wells,
        reports,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BranchConfig {
    pub n: usize,
    pub length: f64,
    /// Branch centres sit at (−c, −c) and (+c, +c).
    pub offset: f64,
    pub sigma0: f64,
    /// Width of the second branch; equal to `sigma0` for symmetric branches.
    pub sigma1: f64,
    pub delta: f64,
    /// M/μ with μ = 1.
    pub ratio: f64,
    pub eps_reg: f64,
    pub nl_cutoff: Option<f64>,
    pub t_final: f64,
    pub stepper: StepperConfig,
}

impl Default for BranchConfig {
    fn default() -> Self {
        BranchConfig {
            n: 128,
            length: 32.0,
            offset: 7.0,
            sigma0: 1.0,
            sigma1: 1.0,
            delta: std::f64::consts::FRAC_PI_2,
            ratio: 2.0,
            eps_reg: crate::wavefield::DEFAULT_EPS_REG,
            nl_cutoff: Some(3.0),
            t_final: 3.0,
            stepper: StepperConfig::new(crate::dynamics::Scheme::Strang, 1e-3).every(100),
        }
    }
}

impl BranchConfig {
    pub fn params(&self) -> PhysParams {
        let base = if self.ratio == 0.0 {
            PhysParams::linear(1.0)
        } else {
            PhysParams::with_ratio(self.ratio)
        };
        PhysParams {
            eps_reg: self.eps_reg,
            nl_cutoff: if self.ratio == 0.0 { None } else { self.nl_cutoff },
            ..base
        }
    }

    fn grid(&self) -> Result<Grid> {
        make_grid(&[(self.n, self.length), (self.n, self.length)])
    }

    /// The branch at `(s·c, s·c)` with sign `s`, unnormalized, times `phase`.
    fn branch(&self, grid: &Grid, first: bool, phase: f64) -> Result<ComplexField> {
        let (c, sigma) = if first {
            (-self.offset, self.sigma0)
        } else {
            (self.offset, self.sigma1)
        };
        let u = gaussian_packet(grid, &[c, c], sigma, &[0.0, 0.0])?;
        let rot = Complex64::from_polar(std::f64::consts::FRAC_1_SQRT_2, phase);
        let data = u.psi.as_slice().iter().map(|z| z * rot).collect();
        ComplexField::new(grid.clone(), data)
    }

    /// `(u₁ₐ⊗u₁ᵦ + e^{iδ}·u₂ₐ⊗u₂ᵦ)/√2`
    pub fn initial_state(&self) -> Result<WaveField> {
        let grid = self.grid()?;
        let a = self.branch(&grid, true, 0.0)?;
        let b = self.branch(&grid, false, self.delta)?;
        let data = a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| x + y).collect();
        Ok(WaveField::new(ComplexField::new(grid, data)?))
    }

    /// Cells nearer the first branch centre go to the first mask.
    pub fn masks(&self) -> Result<BranchMasks> {
        Ok(BranchMasks::from_fn(&self.grid()?, |x| Some(if x[0] + x[1] < 0.0 { 0 } else { 1 })))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BranchRecord {
    pub trajectory: Trajectory,
    pub series: Vec<BranchSample>,
    pub reports: Vec<CheckReport>,
    pub valid: bool,
}

impl BranchRecord {
    pub fn max_phase_error(&self, delta: f64) -> f64 {
        self.series
            .iter()
            .map(|s| {
                let d = s.delta_phi - delta;
                (d - std::f64::consts::TAU * (d / std::f64::consts::TAU).round()).abs()
            })
            .fold(0.0, f64::max)
    }
}

/// Second moment of |Ψ|² about its centroid within a mask, averaged over axes.
fn masked_width(wf: &WaveField, mask: &[bool]) -> f64 {
    let grid = wf.grid();
    let mut m = [0.0f64; 3];
    let mut mom = vec![[0.0f64; 2]; grid.ndim()];
    for (idx, z) in wf.psi.as_slice().iter().enumerate() {
        if !mask[idx] {
            continue;
        }
        let w = z.norm_sqr();
        m[0] += w;
        for (d, x) in grid.point(idx).iter().enumerate() {
            mom[d][0] += w * x;
            mom[d][1] += w * x * x;
        }
    }
    let var: f64 = mom
        .iter()
        .map(|[s1, s2]| s2 / m[0] - (s1 / m[0]).powi(2))
        .sum::<f64>()
        / grid.ndim() as f64;
    var.max(0.0).sqrt()
}

/// Evolves the two-branch state together with each branch alone; the sum of
/// the single-branch runs is the phase reference. The run stops early once a
/// branch width halves.
pub fn run_branch_correlation(cfg: &BranchConfig) -> Result<BranchRecord> {
    let params = cfg.params();
    let wf = cfg.initial_state()?;
    let masks = cfg.masks()?;
    let grid = wf.grid().clone();
    let w0 = masked_width(&wf, &masks.first).min(masked_width(&wf, &masks.second));
    let traj = evolve_until(&wf, cfg.t_final, &cfg.stepper, &params, |s| {
        masked_width(&s.state, &masks.first).min(masked_width(&s.state, &masks.second)) <= 0.5 * w0
    })?;
    let t_end = traj.last().time();
    let alone = |first: bool| -> Result<Trajectory> {
        let b = WaveField::new(cfg.branch(&grid, first, 0.0)?);
        evolve(&b, t_end, &cfg.stepper, &params)
    };
    let (ra, rb) = rayon::join(|| alone(true), || alone(false));
    let (ra, rb) = (ra?, rb?);
    if ra.snapshots.len() != traj.snapshots.len() {
        return Err(Error::ShapeMismatch("single-branch runs recorded a different cadence".into()));
    }
    let mut reference = ra.clone();
    for (r, b) in reference.snapshots.iter_mut().zip(&rb.snapshots) {
        r.state
            .psi
            .as_mut_slice()
            .iter_mut()
            .zip(b.state.psi.as_slice())
            .for_each(|(x, y)| *x += y);
    }
    let series = verify::branch_series(&traj, Some(&reference), &masks)?;
    let mut reports = trajectory_reports(&traj);
    let mut drift = verify::branch_phase_drift(&traj, Some(&reference), &masks, None)?;
    drift.context = format!("single-branch composition reference; {}", drift.context);
    reports.push(drift);
    let (m1, m2) = (series[0].mass_first, series[0].mass_second);
    let mass_dev = series
        .iter()
        .map(|s| (s.mass_first - m1).abs().max((s.mass_second - m2).abs()))
        .fold(0.0, f64::max);
    reports.push(CheckReport::new(
        "branch_mass",
        mass_dev,
        1e-9,
        ThresholdClass::Discretization,
        format!("t in [0, {t_end}]"),
    ));
    Ok(BranchRecord {
        valid: bundle_valid(&reports),
        trajectory: traj,
        series,
        reports,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::Scheme;

    #[test]
    fn sweep_spec_validation() {
        let mut spec = SweepSpec::default();
        assert!(spec.validate().is_ok());
        spec.ratios = vec![2.0, 1.0];
        assert!(spec.validate().is_err());
        spec.ratios = vec![1.0, 1.0];
        assert!(spec.validate().is_err());
        spec.ratios = vec![-1.0];
        assert!(spec.validate().is_err());
    }

    #[test]
    fn sweep_rows_keep_given_order_and_record_errors() {
        let spec = SweepSpec {
            ratios: vec![0.5, 1.0, 2.0],
            n: 128,
            length: 24.0,
            t_max: 0.6,
            heavy_cutoff: Some(4.5),
            stepper: StepperConfig::new(Scheme::Strang, 5e-4),
            ..Default::default()
        };
        let rows = run_mass_sweep(&spec).unwrap();
        assert_eq!(rows.iter().map(|r| r.ratio).collect::<Vec<_>>(), vec![0.5, 1.0, 2.0]);
        assert_eq!(rows.iter().map(|r| r.sign).collect::<Vec<_>>(), vec![1, 0, -1]);
        assert!(rows.iter().all(|r| r.sign == r.oracle_sign));

        let bad = SweepSpec {
            ratios: vec![0.5],
            stepper: StepperConfig::new(Scheme::Strang, 0.05),
            ..spec
        };
        let rows = run_mass_sweep(&bad).unwrap();
        assert!(rows[0].error.as_deref().unwrap().contains("stability guard"));
    }

    #[test]
    fn slit_geometry() {
        let cfg = SlitConfig {
            slits: 3,
            separation: 4.0,
            ..Default::default()
        };
        assert_eq!(cfg.centres(), vec![-4.0, 0.0, 4.0]);
        assert!(SlitConfig { slits: 5, ..Default::default() }.validate().is_err());
        assert!(SlitConfig { width: 0.2, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn visibility_of_flat_and_full_contrast() {
        let g = make_grid(&[(64, 16.0)]).unwrap();
        assert_eq!(visibility(&g, &vec![1.0; 64]), 0.0);
        let d: Vec<f64> = g.axis(0).coords().iter().map(|x| x.cos().powi(2)).collect();
        assert!((visibility(&g, &d) - 1.0).abs() < 1e-2);
    }

    #[test]
    fn well_masses_split_symmetric_state_evenly() {
        let cfg = PointerConfig::default();
        let wf = cfg.initial_state().unwrap();
        let (l, r) = well_masses(&wf);
        assert!((l - r).abs() < 1e-15);
        assert!((l + r - 1.0).abs() < 1e-12);
    }

    #[test]
    fn branch_state_is_normalized_and_masked() {
        let cfg = BranchConfig::default();
        let wf = cfg.initial_state().unwrap();
        assert!((wf.norm() - 1.0).abs() < 1e-12);
        let s = verify::branch_sample(&wf, &wf, &cfg.masks().unwrap()).unwrap();
        assert!((s.mass_first - 0.5).abs() < 1e-12);
        assert!((s.mass_second - 0.5).abs() < 1e-12);
    }
}
