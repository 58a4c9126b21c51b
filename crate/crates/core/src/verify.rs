//! Structural checks that turn the model's identities into pass/fail reports.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dynamics::{self, evolve, omega_nl, StepperConfig, Trajectory};
use crate::error::{Error, Result};
use crate::grid::{self, make_grid, ComplexField, Grid, RealField};
use crate::wavefield::{current, PhysParams, WaveField};

pub const MACHINE_THRESHOLD: f64 = 1e-12;
pub const DISCRETIZATION_THRESHOLD: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdClass {
    /// Exact identities, limited only by rounding.
    MachinePrecision,
    /// Limited by time stepping or spatial resolution.
    Discretization,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub name: String,
    pub max_residual: f64,
    pub threshold: f64,
    pub class: ThresholdClass,
    pub pass: bool,
    pub context: String,
}

impl CheckReport {
    pub fn new(name: &str, max_residual: f64, threshold: f64, class: ThresholdClass, context: String) -> Self {
        CheckReport {
            name: name.to_string(),
            max_residual,
            threshold,
            class,
            pass: max_residual <= threshold,
            context,
        }
    }
}

fn describe(grid: &Grid, params: &PhysParams) -> String {
    format!(
        "grid {:?}, M = {}, mu = {}, hbar = {}, eps_reg = {:e}, nl_cutoff = {:?}",
        grid.dims(),
        params.mass,
        params.mu,
        params.hbar,
        params.eps_reg,
        params.nl_cutoff
    )
}

/// `max|2·Re(Ψ*·(−i·ω·Ψ))| / (max|Ψ|²·max|ω|)` for an arbitrary (possibly
/// complex) rate field.
pub fn nonsignaling_residual(psi: &[Complex64], rate: &[Complex64]) -> f64 {
    let mut num = 0.0f64;
    let mut peak = 0.0f64;
    let mut wmax = 0.0f64;
    for (z, w) in psi.iter().zip(rate) {
        let flow = Complex64::new(0.0, -1.0) * w * z;
        num = num.max((2.0 * (z.conj() * flow).re).abs());
        peak = peak.max(z.norm_sqr());
        wmax = wmax.max(w.norm());
    }
    let den = peak * wmax;
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

/// The nonlinear flow leaves `|Ψ|²` untouched pointwise.
pub fn check_nonsignaling(wf: &WaveField, params: &PhysParams) -> CheckReport {
    let omega = omega_nl(wf, params);
    let rate: Vec<Complex64> = omega.as_slice().iter().map(|&w| Complex64::new(w, 0.0)).collect();
    check_nonsignaling_rate(wf, &rate, &describe(wf.grid(), params))
}

/// Same check with a caller-supplied rate; a complex rate must fail.
pub fn check_nonsignaling_rate(wf: &WaveField, rate: &[Complex64], context: &str) -> CheckReport {
    CheckReport::new(
        "nonsignaling",
        nonsignaling_residual(wf.psi.as_slice(), rate),
        MACHINE_THRESHOLD,
        ThresholdClass::MachinePrecision,
        context.to_string(),
    )
}

/// Splits a 2D state into normalized 1D factors, refusing entangled input.
pub fn factorize_product(wf: &WaveField) -> Result<(WaveField, WaveField)> {
    let g = wf.grid();
    if g.ndim() != 2 {
        return Err(Error::UnsupportedDimension(g.ndim()));
    }
    let (n0, n1) = (g.axis(0).n(), g.axis(1).n());
    let psi = wf.psi.as_slice();
    let pivot = (0..psi.len())
        .max_by(|&a, &b| psi[a].norm_sqr().total_cmp(&psi[b].norm_sqr()))
        .ok_or(Error::AllNodes)?;
    let (pi, pj) = (pivot / n1, pivot % n1);
    let p = psi[pivot];
    if p.norm_sqr() == 0.0 {
        return Err(Error::AllNodes);
    }
    let a: Vec<Complex64> = (0..n0).map(|i| psi[i * n1 + pj]).collect();
    let b: Vec<Complex64> = (0..n1).map(|j| psi[pi * n1 + j] / p).collect();
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..n0 {
        for j in 0..n1 {
            let z = psi[i * n1 + j];
            num += (z - a[i] * b[j]).norm_sqr();
            den += z.norm_sqr();
        }
    }
    let residual = (num / den).sqrt();
    if residual > 1e-10 {
        return Err(Error::NotProductState(residual));
    }
    let ga = make_grid(&[(n0, g.axis(0).length())])?;
    let gb = make_grid(&[(n1, g.axis(1).length())])?;
    let fa = WaveField::new(ComplexField::new(ga, a)?).normalized()?;
    let fb = WaveField::new(ComplexField::new(gb, b)?).normalized()?;
    Ok((fa, fb))
}

/// Tensor product of two 1D states on the product grid.
pub fn tensor_product(a: &WaveField, b: &WaveField) -> Result<WaveField> {
    let (ga, gb) = (a.grid(), b.grid());
    if ga.ndim() != 1 || gb.ndim() != 1 {
        return Err(Error::ShapeMismatch("tensor product needs two 1D states".into()));
    }
    let g = make_grid(&[
        (ga.axis(0).n(), ga.axis(0).length()),
        (gb.axis(0).n(), gb.axis(0).length()),
    ])?;
    let (sa, sb) = (a.psi.as_slice(), b.psi.as_slice());
    let data = sa.iter().flat_map(|x| sb.iter().map(move |y| x * y)).collect();
    let mut wf = WaveField::new(ComplexField::new(g, data)?);
    wf.time = a.time;
    Ok(wf)
}

/// Evolves `ψa⊗ψb` in 2D and each factor in 1D, then compares
/// `‖Ψ(t) − ψa(t)⊗ψb(t)‖₂`.
pub fn check_separability(
    psi_a: &WaveField,
    psi_b: &WaveField,
    params: &PhysParams,
    t_final: f64,
    stepper: &StepperConfig,
) -> Result<CheckReport> {
    let joint = tensor_product(psi_a, psi_b)?;
    let quiet = StepperConfig {
        snapshot_every: usize::MAX,
        ..stepper.clone()
    };
    let two_d = evolve(&joint, t_final, &quiet, params)?;
    let ta = evolve(psi_a, t_final, &quiet, params)?;
    let tb = evolve(psi_b, t_final, &quiet, params)?;
    let composed = tensor_product(&ta.last().state, &tb.last().state)?;
    let residual = two_d.last().state.psi.l2_distance(&composed.psi);
    Ok(CheckReport::new(
        "separability",
        residual,
        DISCRETIZATION_THRESHOLD,
        ThresholdClass::Discretization,
        format!("t = {t_final}, {}, {}", quiet.scheme, describe(joint.grid(), params)),
    ))
}

/// [`check_separability`] starting from a 2D state that must factorize.
pub fn check_separability_of(
    wf: &WaveField,
    params: &PhysParams,
    t_final: f64,
    stepper: &StepperConfig,
) -> Result<CheckReport> {
    let (a, b) = factorize_product(wf)?;
    check_separability(&a, &b, params, t_final, stepper)
}

/// Two disjoint spatial regions, one per branch.
#[derive(Clone, Debug, PartialEq)]
pub struct BranchMasks {
    pub first: Vec<bool>,
    pub second: Vec<bool>,
}

impl BranchMasks {
    pub fn from_fn(grid: &Grid, mut f: impl FnMut(&[f64]) -> Option<usize>) -> Self {
        let mut first = vec![false; grid.len()];
        let mut second = vec![false; grid.len()];
        for idx in 0..grid.len() {
            match f(&grid.point(idx)) {
                Some(0) => first[idx] = true,
                Some(_) => second[idx] = true,
                None => {}
            }
        }
        BranchMasks { first, second }
    }

    fn validate(&self, len: usize) -> Result<()> {
        if self.first.len() != len || self.second.len() != len {
            return Err(Error::ShapeMismatch("branch masks do not match the grid".into()));
        }
        if self.first.iter().zip(&self.second).any(|(a, b)| *a && *b) {
            return Err(Error::BranchOverlap("masks intersect".into()));
        }
        Ok(())
    }
}

/// Branch bookkeeping at one snapshot.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BranchSample {
    pub time: f64,
    pub mass_first: f64,
    pub mass_second: f64,
    /// Phase of the second branch minus the first, relative to the reference.
    pub delta_phi: f64,
}

fn wrap(a: f64) -> f64 {
    let t = std::f64::consts::TAU;
    a - t * ((a + std::f64::consts::PI) / t).floor()
}

/// Mass per branch and the branch phase difference. Each branch phase is the
/// argument of `Σ_mask Ψ·conj(Ψ_ref)`, the density-weighted circular mean of
/// `φ − φ_ref`.
pub fn branch_sample(wf: &WaveField, reference: &WaveField, masks: &BranchMasks) -> Result<BranchSample> {
    let psi = wf.psi.as_slice();
    let r = reference.psi.as_slice();
    if r.len() != psi.len() {
        return Err(Error::ShapeMismatch("reference state on a different grid".into()));
    }
    masks.validate(psi.len())?;
    let dv = wf.grid().cell_volume();
    let (mut ma, mut mb, mut total) = (0.0, 0.0, 0.0);
    let (mut oa, mut ob) = (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0));
    for i in 0..psi.len() {
        let w = psi[i].norm_sqr();
        total += w;
        if masks.first[i] {
            ma += w;
            oa += psi[i] * r[i].conj();
        } else if masks.second[i] {
            mb += w;
            ob += psi[i] * r[i].conj();
        }
    }
    let outside = 1.0 - (ma + mb) / total;
    if outside > 1e-3 {
        return Err(Error::BranchOverlap(format!(
            "{:.3e} of the mass lies outside both masks at t = {}",
            outside, wf.time
        )));
    }
    Ok(BranchSample {
        time: wf.time,
        mass_first: ma * dv,
        mass_second: mb * dv,
        delta_phi: wrap(ob.arg() - oa.arg()),
    })
}

/// Branch samples for every snapshot. `reference` supplies the per-snapshot
/// reference state (for example the sum of independently evolved single-branch
/// runs); without it the trajectory's initial state is used.
pub fn branch_series(
    traj: &Trajectory,
    reference: Option<&Trajectory>,
    masks: &BranchMasks,
) -> Result<Vec<BranchSample>> {
    if let Some(r) = reference {
        if r.snapshots.len() != traj.snapshots.len() {
            return Err(Error::ShapeMismatch("reference trajectory has a different snapshot count".into()));
        }
    }
    traj.snapshots
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let r = reference.map_or(&traj.snapshots[0].state, |t| &t.snapshots[i].state);
            branch_sample(&s.state, r, masks)
        })
        .collect()
}

/// `max_t |Δφ(t) − Δφ(0)|`, optionally minus the same quantity for a μ → ∞
/// control run so that only the nonlinear contribution is counted.
pub fn branch_phase_drift(
    traj: &Trajectory,
    reference: Option<&Trajectory>,
    masks: &BranchMasks,
    control: Option<(&Trajectory, Option<&Trajectory>)>,
) -> Result<CheckReport> {
    let series = branch_series(traj, reference, masks)?;
    let shift = |s: &[BranchSample]| -> Vec<f64> { s.iter().map(|x| wrap(x.delta_phi - s[0].delta_phi)).collect() };
    let mut drift = shift(&series);
    if let Some((ctrl, ctrl_ref)) = control {
        let c = shift(&branch_series(ctrl, ctrl_ref, masks)?);
        if c.len() != drift.len() {
            return Err(Error::ShapeMismatch("control trajectory has a different snapshot count".into()));
        }
        drift.iter_mut().zip(&c).for_each(|(d, c)| *d = wrap(*d - c));
    }
    let residual = drift.iter().fold(0.0f64, |m, d| m.max(d.abs()));
    Ok(CheckReport::new(
        "branch_phase_drift",
        residual,
        1e-3,
        ThresholdClass::Discretization,
        format!(
            "{} snapshots up to t = {}, {}",
            series.len(),
            traj.last().time(),
            describe(&traj.grid, &traj.params)
        ),
    ))
}

/// `∂t|Ψ|² = 2·Re(Ψ*·Ψ̇)` with Ψ̇ from the full right-hand side.
pub fn density_rate(wf: &WaveField, params: &PhysParams) -> Result<RealField> {
    let rhs = dynamics::rhs_full(wf, params)?;
    let data = wf
        .psi
        .as_slice()
        .iter()
        .zip(rhs.as_slice())
        .map(|(z, r)| 2.0 * (z.conj() * r).re)
        .collect();
    RealField::new(wf.grid().clone(), data)
}

/// Spectral `∇·j` sampled at the grid points. The current is formed on a 2×
/// refined grid, where the product `Ψ*·∇Ψ` of band-limited factors is
/// represented without aliasing.
pub fn current_divergence(wf: &WaveField, params: &PhysParams) -> RealField {
    let grid = wf.grid();
    let (fine, psi) = grid::refine_2x(grid, wf.psi.as_slice()).expect("refined grid is valid");
    let fine_wf = WaveField::new(ComplexField::new(fine.clone(), psi).expect("same grid"));
    let mut div = vec![0.0; fine.len()];
    let mut buf = vec![Complex64::new(0.0, 0.0); fine.len()];
    for (d, j) in current(&fine_wf, params).iter().enumerate() {
        let jc = j.to_complex();
        grid::derivative_into(&fine, d, jc.as_slice(), &mut buf);
        div.iter_mut().zip(&buf).for_each(|(o, v)| *o += v.re);
    }
    let fine_cols = fine.shape().last().copied().unwrap_or(1);
    let out = (0..grid.len())
        .map(|idx| {
            let m = grid.unravel(idx);
            match m.len() {
                1 => div[2 * m[0]],
                _ => div[2 * m[0] * fine_cols + 2 * m[1]],
            }
        })
        .collect();
    RealField::new(grid.clone(), out).expect("same grid")
}

/// `∇·j` from central differences of Ψ and of j.
pub fn current_divergence_fd2(wf: &WaveField, params: &PhysParams) -> RealField {
    let grid = wf.grid();
    let psi = wf.psi.as_slice();
    let shape = grid.shape();
    let strides: Vec<usize> = match shape.len() {
        1 => vec![1],
        _ => vec![shape[1], 1],
    };
    let neighbour = |idx: usize, d: usize, step: isize| -> usize {
        let multi = grid.unravel(idx);
        let n = shape[d] as isize;
        let moved = ((multi[d] as isize + step).rem_euclid(n)) as usize;
        idx - multi[d] * strides[d] + moved * strides[d]
    };
    let mut out = vec![0.0; grid.len()];
    for d in 0..shape.len() {
        let h = grid.axis(d).dx();
        let j: Vec<f64> = (0..psi.len())
            .map(|i| {
                let g = (psi[neighbour(i, d, 1)] - psi[neighbour(i, d, -1)]) / (2.0 * h);
                params.hbar / params.mass * (psi[i].conj() * g).im
            })
            .collect();
        for (i, o) in out.iter_mut().enumerate() {
            *o += (j[neighbour(i, d, 1)] - j[neighbour(i, d, -1)]) / (2.0 * h);
        }
    }
    RealField::new(grid.clone(), out).expect("same grid")
}

/// The density rate carries no nonlinear contribution: `∂t|Ψ|² = −∇·j`
/// with the linear current. Residual normalized by the kinetic flux scale
/// `(ħ/M)·max|Ψ|·max|ΔΨ|`.
pub fn check_current_linearity(wf: &WaveField, params: &PhysParams) -> Result<CheckReport> {
    let rate = density_rate(wf, params)?;
    let div = current_divergence(wf, params);
    let lap = grid::laplacian_spectral(&wf.psi);
    let max_psi = wf.psi.as_slice().iter().fold(0.0f64, |m, z| m.max(z.norm()));
    let max_lap = lap.as_slice().iter().fold(0.0f64, |m, z| m.max(z.norm()));
    let scale = params.hbar / params.mass * max_psi * max_lap;
    let diff = rate
        .as_slice()
        .iter()
        .zip(div.as_slice())
        .fold(0.0f64, |m, (a, b)| m.max((a + b).abs()));
    let residual = if scale > 0.0 { diff / scale } else { 0.0 };
    Ok(CheckReport::new(
        "current_linearity",
        residual,
        DISCRETIZATION_THRESHOLD,
        ThresholdClass::Discretization,
        describe(wf.grid(), params),
    ))
}

/// Evolves the same state for each floor value and reports the largest L²
/// distance from the first run. States with points below
/// `100·max(eps)²·max|Ψ|²` are outside the guarantee; the context says so.
pub fn eps_insensitivity(
    wf: &WaveField,
    params: &PhysParams,
    eps_list: &[f64],
    t_final: f64,
    stepper: &StepperConfig,
) -> Result<CheckReport> {
    if eps_list.is_empty() {
        return Err(Error::InvalidParams("empty eps list".into()));
    }
    let quiet = StepperConfig {
        snapshot_every: usize::MAX,
        ..stepper.clone()
    };
    let finals = eps_list
        .iter()
        .map(|&eps| {
            let p = PhysParams {
                eps_reg: eps,
                ..params.clone()
            };
            evolve(wf, t_final, &quiet, &p).map(|t| t.last().state.psi.clone())
        })
        .collect::<Result<Vec<_>>>()?;
    let residual = finals[1..]
        .iter()
        .map(|f| f.l2_distance(&finals[0]))
        .fold(0.0, f64::max);
    let peak = wf.max_density();
    let min = wf.psi.as_slice().iter().fold(f64::INFINITY, |m, z| m.min(z.norm_sqr()));
    let eps_max = eps_list.iter().fold(0.0f64, |m, &e| m.max(e));
    let node_free = min > 100.0 * eps_max * eps_max * peak;
    Ok(CheckReport::new(
        "eps_insensitivity",
        residual,
        1e-9,
        ThresholdClass::Discretization,
        format!(
            "eps {:?}, t = {t_final}, {}{}",
            eps_list,
            describe(wf.grid(), params),
            if node_free { "" } else { ", state not node-free (outside guarantee)" }
        ),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::Scheme;
    use crate::wavefield::gaussian_packet;
    use std::f64::consts::PI;

    fn pedestal(grid: &Grid) -> WaveField {
        let l = grid.axis(0).length();
        WaveField::new(ComplexField::from_fn(grid, |x| {
            Complex64::from_polar(1.0 + 0.5 * (-x[0] * x[0] / 2.0).exp(), 0.3 * (2.0 * PI * x[0] / l).sin())
        }))
        .normalized()
        .unwrap()
    }

    #[test]
    fn report_pass_tracks_threshold() {
        let r = CheckReport::new("x", 1e-9, 1e-8, ThresholdClass::Discretization, String::new());
        assert!(r.pass);
        let r = CheckReport::new("x", 2e-8, 1e-8, ThresholdClass::Discretization, String::new());
        assert!(!r.pass);
    }

    #[test]
    fn nonsignaling_passes_for_nodal_state_and_fails_for_complex_rate() {
        let g = make_grid(&[(256, 32.0)]).unwrap();
        let wf = WaveField::new(ComplexField::from_fn(&g, |x| {
            Complex64::new(x[0] * (-x[0] * x[0] / 4.0).exp(), 0.0)
        }))
        .normalized()
        .unwrap();
        let params = PhysParams::with_ratio(2.0);
        let report = check_nonsignaling(&wf, &params);
        assert!(report.pass && report.max_residual <= 1e-13, "{report:?}");

        let omega = omega_nl(&wf, &params);
        let bad: Vec<Complex64> = omega.as_slice().iter().map(|&w| Complex64::new(w, 0.1 * w.abs())).collect();
        assert!(!check_nonsignaling_rate(&wf, &bad, "complexified").pass);
    }

    #[test]
    fn stationary_product_is_separable() {
        // the box keeps every tail above the floor, so the 2D and 1D floors stay inactive
        let (n, l) = (64, 15.5);
        let g = make_grid(&[(n, l)]).unwrap();
        let c = -l / (2.0 * n as f64);
        let a = gaussian_packet(&g, &[c], 1.0, &[0.0]).unwrap();
        let params = PhysParams {
            eps_reg: 1e-12,
            ..PhysParams::with_ratio(1.0)
        };
        let r = check_separability(&a, &a, &params, 0.05, &StepperConfig::new(Scheme::Strang, 1e-3)).unwrap();
        assert!(r.max_residual <= 1e-12, "{r:?}");
    }

    #[test]
    fn entangled_state_is_refused() {
        let g = make_grid(&[(32, 16.0), (32, 16.0)]).unwrap();
        let bump = |x: f64, c: f64| (-(x - c).powi(2)).exp();
        let wf = WaveField::new(ComplexField::from_fn(&g, |x| {
            Complex64::new(bump(x[0], 3.0) * bump(x[1], 3.0) + bump(x[0], -3.0) * bump(x[1], -3.0), 0.0)
        }));
        assert!(matches!(factorize_product(&wf), Err(Error::NotProductState(_))));
        let params = PhysParams::default();
        assert!(check_separability_of(&wf, &params, 0.1, &StepperConfig::default()).is_err());
    }

    #[test]
    fn factorization_recovers_factors() {
        let g = make_grid(&[(32, 16.0), (64, 12.0)]).unwrap();
        let wf = WaveField::new(ComplexField::from_fn(&g, |x| {
            Complex64::from_polar((-x[0] * x[0] / 4.0).exp(), 0.2 * x[0])
                * Complex64::from_polar((-(x[1] - 1.0).powi(2) / 2.0).exp(), -0.1 * x[1])
        }))
        .normalized()
        .unwrap();
        let (a, b) = factorize_product(&wf).unwrap();
        let back = tensor_product(&a, &b).unwrap();
        // factors are defined up to a global phase
        let overlap: Complex64 = back.psi.as_slice().iter().zip(wf.psi.as_slice()).map(|(x, y)| x.conj() * y).sum();
        let phase = overlap / overlap.norm();
        let diff = back
            .psi
            .as_slice()
            .iter()
            .zip(wf.psi.as_slice())
            .fold(0.0f64, |m, (x, y)| m.max((x * phase - y).norm()));
        assert!(diff < 1e-12);
    }

    #[test]
    fn current_linearity_examples() {
        let g = make_grid(&[(256, 32.0)]).unwrap();
        let real = gaussian_packet(&g, &[0.0], 1.0, &[0.0]).unwrap();
        let params = PhysParams::with_ratio(2.0);
        assert!(density_rate(&real, &params).unwrap().max_abs() <= 1e-12);
        assert!(current_divergence(&real, &params).max_abs() <= 1e-12);
        assert!(check_current_linearity(&real, &params).unwrap().pass);

        let moving = gaussian_packet(&g, &[0.0], 1.0, &[1.5]).unwrap();
        let nl = density_rate(&moving, &PhysParams { mass: 2.0, ..Default::default() }).unwrap();
        let lin = density_rate(&moving, &PhysParams::linear(2.0)).unwrap();
        let diff = nl.as_slice().iter().zip(lin.as_slice()).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(diff <= 1e-10);
        let r = check_current_linearity(&moving, &PhysParams { mass: 2.0, ..Default::default() }).unwrap();
        assert!(r.pass, "{r:?}");
    }

    #[test]
    fn fd2_divergence_converges_at_second_order() {
        let params = PhysParams::linear(1.0);
        let errs: Vec<f64> = [64usize, 128, 256]
            .iter()
            .map(|&n| {
                let g = make_grid(&[(n, 16.0)]).unwrap();
                let wf = pedestal(&g);
                let a = current_divergence(&wf, &params);
                let b = current_divergence_fd2(&wf, &params);
                a.as_slice().iter().zip(b.as_slice()).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
            })
            .collect();
        for w in errs.windows(2) {
            let order = (w[0] / w[1]).log2();
            assert!((order - 2.0).abs() < 0.2, "{errs:?}");
        }
    }

    #[test]
    fn eps_sweep_on_node_free_state() {
        let g = make_grid(&[(128, 16.0)]).unwrap();
        let wf = pedestal(&g);
        let params = PhysParams {
            nl_cutoff: Some(4.0),
            ..PhysParams::with_ratio(2.0)
        };
        let stepper = StepperConfig::new(Scheme::Strang, 5e-4);
        let r = eps_insensitivity(&wf, &params, &[1e-8, 1e-6, 1e-4], 0.1, &stepper).unwrap();
        assert!(r.pass, "{r:?}");
        assert!(!r.context.contains("outside"));
        let r = eps_insensitivity(&wf, &params, &[1e-6, 0.0], 0.1, &stepper).unwrap();
        assert!(r.max_residual <= 1e-12, "{r:?}");
    }

    #[test]
    fn branch_masks_must_be_disjoint() {
        let g = make_grid(&[(64, 16.0)]).unwrap();
        let wf = pedestal(&g);
        let masks = BranchMasks {
            first: vec![true; 64],
            second: vec![true; 64],
        };
        assert!(matches!(branch_sample(&wf, &wf, &masks), Err(Error::BranchOverlap(_))));
        let leaky = BranchMasks::from_fn(&g, |x| (x[0] < -4.0).then_some(0));
        assert!(matches!(branch_sample(&wf, &wf, &leaky), Err(Error::BranchOverlap(_))));
    }

    #[test]
    fn stationary_branches_keep_their_offset() {
        let g = make_grid(&[(256, 40.0)]).unwrap();
        let delta = 0.7;
        let branch = |c: f64, x: f64| (-(x - c).powi(2) / 4.0).exp();
        let wf = WaveField::new(ComplexField::from_fn(&g, |x| {
            Complex64::new(branch(-8.0, x[0]), 0.0) + Complex64::from_polar(branch(8.0, x[0]), delta)
        }))
        .normalized()
        .unwrap();
        let reference = WaveField::new(ComplexField::from_fn(&g, |x| {
            Complex64::new(branch(-8.0, x[0]) + branch(8.0, x[0]), 0.0)
        }));
        let params = PhysParams {
            eps_reg: 1e-11,
            ..PhysParams::with_ratio(1.0)
        };
        let traj = evolve(&wf, 0.5, &StepperConfig::new(Scheme::Strang, 1e-3).every(100), &params).unwrap();
        let masks = BranchMasks::from_fn(&g, |x| Some(if x[0] < 0.0 { 0 } else { 1 }));
        let s0 = branch_sample(&traj.snapshots[0].state, &reference, &masks).unwrap();
        assert!((s0.delta_phi - delta).abs() < 1e-12);
        let r = branch_phase_drift(&traj, None, &masks, None).unwrap();
        assert!(r.max_residual <= 1e-10, "{r:?}");
    }
}
