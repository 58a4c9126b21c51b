//! Independent reference solutions: the Gaussian-ansatz moment equations and
//! the closed-form free linear Gaussian. Nothing here touches the spectral
//! operators used by the integrators.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{ComplexField, Grid};
use crate::wavefield::{edge_density, PhysParams, WaveField};

const SIGMA_FLOOR: f64 = 1e-6;

/// Width σ and quadratic phase coefficient b of `A ∝ exp(−x²/4σ²)`, `φ = b·x²`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaussianMomentState {
    pub sigma: f64,
    pub b: f64,
    pub time: f64,
}

impl GaussianMomentState {
    pub fn at_rest(sigma: f64) -> Self {
        GaussianMomentState {
            sigma,
            b: 0.0,
            time: 0.0,
        }
    }
}

fn inv_mu(params: &PhysParams) -> f64 {
    if params.is_linear() {
        0.0
    } else {
        1.0 / params.mu
    }
}

/// `(dσ/dt, db/dt) = (2ħbσ/M, (ħ/2)(1/μ − 1/M)(4b² − 1/(4σ⁴)))`.
pub fn gaussian_moment_rhs(state: &GaussianMomentState, params: &PhysParams) -> (f64, f64) {
    let (s, b, h, m) = (state.sigma, state.b, params.hbar, params.mass);
    let ds = 2.0 * h * b * s / m;
    let db = 0.5 * h * (inv_mu(params) - 1.0 / m) * (4.0 * b * b - 1.0 / (4.0 * s.powi(4)));
    (ds, db)
}

fn rk4(state: &GaussianMomentState, dt: f64, params: &PhysParams) -> GaussianMomentState {
    let at = |s: f64, b: f64| {
        gaussian_moment_rhs(
            &GaussianMomentState {
                sigma: s,
                b,
                time: 0.0,
            },
            params,
        )
    };
    let (s, b) = (state.sigma, state.b);
    let k1 = at(s, b);
    let k2 = at(s + 0.5 * dt * k1.0, b + 0.5 * dt * k1.1);
    let k3 = at(s + 0.5 * dt * k2.0, b + 0.5 * dt * k2.1);
    let k4 = at(s + dt * k3.0, b + dt * k3.1);
    GaussianMomentState {
        sigma: s + dt / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0),
        b: b + dt / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1),
        time: state.time + dt,
    }
}

/// Fixed-step RK4 from `state0` to `t_final`; the last step is shortened to
/// land on `t_final`. Negative `t_final − time` integrates backwards.
pub fn integrate_moments(
    state0: GaussianMomentState,
    t_final: f64,
    params: &PhysParams,
    dt: f64,
) -> Result<Vec<GaussianMomentState>> {
    if !(dt > 0.0) || !(state0.sigma > 0.0) {
        return Err(Error::InvalidParams("moment integration needs dt > 0 and sigma > 0".into()));
    }
    let span = t_final - state0.time;
    let steps = (span.abs() / dt).ceil() as usize;
    let h = if steps == 0 { 0.0 } else { span / steps as f64 };
    let mut out = Vec::with_capacity(steps + 1);
    out.push(state0);
    let mut s = state0;
    for i in 1..=steps {
        s = rk4(&s, h, params);
        s.time = state0.time + i as f64 * h;
        if !(s.sigma >= SIGMA_FLOOR) || !s.b.is_finite() {
            return Err(Error::SigmaUnderflow(s.time));
        }
        out.push(s);
    }
    Ok(out)
}

/// Moment trajectory refined by step halving until successive refinements
/// agree to `tol` in σ at every shared time.
#[derive(Clone, Debug)]
pub struct MomentSolution {
    pub states: Vec<GaussianMomentState>,
    pub dt: f64,
    params: PhysParams,
}

impl MomentSolution {
    pub fn solve(state0: GaussianMomentState, t_final: f64, params: &PhysParams, tol: f64) -> Result<Self> {
        let mut dt = 1e-2;
        let mut coarse = integrate_moments(state0, t_final, params, dt)?;
        for _ in 0..14 {
            let fine = integrate_moments(state0, t_final, params, dt / 2.0)?;
            let diff = coarse
                .iter()
                .zip(fine.iter().step_by(2))
                .map(|(a, b)| (a.sigma - b.sigma).abs() / b.sigma)
                .fold(0.0, f64::max);
            dt /= 2.0;
            coarse = fine;
            if diff <= tol {
                break;
            }
        }
        Ok(MomentSolution {
            states: coarse,
            dt,
            params: params.clone(),
        })
    }

    /// σ at time `t` by cubic Hermite interpolation between stored steps.
    pub fn sigma(&self, t: f64) -> f64 {
        let t0 = self.states[0].time;
        let last = self.states.len() - 1;
        let h = if last == 0 { 1.0 } else { (self.states[last].time - t0) / last as f64 };
        let pos = ((t - t0) / h).clamp(0.0, last as f64);
        let i = (pos.floor() as usize).min(last.saturating_sub(1));
        if last == 0 {
            return self.states[0].sigma;
        }
        let (a, b) = (&self.states[i], &self.states[i + 1]);
        let u = pos - i as f64;
        let (da, db) = (
            gaussian_moment_rhs(a, &self.params).0 * h,
            gaussian_moment_rhs(b, &self.params).0 * h,
        );
        let (u2, u3) = (u * u, u * u * u);
        (2.0 * u3 - 3.0 * u2 + 1.0) * a.sigma
            + (u3 - 2.0 * u2 + u) * da
            + (-2.0 * u3 + 3.0 * u2) * b.sigma
            + (u3 - u2) * db
    }

    /// First time σ reaches `factor·σ0`, located by bisection on the interpolant.
    pub fn crossing(&self, factor: f64) -> Option<f64> {
        let target = factor * self.states[0].sigma;
        let side = |s: f64| (s - target).signum();
        let start = side(self.states[0].sigma);
        let idx = self.states.iter().position(|s| side(s.sigma) != start)?;
        let (mut lo, mut hi) = (self.states[idx - 1].time, self.states[idx].time);
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if side(self.sigma(mid)) == start {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Some(0.5 * (lo + hi))
    }
}

/// Width of a free linear Gaussian: `σ0·√(1 + (ħt/(2Mσ0²))²)`.
pub fn linear_width(t: f64, sigma0: f64, mass: f64, hbar: f64) -> f64 {
    let tau = hbar * t / (2.0 * mass * sigma0 * sigma0);
    sigma0 * (1.0 + tau * tau).sqrt()
}

/// Closed-form free linear evolution of the packet
/// `exp(−(x−x0)²/(4σ0²))·exp(i k0·x)`, sampled on `grid` and normalized.
pub fn linear_free_gaussian(
    grid: &Grid,
    t: f64,
    x0: &[f64],
    sigma0: f64,
    k0: &[f64],
    mass: f64,
    hbar: f64,
) -> Result<WaveField> {
    if x0.len() != grid.ndim() || k0.len() != grid.ndim() {
        return Err(Error::ShapeMismatch(format!("x0/k0 need {} components", grid.ndim())));
    }
    let s = Complex64::new(1.0, hbar * t / (2.0 * mass * sigma0 * sigma0));
    let psi = ComplexField::from_fn(grid, |x| {
        let mut z = Complex64::new(1.0, 0.0);
        for d in 0..x.len() {
            let shift = x[d] - x0[d] - hbar * k0[d] * t / mass;
            let exponent = -shift * shift / (4.0 * sigma0 * sigma0 * s)
                + Complex64::new(0.0, k0[d] * x[d] - hbar * k0[d] * k0[d] * t / (2.0 * mass));
            z *= exponent.exp() / s.sqrt();
        }
        z
    });
    let tail = edge_density(&psi);
    if tail >= 1e-12 {
        return Err(Error::TailOverflow(tail));
    }
    let mut wf = WaveField::new(psi);
    wf.time = t;
    wf.normalized()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;
    use crate::wavefield::{gaussian_packet, observables};
    use proptest::prelude::*;

    #[test]
    fn rhs_examples() {
        let s = GaussianMomentState::at_rest(1.0);
        assert_eq!(gaussian_moment_rhs(&s, &PhysParams::with_ratio(1.0)), (0.0, 0.0));
        let (ds, db) = gaussian_moment_rhs(&s, &PhysParams::with_ratio(2.0));
        assert_eq!(ds, 0.0);
        assert!((db + 1.0 / 16.0).abs() < 1e-15);
    }

    #[test]
    fn linear_limit_matches_closed_form() {
        let params = PhysParams::linear(1.0);
        let sol = integrate_moments(GaussianMomentState::at_rest(1.0), 3.0, &params, 1e-3).unwrap();
        for s in &sol {
            assert!((s.sigma - linear_width(s.time, 1.0, 1.0, 1.0)).abs() < 1e-6);
        }
    }

    #[test]
    fn monotone_branches() {
        let heavy = integrate_moments(GaussianMomentState::at_rest(1.0), 3.0, &PhysParams::with_ratio(2.0), 1e-3).unwrap();
        assert!(heavy.windows(2).all(|w| w[1].sigma < w[0].sigma));
        let light = integrate_moments(GaussianMomentState::at_rest(1.0), 3.0, &PhysParams::with_ratio(0.5), 1e-3).unwrap();
        assert!(light.windows(2).all(|w| w[1].sigma > w[0].sigma));
        let still = integrate_moments(GaussianMomentState::at_rest(1.3), 3.0, &PhysParams::with_ratio(1.0), 1e-3).unwrap();
        assert!(still.iter().all(|s| s.sigma == 1.3 && s.b == 0.0));
    }

    #[test]
    fn collapse_hits_the_underflow_guard() {
        let err = integrate_moments(GaussianMomentState::at_rest(1.0), 50.0, &PhysParams::with_ratio(2.0), 1e-3).unwrap_err();
        assert!(matches!(err, Error::SigmaUnderflow(_)));
    }

    #[test]
    fn refined_solution_and_crossings() {
        let sol = MomentSolution::solve(GaussianMomentState::at_rest(1.0), 4.5, &PhysParams::with_ratio(2.0), 1e-10).unwrap();
        assert!((sol.sigma(1.0) - 0.9689).abs() < 1e-4);
        assert!((sol.sigma(3.0) - 0.7252).abs() < 1e-4);
        let half = sol.crossing(0.5).unwrap();
        assert!((half - 3.99).abs() < 0.01, "{half}");
        let light = MomentSolution::solve(GaussianMomentState::at_rest(1.0), 2.0, &PhysParams::with_ratio(0.25), 1e-10).unwrap();
        assert!((light.crossing(2.0).unwrap() - 0.958).abs() < 0.005);
        assert!(light.crossing(0.5).is_none());
    }

    #[test]
    fn closed_form_at_zero_is_the_prepared_packet() {
        let g = make_grid(&[(256, 32.0)]).unwrap();
        let a = linear_free_gaussian(&g, 0.0, &[1.0], 1.0, &[0.7], 1.0, 1.0).unwrap();
        let b = gaussian_packet(&g, &[1.0], 1.0, &[0.7]).unwrap();
        assert!(a.psi.max_abs_diff(&b.psi) < 1e-15);
    }

    #[test]
    fn closed_form_width_and_centroid() {
        let g = make_grid(&[(512, 64.0)]).unwrap();
        let (t, m, k0) = (1.5, 2.0, 1.2);
        let wf = linear_free_gaussian(&g, t, &[-3.0], 1.0, &[k0], m, 1.0).unwrap();
        let obs = observables(&wf, &PhysParams::linear(m)).unwrap();
        assert!((obs.width[0] - linear_width(t, 1.0, m, 1.0)).abs() < 1e-9);
        assert!((obs.mean_x[0] - (-3.0 + k0 * t / m)).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn time_reversal(b0 in -0.2f64..0.2, ratio in 0.3f64..3.0, t in 0.1f64..1.0) {
            let params = PhysParams::with_ratio(ratio);
            let start = GaussianMomentState { sigma: 1.0, b: b0, time: 0.0 };
            let fwd = *integrate_moments(start, t, &params, 1e-3).unwrap().last().unwrap();
            let back = GaussianMomentState { sigma: fwd.sigma, b: -fwd.b, time: 0.0 };
            let end = *integrate_moments(back, t, &params, 1e-3).unwrap().last().unwrap();
            prop_assert!((end.sigma - 1.0).abs() < 1e-9);
            prop_assert!((end.b + b0).abs() < 1e-9);
        }

        #[test]
        fn fixed_line_is_exact(sigma in 0.5f64..3.0, mu in 0.2f64..5.0) {
            let params = PhysParams { mass: mu, mu, ..Default::default() };
            let (ds, db) = gaussian_moment_rhs(&GaussianMomentState::at_rest(sigma), &params);
            prop_assert_eq!(ds, 0.0);
            prop_assert_eq!(db, 0.0);
        }
    }
}
