//! Wave-function state, physical parameters, observables and the
//! amplitude/phase (Madelung) view of a state.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{self, ComplexField, Grid, RealField};

/// Critical mass estimate in kilograms (avalanche of 2·10⁷ electrons).
pub const CRITICAL_MASS_KG: f64 = 2e-23;

/// Default relative amplitude floor for node regularization.
pub const DEFAULT_EPS_REG: f64 = 1e-6;

/// Converts a mass in kilograms to the dimensionless ratio M/μ.
pub fn mass_ratio(mass_kg: f64) -> Result<f64> {
    if !(mass_kg > 0.0) || !mass_kg.is_finite() {
        return Err(Error::NonPositiveMass(mass_kg));
    }
    Ok(mass_kg / CRITICAL_MASS_KG)
}

/// External potential `V(x)`. Multi-dimensional grids sum the 1D profile
/// over axes.
#[derive(Clone, Debug, PartialEq)]
pub enum PotentialSpec {
    None,
    /// `V = ½·k·|x|²`
    Harmonic { k: f64 },
    /// `V = a·x⁴ − b·x²`
    DoubleWell { a: f64, b: f64 },
    Tabulated(RealField),
}

impl PotentialSpec {
    pub fn is_none(&self) -> bool {
        matches!(self, PotentialSpec::None)
    }

    pub fn validate(&self, grid: &Grid) -> Result<()> {
        match self {
            PotentialSpec::None => Ok(()),
            PotentialSpec::Harmonic { k } if k.is_finite() => Ok(()),
            PotentialSpec::DoubleWell { a, b } if a.is_finite() && b.is_finite() => Ok(()),
            PotentialSpec::Tabulated(f) => {
                if f.grid() != grid {
                    Err(Error::ShapeMismatch(format!(
                        "tabulated potential on {:?}, state on {:?}",
                        f.grid(),
                        grid
                    )))
                } else if !f.is_finite() {
                    Err(Error::InvalidParams("tabulated potential has non-finite entries".into()))
                } else {
                    Ok(())
                }
            }
            other => Err(Error::InvalidParams(format!("non-finite coefficient in {other:?}"))),
        }
    }

    /// Potential values at every grid point.
    pub fn sample(&self, grid: &Grid) -> Result<Vec<f64>> {
        self.validate(grid)?;
        let profile = |x: &[f64], v: &dyn Fn(f64) -> f64| x.iter().map(|&xi| v(xi)).sum::<f64>();
        Ok(match self {
            PotentialSpec::None => vec![0.0; grid.len()],
            PotentialSpec::Harmonic { k } => {
                RealField::from_fn(grid, |x| profile(x, &|s| 0.5 * k * s * s)).into_vec()
            }
            PotentialSpec::DoubleWell { a, b } => {
                RealField::from_fn(grid, |x| profile(x, &|s| a * s.powi(4) - b * s * s)).into_vec()
            }
            PotentialSpec::Tabulated(f) => f.as_slice().to_vec(),
        })
    }
}

/// Physical constants of the evolution. `mu = ∞` switches the nonlinearity off.
#[derive(Clone, Debug, PartialEq)]
pub struct PhysParams {
    /// Effective mass M of the linear kinetic term.
    pub mass: f64,
    /// Critical mass μ.
    pub mu: f64,
    pub hbar: f64,
    pub potential: PotentialSpec,
    /// Relative amplitude floor; the nonlinear rate denominator is floored at
    /// `eps_reg²·max|Ψ|²`.
    pub eps_reg: f64,
    /// Optional per-axis band limit applied to the state before the nonlinear
    /// rate is evaluated. Needed for long M > μ runs, where the amplitude/phase
    /// system amplifies short wavelengths at a rate growing like k².
    pub nl_cutoff: Option<f64>,
}

impl Default for PhysParams {
    fn default() -> Self {
        PhysParams {
            mass: 1.0,
            mu: 1.0,
            hbar: 1.0,
            potential: PotentialSpec::None,
            eps_reg: DEFAULT_EPS_REG,
            nl_cutoff: None,
        }
    }
}

impl PhysParams {
    /// Free evolution with `M = ratio·μ`, μ = 1, ħ = 1. A ratio of zero means
    /// the linear limit (μ → ∞) with M = 1.
    pub fn with_ratio(ratio: f64) -> Self {
        if ratio == 0.0 {
            PhysParams {
                mu: f64::INFINITY,
                ..Default::default()
            }
        } else {
            PhysParams {
                mass: ratio,
                ..Default::default()
            }
        }
    }

    /// Linear Schrödinger evolution with mass `mass`.
    pub fn linear(mass: f64) -> Self {
        PhysParams {
            mass,
            mu: f64::INFINITY,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mass > 0.0) || !self.mass.is_finite() {
            return Err(Error::InvalidParams(format!("M must be positive, got {}", self.mass)));
        }
        if !(self.mu > 0.0) {
            return Err(Error::InvalidParams(format!("mu must be positive, got {}", self.mu)));
        }
        if !(self.hbar > 0.0) || !self.hbar.is_finite() {
            return Err(Error::InvalidParams(format!("hbar must be positive, got {}", self.hbar)));
        }
        if !(0.0..1e-2).contains(&self.eps_reg) {
            return Err(Error::InvalidParams(format!(
                "eps_reg must lie in [0, 1e-2), got {}",
                self.eps_reg
            )));
        }
        if let Some(c) = self.nl_cutoff {
            if !(c > 0.0) {
                return Err(Error::InvalidParams(format!("nl_cutoff must be positive, got {c}")));
            }
        }
        Ok(())
    }

    pub fn is_linear(&self) -> bool {
        self.mu.is_infinite()
    }

    /// M/μ (zero in the linear limit).
    pub fn ratio(&self) -> f64 {
        self.mass / self.mu
    }

    /// `ħ/(2μ)`, the prefactor of the nonlinear rate.
    pub fn nl_prefactor(&self) -> f64 {
        if self.is_linear() {
            0.0
        } else {
            self.hbar / (2.0 * self.mu)
        }
    }

    /// `1/M − 1/μ`.
    pub fn net_inverse_mass(&self) -> f64 {
        1.0 / self.mass - if self.is_linear() { 0.0 } else { 1.0 / self.mu }
    }

    /// Net kinetic rotation rate at the grid band corner,
    /// `ħ·k_max²/2·|1/M − 1/μ|`.
    pub fn band_edge_rate(&self, grid: &Grid) -> f64 {
        self.hbar * grid.k_max_sq() / 2.0 * self.net_inverse_mass().abs()
    }

    /// Stable 64-bit fingerprint of the parameter set (FNV-1a over bit patterns).
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        let mut eat = |bits: u64| {
            for b in bits.to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
        };
        eat(self.mass.to_bits());
        eat(self.mu.to_bits());
        eat(self.hbar.to_bits());
        eat(self.eps_reg.to_bits());
        eat(self.nl_cutoff.map_or(u64::MAX, f64::to_bits));
        match &self.potential {
            PotentialSpec::None => eat(0),
            PotentialSpec::Harmonic { k } => {
                eat(1);
                eat(k.to_bits())
            }
            PotentialSpec::DoubleWell { a, b } => {
                eat(2);
                eat(a.to_bits());
                eat(b.to_bits())
            }
            PotentialSpec::Tabulated(f) => {
                eat(3);
                f.as_slice().iter().for_each(|v| eat(v.to_bits()))
            }
        }
        h
    }
}

/// Wave function Ψ on a grid at a time stamp.
#[derive(Clone, Debug, PartialEq)]
pub struct WaveField {
    pub psi: ComplexField,
    pub time: f64,
    /// Fingerprint of the [`PhysParams`] used to evolve it (0 for prepared states).
    pub params_id: u64,
}

impl WaveField {
    pub fn new(psi: ComplexField) -> Self {
        WaveField {
            psi,
            time: 0.0,
            params_id: 0,
        }
    }

    pub fn grid(&self) -> &Grid {
        self.psi.grid()
    }

    pub fn norm(&self) -> f64 {
        self.psi.norm_sqr()
    }

    /// Rescales to unit norm. Fails on an all-zero field.
    pub fn normalize(&mut self) -> Result<()> {
        let n = self.norm();
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::AllNodes);
        }
        let s = 1.0 / n.sqrt();
        self.psi.as_mut_slice().iter_mut().for_each(|z| *z *= s);
        Ok(())
    }

    pub fn normalized(mut self) -> Result<Self> {
        self.normalize()?;
        Ok(self)
    }

    pub fn density(&self) -> DiagonalDensity {
        DiagonalDensity(
            RealField::new(
                self.grid().clone(),
                self.psi.as_slice().iter().map(|z| z.norm_sqr()).collect(),
            )
            .expect("same grid"),
        )
    }

    pub fn max_density(&self) -> f64 {
        self.psi
            .as_slice()
            .iter()
            .fold(0.0, |m, z| m.max(z.norm_sqr()))
    }
}

/// Coordinate-diagonal density `|Ψ(x)|²`.
#[derive(Clone, Debug, PartialEq)]
pub struct DiagonalDensity(pub RealField);

impl DiagonalDensity {
    pub fn integral(&self) -> f64 {
        self.0.integral()
    }
}

/// Relative density at the outermost grid cells.
pub(crate) fn edge_density(psi: &ComplexField) -> f64 {
    let grid = psi.grid();
    let data = psi.as_slice();
    let peak = data.iter().fold(0.0, |m: f64, z| m.max(z.norm_sqr()));
    if peak == 0.0 {
        return 0.0;
    }
    let shape = grid.shape();
    let mut edge: f64 = 0.0;
    for (idx, z) in data.iter().enumerate() {
        let multi = grid.unravel(idx);
        if multi.iter().zip(&shape).any(|(&i, &n)| i == 0 || i == n - 1) {
            edge = edge.max(z.norm_sqr());
        }
    }
    edge / peak
}

/// Normalized Gaussian packet `∝ exp(−|x−x0|²/(4σ0²))·exp(i k0·x)`.
pub fn gaussian_packet(grid: &Grid, x0: &[f64], sigma0: f64, k0: &[f64]) -> Result<WaveField> {
    if x0.len() != grid.ndim() || k0.len() != grid.ndim() {
        return Err(Error::ShapeMismatch(format!(
            "x0/k0 need {} components",
            grid.ndim()
        )));
    }
    let min = 4.0 * grid.min_spacing();
    if !(sigma0 >= min) {
        return Err(Error::UnresolvedWidth { sigma: sigma0, min });
    }
    let psi = ComplexField::from_fn(grid, |x| {
        let mut arg = 0.0;
        let mut phase = 0.0;
        for d in 0..x.len() {
            arg -= (x[d] - x0[d]).powi(2) / (4.0 * sigma0 * sigma0);
            phase += k0[d] * x[d];
        }
        Complex64::from_polar(arg.exp(), phase)
    });
    let tail = edge_density(&psi);
    if tail >= 1e-12 {
        return Err(Error::TailOverflow(tail));
    }
    WaveField::new(psi).normalized()
}

/// Moments and linear energy of a state.
#[derive(Clone, Debug, PartialEq)]
pub struct Observables {
    pub norm: f64,
    pub mean_x: Vec<f64>,
    /// `√(⟨x²⟩ − ⟨x⟩²)` per axis, box coordinates. A delocalized state on a
    /// box of length L reports the uniform value L/√12.
    pub width: Vec<f64>,
    pub mean_k: Vec<f64>,
    /// `⟨Ψ| −(ħ²/2M)Δ + V |Ψ⟩ / ⟨Ψ|Ψ⟩`
    pub energy_linear: f64,
}

pub fn observables(wf: &WaveField, params: &PhysParams) -> Result<Observables> {
    let grid = wf.grid();
    let psi = wf.psi.as_slice();
    let dv = grid.cell_volume();
    let nd = grid.ndim();
    let norm = wf.norm();
    if !(norm > 0.0) {
        return Err(Error::AllNodes);
    }

    let mut m1 = vec![0.0; nd];
    let mut m2 = vec![0.0; nd];
    for (idx, z) in psi.iter().enumerate() {
        let w = z.norm_sqr();
        for (d, &i) in grid.unravel(idx).iter().enumerate() {
            let x = grid.axis(d).coords()[i];
            m1[d] += w * x;
            m2[d] += w * x * x;
        }
    }
    let total = norm / dv;
    let mean_x: Vec<f64> = m1.iter().map(|s| s / total).collect();
    let width = (0..nd)
        .map(|d| (m2[d] / total - mean_x[d] * mean_x[d]).max(0.0).sqrt())
        .collect();

    let mut buf = vec![Complex64::new(0.0, 0.0); grid.len()];
    let mut mean_k = Vec::with_capacity(nd);
    for d in 0..nd {
        grid::derivative_into(grid, d, psi, &mut buf);
        // ⟨−i∂⟩ = Σ Re(Ψ*·(−i ∂Ψ))
        let s: f64 = psi.iter().zip(&buf).map(|(p, q)| (p.conj() * q).im).sum();
        mean_k.push(s / total);
    }

    grid::laplacian_into(grid, psi, &mut buf);
    let kinetic: f64 = psi.iter().zip(&buf).map(|(p, q)| -(p.conj() * q).re).sum::<f64>()
        * params.hbar
        * params.hbar
        / (2.0 * params.mass);
    let v = params.potential.sample(grid)?;
    let potential: f64 = psi.iter().zip(&v).map(|(p, v)| p.norm_sqr() * v).sum();
    Ok(Observables {
        norm,
        mean_x,
        width,
        mean_k,
        energy_linear: (kinetic + potential) / total,
    })
}

/// Probability current `(ħ/M)·Im(Ψ*∇Ψ)`, one field per axis.
pub fn current(wf: &WaveField, params: &PhysParams) -> Vec<RealField> {
    let grid = wf.grid();
    let psi = wf.psi.as_slice();
    let scale = params.hbar / params.mass;
    let mut buf = vec![Complex64::new(0.0, 0.0); grid.len()];
    (0..grid.ndim())
        .map(|d| {
            grid::derivative_into(grid, d, psi, &mut buf);
            let j = psi
                .iter()
                .zip(&buf)
                .map(|(p, q)| scale * (p.conj() * q).im)
                .collect();
            RealField::new(grid.clone(), j).expect("same grid")
        })
        .collect()
}

/// Amplitude/phase representation `Ψ = A·e^{iφ}`.
#[derive(Clone, Debug, PartialEq)]
pub struct MadelungField {
    pub amplitude: RealField,
    /// Unwrapped along grid lines from the global-phase anchor; masked cells
    /// hold linearly interpolated values.
    pub phase: RealField,
    /// True where `|Ψ|² < eps_reg²·max|Ψ|²`.
    pub node_mask: Vec<bool>,
    pub time: f64,
    pub params_id: u64,
}

impl MadelungField {
    pub fn grid(&self) -> &Grid {
        self.amplitude.grid()
    }

    /// Fraction of grid points flagged as nodes.
    pub fn node_fraction(&self) -> f64 {
        self.node_mask.iter().filter(|&&m| m).count() as f64 / self.node_mask.len() as f64
    }
}

fn wrap_pi(mut a: f64) -> f64 {
    while a > PI {
        a -= 2.0 * PI;
    }
    while a <= -PI {
        a += 2.0 * PI;
    }
    a
}

/// Unwraps `raw` (principal arguments) along a line of indices, starting at
/// position `start` whose value is already fixed in `out`. Masked cells are
/// skipped, then filled by linear interpolation between unmasked neighbours.
fn unwrap_line(raw: &[f64], mask: &[bool], start: usize, out: &mut [f64]) {
    let n = raw.len();
    let mut walk = |range: &mut dyn Iterator<Item = usize>| {
        let mut last = out[start];
        for i in range {
            if mask[i] {
                continue;
            }
            last += wrap_pi(raw[i] - last);
            out[i] = last;
        }
    };
    walk(&mut (start + 1..n));
    walk(&mut (0..start).rev());

    let known: Vec<usize> = (0..n).filter(|&i| i == start || !mask[i]).collect();
    for i in 0..n {
        if i == start || !mask[i] {
            continue;
        }
        let right = known.iter().copied().find(|&k| k > i);
        let left = known.iter().rev().copied().find(|&k| k < i);
        out[i] = match (left, right) {
            (Some(l), Some(r)) => out[l] + (out[r] - out[l]) * (i - l) as f64 / (r - l) as f64,
            (Some(l), None) => out[l],
            (None, Some(r)) => out[r],
            (None, None) => out[start],
        };
    }
}

/// Splits Ψ into amplitude and unwrapped phase.
pub fn madelung_decompose(wf: &WaveField, eps_reg: f64) -> Result<MadelungField> {
    let grid = wf.grid();
    let psi = wf.psi.as_slice();
    let peak = wf.max_density();
    if !(peak > 0.0) || !peak.is_finite() {
        return Err(Error::AllNodes);
    }
    let floor = eps_reg * eps_reg * peak;
    let node_mask: Vec<bool> = psi.iter().map(|z| z.norm_sqr() < floor).collect();
    let anchor = psi
        .iter()
        .enumerate()
        .fold((0, -1.0), |(bi, bv), (i, z)| {
            let v = z.norm_sqr();
            if v > bv {
                (i, v)
            } else {
                (bi, bv)
            }
        })
        .0;
    let raw: Vec<f64> = psi.iter().map(|z| z.arg()).collect();
    let mut phase = vec![0.0; psi.len()];
    phase[anchor] = raw[anchor];

    match grid.ndim() {
        1 => unwrap_line(&raw, &node_mask, anchor, &mut phase),
        _ => {
            let (n0, n1) = (grid.axis(0).n(), grid.axis(1).n());
            let (ai, aj) = (anchor / n1, anchor % n1);
            // anchor column first, then every row outward from it
            let col = |v: &[f64]| (0..n0).map(|i| v[i * n1 + aj]).collect::<Vec<_>>();
            let col_raw = col(&raw);
            let col_mask: Vec<bool> = (0..n0).map(|i| node_mask[i * n1 + aj]).collect();
            let mut col_out = vec![0.0; n0];
            col_out[ai] = raw[anchor];
            unwrap_line(&col_raw, &col_mask, ai, &mut col_out);
            for i in 0..n0 {
                let row = i * n1..(i + 1) * n1;
                let mut out = vec![0.0; n1];
                out[aj] = col_out[i];
                unwrap_line(&raw[row.clone()], &node_mask[row.clone()], aj, &mut out);
                phase[row].copy_from_slice(&out);
            }
        }
    }

    Ok(MadelungField {
        amplitude: RealField::new(grid.clone(), psi.iter().map(|z| z.norm()).collect())?,
        phase: RealField::new(grid.clone(), phase)?,
        node_mask,
        time: wf.time,
        params_id: wf.params_id,
    })
}

/// `Ψ = A·e^{iφ}`, normalized.
pub fn madelung_recompose(mf: &MadelungField) -> Result<WaveField> {
    let psi = ComplexField::new(
        mf.grid().clone(),
        mf.amplitude
            .as_slice()
            .iter()
            .zip(mf.phase.as_slice())
            .map(|(&a, &p)| Complex64::from_polar(a, p))
            .collect(),
    )?;
    WaveField {
        psi,
        time: mf.time,
        params_id: mf.params_id,
    }
    .normalized()
}
