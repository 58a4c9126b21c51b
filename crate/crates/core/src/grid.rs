//! Uniform periodic grids (1D and 2D), field storage and differential operators.
//!
//! Wavenumber ordering follows the FFT convention: for an axis of `n` points and
//! length `L`, entry `j` holds `2π·j/L` for `j < n/2` and `2π·(j−n)/L` otherwise,
//! so the Nyquist entry is `−π/dx`. Coordinates are `x_i = (i − n/2)·dx`, covering
//! `[−L/2, L/2)`. Fields are stored row-major with axis 0 slowest.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

static KERNEL_THREADS: AtomicUsize = AtomicUsize::new(1);

/// Caps the parallelism used inside transform kernels. Results are bitwise
/// identical for any setting; rows are transformed independently.
pub fn set_kernel_threads(n: usize) {
    KERNEL_THREADS.store(n.max(1), Ordering::Relaxed);
}

pub fn kernel_threads() -> usize {
    KERNEL_THREADS.load(Ordering::Relaxed)
}

thread_local! {
    static SCRATCH: RefCell<Vec<Complex64>> = const { RefCell::new(Vec::new()) };
    static TRANSPOSE: RefCell<Vec<Complex64>> = const { RefCell::new(Vec::new()) };
}

/// One periodic axis.
pub struct Axis {
    n: usize,
    length: f64,
    dx: f64,
    k: Vec<f64>,
    x: Vec<f64>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl Axis {
    pub fn n(&self) -> usize {
        self.n
    }
    pub fn length(&self) -> f64 {
        self.length
    }
    pub fn dx(&self) -> f64 {
        self.dx
    }
    /// Signed wavenumbers in transform order.
    pub fn wavenumbers(&self) -> &[f64] {
        &self.k
    }
    pub fn coords(&self) -> &[f64] {
        &self.x
    }
    /// Largest |k| on the axis (the Nyquist magnitude π/dx).
    pub fn k_max(&self) -> f64 {
        PI / self.dx
    }
}

struct GridInner {
    axes: Vec<Axis>,
    len: usize,
    k_sq: Vec<f64>,
    // per-axis wavenumber at every point, Nyquist zeroed (odd derivatives)
    k_odd: Vec<Vec<f64>>,
}

/// Uniform periodic grid in one or two dimensions. Cheap to clone.
#[derive(Clone)]
pub struct Grid {
    inner: Arc<GridInner>,
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list()
            .entries(self.inner.axes.iter().map(|a| (a.n, a.length)))
            .finish()
    }
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.inner, &other.inner) || self.dims() == other.dims()
    }
}

/// Builds a grid from `(point count, length)` pairs.
pub fn make_grid(dims: &[(usize, f64)]) -> Result<Grid> {
    Grid::new(dims)
}

impl Grid {
    pub fn new(dims: &[(usize, f64)]) -> Result<Grid> {
        if dims.is_empty() || dims.len() > 2 {
            return Err(Error::UnsupportedDimension(dims.len()));
        }
        let mut planner = FftPlanner::<f64>::new();
        let mut axes = Vec::with_capacity(dims.len());
        for &(n, length) in dims {
            if n < 8 || !n.is_power_of_two() {
                return Err(Error::NonPowerOfTwo(n));
            }
            if !(length > 0.0) || !length.is_finite() {
                return Err(Error::NonPositiveLength(length));
            }
            let dx = length / n as f64;
            let half = (n / 2) as i64;
            let k = (0..n as i64)
                .map(|j| {
                    let m = if j < half { j } else { j - n as i64 };
                    2.0 * PI * m as f64 / length
                })
                .collect();
            let x = (0..n as i64).map(|i| (i - half) as f64 * dx).collect();
            axes.push(Axis {
                n,
                length,
                dx,
                k,
                x,
                fwd: planner.plan_fft_forward(n),
                inv: planner.plan_fft_inverse(n),
            });
        }
        let len = axes.iter().map(|a| a.n).product();
        let mut k_sq = vec![0.0; len];
        let mut k_odd = vec![vec![0.0; len]; axes.len()];
        for idx in 0..len {
            let multi = unravel(&axes, idx);
            for (d, &i) in multi.iter().enumerate() {
                let kd = axes[d].k[i];
                k_sq[idx] += kd * kd;
                k_odd[d][idx] = if i == axes[d].n / 2 { 0.0 } else { kd };
            }
        }
        Ok(Grid {
            inner: Arc::new(GridInner {
                axes,
                len,
                k_sq,
                k_odd,
            }),
        })
    }

    pub fn ndim(&self) -> usize {
        self.inner.axes.len()
    }

    pub fn axis(&self, d: usize) -> &Axis {
        &self.inner.axes[d]
    }

    pub fn axes(&self) -> &[Axis] {
        &self.inner.axes
    }

    /// `(n, length)` per axis.
    pub fn dims(&self) -> Vec<(usize, f64)> {
        self.inner.axes.iter().map(|a| (a.n, a.length)).collect()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.inner.axes.iter().map(|a| a.n).collect()
    }

    /// Total number of points.
    pub fn len(&self) -> usize {
        self.inner.len
    }

    pub fn is_empty(&self) -> bool {
        self.inner.len == 0
    }

    /// Volume element (product of spacings).
    pub fn cell_volume(&self) -> f64 {
        self.inner.axes.iter().map(|a| a.dx).product()
    }

    pub fn min_spacing(&self) -> f64 {
        self.inner
            .axes
            .iter()
            .map(|a| a.dx)
            .fold(f64::INFINITY, f64::min)
    }

    /// |k|² at the grid's band corner: Σ_d (π/dx_d)².
    pub fn k_max_sq(&self) -> f64 {
        self.inner.axes.iter().map(|a| a.k_max().powi(2)).sum()
    }

    /// |k|² per point, transform order.
    pub fn k_squared(&self) -> &[f64] {
        &self.inner.k_sq
    }

    /// Wavenumber component `d` per point with the Nyquist entry zeroed.
    pub fn k_odd(&self, d: usize) -> &[f64] {
        &self.inner.k_odd[d]
    }

    /// Multi-index of a flat index.
    pub fn unravel(&self, idx: usize) -> Vec<usize> {
        unravel(&self.inner.axes, idx)
    }

    /// Coordinates of a flat index.
    pub fn point(&self, idx: usize) -> Vec<f64> {
        self.unravel(idx)
            .iter()
            .enumerate()
            .map(|(d, &i)| self.inner.axes[d].x[i])
            .collect()
    }

    /// Riemann sum `Σ f · dV`.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        values.iter().sum::<f64>() * self.cell_volume()
    }

    /// Unnormalized forward transform in place.
    pub fn forward(&self, data: &mut [Complex64]) {
        self.transform(data, true);
    }

    /// Inverse transform in place, scaled by 1/N.
    pub fn inverse(&self, data: &mut [Complex64]) {
        self.transform(data, false);
        let scale = 1.0 / self.len() as f64;
        for v in data.iter_mut() {
            *v *= scale;
        }
    }

    fn transform(&self, data: &mut [Complex64], forward: bool) {
        assert_eq!(data.len(), self.len(), "buffer does not match grid");
        let axes = &self.inner.axes;
        let plan = |a: &Axis| -> Arc<dyn Fft<f64>> {
            if forward {
                a.fwd.clone()
            } else {
                a.inv.clone()
            }
        };
        match axes.len() {
            1 => run_rows(&*plan(&axes[0]), data),
            _ => {
                let (n0, n1) = (axes[0].n, axes[1].n);
                run_rows(&*plan(&axes[1]), data);
                TRANSPOSE.with(|t| {
                    let mut t = t.borrow_mut();
                    t.resize(data.len(), Complex64::new(0.0, 0.0));
                    transpose(data, &mut t, n0, n1);
                    run_rows(&*plan(&axes[0]), &mut t);
                    transpose(&t, data, n1, n0);
                });
            }
        }
    }
}

fn unravel(axes: &[Axis], idx: usize) -> Vec<usize> {
    match axes.len() {
        1 => vec![idx],
        _ => vec![idx / axes[1].n, idx % axes[1].n],
    }
}

fn transpose(src: &[Complex64], dst: &mut [Complex64], rows: usize, cols: usize) {
    for r in 0..rows {
        for c in 0..cols {
            dst[c * rows + r] = src[r * cols + c];
        }
    }
}

fn run_rows(fft: &dyn Fft<f64>, data: &mut [Complex64]) {
    let n = fft.len();
    let scratch_len = fft.get_inplace_scratch_len();
    if kernel_threads() > 1 && data.len() > n {
        data.par_chunks_mut(n).for_each(|row| {
            SCRATCH.with(|s| {
                let mut s = s.borrow_mut();
                s.resize(scratch_len, Complex64::new(0.0, 0.0));
                fft.process_with_scratch(row, &mut s);
            })
        });
    } else {
        SCRATCH.with(|s| {
            let mut s = s.borrow_mut();
            s.resize(scratch_len, Complex64::new(0.0, 0.0));
            fft.process_with_scratch(data, &mut s);
        });
    }
}

/// Complex samples on a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexField {
    grid: Grid,
    data: Vec<Complex64>,
}

/// Real samples on a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct RealField {
    grid: Grid,
    data: Vec<f64>,
}

macro_rules! field_common {
    ($ty:ident, $elem:ty) => {
        impl $ty {
            pub fn new(grid: Grid, data: Vec<$elem>) -> Result<Self> {
                if data.len() != grid.len() {
                    return Err(Error::ShapeMismatch(format!(
                        "{} values for a {}-point grid",
                        data.len(),
                        grid.len()
                    )));
                }
                Ok(Self { grid, data })
            }

            pub fn zeros(grid: &Grid) -> Self {
                Self {
                    grid: grid.clone(),
                    data: vec![<$elem>::default(); grid.len()],
                }
            }

            /// Samples `f` at every grid point (coordinates passed per axis).
            pub fn from_fn(grid: &Grid, mut f: impl FnMut(&[f64]) -> $elem) -> Self {
                let data = (0..grid.len()).map(|i| f(&grid.point(i))).collect();
                Self {
                    grid: grid.clone(),
                    data,
                }
            }

            pub fn grid(&self) -> &Grid {
                &self.grid
            }

            pub fn as_slice(&self) -> &[$elem] {
                &self.data
            }

            pub fn as_mut_slice(&mut self) -> &mut [$elem] {
                &mut self.data
            }

            pub fn into_vec(self) -> Vec<$elem> {
                self.data
            }

            pub fn len(&self) -> usize {
                self.data.len()
            }

            pub fn is_empty(&self) -> bool {
                self.data.is_empty()
            }
        }
    };
}

field_common!(ComplexField, Complex64);
field_common!(RealField, f64);

impl ComplexField {
    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// `∫|f|² dV`.
    pub fn norm_sqr(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.grid.cell_volume()
    }

    /// Discrete L² distance `(∫|f−g|² dV)^½`.
    pub fn l2_distance(&self, other: &ComplexField) -> f64 {
        (self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            * self.grid.cell_volume())
        .sqrt()
    }

    pub fn max_abs_diff(&self, other: &ComplexField) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn real_part(&self) -> RealField {
        RealField {
            grid: self.grid.clone(),
            data: self.data.iter().map(|z| z.re).collect(),
        }
    }

    pub fn imag_part(&self) -> RealField {
        RealField {
            grid: self.grid.clone(),
            data: self.data.iter().map(|z| z.im).collect(),
        }
    }
}

impl RealField {
    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn to_complex(&self) -> ComplexField {
        ComplexField {
            grid: self.grid.clone(),
            data: self.data.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn integral(&self) -> f64 {
        self.grid.integrate(&self.data)
    }
}

/// `F⁻¹[ m(k) · F f ]` for a per-point multiplier in transform order.
pub(crate) fn apply_multiplier(
    grid: &Grid,
    input: &[Complex64],
    out: &mut [Complex64],
    mult: impl Fn(usize) -> Complex64,
) {
    out.copy_from_slice(input);
    grid.forward(out);
    for (i, v) in out.iter_mut().enumerate() {
        *v *= mult(i);
    }
    grid.inverse(out);
}

/// Spectral Laplacian into a caller-provided buffer.
pub(crate) fn laplacian_into(grid: &Grid, input: &[Complex64], out: &mut [Complex64]) {
    let k_sq = grid.k_squared();
    out.copy_from_slice(input);
    grid.forward(out);
    for (v, &k2) in out.iter_mut().zip(k_sq) {
        *v *= -k2;
    }
    grid.inverse(out);
}

/// Spectral Laplacian: inverse-transform of `−|k|²·f̂`.
pub fn laplacian_spectral(f: &ComplexField) -> ComplexField {
    let mut out = ComplexField::zeros(f.grid());
    laplacian_into(f.grid(), &f.data, &mut out.data);
    out
}

/// Periodic second-order central-difference Laplacian.
pub fn laplacian_fd2(f: &ComplexField) -> ComplexField {
    let grid = f.grid();
    let mut out = ComplexField::zeros(grid);
    let src = &f.data;
    match grid.ndim() {
        1 => {
            let n = grid.axis(0).n();
            let inv = 1.0 / grid.axis(0).dx().powi(2);
            for i in 0..n {
                let l = src[(i + n - 1) % n];
                let r = src[(i + 1) % n];
                out.data[i] = (l - src[i] * 2.0 + r) * inv;
            }
        }
        _ => {
            let (n0, n1) = (grid.axis(0).n(), grid.axis(1).n());
            let inv0 = 1.0 / grid.axis(0).dx().powi(2);
            let inv1 = 1.0 / grid.axis(1).dx().powi(2);
            for i in 0..n0 {
                let (up, down) = ((i + n0 - 1) % n0, (i + 1) % n0);
                for j in 0..n1 {
                    let (left, right) = ((j + n1 - 1) % n1, (j + 1) % n1);
                    let c = src[i * n1 + j];
                    let d0 = src[up * n1 + j] - c * 2.0 + src[down * n1 + j];
                    let d1 = src[i * n1 + left] - c * 2.0 + src[i * n1 + right];
                    out.data[i * n1 + j] = d0 * inv0 + d1 * inv1;
                }
            }
        }
    }
    out
}

/// Spectral partial derivative along axis `d` into a buffer.
pub(crate) fn derivative_into(grid: &Grid, d: usize, input: &[Complex64], out: &mut [Complex64]) {
    let k = grid.k_odd(d);
    apply_multiplier(grid, input, out, |i| Complex64::new(0.0, k[i]));
}

/// Spectral gradient, one component per axis (`i·k_d` multiplier; the
/// Nyquist mode is dropped so real inputs give real derivatives).
pub fn gradient_spectral(f: &ComplexField) -> Vec<ComplexField> {
    let grid = f.grid();
    (0..grid.ndim())
        .map(|d| {
            let mut out = ComplexField::zeros(grid);
            derivative_into(grid, d, &f.data, &mut out.data);
            out
        })
        .collect()
}

/// Trigonometric interpolation onto a grid with twice the points per axis
/// and the same box. The coarse Nyquist mode is split evenly between ±k.
pub(crate) fn refine_2x(grid: &Grid, data: &[Complex64]) -> Result<(Grid, Vec<Complex64>)> {
    let fine = Grid::new(&grid.dims().iter().map(|&(n, l)| (2 * n, l)).collect::<Vec<_>>())?;
    let mut spec = data.to_vec();
    grid.forward(&mut spec);
    let targets = |n: usize, i: usize| -> Vec<(usize, f64)> {
        match i.cmp(&(n / 2)) {
            std::cmp::Ordering::Less => vec![(i, 1.0)],
            std::cmp::Ordering::Greater => vec![(i + n, 1.0)],
            std::cmp::Ordering::Equal => vec![(n / 2, 0.5), (n + n / 2, 0.5)],
        }
    };
    let shape = grid.shape();
    let fine_shape = fine.shape();
    let gain = (fine.len() / grid.len()) as f64;
    let mut out = vec![Complex64::new(0.0, 0.0); fine.len()];
    for (idx, v) in spec.iter().enumerate() {
        let multi = grid.unravel(idx);
        match shape.len() {
            1 => {
                for (i, w) in targets(shape[0], multi[0]) {
                    out[i] += v * w * gain;
                }
            }
            _ => {
                for (i, wi) in targets(shape[0], multi[0]) {
                    for (j, wj) in targets(shape[1], multi[1]) {
                        out[i * fine_shape[1] + j] += v * wi * wj * gain;
                    }
                }
            }
        }
    }
    fine.inverse(&mut out);
    Ok((fine, out))
}
