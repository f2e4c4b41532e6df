//! Solid Cauchy transforms `∂̄⁻¹`, `∂⁻¹`, the right inverse of `∂̄*` and
//! their oscillatory conjugates.
//!
//! The convolution with `1/(πz)` is evaluated by FFT on a zero-padded
//! periodic box. The kernel is truncated to a disk of radius `R` that covers
//! every source/target distance of interest, which makes its Fourier
//! transform smooth and known in closed form:
//!
//! `K̂(ξ) = −2i (1 − J0(|ξ| R)) / (ξ₁ + iξ₂)`.
//!
//! With the box period at least `2R` the periodic convolution reproduces the
//! free-space one exactly on the targets, so accuracy is limited only by the
//! smoothness of the input, not by the kernel singularity.

use crate::bessel::j0;
use crate::error::{Error, Result};
use crate::field::{taper_weights, DomainGrid, FormType, MatrixField, DEFAULT_TAPER};
use crate::scalar::{Real, C};
use num_complex::Complex;
use num_traits::Zero;
use rustfft::{Fft, FftPlanner};
use std::f64::consts::PI;
use std::sync::Arc;

/// Region where inputs may be nonzero, or where outputs are needed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Support {
    /// The whole computational square.
    Square,
    /// The centered disk of the given radius.
    Disk(f64),
}

impl Support {
    fn radius(self, half_side: f64) -> f64 {
        match self {
            Support::Square => std::f64::consts::SQRT_2 * half_side,
            Support::Disk(r) => r,
        }
    }
}

/// Which of the two Cauchy kernels to apply.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kernel {
    /// `1/(πz)`, inverting `∂_z̄`.
    Dbar,
    /// `1/(πz̄)`, inverting `∂_z`.
    D,
}

/// Largest padded grid for which the radial kernel factor is cached.
const CACHE_LIMIT: usize = 1 << 23;

/// Smallest `m ≥ x` of the form `2^a 3^b 5^c` with `m` even.
fn fft_size(x: usize) -> usize {
    let mut m = x.max(2);
    loop {
        if m % 2 == 0 {
            let mut r = m;
            for p in [2, 3, 5] {
                while r % p == 0 {
                    r /= p;
                }
            }
            if r == 1 {
                return m;
            }
        }
        m += 1;
    }
}

/// Precomputed FFT machinery for one grid and one pair of supports.
pub struct CauchyTransform<T: Real> {
    pub grid: Arc<DomainGrid<T>>,
    pub rho_in: f64,
    pub rho_out: f64,
    /// Padded box size in nodes.
    pub m: usize,
    /// Collar width of the extension used by the oscillatory transforms.
    pub taper_width: f64,
    truncation: f64,
    fwd: Arc<dyn Fft<T>>,
    inv: Arc<dyn Fft<T>>,
    radial: Option<Vec<T>>,
    in_mask: Vec<bool>,
    out_mask: Vec<bool>,
}

impl<T: Real> std::fmt::Debug for CauchyTransform<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CauchyTransform")
            .field("n", &self.grid.n)
            .field("m", &self.m)
            .field("rho_in", &self.rho_in)
            .field("rho_out", &self.rho_out)
            .finish()
    }
}

impl<T: Real> CauchyTransform<T> {
    /// Transform with inputs and outputs anywhere on the square.
    pub fn new(grid: &Arc<DomainGrid<T>>) -> Self {
        Self::with_supports(grid, Support::Square, Support::Square)
    }

    /// Transform for data supported in the tapered disk, as produced by the
    /// extension operator. This is the cheap variant used inside iterations.
    pub fn for_extended(grid: &Arc<DomainGrid<T>>) -> Self {
        let w = default_taper(grid);
        let rho = 1.0 + w;
        let mut t = Self::with_supports(grid, Support::Disk(rho), Support::Disk(rho));
        t.taper_width = w;
        t
    }

    pub fn with_supports(grid: &Arc<DomainGrid<T>>, input: Support, output: Support) -> Self {
        let l = grid.half_side.f64();
        let hs = grid.spacing.f64();
        let rho_in = input.radius(l);
        let rho_out = output.radius(l);
        let truncation = rho_in + rho_out;
        let m = fft_size(((2.0 * truncation / hs).ceil() as usize + 1).max(grid.n));
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(m);
        let inv = planner.plan_fft_inverse(m);
        let in_mask = grid.nodes().map(|z| z.norm() < rho_in).collect();
        let out_mask = grid.nodes().map(|z| z.norm() < rho_out).collect();
        let mut t = CauchyTransform {
            grid: grid.clone(),
            rho_in,
            rho_out,
            m,
            taper_width: default_taper(grid),
            truncation,
            fwd,
            inv,
            radial: None,
            in_mask,
            out_mask,
        };
        if m * m <= CACHE_LIMIT {
            t.radial = Some((0..m * m).map(|k| T::of(t.radial_factor(k / m, k % m))).collect());
        }
        t
    }

    fn freq(&self, k: usize) -> f64 {
        let m = self.m;
        let p = m as f64 * self.grid.spacing.f64();
        if 2 * k < m {
            2.0 * PI * k as f64 / p
        } else {
            2.0 * PI * (k as f64 - m as f64) / p
        }
    }

    /// `(1 − J0(|ξ|R)) / |ξ|²`.
    fn radial_factor(&self, kx: usize, ky: usize) -> f64 {
        let (a, b) = (self.freq(kx), self.freq(ky));
        let r2 = a * a + b * b;
        if r2 == 0.0 {
            return 0.0;
        }
        (1.0 - j0(r2.sqrt() * self.truncation)) / r2
    }

    /// Apply one of the two Cauchy kernels to every entry of `f`. The result
    /// is a function-valued field.
    pub fn apply(&self, f: &MatrixField<T>, kernel: Kernel) -> MatrixField<T> {
        assert!(self.grid.same_as(&f.grid), "transform and field grids differ");
        let mut out = MatrixField::zeros(&self.grid, f.rows, f.cols, FormType::Function);
        let mut buf = vec![C::<T>::zero(); self.m * self.m];
        for e in 0..f.dim() {
            let plane = self.convolve(f.plane(e), kernel, &mut buf);
            out.plane_mut(e).copy_from_slice(&plane);
        }
        out
    }

    fn convolve(&self, plane: &[C<T>], kernel: Kernel, buf: &mut [C<T>]) -> Vec<C<T>> {
        let (n, m) = (self.grid.n, self.m);
        buf.iter_mut().for_each(|x| *x = C::zero());
        let mut rows_used = vec![false; m];
        for iy in 0..n {
            let mut any = false;
            for ix in 0..n {
                let k = iy * n + ix;
                if self.in_mask[k] && plane[k] != C::zero() {
                    buf[iy * m + ix] = plane[k];
                    any = true;
                }
            }
            rows_used[iy] = any;
        }
        for (iy, used) in rows_used.iter().enumerate() {
            if *used {
                self.fwd.process(&mut buf[iy * m..(iy + 1) * m]);
            }
        }
        transpose(buf, m);
        // row kx now holds the column of frequency kx, indexed by ky
        let sign = match kernel {
            Kernel::Dbar => -1.0,
            Kernel::D => 1.0,
        };
        for kx in 0..m {
            let row = &mut buf[kx * m..(kx + 1) * m];
            self.fwd.process(row);
            let a = self.freq(kx);
            for (ky, v) in row.iter_mut().enumerate() {
                let phi = match &self.radial {
                    Some(r) => r[kx * m + ky].f64(),
                    None => self.radial_factor(kx, ky),
                };
                let b = self.freq(ky);
                // −2i φ (ξ₁ ∓ iξ₂)
                let k = Complex::new(0.0, -2.0 * phi) * Complex::new(a, sign * b);
                *v = *v * Complex::new(T::of(k.re), T::of(k.im));
            }
            self.inv.process(row);
        }
        transpose(buf, m);
        let scale = T::of(1.0 / (m as f64 * m as f64));
        let mut out = vec![C::zero(); n * n];
        for iy in 0..n {
            let y = self.grid.coord(iy);
            if y.abs() >= self.rho_out {
                continue;
            }
            let row = &mut buf[iy * m..(iy + 1) * m];
            self.inv.process(row);
            for ix in 0..n {
                let k = iy * n + ix;
                if self.out_mask[k] {
                    out[k] = row[ix] * scale;
                }
            }
        }
        out
    }

    /// `∂̄⁻¹ f`.
    pub fn dbar_inv(&self, f: &MatrixField<T>) -> MatrixField<T> {
        self.apply(f, Kernel::Dbar)
    }

    /// `∂⁻¹ f`.
    pub fn d_inv(&self, f: &MatrixField<T>) -> MatrixField<T> {
        self.apply(f, Kernel::D)
    }

    /// Right inverse of `∂̄* = −2∂_z` (adjoint of `∂̄` for the form pairing):
    /// maps a function to a `dz̄` coefficient.
    pub fn dbar_star_inv(&self, f: &MatrixField<T>) -> Result<MatrixField<T>> {
        if f.form != FormType::Function {
            return Err(Error::FormType { expected: FormType::Function.label().into(), found: f.form.label().into() });
        }
        Ok(self.apply(f, Kernel::D).scale(C::new(T::of(-0.5), T::zero())).with_form(FormType::Form01))
    }

    /// `∂̄_ψ⁻¹ f = ∂̄⁻¹ e^{−2iψ/h} E f` (restriction left to the caller).
    pub fn osc_dbar_inv(&self, f: &MatrixField<T>, phase: &OscillatoryPhase<T>) -> Result<MatrixField<T>> {
        let g = self.prepare(f, phase, -1.0)?;
        Ok(self.dbar_inv(&g))
    }

    /// `(∂̄*_ψ)⁻¹ f = (∂̄*)⁻¹ e^{2iψ/h} E f`.
    pub fn osc_dbar_star_inv(&self, f: &MatrixField<T>, phase: &OscillatoryPhase<T>) -> Result<MatrixField<T>> {
        if f.form != FormType::Function {
            return Err(Error::FormType { expected: FormType::Function.label().into(), found: f.form.label().into() });
        }
        let g = self.prepare(f, phase, 1.0)?;
        self.dbar_star_inv(&g)
    }

    fn prepare(&self, f: &MatrixField<T>, phase: &OscillatoryPhase<T>, sign: f64) -> Result<MatrixField<T>> {
        if !self.grid.same_as(&phase.psi.grid) {
            return Err(Error::Shape("phase and transform grids differ".into()));
        }
        let tau = taper_weights(&self.grid, self.taper_width);
        let nn = self.grid.len();
        let support: Vec<bool> =
            (0..nn).map(|k| tau[k] != T::zero() && self.in_mask[k] && (0..f.dim()).any(|e| f.data[e * nn + k] != C::zero())).collect();
        phase.check_resolution(&support)?;
        let mult: Vec<C<T>> = (0..nn)
            .map(|k| {
                let arg = sign * phase.sign * 2.0 * phase.psi.data[k].re.f64() / phase.h;
                let z = Complex::from_polar(tau[k].f64(), arg);
                Complex::new(T::of(z.re), T::of(z.im))
            })
            .collect();
        let mut g = f.clone();
        for e in 0..f.dim() {
            for (x, w) in g.plane_mut(e).iter_mut().zip(&mult) {
                *x = *x * *w;
            }
        }
        Ok(g)
    }

    /// Norm of `E* (∂̄⁻¹)* R* (e^{−2iψ/h} v)` for `v` vanishing on the circle.
    ///
    /// `v` must carry its smooth continuation outside the disk so that the
    /// boundary check is accurate; the restriction is applied here.
    pub fn adjoint_osc_probe(&self, v: &MatrixField<T>, phase: &OscillatoryPhase<T>) -> Result<T> {
        let tr = crate::field::trace_boundary_order(v, crate::field::TRACE_ORDER);
        let inner = v.max_abs_masked();
        if inner > T::zero() && tr.max_abs().f64() >= 1e-8 * inner.f64() {
            return Err(Error::Precondition(format!(
                "probe input must vanish on the boundary (trace {:.3e}, interior {:.3e})",
                tr.max_abs(),
                inner
            )));
        }
        let vr = crate::field::restrict(v);
        let nn = self.grid.len();
        let support: Vec<bool> = (0..nn).map(|k| self.grid.mask[k]).collect();
        phase.check_resolution(&support)?;
        let mut g = vr.clone();
        for e in 0..g.dim() {
            for (k, x) in g.plane_mut(e).iter_mut().enumerate() {
                let arg = -phase.sign * 2.0 * phase.psi.data[k].re.f64() / phase.h;
                *x = *x * Complex::new(T::of(arg.cos()), T::of(arg.sin()));
            }
        }
        // (∂̄⁻¹)* = −½ ∂⁻¹ from functions to dz̄ coefficients
        let out = self.d_inv(&g).scale(C::new(T::of(-0.5), T::zero())).with_form(FormType::Form01);
        Ok(out.norm_l2())
    }
}

fn default_taper<T: Real>(grid: &DomainGrid<T>) -> f64 {
    DEFAULT_TAPER.min(0.8 * (grid.half_side.f64() - 1.0))
}

/// In-place transpose of a square `m × m` buffer.
fn transpose<X: Copy>(a: &mut [X], m: usize) {
    const B: usize = 32;
    for bi in (0..m).step_by(B) {
        for bj in (bi..m).step_by(B) {
            for i in bi..(bi + B).min(m) {
                let j0 = if bi == bj { i + 1 } else { bj };
                for j in j0..(bj + B).min(m) {
                    a.swap(i * m + j, j * m + i);
                }
            }
        }
    }
}

/// The oscillating factor `e^{±2iψ/h}` of the conjugated transforms.
#[derive(Clone, Debug)]
pub struct OscillatoryPhase<T: Real> {
    /// Real-valued `ψ = Im Φ` stored as a scalar field.
    pub psi: MatrixField<T>,
    pub h: f64,
    /// `+1` keeps the conventions above, `−1` flips both oscillation signs.
    pub sign: f64,
    /// `|∇ψ|` at every node.
    pub grad_norm: Vec<f64>,
}

impl<T: Real> OscillatoryPhase<T> {
    /// Phase from a closed-form `ψ` and its gradient magnitude.
    pub fn new(
        grid: &Arc<DomainGrid<T>>,
        h: f64,
        psi: impl Fn(Complex<f64>) -> f64,
        grad: impl Fn(Complex<f64>) -> f64,
    ) -> Result<Self> {
        if !(h > 0.0) {
            return Err(Error::Precondition(format!("h must be positive, got {h}")));
        }
        let field = MatrixField::scalar(grid, FormType::Function, |z| Complex::new(psi(z), 0.0));
        let grad_norm = grid.nodes().map(grad).collect();
        Ok(OscillatoryPhase { psi: field, h, sign: 1.0, grad_norm })
    }

    /// The phase `ψ = Im (z − z₀)² = 2(x − x₀)(y − y₀)`.
    pub fn quadratic(grid: &Arc<DomainGrid<T>>, z0: Complex<f64>, h: f64) -> Result<Self> {
        Self::new(grid, h, move |z| ((z - z0) * (z - z0)).im, move |z| 2.0 * (z - z0).norm())
    }

    pub fn with_h(&self, h: f64) -> Self {
        OscillatoryPhase { h, ..self.clone() }
    }

    pub fn negated(&self) -> Self {
        OscillatoryPhase { sign: -self.sign, ..self.clone() }
    }

    /// Smallest `h` allowed on this grid for inputs supported on `support`:
    /// eight nodes per wavelength of `e^{2iψ/h}`.
    pub fn min_h(&self, support: &[bool]) -> f64 {
        let hs = self.psi.grid.spacing.f64();
        let g = self.grad_norm.iter().zip(support).filter(|(_, s)| **s).map(|(g, _)| *g).fold(0.0, f64::max);
        8.0 * hs * g / PI
    }

    pub fn check_resolution(&self, support: &[bool]) -> Result<()> {
        let hmin = self.min_h(support);
        if self.h < hmin * (1.0 - 1e-12) {
            return Err(Error::Resolution(format!(
                "h = {:.4e} is below the resolved minimum {:.4e} for n = {}",
                self.h, hmin, self.psi.grid.n
            )));
        }
        Ok(())
    }
}

/// Smallest even `n` that resolves `e^{2iψ/h}` for `|∇ψ| ≤ grad_max` on a
/// square of half side `half_side`.
pub fn resolved_n(h: f64, grad_max: f64, half_side: f64) -> usize {
    let hs = PI * h / (8.0 * grad_max);
    let n = (2.0 * half_side / hs).ceil() as usize;
    (n + n % 2).max(16)
}

/// `∂̄⁻¹ f` over the whole square.
pub fn dbar_inv<T: Real>(f: &MatrixField<T>) -> MatrixField<T> {
    CauchyTransform::new(&f.grid).dbar_inv(f)
}

/// `∂⁻¹ f` over the whole square.
pub fn d_inv<T: Real>(f: &MatrixField<T>) -> MatrixField<T> {
    CauchyTransform::new(&f.grid).d_inv(f)
}

/// Right inverse of `∂̄*` over the whole square.
pub fn dbar_star_inv<T: Real>(f: &MatrixField<T>) -> Result<MatrixField<T>> {
    CauchyTransform::new(&f.grid).dbar_star_inv(f)
}

pub fn osc_dbar_inv<T: Real>(f: &MatrixField<T>, phase: &OscillatoryPhase<T>) -> Result<MatrixField<T>> {
    CauchyTransform::for_extended(&f.grid).osc_dbar_inv(f, phase)
}

pub fn osc_dbar_star_inv<T: Real>(f: &MatrixField<T>, phase: &OscillatoryPhase<T>) -> Result<MatrixField<T>> {
    CauchyTransform::for_extended(&f.grid).osc_dbar_star_inv(f, phase)
}

pub fn adjoint_osc_probe<T: Real>(v: &MatrixField<T>, phase: &OscillatoryPhase<T>) -> Result<T> {
    CauchyTransform::with_supports(&v.grid, Support::Disk(1.0), Support::Disk(1.0)).adjoint_osc_probe(v, phase)
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let k = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / k;
    let my = ly.iter().sum::<f64>() / k;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}
