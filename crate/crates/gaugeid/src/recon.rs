//! Pointwise extraction of the potential blocks from CGO pairings and a
//! boundary-agreement check on Cauchy data.

use crate::cauchydata::{green_functional, CauchyDataMatrix};
use crate::cgo::{make_incident, make_phase, solve_remainders, CgoKind, CgoOptions, MorsePhase, DEFAULT_MARGIN};
use crate::dirac::{BlockPotential, Layout};
use crate::error::{Error, Result};
use crate::field::{FormType, MatrixField, C_FORM, TRACE_ORDER};
use crate::linalg::{least_squares, Mat};
use crate::quad::disk_rule;
use crate::scalar::{c64, cof, Real};
use num_complex::Complex;
use rayon::prelude::*;
use serde::Serialize;
use std::f64::consts::PI;

/// `|θ(z₀)|²` for `θ = dz̄` under the form pairing.
pub const THETA_NORM_SQ: f64 = C_FORM;

/// The constant `C_{z₀}` in `∫ e^{−2iψ/h} g dA ≈ C h e^{−2iψ(z₀)/h} g(z₀)`.
#[derive(Clone, Debug, Serialize)]
pub struct StationaryPhaseWeight {
    pub z0: (f64, f64),
    pub c: (f64, f64),
    pub h_ref: f64,
    /// Largest relative deviation of the per-`h` estimates from `c`.
    pub drift: f64,
    /// `(h, Re C_h, Im C_h)` for every calibration step.
    pub samples: Vec<(f64, f64, f64)>,
}

impl StationaryPhaseWeight {
    pub fn value(&self) -> Complex<f64> {
        Complex::new(self.c.0, self.c.1)
    }

    /// The weight predicted for the quadratic phase: `π/2` at every `z₀`.
    pub fn analytic(z0: Complex<f64>) -> Self {
        StationaryPhaseWeight { z0: (z0.re, z0.im), c: (PI / 2.0, 0.0), h_ref: 0.0, drift: 0.0, samples: Vec::new() }
    }
}

/// `∫ e^{−2iψ/h} g dA` over the disk of radius `rho` about `z₀`, by a polar
/// Gauss rule fine enough for the oscillation.
pub fn oscillatory_integral<T: Real>(phase: &MorsePhase<T>, h: f64, rho: f64, g: impl Fn(Complex<f64>) -> Complex<f64>) -> Complex<f64> {
    let waves = (2.0 * rho * rho / (PI * h)).ceil() as usize;
    let m = 48 + 12 * waves;
    let (pts, wts) = disk_rule(m, 2 * m, rho);
    let z0 = phase.z0;
    pts.iter()
        .zip(&wts)
        .map(|(p, w)| {
            let z = z0 + p;
            let psi = phase.value(z).im;
            Complex::from_polar(1.0, -2.0 * psi / h) * g(z) * *w
        })
        .sum()
}

/// `exp(1 − 1/(1 − s²))`: equal to `1` at the center, where its expansion is
/// `e^{−s² − s⁴ − …}`, so the first correction to the leading term is
/// `h²/(8ρ⁴)` relative.
fn radial_bump(s: f64) -> f64 {
    if s < 1.0 {
        (1.0 - 1.0 / (1.0 - s * s)).exp()
    } else {
        0.0
    }
}

/// Default calibration sweep. Bumps that fit in the disk are outside the
/// asymptotic regime at `h = 2⁻³`.
pub const CALIBRATION_H: [f64; 4] = [0.0625, 0.03125, 0.015625, 0.0078125];

/// Fit `C` over a dyadic sweep with a pair of wide radial bumps at `z₀`.
pub fn calibrate_weight<T: Real>(phase: &MorsePhase<T>, h_list: &[f64]) -> Result<StationaryPhaseWeight> {
    validate_h_list(h_list)?;
    let z0 = phase.z0;
    let rmax = (0.95 * (1.0 - z0.norm())).min(0.9);
    if rmax <= 0.0 {
        return Err(Error::Precondition(format!("critical point {z0} is not inside the disk")));
    }
    let radii = [rmax, 0.9 * rmax];
    let psi0 = phase.value(z0).im;
    let mut samples = Vec::with_capacity(h_list.len());
    for &h in h_list {
        let mut acc = Complex::new(0.0, 0.0);
        for &rho in &radii {
            let val = oscillatory_integral(phase, h, rho, |z| Complex::new(radial_bump((z - z0).norm() / rho), 0.0));
            acc += val / (h * Complex::from_polar(1.0, -2.0 * psi0 / h));
        }
        samples.push((h, acc / radii.len() as f64));
    }
    let c = richardson(&samples);
    let dev: Vec<f64> = samples.iter().map(|(_, ch)| (ch - c).norm() / c.norm()).collect();
    let drift = dev.iter().cloned().fold(0.0, f64::max);
    if c.norm() == 0.0 || !c.is_finite() {
        return Err(Error::Numerical("stationary-phase weight vanished".into()));
    }
    if dev.len() >= 2 && dev[dev.len() - 1] > dev[0] && dev[0] > 1e-6 {
        return Err(Error::Resolution(format!("calibration residual grows as h decreases ({:.2e} → {:.2e})", dev[0], dev[dev.len() - 1])));
    }
    Ok(StationaryPhaseWeight {
        z0: (z0.re, z0.im),
        c: (c.re, c.im),
        h_ref: h_list[h_list.len() - 1],
        drift,
        samples: samples.iter().map(|(h, v)| (*h, v.re, v.im)).collect(),
    })
}

/// Order-one Richardson extrapolation to `h = 0` from the two smallest `h`.
pub fn richardson(samples: &[(f64, Complex<f64>)]) -> Complex<f64> {
    match samples.len() {
        0 => Complex::new(0.0, 0.0),
        1 => samples[0].1,
        k => {
            let (h1, v1) = samples[k - 2];
            let (h2, v2) = samples[k - 1];
            (v2 * h1 - v1 * h2) / (h1 - h2)
        }
    }
}

fn validate_h_list(h_list: &[f64]) -> Result<()> {
    if h_list.is_empty() {
        return Err(Error::Precondition("h_list is empty".into()));
    }
    if h_list.iter().any(|h| !(*h > 0.0)) || h_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Precondition("h_list must be positive and strictly decreasing".into()));
    }
    Ok(())
}

/// Which diagonal block to extract.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Block {
    /// `Q⁻`, through `F`-type solutions.
    QMinus,
    /// `Q⁺`, through `G`-type solutions.
    QPlus,
}

/// Controls for [`extract_q_at_point`].
#[derive(Clone, Debug)]
pub struct ExtractOptions {
    pub h_list: Vec<f64>,
    pub margin: f64,
    pub cgo: CgoOptions,
    /// Absolute floor below which an extrapolated value counts as zero.
    pub abs_tol: f64,
    /// Largest accepted Richardson correction relative to the result.
    pub max_correction: f64,
    pub weight: Option<StationaryPhaseWeight>,
}

impl Default for ExtractOptions {
    fn default() -> Self {
        ExtractOptions {
            h_list: vec![0.125, 0.0625, 0.03125, 0.015625],
            margin: DEFAULT_MARGIN,
            cgo: CgoOptions::default(),
            abs_tol: 1e-3,
            max_correction: 0.5,
            weight: None,
        }
    }
}

/// One `h` of an extraction.
#[derive(Clone, Debug, Serialize)]
pub struct HSample {
    pub h: f64,
    pub value: (f64, f64),
    /// Relative least-squares residual of the first solution's trace in the
    /// span of the second Cauchy data matrix.
    pub match_residual: f64,
    pub sh_norms: (f64, f64),
}

/// Extraction at one point.
#[derive(Clone, Debug, Serialize)]
pub struct PointExtraction {
    pub z0: (f64, f64),
    pub entry: (usize, usize),
    pub block: Block,
    pub samples: Vec<HSample>,
    /// `h` values skipped, with the reason.
    pub skipped: Vec<(f64, String)>,
    pub value: (f64, f64),
    pub converged: bool,
}

impl PointExtraction {
    pub fn value(&self) -> Complex<f64> {
        Complex::new(self.value.0, self.value.1)
    }
}

/// Extract entry `(j, k)` of `Q₂ − Q₁` at `z₀` for the chosen block.
///
/// `v1` is the known reference potential. `v2_model` generates the solution
/// of the adjoint system for the second operator; `c2` is its Cauchy data,
/// used for the trace-matching diagnostic.
pub fn extract_q_at_point<T: Real>(
    c2: Option<&CauchyDataMatrix<T>>,
    v1: &BlockPotential<T>,
    v2_model: &BlockPotential<T>,
    z0: Complex<f64>,
    entry: (usize, usize),
    block: Block,
    opts: &ExtractOptions,
) -> Result<PointExtraction> {
    validate_h_list(&opts.h_list)?;
    for v in [v1, v2_model] {
        if v.layout != Layout::Dirac || !v.is_diagonal(0.0) {
            return Err(Error::Precondition("extraction needs diagonal Dirac-layout potentials".into()));
        }
    }
    let n = v1.n();
    let (j, k) = entry;
    if j >= n || k >= n || v2_model.n() != n {
        return Err(Error::Shape(format!("entry ({j}, {k}) for {n}x{n} blocks")));
    }
    let grid = v1.grid();
    let phase = make_phase(grid, z0, opts.margin)?;
    let dual = phase.negate();
    let v2_star = v2_model.adjoint()?;
    let weight = opts.weight.clone().unwrap_or_else(|| StationaryPhaseWeight::analytic(z0));
    let cw = weight.value();
    let kind = match block {
        Block::QMinus => CgoKind::F,
        Block::QPlus => CgoKind::G,
    };
    let inc1 = make_incident(grid, n, kind, k)?;
    let inc2 = make_incident(grid, n, kind, j)?;
    let c2m = c2.map(|c| c.matrix());
    let psi0 = phase.value(z0).im;
    let mut samples = Vec::new();
    let mut skipped = Vec::new();
    for &h in &opts.h_list {
        let pair = solve_remainders(v1, &inc1, &phase, h, &opts.cgo).and_then(|f1| Ok((solve_remainders(&v2_star, &inc2, &dual, h, &opts.cgo)?, f1)));
        let (f2, f1) = match pair {
            Ok(p) => p,
            Err(e @ (Error::Resolution(_) | Error::Divergence(_) | Error::Numerical(_))) => {
                skipped.push((h, e.to_string()));
                continue;
            }
            Err(e) => return Err(e),
        };
        let t1 = f1.assembled.trace(TRACE_ORDER);
        let t2 = f2.assembled.trace(TRACE_ORDER);
        let b = green_functional(Layout::Dirac, &t1, &t2)?;
        let denom = match block {
            Block::QMinus => cw * h * THETA_NORM_SQ * Complex::from_polar(1.0, -2.0 * psi0 / h),
            Block::QPlus => cw.conj() * h * Complex::from_polar(1.0, 2.0 * psi0 / h),
        };
        let value = b / denom;
        let match_residual = match &c2m {
            Some(m) => trace_match_residual(m, &t1.values),
            None => f64::NAN,
        };
        samples.push(HSample { h, value: (value.re, value.im), match_residual, sh_norms: (f1.sh_norm, f2.sh_norm) });
    }
    let pts: Vec<(f64, Complex<f64>)> = samples.iter().map(|s| (s.h, Complex::new(s.value.0, s.value.1))).collect();
    let value = richardson(&pts);
    let converged = pts.len() >= 2 && {
        let last = pts[pts.len() - 1].1;
        (value - last).norm() <= opts.max_correction * value.norm().max(opts.abs_tol)
    };
    Ok(PointExtraction {
        z0: (z0.re, z0.im),
        entry,
        block,
        samples,
        skipped,
        value: (value.re, value.im),
        converged,
    })
}

fn trace_match_residual<T: Real>(m: &Mat<T>, values: &[num_complex::Complex<T>]) -> f64 {
    let a = Mat::<f64>::from_fn(m.rows, m.cols, |i, j| c64(m.at(i, j)));
    let b: Vec<Complex<f64>> = values.iter().map(|v| c64(*v)).collect();
    let nb = b.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if nb == 0.0 || a.rows != b.len() {
        return f64::NAN;
    }
    match least_squares(&a, &b) {
        Some(x) => {
            let ax = a.mul_vec(&x);
            ax.iter().zip(&b).map(|(p, q)| (p - q).norm_sqr()).sum::<f64>().sqrt() / nb
        }
        None => f64::NAN,
    }
}

/// Extraction over a lattice of points.
#[derive(Clone, Debug, Serialize)]
pub struct ScanResult {
    pub points: Vec<PointExtraction>,
    /// Relative `L²` error on the converged subset, when a truth is given.
    pub l2_error: Option<f64>,
    pub converged: usize,
}

/// Square lattice of spacing `step` inside the disk of radius `radius`.
pub fn interior_lattice(step: f64, radius: f64) -> Vec<Complex<f64>> {
    let k = (radius / step).floor() as i64;
    let mut out = Vec::new();
    for iy in -k..=k {
        for ix in -k..=k {
            let z = Complex::new(ix as f64 * step, iy as f64 * step);
            if z.norm() <= radius + 1e-12 {
                out.push(z);
            }
        }
    }
    out
}

/// [`extract_q_at_point`] over `z0s` in parallel; per-point failures are
/// recorded as non-converged points.
#[allow(clippy::too_many_arguments)]
pub fn scan_extract<T: Real>(
    c2: Option<&CauchyDataMatrix<T>>,
    v1: &BlockPotential<T>,
    v2_model: &BlockPotential<T>,
    z0s: &[Complex<f64>],
    entry: (usize, usize),
    block: Block,
    opts: &ExtractOptions,
    truth: Option<&(dyn Fn(Complex<f64>) -> Complex<f64> + Sync)>,
) -> ScanResult {
    let points: Vec<PointExtraction> = z0s
        .par_iter()
        .map(|z0| {
            extract_q_at_point(c2, v1, v2_model, *z0, entry, block, opts).unwrap_or_else(|e| PointExtraction {
                z0: (z0.re, z0.im),
                entry,
                block,
                samples: Vec::new(),
                skipped: vec![(f64::NAN, e.to_string())],
                value: (f64::NAN, f64::NAN),
                converged: false,
            })
        })
        .collect();
    let converged = points.iter().filter(|p| p.converged).count();
    let l2_error = truth.map(|t| {
        let (mut num, mut den) = (0.0, 0.0);
        for p in points.iter().filter(|p| p.converged) {
            let tv = t(Complex::new(p.z0.0, p.z0.1));
            num += (p.value() - tv).norm_sqr();
            den += tv.norm_sqr();
        }
        if den > 0.0 {
            (num / den).sqrt()
        } else {
            num.sqrt()
        }
    });
    ScanResult { points, l2_error, converged }
}

/// Nearest-point rendering of a scan onto the grid: each node inside the
/// lattice radius takes `|extracted − truth|` (or `|extracted|`) from the
/// closest converged point.
pub fn scan_field<T: Real>(
    grid: &std::sync::Arc<crate::field::DomainGrid<T>>,
    scan: &ScanResult,
    truth: Option<&(dyn Fn(Complex<f64>) -> Complex<f64> + Sync)>,
) -> MatrixField<T> {
    let pts: Vec<&PointExtraction> = scan.points.iter().filter(|p| p.converged).collect();
    let reach = scan.points.iter().map(|p| Complex::new(p.z0.0, p.z0.1).norm()).fold(0.0, f64::max);
    MatrixField::scalar(grid, FormType::Function, |z| {
        if pts.is_empty() || z.norm() > reach {
            return Complex::new(0.0, 0.0);
        }
        let best = pts
            .iter()
            .min_by(|a, b| {
                let da = (Complex::new(a.z0.0, a.z0.1) - z).norm();
                let db = (Complex::new(b.z0.0, b.z0.1) - z).norm();
                da.total_cmp(&db)
            })
            .unwrap();
        let z0 = Complex::new(best.z0.0, best.z0.1);
        let v = match truth {
            Some(t) => best.value() - t(z0),
            None => best.value(),
        };
        Complex::new(v.norm(), 0.0)
    })
}

/// Comparison of the boundary-concentrated part of two Cauchy data matrices.
#[derive(Clone, Debug, Serialize)]
pub struct BoundaryReport {
    /// `(m, (m + 1)·δ_m)` for each high mode, where `δ_m` is the largest
    /// relative column difference at Hardy mode `m`.
    pub modes: Vec<(usize, f64)>,
    pub signal: f64,
    pub tolerance: f64,
    pub agree: bool,
}

/// Default threshold on the scaled high-mode difference.
pub const BOUNDARY_TOL: f64 = 1e-2;

/// Compare the canonical columns of the upper half of the Hardy modes. Those
/// incident fields concentrate near the circle, and their responses differ
/// at order `1/m` exactly when the potentials differ on the boundary.
pub fn boundary_agreement_check<T: Real>(c1: &CauchyDataMatrix<T>, c2: &CauchyDataMatrix<T>, tol: f64) -> Result<BoundaryReport> {
    if c1.basis_spec != c2.basis_spec {
        return Err(Error::Shape("Cauchy data matrices were built from different bases or grids".into()));
    }
    let spec = &c1.basis_spec;
    let (n, deg) = (spec.n_comp, spec.degree);
    let mut modes = Vec::new();
    for m in deg / 2..deg {
        let mut worst = 0.0f64;
        for s in 0..2 {
            for i in 0..n {
                let col = s * n * deg + m * n + i;
                let (a, b) = (&c1.traces[col], &c2.traces[col]);
                let diff = a.add(&b.scale(cof(Complex::new(-1.0, 0.0)))).norm().f64();
                worst = worst.max(diff / a.norm().f64().max(f64::MIN_POSITIVE));
            }
        }
        modes.push((m, (m + 1) as f64 * worst));
    }
    let signal = modes.iter().map(|(_, v)| *v).fold(0.0, f64::max);
    Ok(BoundaryReport { modes, signal, tolerance: tol, agree: signal <= tol })
}
