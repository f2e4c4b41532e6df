//! Holomorphic trivializations, gauge actions on block potentials and the
//! gauge-equivalence check.

use crate::cauchy::{CauchyTransform, Kernel, Support};
use crate::diff::{dbar, dz, FD_HALF_WIDTH};
use crate::dirac::{apply_operator, BlockPotential, FieldPair, Layout};
use crate::error::{Error, Result};
use crate::field::{taper_between, trace_boundary_order, BoundaryTrace, DomainGrid, FormType, MatrixField, C_FORM, TRACE_ORDER};
use crate::linalg::{gmres, Mat};
use crate::scalar::{c, c64, cof, Real, C};
use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::sync::Arc;

/// An invertible matrix field with its diagnostics.
#[derive(Clone, Debug)]
pub struct GaugeTransform<T: Real> {
    pub f: MatrixField<T>,
    /// `max |F − Id|` over the boundary circle.
    pub boundary_defect: f64,
    /// `min |det F|` over the disk.
    pub det_floor: f64,
    pub boundary_normalized: bool,
    /// Relative residual of the defining equation, when there is one.
    pub residual: f64,
}

impl<T: Real> GaugeTransform<T> {
    pub fn new(f: MatrixField<T>, residual: f64) -> Self {
        let (boundary_defect, det_floor) = diagnostics(&f);
        GaugeTransform { f, boundary_defect, det_floor, boundary_normalized: boundary_defect < 1e-6, residual }
    }

    pub fn identity(grid: &Arc<DomainGrid<T>>, n: usize) -> Self {
        Self::new(MatrixField::identity(grid, n), 0.0)
    }
}

fn diagnostics<T: Real>(f: &MatrixField<T>) -> (f64, f64) {
    let id = MatrixField::identity(&f.grid, f.rows);
    let bd = trace_boundary_order(&f.sub(&id.with_form(f.form)), TRACE_ORDER).max_abs().f64();
    let det = f.det();
    let floor = det
        .data
        .iter()
        .zip(&f.grid.mask)
        .filter(|(_, m)| **m)
        .map(|(d, _)| d.norm().f64())
        .fold(f64::INFINITY, f64::min);
    (bd, floor)
}

/// Solver controls for the trivialization equations.
#[derive(Clone, Debug)]
pub struct TrivializeOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Fixed-point iteration is used below this contraction estimate.
    pub fixed_point_limit: f64,
    pub restart: usize,
}

impl Default for TrivializeOptions {
    fn default() -> Self {
        TrivializeOptions { tol: 1e-12, max_iter: 400, fixed_point_limit: 0.8, restart: 60 }
    }
}

/// Solve `∂̄F = F·A` with `F(0) = Id`.
pub fn trivialize<T: Real>(a: &MatrixField<T>, opts: &TrivializeOptions) -> Result<GaugeTransform<T>> {
    solve_trivialization(a, Kernel::Dbar, opts)
}

/// Solve `∂G = G·B` with `G(0) = Id`.
pub fn trivialize_anti<T: Real>(b: &MatrixField<T>, opts: &TrivializeOptions) -> Result<GaugeTransform<T>> {
    solve_trivialization(b, Kernel::D, opts)
}

fn solve_trivialization<T: Real>(a: &MatrixField<T>, kernel: Kernel, opts: &TrivializeOptions) -> Result<GaugeTransform<T>> {
    if a.rows != a.cols {
        return Err(Error::Shape(format!("connection block must be square, got {}x{}", a.rows, a.cols)));
    }
    let grid = a.grid.clone();
    let n = a.rows;
    let id = MatrixField::identity(&grid, n);
    if a.max_abs() == T::zero() {
        return Ok(GaugeTransform::new(id, 0.0));
    }
    let (t, r0, r1) = wide_collar_transform(&grid);
    let w: Vec<T> = grid.nodes().map(|z| T::of(taper_between(z.norm(), r0, r1))).collect();
    let ext = a.clone().with_form(FormType::Function).times_weights(&w);
    let region: Vec<bool> = grid.nodes().map(|z| z.norm() < r1).collect();
    let map = |x: &MatrixField<T>| t.apply(&x.matmul(&ext).with_form(FormType::Function), kernel);
    let rho = contraction(&grid, n, &region, &map);
    let mut f = id.clone();
    let mut done = false;
    if rho < opts.fixed_point_limit {
        for _ in 0..opts.max_iter {
            let next = id.add(&map(&f));
            let step = next.sub(&f).norm_on(&region).f64() / next.norm_on(&region).f64();
            f = next;
            if step < opts.tol * (1.0 - rho) {
                done = true;
                break;
            }
        }
    }
    if !done {
        let shape = id.clone();
        let mut op = |x: &[C<T>]| -> Vec<C<T>> {
            let mut p = shape.clone();
            p.data.copy_from_slice(x);
            p.sub(&map(&p)).data
        };
        let (x, rep) = gmres(&mut op, &id.data, opts.restart, opts.max_iter, opts.tol);
        if !rep.converged {
            return Err(Error::Singular(format!("trivialization failed: GMRES stalled at {:.3e}", rep.relative_residual)));
        }
        f.data.copy_from_slice(&x);
    }
    // left constant factor pins F(0) = Id
    let center = grid.index(grid.n / 2, grid.n / 2);
    let f0 = f.at(center).inverse().ok_or_else(|| Error::Singular("trivialization failed: F(0) is singular".into()))?;
    let f = MatrixField::constant(&grid, &f0, FormType::Function).matmul(&f).with_form(FormType::Function);
    let residual = trivialization_residual(&f, a, kernel);
    Ok(GaugeTransform::new(f, residual))
}

/// Transform whose support reaches almost to the edge of the square, so the
/// taper collar spans as many nodes as the grid allows.
fn wide_collar_transform<T: Real>(grid: &Arc<DomainGrid<T>>) -> (CauchyTransform<T>, f64, f64) {
    let hs = grid.spacing.f64();
    let r0 = 1.0 + COLLAR_OFFSET * hs;
    let r1 = grid.half_side.f64() - 2.0 * hs;
    if r1 > r0 + 4.0 * hs {
        (CauchyTransform::with_supports(grid, Support::Disk(r1), Support::Disk(r1)), r0, r1)
    } else {
        let t = CauchyTransform::for_extended(grid);
        let w = t.taper_width;
        (t, 1.0 + 0.5 * w, 1.0 + w)
    }
}

const COLLAR_OFFSET: f64 = 8.0;

fn contraction<T: Real>(grid: &Arc<DomainGrid<T>>, n: usize, region: &[bool], map: &dyn Fn(&MatrixField<T>) -> MatrixField<T>) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut x = MatrixField::zeros(grid, n, n, FormType::Function);
    let nn = grid.len();
    for e in 0..n * n {
        for k in 0..nn {
            if region[k] {
                x.data[e * nn + k] = c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            }
        }
    }
    let mut r = 0.0;
    for _ in 0..6 {
        let nx = x.norm_on(region).f64();
        x = map(&x.scale(c(1.0 / nx, 0.0)));
        r = x.norm_on(region).f64();
    }
    r
}

/// `‖∂̄F − F·A‖ / ‖F·A‖` (or with `∂`) on nodes whose stencils stay inside.
pub fn trivialization_residual<T: Real>(f: &MatrixField<T>, a: &MatrixField<T>, kernel: Kernel) -> f64 {
    let inner = f.grid.interior_mask(FD_HALF_WIDTH);
    let d = match kernel {
        Kernel::Dbar => dbar(f),
        Kernel::D => dz(f),
    };
    let fa = f.matmul(a).with_form(d.form);
    let den = fa.norm_on(&inner).f64().max(f.norm_on(&inner).f64() * 1e-300);
    d.sub(&fa).norm_on(&inner).f64() / den
}

/// `max |∂̄ log det F − tr A|` over the interior, computed as
/// `∂̄(det F)/det F`.
pub fn det_identity_defect<T: Real>(g: &GaugeTransform<T>, a: &MatrixField<T>, kernel: Kernel) -> f64 {
    let det = g.f.det();
    let d = match kernel {
        Kernel::Dbar => dbar(&det),
        Kernel::D => dz(&det),
    };
    let tr = a.trace();
    let inner = g.f.grid.interior_mask(FD_HALF_WIDTH);
    let mut worst = 0.0f64;
    for k in 0..det.data.len() {
        if inner[k] {
            let v = c64(d.data[k]) / c64(det.data[k]) - c64(tr.data[k]);
            worst = worst.max(v.norm());
        }
    }
    worst
}

/// The `(0,1)` connection `A'` behind the `A'*` slot of a Dirac-layout
/// potential: the slot holds `2A'†`.
pub fn second_connection_form<T: Real>(pot: &BlockPotential<T>) -> MatrixField<T> {
    match pot.layout {
        Layout::Dirac => pot.second_connection().adjoint().scale(c(1.0 / C_FORM, 0.0)).with_form(FormType::Form01),
        Layout::Domain => pot.second_connection().clone(),
    }
}

/// Diagonalize a potential with the trivializations of its connection
/// blocks. Dirac layout: `Ṽ = diag((F_{A'}†)⁻¹ Q⁺ F_A⁻¹, F_A Q⁻ F_{A'}†)`.
/// Domain layout: off-diagonal blocks `F Q⁺ G⁻¹` and `G Q⁻ F⁻¹`.
pub fn conjugate_potential<T: Real>(pot: &BlockPotential<T>, f: &GaugeTransform<T>, g: &GaugeTransform<T>) -> Result<BlockPotential<T>> {
    let fi = f.f.inverse().map_err(|_| Error::Singular("F is singular at some node".into()))?;
    let gi = g.f.inverse().map_err(|_| Error::Singular("second trivialization is singular at some node".into()))?;
    match pot.layout {
        Layout::Dirac => {
            let gs = g.f.adjoint();
            let gsi = gi.adjoint();
            let qp = gsi.matmul(pot.q_plus()).matmul(&fi);
            let qm = f.f.matmul(pot.q_minus()).matmul(&gs);
            BlockPotential::diagonal(qp, qm)
        }
        Layout::Domain => {
            let z = MatrixField::zeros(pot.grid(), pot.n(), pot.n(), FormType::Function);
            let qp = f.f.matmul(pot.q_plus()).matmul(&gi);
            let qm = g.f.matmul(pot.q_minus()).matmul(&fi);
            BlockPotential::domain(z.clone(), qp, qm, z)
        }
    }
}

/// Outer factors `(P, R)` with `D + V = P (D + Ṽ) R` for the diagonalized
/// `Ṽ` of [`conjugate_potential`].
pub fn factorization_factors<T: Real>(
    layout: Layout,
    f: &GaugeTransform<T>,
    g: &GaugeTransform<T>,
) -> Result<([MatrixField<T>; 2], [MatrixField<T>; 2])> {
    let fi = f.f.inverse()?;
    let gi = g.f.inverse()?;
    Ok(match layout {
        Layout::Dirac => ([g.f.adjoint(), fi], [f.f.clone(), gi.adjoint()]),
        Layout::Domain => ([fi, gi], [f.f.clone(), g.f.clone()]),
    })
}

/// `‖(D+V)U − P(D+Ṽ)RU‖ / ‖(D+V)U‖` on a smooth test section.
pub fn factorization_residual<T: Real>(pot: &BlockPotential<T>, diag: &BlockPotential<T>, f: &GaugeTransform<T>, g: &GaugeTransform<T>, u: &FieldPair<T>) -> Result<f64> {
    let ([p1, p2], [r1, r2]) = factorization_factors(pot.layout, f, g)?;
    let lhs = apply_operator(pot, u)?;
    let ru = FieldPair::new(r1.matmul(&u.u).with_form(u.u.form), r2.matmul(&u.v).with_form(u.v.form));
    let mid = apply_operator(diag, &ru)?;
    let rhs = FieldPair::new(p1.matmul(&mid.u).with_form(lhs.u.form), p2.matmul(&mid.v).with_form(lhs.v.form));
    let inner = pot.grid().interior_mask(FD_HALF_WIDTH);
    Ok(lhs.sub(&rhs).norm_on(&inner).f64() / lhs.norm_on(&inner).f64())
}

/// Result of the holomorphic-extension test in [`match_boundary`].
#[derive(Clone, Debug, Serialize)]
pub struct MatchReport {
    /// Largest negative-mode coefficient of `F₂F₁⁻¹` on the circle relative
    /// to its boundary norm.
    pub orthogonality_defect: f64,
    pub tolerance: f64,
    /// Modes tested on each side.
    pub modes: usize,
}

/// Replace `F₂` by `H⁻¹F₂` where `H` is the holomorphic extension of
/// `F₂F₁⁻¹|∂Ω`, so both transforms share boundary values.
pub fn match_boundary<T: Real>(
    f1: &GaugeTransform<T>,
    f2: &GaugeTransform<T>,
    kernel: Kernel,
    degree: usize,
) -> Result<(GaugeTransform<T>, GaugeTransform<T>, MatchReport, MatrixField<T>)> {
    let grid = f1.f.grid.clone();
    let n = f1.f.rows;
    let ratio = f2.f.matmul(&f1.f.inverse()?).with_form(FormType::Function);
    let tr = trace_boundary_order(&ratio, TRACE_ORDER);
    // holomorphic (∂̄ trivializations) boundary values have no negative
    // modes; antiholomorphic ones (∂ trivializations) no positive modes
    let sgn: i64 = match kernel {
        Kernel::Dbar => 1,
        Kernel::D => -1,
    };
    let modes = 2 * degree.max(1);
    let norm = tr.norm().f64() / (2.0 * std::f64::consts::PI).sqrt();
    let mut defect = 0.0f64;
    for e in 0..n * n {
        for k in 1..=modes as i64 {
            defect = defect.max(fourier(&tr, e, -sgn * k).norm());
        }
    }
    let rel = defect / norm.max(f64::MIN_POSITIVE);
    let tol = 1e-5;
    let report = MatchReport { orthogonality_defect: rel, tolerance: tol, modes };
    if rel > tol {
        return Err(Error::Numerical(format!(
            "no consistent boundary normalization: orthogonality defect {rel:.3e} exceeds {tol:.1e}"
        )));
    }
    let h = extend_from_boundary(&grid, &tr, n, sgn);
    let hi = h.inverse().map_err(|_| Error::Singular("holomorphic extension is singular".into()))?;
    let f2m = hi.matmul(&f2.f).with_form(FormType::Function);
    Ok((f1.clone(), GaugeTransform::new(f2m, f2.residual), report, h))
}

fn fourier<T: Real>(t: &BoundaryTrace<T>, e: usize, q: i64) -> Complex<f64> {
    let d = t.dim();
    let mut acc = Complex::new(0.0, 0.0);
    for k in 0..t.len() {
        acc += c64(t.values[k * d + e]) * Complex::from_polar(1.0, -(q as f64) * t.angles[k].f64());
    }
    acc / t.len() as f64
}

/// `Σ_{k≥0} ĝ(±k) z^k` (or `z̄^k`) on every node inside the extended disk.
fn extend_from_boundary<T: Real>(grid: &Arc<DomainGrid<T>>, tr: &BoundaryTrace<T>, n: usize, sgn: i64) -> MatrixField<T> {
    let kmax = tr.len() / 2 - 1;
    let mut coeffs: Vec<Vec<Complex<f64>>> = (0..n * n).map(|e| (0..=kmax).map(|k| fourier(tr, e, sgn * k as i64)).collect()).collect();
    let scale = coeffs.iter().flatten().fold(0.0f64, |m, z| m.max(z.norm()));
    // drop the noise tail so the series stays tame on the collar
    let last = coeffs.iter().map(|cs| cs.iter().rposition(|z| z.norm() > 1e-10 * scale).unwrap_or(0)).max().unwrap_or(0);
    for cs in coeffs.iter_mut() {
        cs.truncate(last + 1);
    }
    // traces and stencils look a few nodes past the circle; beyond that the
    // extension is set to the identity
    let reach = 1.0 + 8.0 * grid.spacing.f64();
    let mut out = MatrixField::identity(grid, n);
    let nn = grid.len();
    for (k, z) in grid.nodes().enumerate() {
        if z.norm() >= reach {
            continue;
        }
        let w = if sgn > 0 { z } else { z.conj() };
        for (e, cs) in coeffs.iter().enumerate() {
            let mut acc = Complex::new(0.0, 0.0);
            for a in cs.iter().rev() {
                acc = acc * w + a;
            }
            out.data[e * nn + k] = cof(acc);
        }
    }
    out
}

/// `exp(β(z)K)` with `β = |z|²(1 − |z|²)(1 + 0.3x)`, so the gauge is `Id` at
/// the center and on the circle. `K = M`, or its anti-Hermitian part when
/// `unitary` is set.
pub fn boundary_identity_gauge<T: Real>(grid: &Arc<DomainGrid<T>>, m: &Mat<T>, unitary: bool) -> MatrixField<T> {
    profile_gauge(grid, m, unitary, |z| z.norm_sqr() * (1.0 - z.norm_sqr()) * (1.0 + 0.3 * z.re))
}

/// `exp(β(z)K)` for a scalar profile `β`.
pub fn profile_gauge<T: Real>(grid: &Arc<DomainGrid<T>>, m: &Mat<T>, unitary: bool, beta: impl Fn(Complex<f64>) -> f64) -> MatrixField<T> {
    let m64 = Mat::<f64>::from_fn(m.rows, m.cols, |i, j| c64(m.at(i, j)));
    let k = if unitary { m64.sub(&m64.adjoint()).scale(Complex::new(0.5, 0.0)) } else { m64 };
    let nn = grid.len();
    let mut out = MatrixField::identity(grid, k.rows);
    for idx in 0..nn {
        let b = beta(grid.node(idx));
        if b == 0.0 {
            continue;
        }
        let e = expm(&k.scale(Complex::new(b, 0.0)));
        for (j, v) in e.data.iter().enumerate() {
            out.data[j * nn + idx] = cof(*v);
        }
    }
    out
}

/// Matrix exponential by scaling and squaring with a Taylor core.
pub fn expm(k: &Mat<f64>) -> Mat<f64> {
    let norm = k.max_abs() * k.rows as f64;
    let sq = if norm > 0.5 { (norm / 0.5).log2().ceil() as u32 } else { 0 };
    let a = k.scale(Complex::new(0.5f64.powi(sq as i32), 0.0));
    let mut term = Mat::identity(k.rows);
    let mut sum = Mat::identity(k.rows);
    for j in 1..20 {
        term = term.mul(&a).scale(Complex::new(1.0 / j as f64, 0.0));
        sum = sum.add(&term);
    }
    for _ in 0..sq {
        sum = sum.mul(&sum);
    }
    sum
}

/// Gauge action of `P = diag(P₁, P₂)` with `D + V' = P⁻¹ (D + V) P`.
///
/// Dirac layout requires `P₁ = P₂ = P` and gives
/// `V' = [[P⁻¹Q⁺P, P⁻¹A'*P − 2P⁻¹∂P], [P⁻¹AP + P⁻¹∂̄P, P⁻¹Q⁻P]]`.
/// Domain layout accepts distinct `(P, R)`:
/// `V' = [[P⁻¹AP + P⁻¹∂̄P, P⁻¹Q⁺R], [R⁻¹Q⁻P, R⁻¹BR + R⁻¹∂R]]`.
pub fn gauge_action<T: Real>(pot: &BlockPotential<T>, p: &MatrixField<T>, r: &MatrixField<T>) -> Result<BlockPotential<T>> {
    let pi = p.inverse()?;
    let ri = r.inverse()?;
    let [b0, b1, b2, b3] = &pot.blocks;
    let conj = |l: &MatrixField<T>, m: &MatrixField<T>, rr: &MatrixField<T>| l.matmul(m).matmul(rr).with_form(m.form);
    match pot.layout {
        Layout::Dirac => {
            if p.sub(r).max_abs() != T::zero() {
                return Err(Error::Precondition("Dirac-layout gauges act by the same matrix on both slots".into()));
            }
            let dp = pi.matmul(&dz(p)).scale(c(-C_FORM, 0.0));
            let dbp = pi.matmul(&dbar(p));
            BlockPotential::dirac(
                conj(&pi, b0, p),
                conj(&pi, b1, p).add(&dp.with_form(b1.form)),
                conj(&pi, b2, p).add(&dbp.with_form(b2.form)),
                conj(&pi, b3, p),
            )
        }
        Layout::Domain => BlockPotential::domain(
            conj(&pi, b0, p).add(&pi.matmul(&dbar(p)).with_form(b0.form)),
            conj(&pi, b1, r),
            conj(&ri, b2, p),
            conj(&ri, b3, r).add(&ri.matmul(&dz(r)).with_form(b3.form)),
        ),
    }
}

/// Per-stage residuals of the gauge-equivalence chain.
#[derive(Clone, Debug, Serialize)]
pub struct GaugeReport {
    pub layout: Layout,
    pub trivialization_residuals: [f64; 4],
    pub match_defects: [f64; 2],
    /// `max |F − Id|`, `max |G − Id|` on the circle after matching.
    pub boundary_defects: [f64; 2],
    /// Relative max-norm residuals of `Q₁⁺ = F Q₂⁺ G⁻¹` and `Q₁⁻ = G Q₂⁻ F⁻¹`
    /// (domain layout) or `Q₁⁺ = (G⁻¹)† Q₂⁺ F⁻¹` and `Q₁⁻ = F Q₂⁻ G†`
    /// (Dirac layout).
    pub q_plus_residual: f64,
    pub q_minus_residual: f64,
    /// Residuals of the connection transformation laws for both blocks.
    pub connection_residuals: [f64; 2],
    /// `max |F⁻¹ − F†|` over the disk.
    pub unitarity_defect: f64,
    /// Dirac layout: `max |G† − F⁻¹|` (both trivializations describe one gauge).
    pub pairing_defect: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// The gauge `F = F₁⁻¹F₂` (and `G`) relating two potentials, with diagnostics.
pub struct GaugeChain<T: Real> {
    pub f: MatrixField<T>,
    pub g: MatrixField<T>,
    pub report: GaugeReport,
}

/// Run trivialize → match_boundary → compare for two potentials of the same layout.
pub fn gauge_equivalence_check<T: Real>(v1: &BlockPotential<T>, v2: &BlockPotential<T>, tol: f64) -> Result<GaugeChain<T>> {
    if v1.layout != v2.layout || v1.n() != v2.n() {
        return Err(Error::Shape("potentials differ in layout or size".into()).at("input"));
    }
    let opts = TrivializeOptions::default();
    let (k1, k2) = match v1.layout {
        Layout::Dirac => (Kernel::Dbar, Kernel::Dbar),
        Layout::Domain => (Kernel::Dbar, Kernel::D),
    };
    let a1 = v1.a().clone();
    let a2 = v2.a().clone();
    let b1 = second_connection_form(v1);
    let b2 = second_connection_form(v2);
    let tf1 = solve_trivialization(&a1, k1, &opts).map_err(|e| e.at("trivialize A1"))?;
    let tf2 = solve_trivialization(&a2, k1, &opts).map_err(|e| e.at("trivialize A2"))?;
    let tg1 = solve_trivialization(&b1, k2, &opts).map_err(|e| e.at("trivialize second connection 1"))?;
    let tg2 = solve_trivialization(&b2, k2, &opts).map_err(|e| e.at("trivialize second connection 2"))?;
    let degree = crate::cauchydata::DEFAULT_DEGREE;
    let (_, tf2m, mf, _) = match_boundary(&tf1, &tf2, k1, degree).map_err(|e| e.at("match F"))?;
    let (_, tg2m, mg, _) = match_boundary(&tg1, &tg2, k2, degree).map_err(|e| e.at("match G"))?;
    let f = tf1.f.inverse().map_err(|e| e.at("invert F1"))?.matmul(&tf2m.f).with_form(FormType::Function);
    let g = tg1.f.inverse().map_err(|e| e.at("invert G1"))?.matmul(&tg2m.f).with_form(FormType::Function);
    let fi = f.inverse().map_err(|e| e.at("invert F"))?;
    let gi = g.inverse().map_err(|e| e.at("invert G"))?;
    let mask = v1.grid().interior_mask(FD_HALF_WIDTH);
    let rel = |a: &MatrixField<T>, b: &MatrixField<T>| {
        let s = a.max_abs_on(&mask).f64().max(b.max_abs_on(&mask).f64()).max(1.0);
        a.clone().with_form(b.form).sub(b).max_abs_on(&mask).f64() / s
    };
    let (qp_pred, qm_pred) = match v1.layout {
        Layout::Domain => (f.matmul(v2.q_plus()).matmul(&gi), g.matmul(v2.q_minus()).matmul(&fi)),
        Layout::Dirac => (gi.adjoint().matmul(v2.q_plus()).matmul(&fi), f.matmul(v2.q_minus()).matmul(&g.adjoint())),
    };
    // A₂ = F⁻¹A₁F + F⁻¹∂̄F and the analogue for the second connection
    let d1 = |m: &MatrixField<T>| match k1 {
        Kernel::Dbar => dbar(m),
        Kernel::D => dz(m),
    };
    let d2 = |m: &MatrixField<T>| match k2 {
        Kernel::Dbar => dbar(m),
        Kernel::D => dz(m),
    };
    let a_pred = fi.matmul(&a1).matmul(&f).add(&fi.matmul(&d1(&f)).with_form(FormType::Function));
    let b_pred = gi.matmul(&b1).matmul(&g).add(&gi.matmul(&d2(&g)).with_form(FormType::Function));
    let unitarity = fi.sub(&f.adjoint()).max_abs_on(&v1.grid().mask).f64();
    let pairing = match v1.layout {
        Layout::Dirac => g.adjoint().sub(&fi).max_abs_on(&v1.grid().mask).f64(),
        Layout::Domain => 0.0,
    };
    let bdef = |m: &MatrixField<T>| {
        let id = MatrixField::identity(&m.grid, m.rows);
        trace_boundary_order(&m.sub(&id), TRACE_ORDER).max_abs().f64()
    };
    let mut report = GaugeReport {
        layout: v1.layout,
        trivialization_residuals: [tf1.residual, tf2.residual, tg1.residual, tg2.residual],
        match_defects: [mf.orthogonality_defect, mg.orthogonality_defect],
        boundary_defects: [bdef(&f), bdef(&g)],
        q_plus_residual: rel(&qp_pred, v1.q_plus()),
        q_minus_residual: rel(&qm_pred, v1.q_minus()),
        connection_residuals: [rel(&a_pred, &a2), rel(&b_pred, &b2)],
        unitarity_defect: unitarity,
        pairing_defect: pairing,
        tolerance: tol,
        passed: false,
    };
    report.passed = report.q_plus_residual < tol
        && report.q_minus_residual < tol
        && report.connection_residuals.iter().all(|r| *r < tol)
        && report.boundary_defects.iter().all(|r| *r < tol);
    Ok(GaugeChain { f, g, report })
}

/// Random polynomial section with a Gaussian envelope, used by
/// operator-identity checks.
pub fn random_section<T: Real>(grid: &Arc<DomainGrid<T>>, n: usize, layout: Layout, seed: u64) -> FieldPair<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut coef = || Complex::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
    let cs: Vec<[Complex<f64>; 4]> = (0..2 * n).map(|_| [coef(), coef(), coef(), coef()]).collect();
    let bump = |z: Complex<f64>| (-z.norm_sqr()).exp();
    let make = |off: usize, form: FormType| {
        let cs = cs.clone();
        MatrixField::from_fn(grid, n, 1, form, move |z| {
            (0..n).map(|i| {
                let k = &cs[off + i];
                (k[0] + k[1] * z + k[2] * z.conj() + k[3] * z * z) * bump(z)
            }).collect()
        })
    };
    let vform = match layout {
        Layout::Dirac => FormType::Form01,
        Layout::Domain => FormType::Function,
    };
    FieldPair::new(make(0, FormType::Function), make(n, vform))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::build_domain;

    fn grid(n: usize) -> Arc<DomainGrid<f64>> {
        build_domain::<f64>(n + n / 4, 1.5).unwrap()
    }

    fn smooth_a(g: &Arc<DomainGrid<f64>>) -> MatrixField<f64> {
        MatrixField::from_fn(g, 2, 2, FormType::Form01, |z| {
            let b = (-z.norm_sqr()).exp();
            vec![Complex::new(0.3 * b, 0.1), z * 0.2, Complex::new(0.0, 0.25 * b), Complex::new(-0.2, 0.0) * z.conj()]
        })
    }

    fn gauge(g: &Arc<DomainGrid<f64>>, m: [Complex<f64>; 4], unitary: bool) -> MatrixField<f64> {
        boundary_identity_gauge(g, &Mat::from_fn(2, 2, |i, j| m[2 * i + j]), unitary)
    }

    #[test]
    fn zero_connection_is_trivial() {
        let g = grid(32);
        let z = MatrixField::zeros(&g, 2, 2, FormType::Form01);
        let t = trivialize(&z, &TrivializeOptions::default()).unwrap();
        assert_eq!(t.f.sub(&MatrixField::identity(&g, 2)).max_abs(), 0.0);
        assert_eq!(t.boundary_defect, 0.0);
    }

    #[test]
    fn scalar_connection_closed_form() {
        let g = grid(160);
        // α = ∂̄(z̄²/2 + x) so ∂̄⁻¹α differs from z̄²/2 + x by a holomorphic function
        let alpha = MatrixField::scalar(&g, FormType::Form01, |z| z.conj() + 0.5);
        let t = trivialize(&alpha, &TrivializeOptions::default()).unwrap();
        let inner = g.interior_mask(FD_HALF_WIDTH);
        let exact = MatrixField::scalar(&g, FormType::Function, |z| (z.conj() * z.conj() * 0.5 + z.re).exp());
        // F and the closed form differ by a holomorphic factor; their ratio must be holomorphic
        let ratio = t.f.times_scalar(&exact.map(|x| x.inv()));
        let rel = dbar(&ratio).max_abs_on(&inner) / ratio.max_abs_on(&inner);
        assert!(rel < 1e-6, "{rel}");
        assert!(t.residual < 1e-7, "{}", t.residual);
    }

    #[test]
    fn determinant_trace_identity() {
        let g = grid(128);
        let a = smooth_a(&g);
        let t = trivialize(&a, &TrivializeOptions::default()).unwrap();
        assert!(t.residual < 1e-7, "{}", t.residual);
        assert!(det_identity_defect(&t, &a, Kernel::Dbar) < 1e-6);
        assert!(t.det_floor > 0.0);
        let b = a.adjoint().with_form(FormType::Form10);
        let s = trivialize_anti(&b, &TrivializeOptions::default()).unwrap();
        assert!(s.residual < 1e-7, "{}", s.residual);
        assert!(det_identity_defect(&s, &b, Kernel::D) < 1e-6);
    }

    #[test]
    fn recovers_constructed_trivialization() {
        let g = grid(128);
        // compact support: the fixed point tends to Id at infinity, so it must return F₀ itself
        let m = Mat::from_fn(2, 2, |i, j| [Complex::new(0.8, 0.4), Complex::new(1.2, 0.0), Complex::new(0.0, -0.8), Complex::new(0.4, 0.0)][2 * i + j]);
        let f0 = profile_gauge(&g, &m, false, |z| {
            let s2 = z.norm_sqr() / 0.81;
            if s2 < 1.0 { z.norm_sqr() * (1.0 - 1.0 / (1.0 - s2)).exp() } else { 0.0 }
        });
        let a = f0.inverse().unwrap().matmul(&dbar(&f0)).with_form(FormType::Form01);
        let t = trivialize(&a, &TrivializeOptions::default()).unwrap();
        assert!(t.f.sub(&f0).max_abs_masked() < 1e-5);
    }

    #[test]
    fn boundary_matching() {
        let g = grid(96);
        let a = smooth_a(&g);
        let f1 = trivialize(&a, &TrivializeOptions::default()).unwrap();
        let (_, f2m, _, h) = match_boundary(&f1, &f1, Kernel::Dbar, 12).unwrap();
        assert!(f2m.f.sub(&f1.f).max_abs_masked() < 1e-10);
        assert!(h.sub(&MatrixField::identity(&g, 2)).max_abs_masked() < 1e-10);
        let hol = MatrixField::from_fn(&g, 2, 2, FormType::Function, |z| vec![Complex::new(1.0, 0.0), z * 0.1, Complex::new(0.0, 0.0), Complex::new(1.0, 0.0)]);
        let f2 = GaugeTransform::new(hol.matmul(&f1.f), 0.0);
        let (_, _, rep, h) = match_boundary(&f1, &f2, Kernel::Dbar, 12).unwrap();
        assert!(rep.orthogonality_defect < 1e-8);
        assert!(h.sub(&hol).max_abs_masked() < 1e-5);
        let bad = MatrixField::from_fn(&g, 2, 2, FormType::Function, |z| vec![Complex::new(1.0, 0.0), z.conj() * 0.1, Complex::new(0.0, 0.0), Complex::new(1.0, 0.0)]);
        let f3 = GaugeTransform::new(bad.matmul(&f1.f), 0.0);
        match match_boundary(&f1, &f3, Kernel::Dbar, 12) {
            Err(Error::Numerical(m)) => assert!(m.contains("no consistent boundary normalization")),
            other => panic!("expected failure, got {:?}", other.map(|x| x.2)),
        }
    }

    #[test]
    fn diagonalization_identity() {
        let g = grid(128);
        for layout in [Layout::Dirac, Layout::Domain] {
            let a = smooth_a(&g);
            let second = match layout {
                Layout::Dirac => MatrixField::from_fn(&g, 2, 2, FormType::Form10, |z| vec![z * 0.1, Complex::new(0.2, 0.0), Complex::new(0.0, 0.1), z.conj() * 0.2]),
                Layout::Domain => a.adjoint().with_form(FormType::Form10),
            };
            let qp = MatrixField::from_fn(&g, 2, 2, FormType::Function, |z| vec![Complex::new(1.0, 0.0), z, Complex::new(0.3, 0.0), Complex::new(0.5, z.im)]);
            let qm = qp.adjoint();
            let pot = match layout {
                Layout::Dirac => BlockPotential::dirac(qp, second, a, qm).unwrap(),
                Layout::Domain => BlockPotential::domain(a, qp, qm, second).unwrap(),
            };
            let (k2, b) = match layout {
                Layout::Dirac => (Kernel::Dbar, second_connection_form(&pot)),
                Layout::Domain => (Kernel::D, pot.second_connection().clone()),
            };
            let opts = TrivializeOptions::default();
            let f = trivialize(pot.a(), &opts).unwrap();
            let gg = solve_trivialization(&b, k2, &opts).unwrap();
            let diag = conjugate_potential(&pot, &f, &gg).unwrap();
            assert!(diag.is_diagonal(0.0) || layout == Layout::Domain);
            let u = random_section(&g, 2, layout, 4);
            let r = factorization_residual(&pot, &diag, &f, &gg, &u).unwrap();
            assert!(r < 1e-6, "{layout:?} {r}");
        }
    }

    #[test]
    fn conjugate_of_flat_potential_is_unchanged() {
        let g = grid(32);
        let qp = MatrixField::scalar(&g, FormType::Function, |z| z + 1.0);
        let qm = MatrixField::scalar(&g, FormType::Function, |z| z.conj());
        let pot = BlockPotential::diagonal(qp.clone(), qm.clone()).unwrap();
        let id = GaugeTransform::identity(&g, 1);
        let d = conjugate_potential(&pot, &id, &id).unwrap();
        assert_eq!(d.q_plus().data, qp.data);
        assert_eq!(d.q_minus().data, qm.data);
    }

    #[test]
    fn equivalence_of_conjugate_pairs() {
        let g = grid(128);
        let m = [Complex::new(0.2, 0.1), Complex::new(0.3, 0.0), Complex::new(0.0, -0.2), Complex::new(0.1, 0.05)];
        let a = smooth_a(&g);
        let qp = MatrixField::from_fn(&g, 2, 2, FormType::Function, |z| vec![Complex::new(1.0, 0.0), z, Complex::new(0.3, 0.0), Complex::new(0.5, z.im)]);
        let qm = MatrixField::from_fn(&g, 2, 2, FormType::Function, |z| vec![Complex::new(0.4, 0.0), z.conj(), Complex::new(0.0, 0.2), Complex::new(-0.5, 0.0)]);
        // Hermitian-type Dirac potential with A' = A and a unitary gauge
        let slot = a.adjoint().scale(Complex::new(C_FORM, 0.0));
        let v1 = BlockPotential::dirac(qp.clone(), slot, a.clone(), qm.clone()).unwrap();
        let p = gauge(&g, m, true);
        let v2 = gauge_action(&v1, &p, &p).unwrap();
        let chain = gauge_equivalence_check(&v1, &v2, 1e-5).unwrap();
        assert!(chain.report.passed, "{:?}", chain.report);
        assert!(chain.report.unitarity_defect < 1e-5, "{:?}", chain.report);
        // domain layout with distinct, non-unitary gauges
        let b = MatrixField::from_fn(&g, 2, 2, FormType::Form10, |z| vec![z * 0.1, Complex::new(0.2, 0.0), Complex::new(0.0, 0.1), z.conj() * 0.2]);
        let w1 = BlockPotential::domain(a, qp, qm, b).unwrap();
        let r = gauge(&g, [m[3], m[0], m[2], m[1]], false);
        let pn = gauge(&g, m, false);
        let w2 = gauge_action(&w1, &pn, &r).unwrap();
        let chain = gauge_equivalence_check(&w1, &w2, 1e-5).unwrap();
        assert!(chain.report.passed, "{:?}", chain.report);
        let same = gauge_equivalence_check(&w1, &w1, 1e-5).unwrap();
        assert!(same.f.sub(&MatrixField::identity(&g, 2)).max_abs_masked() < 1e-10);
    }

    #[test]
    fn unrelated_potentials_fail() {
        let g = grid(96);
        let a = smooth_a(&g);
        let q = MatrixField::identity(&g, 2);
        let z = MatrixField::zeros(&g, 2, 2, FormType::Form10);
        let v1 = BlockPotential::domain(a.clone(), q.clone(), q.clone(), z.clone()).unwrap();
        let v2 = BlockPotential::domain(a.scale(Complex::new(0.5, 0.0)), q.clone(), q.scale(Complex::new(2.0, 0.0)), z).unwrap();
        match gauge_equivalence_check(&v1, &v2, 1e-5) {
            Ok(c) => assert!(!c.report.passed),
            Err(e) => assert!(matches!(e.root(), Error::Numerical(_))),
        }
    }
}
