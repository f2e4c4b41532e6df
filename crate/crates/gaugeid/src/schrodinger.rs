//! Connection Laplacians `∇*∇ + W` on the disk and their first-order
//! factorization.
//!
//! A Hermitian connection is stored through its `dz̄` coefficient `A`; the
//! connection one-form is `X = A dz̄ − A† dz`, so `X_x = A − A†` and
//! `X_y = −i(A + A†)`, both anti-Hermitian. The curvature is kept as the
//! coefficient `Ω_xy` of `dx ∧ dy`.
//!
//! With `∇ = d + X` and `Δ = ∂²_x + ∂²_y`,
//!
//! ```text
//! ∇*∇ u = −Σ_a (∂_a + X_a)² u = −Δu + (first-order X terms) + (zeroth order)
//!       = 2 (∂̄ + A)*(∂̄ + A) u + iΩ_xy u,
//! ```
//!
//! where the adjoint of `∂̄ + A` uses the `dz̄` pairing weight 2. Writing
//! `g = (∂̄ + A)u`, the system `(∇*∇ + W)u = 0` becomes `(D + V)(u, g) = 0`
//! in the Dirac layout with `Q⁺ = (iΩ_xy + W)/2`, second connection `A` and
//! `Q⁻ = −Id`.

use crate::diff::{dbar, dx, dy, dz, FD_HALF_WIDTH};
use crate::dirac::{apply_operator, stack_traces, BlockPotential, FieldPair};
use crate::error::{Error, Result};
use crate::field::{trace_boundary_order, BoundaryTrace, DomainGrid, FormType, MatrixField, TRACE_ORDER};
use crate::gauge::GaugeChain;
use crate::scalar::{c, c64, cof, Real, C};
use num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::sync::Arc;

/// Hermitian connection with potential on an `n`-dimensional bundle.
#[derive(Clone, Debug)]
pub struct ConnectionData<T: Real> {
    /// `dz̄` coefficient of the connection form.
    pub a: MatrixField<T>,
    /// `[X_x, X_y]`.
    pub x: [MatrixField<T>; 2],
    /// `Ω_xy = ∂_x X_y − ∂_y X_x + [X_x, X_y]`.
    pub omega: MatrixField<T>,
    pub w: MatrixField<T>,
}

/// Pointwise invariant residuals of a [`ConnectionData`].
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct InvariantReport {
    /// `max |X_a + X_a†|`.
    pub anti_hermitian_defect: f64,
    /// Relative gap between `Ω` and `−2i(∂A + ∂̄A† + [A, A†])`.
    pub curvature_defect: f64,
}

#[derive(Serialize, Deserialize)]
struct ConnectionManifest {
    precision: String,
    n: usize,
    grid_n: usize,
    half_side: f64,
    files: Vec<String>,
}

fn function<T: Real>(f: &MatrixField<T>) -> MatrixField<T> {
    f.clone().with_form(FormType::Function)
}

fn interior_rel<T: Real>(a: &MatrixField<T>, b: &MatrixField<T>, mask: &[bool]) -> f64 {
    let s = a.max_abs_on(mask).f64().max(b.max_abs_on(mask).f64()).max(1.0);
    function(a).sub(&function(b)).max_abs_on(mask).f64() / s
}

impl<T: Real> ConnectionData<T> {
    /// Build from the `dz̄` coefficient `A` and the potential `W`.
    pub fn new(a: MatrixField<T>, w: MatrixField<T>) -> Result<Self> {
        if a.rows != a.cols || w.rows != w.cols || a.rows != w.rows {
            return Err(Error::Shape(format!("A is {}x{}, W is {}x{}", a.rows, a.cols, w.rows, w.cols)));
        }
        if !a.grid.same_as(&w.grid) {
            return Err(Error::Shape("A and W live on different grids".into()));
        }
        let a = a.with_form(FormType::Form01);
        let ah = function(&a.adjoint());
        let af = function(&a);
        let xx = af.sub(&ah);
        let xy = af.add(&ah).scale(c(0.0, -1.0));
        let omega = curvature(&xx, &xy);
        Ok(ConnectionData { a, x: [xx, xy], omega, w: function(&w) })
    }

    /// Build from the components of an anti-Hermitian one-form `X`.
    pub fn from_form(x_x: MatrixField<T>, x_y: MatrixField<T>, w: MatrixField<T>, tol: f64) -> Result<Self> {
        let defect = anti_hermitian_defect(&x_x).max(anti_hermitian_defect(&x_y));
        if defect > tol {
            return Err(Error::Precondition(format!("connection form is not anti-Hermitian (defect {defect:.2e})")));
        }
        let a = function(&x_x).add(&function(&x_y).scale(c(0.0, 1.0))).scale(c(0.5, 0.0));
        Self::new(a, w)
    }

    /// Flat connection with zero potential.
    pub fn flat(grid: &Arc<DomainGrid<T>>, n: usize) -> Self {
        let z = MatrixField::zeros(grid, n, n, FormType::Function);
        Self::new(z.clone(), z).expect("zero connection")
    }

    pub fn n(&self) -> usize {
        self.a.rows
    }

    pub fn grid(&self) -> &Arc<DomainGrid<T>> {
        &self.a.grid
    }

    pub fn check_invariants(&self) -> InvariantReport {
        let mask = self.grid().interior_mask(2 * FD_HALF_WIDTH);
        let ah = self.a.adjoint();
        let comm = function(&self.a).matmul(&function(&ah)).sub(&function(&ah).matmul(&function(&self.a)));
        let alt = function(&dz(&self.a)).add(&function(&dbar(&ah))).add(&comm).scale(c(0.0, -2.0));
        InvariantReport {
            anti_hermitian_defect: anti_hermitian_defect(&self.x[0]).max(anti_hermitian_defect(&self.x[1])),
            curvature_defect: interior_rel(&alt, &self.omega, &mask),
        }
    }

    /// Pull back by a gauge `F`: `A ↦ F⁻¹AF + F⁻¹∂̄F`, `W ↦ F⁻¹WF`.
    pub fn gauge(&self, f: &MatrixField<T>) -> Result<Self> {
        let f = function(f);
        let fi = f.inverse()?;
        let a = fi.matmul(&function(&self.a)).matmul(&f).add(&fi.matmul(&function(&dbar(&f))));
        let w = fi.matmul(&self.w).matmul(&f);
        Self::new(a, w)
    }

    /// Write the four fields and a JSON manifest into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let fields = [("a.bin", &self.a), ("x_x.bin", &self.x[0]), ("x_y.bin", &self.x[1]), ("omega.bin", &self.omega), ("w.bin", &self.w)];
        for (name, f) in fields {
            std::fs::write(dir.join(name), f.to_bytes())?;
        }
        let g = self.grid();
        let manifest = ConnectionManifest {
            precision: T::NAME.into(),
            n: self.n(),
            grid_n: g.n,
            half_side: g.half_side.f64(),
            files: fields.iter().map(|(n, _)| n.to_string()).collect(),
        };
        std::fs::write(dir.join("connection.json"), serde_json::to_string_pretty(&manifest)?)?;
        Ok(())
    }

    /// Read back a directory written by [`ConnectionData::save`]; `X` and
    /// `Ω` are recomputed from `A`.
    pub fn load(dir: &Path) -> Result<Self> {
        let _: ConnectionManifest = serde_json::from_slice(&std::fs::read(dir.join("connection.json"))?)?;
        let a = MatrixField::from_bytes(&std::fs::read(dir.join("a.bin"))?)?;
        let w = MatrixField::from_bytes(&std::fs::read(dir.join("w.bin"))?)?;
        Self::new(a, w)
    }
}

fn anti_hermitian_defect<T: Real>(x: &MatrixField<T>) -> f64 {
    x.add(&x.adjoint()).max_abs().f64()
}

/// `∂_x X_y − ∂_y X_x + [X_x, X_y]`.
pub fn curvature<T: Real>(x_x: &MatrixField<T>, x_y: &MatrixField<T>) -> MatrixField<T> {
    dx(x_y).sub(&dy(x_x)).add(&x_x.matmul(x_y)).sub(&x_y.matmul(x_x))
}

/// `∇*∇ + W` bound to one connection.
pub struct ConnectionLaplacian<'a, T: Real> {
    pub data: &'a ConnectionData<T>,
}

pub fn assemble_laplacian<T: Real>(conn: &ConnectionData<T>) -> ConnectionLaplacian<'_, T> {
    ConnectionLaplacian { data: conn }
}

impl<T: Real> ConnectionLaplacian<'_, T> {
    /// `∇_a u = ∂_a u + X_a u` for `a ∈ {x, y}`.
    pub fn covariant(&self, u: &MatrixField<T>, axis: usize) -> MatrixField<T> {
        let u = function(u);
        let d = if axis == 0 { dx(&u) } else { dy(&u) };
        d.add(&self.data.x[axis].matmul(&u))
    }

    /// `∇*∇ u = −Σ_a ∇_a ∇_a u`.
    pub fn rough(&self, u: &MatrixField<T>) -> MatrixField<T> {
        let gx = self.covariant(&self.covariant(u, 0), 0);
        let gy = self.covariant(&self.covariant(u, 1), 1);
        gx.add(&gy).scale(c(-1.0, 0.0))
    }

    /// `(∇*∇ + W) u`.
    pub fn apply(&self, u: &MatrixField<T>) -> MatrixField<T> {
        self.rough(u).add(&self.data.w.matmul(&function(u)))
    }
}

/// Dirac-layout potential `[[(iΩ + W)/2, 2A†], [A, −Id]]`.
pub fn factorize<T: Real>(conn: &ConnectionData<T>) -> BlockPotential<T> {
    let n = conn.n();
    let q_plus = conn.omega.scale(C::new(T::zero(), T::one())).add(&conn.w).scale(c(0.5, 0.0));
    let slot = conn.a.adjoint().scale(c(2.0, 0.0));
    let q_minus = MatrixField::identity(conn.grid(), n).scale(c(-1.0, 0.0));
    BlockPotential::dirac(q_plus, slot, conn.a.clone(), q_minus).expect("square blocks on one grid")
}

/// `(u, (∂̄ + A)u)`.
pub fn first_order_pair<T: Real>(conn: &ConnectionData<T>, u: &MatrixField<T>) -> FieldPair<T> {
    let u = function(u);
    let g = dbar(&u).add(&conn.a.matmul(&u));
    FieldPair::new(u, g)
}

/// Residuals of the second-order and first-order formulations on one section.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct FactorizationReport {
    /// `max |(∇*∇ + W)u|` on the interior.
    pub second_order: f64,
    /// `max |(D + V)(u, (∂̄ + A)u)|` on the interior.
    pub first_order: f64,
    /// `max |½(∇*∇ + W)u − first row|` on the interior.
    pub identity_defect: f64,
}

pub fn factorization_report<T: Real>(conn: &ConnectionData<T>, u: &MatrixField<T>) -> Result<FactorizationReport> {
    let mask = conn.grid().interior_mask(2 * FD_HALF_WIDTH);
    let lu = assemble_laplacian(conn).apply(u);
    let pot = factorize(conn);
    let r = apply_operator(&pot, &first_order_pair(conn, u))?;
    let half = lu.scale(c(0.5, 0.0));
    let first = r.u.max_abs_on(&mask).f64().max(r.v.max_abs_on(&mask).f64());
    Ok(FactorizationReport {
        second_order: lu.max_abs_on(&mask).f64(),
        first_order: first,
        identity_defect: half.sub(&function(&r.u)).max_abs_on(&mask).f64(),
    })
}

/// Potential making `u` a solution: `W = −(∇*∇u) u† / |u|²` for a column `u`.
pub fn manufactured_potential<T: Real>(conn: &ConnectionData<T>, u: &MatrixField<T>) -> Result<MatrixField<T>> {
    if u.cols != 1 || u.rows != conn.n() {
        return Err(Error::Shape(format!("manufactured solution must be {}x1", conn.n())));
    }
    let lu = assemble_laplacian(conn).rough(u);
    let uh = function(&u.adjoint());
    let norm = uh.matmul(&function(u));
    let nn = norm.nodes();
    let mut out = lu.matmul(&uh).scale(c(-1.0, 0.0));
    for e in 0..out.dim() {
        for k in 0..nn {
            let d = norm.data[k];
            if d.norm() == T::zero() {
                return Err(Error::Singular("manufactured solution vanishes at a node".into()));
            }
            out.data[e * nn + k] = out.data[e * nn + k] / d;
        }
    }
    Ok(out)
}

/// Boundary traces `(u, ∇_ν u)` of a section.
pub fn second_order_traces<T: Real>(conn: &ConnectionData<T>, u: &MatrixField<T>) -> (BoundaryTrace<T>, BoundaryTrace<T>) {
    let lap = assemble_laplacian(conn);
    let tu = trace_boundary_order(&function(u), TRACE_ORDER);
    let gx = trace_boundary_order(&lap.covariant(u, 0), TRACE_ORDER);
    let gy = trace_boundary_order(&lap.covariant(u, 1), TRACE_ORDER);
    let mut nu = tu.clone();
    let d = tu.dim();
    for (k, th) in tu.angles.iter().enumerate() {
        let (s, co) = th.f64().sin_cos();
        for e in 0..d {
            nu.values[k * d + e] = gx.values[k * d + e] * T::of(co) + gy.values[k * d + e] * T::of(s);
        }
    }
    (tu, nu)
}

/// Boundary values `(X_x, X_y)` of the connection form.
pub fn connection_boundary<T: Real>(conn: &ConnectionData<T>) -> [BoundaryTrace<T>; 2] {
    [trace_boundary_order(&conn.x[0], TRACE_ORDER), trace_boundary_order(&conn.x[1], TRACE_ORDER)]
}

/// Share of the spectrum above which a boundary trace counts as under-resolved.
const LIFT_CUTOFF: f64 = 0.375;
/// Largest tolerated relative amplitude in the cut-off band.
const LIFT_TAIL: f64 = 1e-6;

/// `∂_θ` of every component by FFT along the boundary.
fn tangential<T: Real>(t: &BoundaryTrace<T>) -> Result<BoundaryTrace<T>> {
    let m = t.len();
    let d = t.dim();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(m);
    let inv = planner.plan_fft_inverse(m);
    let mut out = t.clone();
    for e in 0..d {
        let mut buf: Vec<Complex<f64>> = (0..m).map(|k| c64(t.values[k * d + e])).collect();
        fwd.process(&mut buf);
        let peak = buf.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let tail = (0..m)
            .filter(|k| (*k).min(m - k) as f64 > LIFT_CUTOFF * m as f64)
            .map(|k| buf[k].norm())
            .fold(0.0, f64::max);
        if peak > 0.0 && tail > LIFT_TAIL * peak {
            return Err(Error::Resolution(format!("boundary trace under-resolved (tail {:.2e} of peak)", tail / peak)));
        }
        for (k, z) in buf.iter_mut().enumerate() {
            let freq = if 2 * k < m { k as f64 } else if 2 * k == m { 0.0 } else { k as f64 - m as f64 };
            *z *= Complex::new(0.0, freq / m as f64);
        }
        inv.process(&mut buf);
        for k in 0..m {
            out.values[k * d + e] = cof(buf[k]);
        }
    }
    Ok(out)
}

/// First-order boundary data `(u, (∂̄ + A)u)|∂` from `(u, ∇_ν u)|∂` and `X|∂`.
///
/// On the unit circle `∂̄ = ½e^{iθ}(∂_r + i∂_θ)`, `∂_ν u = ∇_ν u − X_ν u` and
/// `A = ½(X_x + iX_y)`.
pub fn lift_cauchy_data<T: Real>(u: &BoundaryTrace<T>, nabla_nu: &BoundaryTrace<T>, x_boundary: &[BoundaryTrace<T>; 2]) -> Result<BoundaryTrace<T>> {
    let n = x_boundary[0].rows;
    if u.rows != n || nabla_nu.rows != n || u.cols != nabla_nu.cols || u.len() != nabla_nu.len() || x_boundary.iter().any(|x| x.len() != u.len()) {
        return Err(Error::Shape("boundary traces do not match".into()));
    }
    let dtheta = tangential(u)?;
    let k = u.cols;
    let mut g = BoundaryTrace::zeros(&u.angles, n, k, FormType::Form01);
    for (idx, th) in u.angles.iter().enumerate() {
        let th = th.f64();
        let (s, co) = th.sin_cos();
        let half_phase = Complex::new(co, s) * 0.5;
        let xv = |i: usize, j: usize| {
            let xx = c64(x_boundary[0].values[idx * n * n + i * n + j]);
            let xy = c64(x_boundary[1].values[idx * n * n + i * n + j]);
            (xx * co + xy * s, (xx + Complex::new(0.0, 1.0) * xy) * 0.5)
        };
        for i in 0..n {
            for j in 0..k {
                let at = |t: &BoundaryTrace<T>, r: usize| c64(t.values[idx * n * k + r * k + j]);
                let mut dnu = at(nabla_nu, i);
                let mut au = Complex::new(0.0, 0.0);
                for l in 0..n {
                    let (x_nu, a) = xv(i, l);
                    dnu -= x_nu * at(u, l);
                    au += a * at(u, l);
                }
                let val = half_phase * (dnu + Complex::new(0.0, 1.0) * at(&dtheta, i)) + au;
                g.values[idx * n * k + i * k + j] = cof(val);
            }
        }
    }
    Ok(stack_traces(u, &g))
}

/// Residuals of the second-order gauge identities.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SecondOrderReport {
    /// `max |G†F − Id|`: the two trivializations describe one gauge.
    pub pairing_defect: f64,
    /// `A₂ = F⁻¹A₁F + F⁻¹∂̄F`.
    pub connection_residual: f64,
    /// Same identity for the second connection of the factorized potential.
    pub second_connection_residual: f64,
    /// `X₂ = F⁻¹X₁F + F⁻¹dF`, both components.
    pub form_residual: f64,
    /// `Ω₂ = F⁻¹Ω₁F`.
    pub curvature_residual: f64,
    /// `W₂ = F⁻¹W₁F`.
    pub potential_residual: f64,
    /// `max |F⁻¹ − F†|`.
    pub unitarity_defect: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// Check that the first-order gauge `F` relating `factorize(c1)` and
/// `factorize(c2)` is a unitary gauge of the connections and potentials.
pub fn recover_gauge_second_order<T: Real>(chain: Option<&GaugeChain<T>>, c1: &ConnectionData<T>, c2: &ConnectionData<T>, tol: f64) -> Result<SecondOrderReport> {
    let chain = chain.ok_or_else(|| Error::Precondition("missing first-order gauge report".into()))?;
    if !c1.grid().same_as(c2.grid()) || c1.n() != c2.n() || chain.f.rows != c1.n() {
        return Err(Error::Shape("connections and gauge do not match".into()));
    }
    let mask = c1.grid().interior_mask(2 * FD_HALF_WIDTH);
    let f = function(&chain.f);
    let fi = f.inverse()?;
    let id = MatrixField::identity(c1.grid(), c1.n());
    let conj = |m: &MatrixField<T>| fi.matmul(&function(m)).matmul(&f);
    let pairing = interior_rel(&function(&chain.g.adjoint()).matmul(&f), &id, &mask);
    let df = [dx(&f), dy(&f)];
    let form_residual = (0..2)
        .map(|a| interior_rel(&conj(&c1.x[a]).add(&fi.matmul(&df[a])), &c2.x[a], &mask))
        .fold(0.0, f64::max);
    let unitarity = fi.sub(&f.adjoint()).max_abs_on(&c1.grid().mask).f64();
    let mut report = SecondOrderReport {
        pairing_defect: pairing,
        connection_residual: chain.report.connection_residuals[0],
        second_connection_residual: chain.report.connection_residuals[1],
        form_residual,
        curvature_residual: interior_rel(&conj(&c1.omega), &c2.omega, &mask),
        potential_residual: interior_rel(&conj(&c1.w), &c2.w, &mask),
        unitarity_defect: unitarity,
        tolerance: tol,
        passed: false,
    };
    report.passed = [
        report.pairing_defect,
        report.connection_residual,
        report.second_connection_residual,
        report.form_residual,
        report.curvature_residual,
        report.potential_residual,
        report.unitarity_defect,
    ]
    .iter()
    .all(|r| *r < tol);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::build_domain;
    use crate::gauge::{boundary_identity_gauge, gauge_equivalence_check};
    use crate::linalg::Mat;

    fn grid(n: usize) -> Arc<DomainGrid<f64>> {
        build_domain(n, 1.5).unwrap()
    }

    fn gaussian(z: Complex<f64>, s: f64) -> f64 {
        (-s * z.norm_sqr()).exp()
    }

    fn sample_connection(g: &Arc<DomainGrid<f64>>) -> ConnectionData<f64> {
        let a = MatrixField::from_fn(g, 2, 2, FormType::Form01, |z| {
            let e = gaussian(z, 3.0);
            vec![Complex::new(0.3 * z.re, 0.1) * e, Complex::new(0.2, -0.1 * z.im) * e, Complex::new(-0.15, 0.05) * e, Complex::new(0.1 * z.im, 0.2 * z.re) * e]
        });
        let w = MatrixField::from_fn(g, 2, 2, FormType::Function, |z| {
            let e = gaussian(z, 3.0);
            vec![Complex::new(0.5, 0.0) * e, Complex::new(0.1, 0.2) * e, Complex::new(0.1, -0.2) * e, Complex::new(-0.3 * z.re, 0.0) * e]
        });
        ConnectionData::new(a, w).unwrap()
    }

    fn smooth_section(g: &Arc<DomainGrid<f64>>) -> MatrixField<f64> {
        MatrixField::from_fn(g, 2, 1, FormType::Function, |z| {
            let e = gaussian(z, 2.0);
            vec![(Complex::new(1.0, 0.2) + z * z * 0.5) * e, (Complex::new(0.3, -0.4) * z + z.conj()) * e]
        })
    }

    #[test]
    fn invariants_hold() {
        let g = grid(128);
        let c = sample_connection(&g);
        let r = c.check_invariants();
        assert!(r.anti_hermitian_defect < 1e-14, "{r:?}");
        assert!(r.curvature_defect < 1e-8, "{r:?}");
    }

    #[test]
    fn harmonic_sections_are_annihilated() {
        let g = grid(96);
        let c = ConnectionData::flat(&g, 1);
        let u = MatrixField::scalar(&g, FormType::Function, |z| z * z * z + z.conj() * 2.0);
        let r = factorization_report(&c, &u).unwrap();
        assert!(r.second_order < 1e-9 && r.first_order < 1e-9, "{r:?}");
    }

    #[test]
    fn sign_convention_matches_minus_laplacian() {
        let g = grid(96);
        let c = ConnectionData::flat(&g, 1);
        let u = MatrixField::scalar(&g, FormType::Function, |z| Complex::new(z.norm_sqr(), 0.0));
        let lu = assemble_laplacian(&c).apply(&u);
        let mask = g.interior_mask(2 * FD_HALF_WIDTH);
        let m = lu.sub(&MatrixField::scalar(&g, FormType::Function, |_| Complex::new(-4.0, 0.0))).max_abs_on(&mask);
        assert!(m < 1e-9, "{m}");
    }

    #[test]
    fn constant_form_gives_zeroth_order_term() {
        let g = grid(64);
        let xx = MatrixField::zeros(&g, 1, 1, FormType::Function);
        let xy = MatrixField::scalar(&g, FormType::Function, |_| Complex::new(0.0, 1.0));
        let c = ConnectionData::from_form(xx, xy, MatrixField::zeros(&g, 1, 1, FormType::Function), 1e-12).unwrap();
        let one = MatrixField::scalar(&g, FormType::Function, |_| Complex::new(1.0, 0.0));
        let lu = assemble_laplacian(&c).apply(&one);
        let mask = g.interior_mask(2 * FD_HALF_WIDTH);
        assert!(lu.sub(&one).max_abs_on(&mask) < 1e-12);
    }

    #[test]
    fn rejects_non_hermitian_forms() {
        let g = grid(32);
        let xx = MatrixField::scalar(&g, FormType::Function, |_| Complex::new(1.0, 0.0));
        let z = MatrixField::zeros(&g, 1, 1, FormType::Function);
        assert!(matches!(ConnectionData::from_form(xx, z.clone(), z, 1e-10), Err(Error::Precondition(_))));
    }

    #[test]
    fn rough_laplacian_is_symmetric() {
        let g = grid(128);
        let c = sample_connection(&g);
        let lap = assemble_laplacian(&c);
        let u = MatrixField::from_fn(&g, 2, 1, FormType::Function, |z| {
            let e = gaussian(z, 10.0);
            vec![Complex::new(1.0, 0.5) * z * e, Complex::new(0.2, -1.0) * e]
        });
        let v = MatrixField::from_fn(&g, 2, 1, FormType::Function, |z| {
            let e = gaussian(z - 0.1, 10.0);
            vec![Complex::new(0.3, 0.0) * e, z.conj() * e]
        });
        let inner = |a: &MatrixField<f64>, b: &MatrixField<f64>| -> Complex<f64> { a.data.iter().zip(&b.data).map(|(x, y)| x * y.conj()).sum() };
        let lhs = inner(&lap.rough(&u), &v);
        let rhs = inner(&u, &lap.rough(&v));
        let defect = (lhs - rhs).norm() / lhs.norm();
        assert!(defect < 1e-6, "{defect}");
    }

    #[test]
    fn factorization_identity_on_arbitrary_sections() {
        let g = grid(128);
        let c = sample_connection(&g);
        let u = smooth_section(&g);
        let r = factorization_report(&c, &u).unwrap();
        assert!(r.second_order > 1e-2);
        assert!(r.identity_defect < 1e-8, "{r:?}");
    }

    #[test]
    fn manufactured_solution_pairs_to_first_order_solution() {
        let g = grid(128);
        let c0 = sample_connection(&g);
        let u = smooth_section(&g);
        let w = manufactured_potential(&c0, &u).unwrap();
        let c = ConnectionData::new(c0.a.clone(), w).unwrap();
        let r = factorization_report(&c, &u).unwrap();
        assert!(r.second_order < 1e-10, "{r:?}");
        assert!(r.first_order < 1e-5, "{r:?}");
    }

    #[test]
    fn lift_matches_direct_trace() {
        let g = grid(128);
        let c = sample_connection(&g);
        let u = smooth_section(&g);
        let (tu, tn) = second_order_traces(&c, &u);
        let lifted = lift_cauchy_data(&tu, &tn, &connection_boundary(&c)).unwrap();
        let direct = first_order_pair(&c, &u).trace(TRACE_ORDER);
        let diff = lifted.values.iter().zip(&direct.values).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(diff < 1e-5, "{diff}");
    }

    #[test]
    fn lift_of_constants_and_modes() {
        let g = grid(64);
        let c = ConnectionData::flat(&g, 1);
        let ang = &g.boundary_angles;
        let k = 3;
        let mk = |f: &dyn Fn(f64) -> Complex<f64>| {
            let mut t = BoundaryTrace::zeros(ang, 1, 1, FormType::Function);
            for (i, th) in ang.iter().enumerate() {
                t.values[i] = f(*th);
            }
            t
        };
        let xb = connection_boundary(&c);
        let one = mk(&|_| Complex::new(1.0, 0.0));
        let zero = mk(&|_| Complex::new(0.0, 0.0));
        let lifted = lift_cauchy_data(&one, &zero, &xb).unwrap();
        assert!((0..ang.len()).all(|i| lifted.values[2 * i + 1].norm() < 1e-12));
        // u = z̄^k on the circle: ∂_ν u = k e^{−ikθ}, ∂̄u = k z̄^{k−1}
        let mode = mk(&|th| Complex::from_polar(1.0, -(k as f64) * th));
        let dnu = mk(&|th| Complex::from_polar(k as f64, -(k as f64) * th));
        let lifted = lift_cauchy_data(&mode, &dnu, &xb).unwrap();
        for (i, th) in ang.iter().enumerate() {
            let want = Complex::from_polar(k as f64, -((k - 1) as f64) * th);
            assert!((lifted.values[2 * i + 1] - want).norm() < 1e-10);
        }
        let rough = mk(&|th| Complex::from_polar(1.0, (ang.len() as f64 * 0.45).floor() * th));
        assert!(matches!(lift_cauchy_data(&rough, &zero, &xb), Err(Error::Resolution(_))));
    }

    #[test]
    fn curvature_is_gauge_covariant() {
        let g = grid(128);
        let c = sample_connection(&g);
        let m = Mat::from_fn(2, 2, |i, j| Complex::new(0.4 * (i as f64 + 1.0), 0.7 - j as f64 * 0.3));
        let f = boundary_identity_gauge(&g, &m, true);
        let c2 = c.gauge(&f).unwrap();
        let mask = g.interior_mask(2 * FD_HALF_WIDTH);
        let fi = f.inverse().unwrap();
        let pred = fi.matmul(&c.omega).matmul(&f);
        assert!(interior_rel(&pred, &c2.omega, &mask) < 1e-8);
    }

    #[test]
    fn connection_round_trips_through_disk() {
        let g = grid(32);
        let c = sample_connection(&g);
        let dir = std::env::temp_dir().join(format!("gaugeid-conn-{}", std::process::id()));
        c.save(&dir).unwrap();
        let back = ConnectionData::<f64>::load(&dir).unwrap();
        assert_eq!(back.a.data, c.a.data);
        assert_eq!(back.w.data, c.w.data);
        std::fs::remove_dir_all(dir).ok();
    }

    #[test]
    fn unitary_gauge_is_recovered() {
        let g = grid(160);
        let c1 = sample_connection(&g);
        let m = Mat::from_fn(2, 2, |i, j| Complex::new(0.5 * (i as f64 - j as f64), 0.6 + 0.2 * i as f64));
        let p = boundary_identity_gauge(&g, &m, true);
        let c2 = c1.gauge(&p).unwrap();
        let chain = gauge_equivalence_check(&factorize(&c1), &factorize(&c2), 1e-5).unwrap();
        let r = recover_gauge_second_order(Some(&chain), &c1, &c2, 1e-5).unwrap();
        assert!(r.passed, "{r:?}");
        assert!(recover_gauge_second_order(None, &c1, &c2, 1e-5).is_err());
    }

    #[test]
    fn unrelated_connections_fail_curvature() {
        let g = grid(128);
        let c1 = ConnectionData::flat(&g, 1);
        let phi = MatrixField::scalar(&g, FormType::Function, |z| Complex::new(0.5 * gaussian(z, 4.0), 0.0));
        let c2 = ConnectionData::new(dbar(&phi), MatrixField::zeros(&g, 1, 1, FormType::Function)).unwrap();
        let tol = 1e-5;
        match gauge_equivalence_check(&factorize(&c1), &factorize(&c2), tol) {
            Ok(chain) => {
                let r = recover_gauge_second_order(Some(&chain), &c1, &c2, tol).unwrap();
                assert!(!r.passed);
                assert!(r.curvature_residual > 1e3 * tol, "{r:?}");
            }
            Err(e) => assert!(matches!(e.root(), Error::Numerical(_))),
        }
    }
}
