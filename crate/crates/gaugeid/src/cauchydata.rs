//! Lippmann–Schwinger forward solves for `(D + V) U = 0`, discrete Cauchy
//! data spaces and the boundary form of Green's identity.
//!
//! A solution is sought as `U = W − D⁻¹(Ṽ U)` where `W` lies in the kernel
//! of `D` and `Ṽ` is the tapered continuation of `V` past the circle. The
//! boundary traces of a family of such solutions are then re-expressed in a
//! basis fixed by their Hardy data (nonnegative Fourier modes of the first
//! component, nonpositive modes of the second), which makes the stored
//! columns independent of the incident family that produced them.

use crate::cauchy::CauchyTransform;
use crate::dirac::{apply_operator, BlockPotential, FieldPair, Layout};
use crate::error::{Error, Result};
use crate::field::{BoundaryTrace, DomainGrid, FormType, MatrixField, TRACE_ORDER};
use crate::linalg::{gmres, orthonormal_columns, singular_values, Mat};
use crate::scalar::{c, c64, cof, Real, C};
use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::path::Path;
use std::sync::Arc;

/// Incident degree used when none is given.
pub const DEFAULT_DEGREE: usize = 12;

/// Extra Fourier modes solved for beyond the requested degree so that the
/// Hardy normalization sees the full band of every retained column.
pub const HARDY_OVERSAMPLE: usize = 16;

/// Controls for [`forward_solve`].
#[derive(Clone, Debug)]
pub struct ForwardOptions {
    /// Target for the relative fixed-point residual.
    pub tol: f64,
    pub max_iter: usize,
    /// Neumann iteration is used when the probed contraction factor is
    /// below this value, restarted GMRES otherwise.
    pub neumann_limit: f64,
    pub restart: usize,
    pub probe_iters: usize,
    pub seed: u64,
}

impl Default for ForwardOptions {
    fn default() -> Self {
        ForwardOptions { tol: 1e-11, max_iter: 400, neumann_limit: 0.9, restart: 60, probe_iters: 6, seed: 3 }
    }
}

/// Which branch of the solver produced a solution.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverPath {
    /// `V = 0`, the incident field is returned unchanged.
    Free,
    Neumann,
    Gmres,
}

#[derive(Clone, Debug, Serialize)]
pub struct ForwardReport {
    pub path: SolverPath,
    pub iterations: usize,
    /// `‖U − W − D⁻¹(g − ṼU)‖ / ‖W + D⁻¹g‖` on the extended disk.
    pub fixed_point_residual: f64,
    /// `‖(D + V)U − g‖ / ‖U‖` on nodes whose difference stencil stays in the disk.
    pub differential_residual: f64,
    pub contraction: f64,
}

/// The Lippmann–Schwinger operator of one potential.
pub struct ForwardSolver<T: Real> {
    pub layout: Layout,
    potential: BlockPotential<T>,
    extended: BlockPotential<T>,
    transform: CauchyTransform<T>,
    region: Vec<bool>,
}

impl<T: Real> ForwardSolver<T> {
    pub fn new(pot: &BlockPotential<T>) -> Result<Self> {
        let grid = pot.grid().clone();
        let transform = CauchyTransform::for_extended(&grid);
        let w = transform.taper_width;
        let region = grid.nodes().map(|z| z.norm() < 1.0 + w).collect();
        Ok(ForwardSolver { layout: pot.layout, potential: pot.clone(), extended: pot.extended(w)?, transform, region })
    }

    pub fn grid(&self) -> &Arc<DomainGrid<T>> {
        self.potential.grid()
    }

    /// Right inverse of the free operator `D`.
    pub fn d_inverse(&self, f: &FieldPair<T>) -> FieldPair<T> {
        match self.layout {
            Layout::Dirac => FieldPair::new(
                self.transform.dbar_inv(&f.v),
                self.transform.d_inv(&f.u).scale(c(-0.5, 0.0)).with_form(FormType::Form01),
            ),
            Layout::Domain => FieldPair::new(self.transform.dbar_inv(&f.u), self.transform.d_inv(&f.v)),
        }
    }

    /// `K U = D⁻¹(Ṽ U)`.
    pub fn apply_k(&self, u: &FieldPair<T>) -> FieldPair<T> {
        self.d_inverse(&self.extended.multiply(u))
    }

    fn norm(&self, p: &FieldPair<T>) -> f64 {
        p.norm_on(&self.region).f64()
    }

    /// Power-iteration estimate of the contraction factor of `K`.
    pub fn contraction(&self, n_cols: usize, iters: usize, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = self.grid().clone();
        let n = self.potential.n();
        let mut x = FieldPair::zeros(&g, n, n_cols.max(1), self.layout);
        for k in 0..g.len() {
            if self.region[k] {
                for e in 0..x.u.dim() {
                    x.u.data[e * g.len() + k] = c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                    x.v.data[e * g.len() + k] = c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                }
            }
        }
        let mut ratio = 0.0;
        for _ in 0..iters {
            let nx = self.norm(&x);
            if nx == 0.0 {
                return 0.0;
            }
            x = x.scale(c(1.0 / nx, 0.0));
            x = self.apply_k(&x);
            ratio = self.norm(&x);
        }
        ratio
    }

    /// Solve `U = W + D⁻¹ g − K U`.
    pub fn solve(&self, incident: &FieldPair<T>, source: Option<&FieldPair<T>>, opts: &ForwardOptions) -> Result<(FieldPair<T>, ForwardReport)> {
        let n = self.potential.n();
        if incident.u.rows != n || incident.v.rows != n || incident.u.cols != incident.v.cols {
            return Err(Error::Shape(format!("incident field does not fit a {n}x{n} potential")));
        }
        let mut rhs = incident.clone();
        if let Some(g) = source {
            rhs = rhs.add(&self.d_inverse(g));
        }
        if self.potential.max_abs() == 0.0 {
            let rep = self.report(SolverPath::Free, 0, &rhs, &rhs, source, 0.0)?;
            return Ok((rhs, rep));
        }
        let rho = self.contraction(1, opts.probe_iters, opts.seed);
        let rn = self.norm(&rhs);
        if rn == 0.0 {
            let rep = self.report(SolverPath::Free, 0, &rhs, &rhs, source, rho)?;
            return Ok((rhs, rep));
        }
        if rho < opts.neumann_limit {
            let mut u = rhs.clone();
            for it in 1..=opts.max_iter {
                let next = rhs.sub(&self.apply_k(&u));
                let step = self.norm(&next.sub(&u)) / rn;
                u = next;
                if step < opts.tol * (1.0 - rho) {
                    let rep = self.report(SolverPath::Neumann, it, &u, &rhs, source, rho)?;
                    return Ok((u, rep));
                }
            }
        }
        // restarted GMRES column by column on (I + K) U = rhs
        let cols = rhs.u.cols;
        let results: Vec<Result<(FieldPair<T>, usize)>> = (0..cols)
            .into_par_iter()
            .map(|j| {
                let b = rhs.column(j);
                let shape = b.clone();
                let mut op = |x: &[C<T>]| -> Vec<C<T>> {
                    let p = unflatten(x, &shape);
                    flatten(&p.add(&self.apply_k(&p)))
                };
                let (x, rep) = gmres(&mut op, &flatten(&b), opts.restart, opts.max_iter, opts.tol);
                if !rep.converged {
                    return Err(Error::Singular(format!(
                        "non-well-posed instance: GMRES stalled at relative residual {:.3e}",
                        rep.relative_residual
                    )));
                }
                Ok((unflatten(&x, &shape), rep.iterations))
            })
            .collect();
        let mut u = FieldPair::zeros(self.grid(), n, cols, self.layout);
        let mut iters = 0;
        for (j, r) in results.into_iter().enumerate() {
            let (col, it) = r?;
            set_column(&mut u, j, &col);
            iters = iters.max(it);
        }
        let rep = self.report(SolverPath::Gmres, iters, &u, &rhs, source, rho)?;
        Ok((u, rep))
    }

    fn report(
        &self,
        path: SolverPath,
        iterations: usize,
        u: &FieldPair<T>,
        rhs: &FieldPair<T>,
        source: Option<&FieldPair<T>>,
        contraction: f64,
    ) -> Result<ForwardReport> {
        let fixed = u.add(&self.apply_k(u)).sub(rhs);
        let rn = self.norm(rhs);
        let inner = self.grid().interior_mask(crate::diff::FD_HALF_WIDTH);
        let mut res = apply_operator(&self.potential, u)?;
        if let Some(g) = source {
            res = res.sub(g);
        }
        let un = u.norm_on(&inner).f64();
        Ok(ForwardReport {
            path,
            iterations,
            fixed_point_residual: if rn == 0.0 { 0.0 } else { self.norm(&fixed) / rn },
            differential_residual: if un == 0.0 { 0.0 } else { res.norm_on(&inner).f64() / un },
            contraction,
        })
    }
}

fn flatten<T: Real>(p: &FieldPair<T>) -> Vec<C<T>> {
    let mut v = p.u.data.clone();
    v.extend_from_slice(&p.v.data);
    v
}

fn unflatten<T: Real>(x: &[C<T>], shape: &FieldPair<T>) -> FieldPair<T> {
    let k = shape.u.data.len();
    let mut p = shape.clone();
    p.u.data.copy_from_slice(&x[..k]);
    p.v.data.copy_from_slice(&x[k..]);
    p
}

fn set_column<T: Real>(p: &mut FieldPair<T>, j: usize, col: &FieldPair<T>) {
    for (dst, src) in [(&mut p.u, &col.u), (&mut p.v, &col.v)] {
        let cols = dst.cols;
        for i in 0..dst.rows {
            let plane = src.plane(i).to_vec();
            dst.plane_mut(i * cols + j).copy_from_slice(&plane);
        }
    }
}

/// Solve `(D + V) U = 0` with `U − W` in the range of `D⁻¹`.
pub fn forward_solve<T: Real>(pot: &BlockPotential<T>, incident: &FieldPair<T>, opts: &ForwardOptions) -> Result<(FieldPair<T>, ForwardReport)> {
    ForwardSolver::new(pot)?.solve(incident, None, opts)
}

/// Solve `(D + V) U = g` with `U − W − D⁻¹g` in the range of `D⁻¹`.
pub fn forward_solve_source<T: Real>(
    pot: &BlockPotential<T>,
    incident: &FieldPair<T>,
    source: &FieldPair<T>,
    opts: &ForwardOptions,
) -> Result<(FieldPair<T>, ForwardReport)> {
    ForwardSolver::new(pot)?.solve(incident, Some(source), opts)
}

/// Monomial incident family: `z^m e_i` in the first slot and `z̄^m e_j` in
/// the second, `m < degree`, as the columns of one field pair.
pub fn monomial_incident<T: Real>(grid: &Arc<DomainGrid<T>>, n: usize, degree: usize, layout: Layout) -> FieldPair<T> {
    let cols = 2 * n * degree;
    let mut p = FieldPair::zeros(grid, n, cols, layout);
    let nn = grid.len();
    for (k, z) in grid.nodes().enumerate() {
        let mut zm = Complex::new(1.0, 0.0);
        for m in 0..degree {
            for i in 0..n {
                let col_u = m * n + i;
                let col_v = n * degree + m * n + i;
                p.u.data[(i * cols + col_u) * nn + k] = cof(zm);
                p.v.data[(i * cols + col_v) * nn + k] = cof(zm.conj());
            }
            zm *= z;
        }
    }
    p
}

/// Description of the incident family behind a Cauchy data matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BasisSpec {
    pub layout: Layout,
    pub n_comp: usize,
    /// Retained Hardy modes per component and slot.
    pub degree: usize,
    /// Number of modes actually solved for.
    pub solved_modes: usize,
    pub normalization: String,
    pub boundary_nodes: usize,
}

/// Traces of a solution family in Hardy-normalized form. Column
/// `s·n·degree + m·n + i` is the trace of the solution whose Hardy data is
/// `e^{imθ} e_i` in the first slot (`s = 0`) or `e^{−imθ} e_i` in the
/// second (`s = 1`).
#[derive(Clone, Debug)]
pub struct CauchyDataMatrix<T: Real> {
    pub basis_spec: BasisSpec,
    pub traces: Vec<BoundaryTrace<T>>,
    /// Worst fixed-point residual over the solved columns.
    pub solver_tol: f64,
    pub differential_residual: f64,
    /// Condition number of the Hardy coefficient matrix.
    pub hardy_condition: f64,
}

impl<T: Real> CauchyDataMatrix<T> {
    /// All traces as the columns of one matrix with rows `(node, component)`.
    pub fn matrix(&self) -> Mat<T> {
        let rows = self.traces.first().map_or(0, |t| t.values.len());
        Mat::from_fn(rows, self.traces.len(), |i, j| self.traces[j].values[i])
    }

    pub fn columns(&self) -> usize {
        self.traces.len()
    }

    /// Write `manifest.json` and one CSV per column into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let manifest = Manifest {
            basis_spec: self.basis_spec.clone(),
            columns: self.traces.len(),
            solver_tol: self.solver_tol,
            differential_residual: self.differential_residual,
            hardy_condition: self.hardy_condition,
        };
        std::fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
        for (j, t) in self.traces.iter().enumerate() {
            let f = std::fs::File::create(dir.join(format!("column_{j:04}.csv")))?;
            t.write_csv(std::io::BufWriter::new(f))?;
        }
        Ok(())
    }

    /// Read a matrix written by [`CauchyDataMatrix::save`].
    pub fn load(dir: &Path) -> Result<Self> {
        let manifest: Manifest = serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json"))?)?;
        let rows = 2 * manifest.basis_spec.n_comp;
        let mut traces = Vec::with_capacity(manifest.columns);
        for j in 0..manifest.columns {
            let text = std::fs::read_to_string(dir.join(format!("column_{j:04}.csv")))?;
            traces.push(parse_trace_csv(&text, rows)?);
        }
        Ok(CauchyDataMatrix {
            basis_spec: manifest.basis_spec,
            traces,
            solver_tol: manifest.solver_tol,
            differential_residual: manifest.differential_residual,
            hardy_condition: manifest.hardy_condition,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    basis_spec: BasisSpec,
    columns: usize,
    solver_tol: f64,
    differential_residual: f64,
    hardy_condition: f64,
}

fn parse_trace_csv<T: Real>(text: &str, rows: usize) -> Result<BoundaryTrace<T>> {
    let mut angles = Vec::new();
    let mut values = Vec::new();
    for line in text.lines().skip(1).filter(|l| !l.trim().is_empty()) {
        let nums: Vec<f64> = line
            .split(',')
            .map(|s| s.trim().parse::<f64>().map_err(|e| Error::Config(format!("bad trace value {s:?}: {e}"))))
            .collect::<Result<_>>()?;
        if nums.len() != 1 + 2 * rows {
            return Err(Error::Shape(format!("trace row has {} fields, expected {}", nums.len(), 1 + 2 * rows)));
        }
        angles.push(T::of(nums[0]));
        for e in 0..rows {
            values.push(c(nums[1 + 2 * e], nums[2 + 2 * e]));
        }
    }
    Ok(BoundaryTrace { angles, rows, cols: 1, form: FormType::Function, values })
}

/// Fourier coefficient `(1/M) Σ_k t_k e^{−iqθ_k}` of one trace entry.
fn fourier<T: Real>(t: &BoundaryTrace<T>, e: usize, q: i64) -> Complex<f64> {
    let d = t.dim();
    let m = t.len() as f64;
    let mut acc = Complex::new(0.0, 0.0);
    for k in 0..t.len() {
        let th = t.angles[k].f64();
        acc += c64(t.values[k * d + e]) * Complex::from_polar(1.0, -(q as f64) * th);
    }
    acc / m
}

/// Solve for the oversampled monomial family and return its Hardy-normalized
/// Cauchy data with `degree` modes per slot and component.
pub fn assemble_cauchy_data<T: Real>(pot: &BlockPotential<T>, degree: usize, n_comp: usize, opts: &ForwardOptions) -> Result<CauchyDataMatrix<T>> {
    if n_comp != pot.n() {
        return Err(Error::Shape(format!("n_comp = {n_comp} but the potential is {}x{}", pot.n(), pot.n())));
    }
    if degree == 0 {
        return Err(Error::Precondition("degree must be positive".into()));
    }
    let k = degree + HARDY_OVERSAMPLE;
    let incident = monomial_incident(pot.grid(), n_comp, k, pot.layout);
    assemble_from_incident(pot, &incident, degree, opts)
}

/// Hardy-normalized Cauchy data from an arbitrary incident family whose
/// columns span the same Hardy modes as the oversampled monomials.
pub fn assemble_from_incident<T: Real>(
    pot: &BlockPotential<T>,
    incident: &FieldPair<T>,
    degree: usize,
    opts: &ForwardOptions,
) -> Result<CauchyDataMatrix<T>> {
    let n = pot.n();
    let cols = incident.u.cols;
    if cols % (2 * n) != 0 || cols / (2 * n) < degree {
        return Err(Error::Shape(format!("incident family of {cols} columns cannot carry degree {degree} for n = {n}")));
    }
    let k = cols / (2 * n);
    let solver = ForwardSolver::new(pot)?;
    // bounded batches keep memory flat at large n
    let batch = 16;
    let mut traces: Vec<BoundaryTrace<T>> = Vec::with_capacity(cols);
    let mut worst = 0.0f64;
    let mut worst_diff = 0.0f64;
    let mut start = 0;
    while start < cols {
        let end = (start + batch).min(cols);
        let sub = select_columns(incident, start..end);
        let (u, rep) = solver.solve(&sub, None, opts)?;
        worst = worst.max(rep.fixed_point_residual);
        worst_diff = worst_diff.max(rep.differential_residual);
        for j in 0..end - start {
            traces.push(u.column(j).trace(TRACE_ORDER));
        }
        start = end;
    }
    let (canon, cond) = hardy_normalize(&traces, n, k, degree)?;
    Ok(CauchyDataMatrix {
        basis_spec: BasisSpec {
            layout: pot.layout,
            n_comp: n,
            degree,
            solved_modes: k,
            normalization: "hardy".into(),
            boundary_nodes: pot.grid().boundary_len(),
        },
        traces: canon,
        solver_tol: worst,
        differential_residual: worst_diff,
        hardy_condition: cond,
    })
}

fn select_columns<T: Real>(p: &FieldPair<T>, range: std::ops::Range<usize>) -> FieldPair<T> {
    let pick = |f: &MatrixField<T>| {
        let w = range.len();
        let mut out = MatrixField::zeros(&f.grid, f.rows, w, f.form);
        for i in 0..f.rows {
            for (jj, j) in range.clone().enumerate() {
                let src = f.plane(i * f.cols + j).to_vec();
                out.plane_mut(i * w + jj).copy_from_slice(&src);
            }
        }
        out
    };
    FieldPair::new(pick(&p.u), pick(&p.v))
}

/// Re-express traces so that column `(s, m, i)` has Hardy data equal to the
/// single mode `e^{±imθ} e_i`.
fn hardy_normalize<T: Real>(traces: &[BoundaryTrace<T>], n: usize, k: usize, degree: usize) -> Result<(Vec<BoundaryTrace<T>>, f64)> {
    let cols = traces.len();
    let size = 2 * n * k;
    if cols != size {
        return Err(Error::Shape(format!("{cols} traces for {size} Hardy coordinates")));
    }
    let mut h = Mat::<f64>::zeros(size, cols);
    for (j, t) in traces.iter().enumerate() {
        for r in 0..2 * n {
            for m in 0..k {
                let (row, q) = if r < n { (m * n + r, m as i64) } else { (n * k + m * n + (r - n), -(m as i64)) };
                h.set(row, j, fourier(t, r, q));
            }
        }
    }
    let sv = singular_values(&h);
    let cond = sv[0] / sv[sv.len() - 1].max(f64::MIN_POSITIVE);
    if !(cond < 1e12) {
        return Err(Error::Singular(format!("non-well-posed instance: Hardy coefficient matrix has condition {cond:.3e}")));
    }
    let lu = h.lu().ok_or_else(|| Error::Singular("non-well-posed instance: Hardy coefficient matrix is singular".into()))?;
    let mut out = Vec::with_capacity(2 * n * degree);
    for s in 0..2 {
        for m in 0..degree {
            for i in 0..n {
                let mut e = vec![Complex::new(0.0, 0.0); size];
                e[s * n * k + m * n + i] = Complex::new(1.0, 0.0);
                let x = lu.solve(&e);
                let mut acc = traces[0].scale(C::new(T::zero(), T::zero()));
                for (j, t) in traces.iter().enumerate() {
                    if x[j] != Complex::new(0.0, 0.0) {
                        acc = acc.add(&t.scale(cof(x[j])));
                    }
                }
                out.push(acc);
            }
        }
    }
    Ok((out, cond))
}

/// Outcome of [`subspace_distance`].
#[derive(Clone, Debug, Serialize)]
pub struct SubspaceReport {
    /// Sine of the largest principal angle over the common rank.
    pub distance: f64,
    pub rank1: usize,
    pub rank2: usize,
}

/// Largest principal angle (as a sine) between the column spans.
pub fn subspace_distance<T: Real>(c1: &CauchyDataMatrix<T>, c2: &CauchyDataMatrix<T>) -> Result<SubspaceReport> {
    if c1.basis_spec != c2.basis_spec {
        return Err(Error::Shape("Cauchy data matrices were built from different bases or grids".into()));
    }
    Ok(span_distance(&c1.matrix(), &c2.matrix()))
}

/// Principal-angle distance between two column spans.
pub fn span_distance<T: Real>(a: &Mat<T>, b: &Mat<T>) -> SubspaceReport {
    let tol = T::of(1e-10);
    let qa = orthonormal_columns(a, tol);
    let qb = orthonormal_columns(b, tol);
    let (small, big) = if qa.cols <= qb.cols { (&qa, &qb) } else { (&qb, &qa) };
    // σ_max of (I − P_big) Q_small keeps full precision for small angles
    let distance = if small.cols == 0 {
        0.0
    } else {
        let resid = small.sub(&big.mul(&big.adjoint().mul(small)));
        singular_values(&resid).first().map_or(0.0, |s| s.f64().min(1.0))
    };
    SubspaceReport { distance, rank1: qa.cols, rank2: qb.cols }
}

/// Boundary form of Green's identity.
///
/// Dirac layout (pairing weight 2 on the `dz̄` slot):
/// `B = ∫ [e^{iθ} u₁·v̄₂ − e^{−iθ} v₁·ū₂] dθ`.
/// Domain layout (plain pairing):
/// `B = ½ ∫ [e^{iθ} u₁·ū₂ + e^{−iθ} v₁·v̄₂] dθ`.
///
/// Both equal `∫⟨DU₁, U₂⟩ − ∫⟨U₁, D*U₂⟩`, hence `∫⟨(V₂ − V₁)U₁, U₂⟩` when
/// `(D + V₁)U₁ = 0` and `(D + V₂)* U₂ = 0`.
pub fn green_functional<T: Real>(layout: Layout, t1: &BoundaryTrace<T>, t2: &BoundaryTrace<T>) -> Result<Complex<f64>> {
    if t1.len() != t2.len() || t1.angles != t2.angles {
        return Err(Error::Shape("traces are sampled on different boundary nodes".into()));
    }
    if t1.rows != t2.rows || t1.cols != t2.cols || t1.rows % 2 != 0 {
        return Err(Error::Shape(format!("trace shapes {}x{} and {}x{}", t1.rows, t1.cols, t2.rows, t2.cols)));
    }
    let n = t1.rows / 2;
    let cols = t1.cols;
    let d = t1.dim();
    let w = 2.0 * PI / t1.len() as f64;
    let mut acc = Complex::new(0.0, 0.0);
    for k in 0..t1.len() {
        let e = Complex::from_polar(1.0, t1.angles[k].f64());
        let mut a = Complex::new(0.0, 0.0);
        let mut b = Complex::new(0.0, 0.0);
        for i in 0..n {
            for j in 0..cols {
                let iu = k * d + i * cols + j;
                let iv = k * d + (n + i) * cols + j;
                let (u1, v1) = (c64(t1.values[iu]), c64(t1.values[iv]));
                let (u2, v2) = (c64(t2.values[iu]), c64(t2.values[iv]));
                match layout {
                    Layout::Dirac => {
                        a += u1 * v2.conj();
                        b += v1 * u2.conj();
                    }
                    Layout::Domain => {
                        a += u1 * u2.conj();
                        b += v1 * v2.conj();
                    }
                }
            }
        }
        acc += match layout {
            Layout::Dirac => e * a - e.conj() * b,
            Layout::Domain => (e * a + e.conj() * b) * 0.5,
        };
    }
    Ok(acc * w)
}

/// `∫⟨DU₁, U₂⟩ − ∫⟨U₁, D*U₂⟩` by interior quadrature; the oracle that
/// pins down [`green_functional`].
pub fn green_interior<T: Real>(layout: Layout, u1: &FieldPair<T>, u2: &FieldPair<T>) -> Complex<f64> {
    use crate::quad::disk_inner;
    let d1 = crate::dirac::apply_free(layout, u1);
    let dstar2 = match layout {
        Layout::Dirac => crate::dirac::apply_free(layout, u2),
        Layout::Domain => FieldPair::new(crate::diff::dz(&u2.u).scale(c(-1.0, 0.0)), crate::diff::dbar(&u2.v).scale(c(-1.0, 0.0))),
    };
    let o = TRACE_ORDER;
    let lhs = disk_inner(&d1.u.with_form(u2.u.form), &u2.u, o) + disk_inner(&d1.v.with_form(u2.v.form), &u2.v, o);
    let rhs = disk_inner(&u1.u, &dstar2.u.with_form(u1.u.form), o) + disk_inner(&u1.v, &dstar2.v.with_form(u1.v.form), o);
    lhs - rhs
}
