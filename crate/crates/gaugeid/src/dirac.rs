//! Clifford algebra on the plane, the reduction of a Dirac operator to a
//! `∂̄ ⊕ ∂̄*` system, and block potentials with their operator action.

use crate::diff::{dbar, dz};
use crate::error::{Error, Result};
use crate::field::{BoundaryTrace, DomainGrid, FormType, MatrixField};
use crate::linalg::{orthonormal_columns, Mat};
use crate::scalar::{c, Real, C};
use std::sync::Arc;

/// Constant Clifford multiplication `γ(dx)`, `γ(dy)` on `ℂ^{2n}`.
#[derive(Clone, Debug)]
pub struct CliffordData<T: Real> {
    pub n: usize,
    pub gamma_x: Mat<T>,
    pub gamma_y: Mat<T>,
    pub metric_scale: T,
}

/// Max-norm defects of the Clifford identities.
#[derive(Clone, Debug, PartialEq)]
pub struct CliffordReport {
    pub x_square: f64,
    pub y_square: f64,
    pub anticommutator: f64,
    pub x_skew: f64,
    pub y_skew: f64,
    /// `H² − Id` for the chirality `H = iγ(dx)γ(dy)`.
    pub chirality: f64,
}

impl CliffordReport {
    pub fn max(&self) -> f64 {
        [self.x_square, self.y_square, self.anticommutator, self.x_skew, self.y_skew, self.chirality]
            .into_iter()
            .fold(0.0, f64::max)
    }
}

fn kron_identity<T: Real>(a: &Mat<T>, n: usize) -> Mat<T> {
    Mat::from_fn(a.rows * n, a.cols * n, |i, j| if i % n == j % n { a.at(i / n, j / n) } else { C::new(T::zero(), T::zero()) })
}

impl<T: Real> CliffordData<T> {
    /// `γ(dx) = [[0,−1],[1,0]]`, `γ(dy) = [[0,i],[i,0]]`, tensored with `Id_n`.
    pub fn standard(n: usize) -> Self {
        let gx = Mat::from_rows(&[&[c(0.0, 0.0), c(-1.0, 0.0)], &[c(1.0, 0.0), c(0.0, 0.0)]]);
        let gy = Mat::from_rows(&[&[c(0.0, 0.0), c(0.0, 1.0)], &[c(0.0, 1.0), c(0.0, 0.0)]]);
        CliffordData { n, gamma_x: kron_identity(&gx, n), gamma_y: kron_identity(&gy, n), metric_scale: T::one() }
    }

    /// Conjugate both generators by an invertible matrix.
    pub fn conjugated(&self, u: &Mat<T>) -> Option<Self> {
        let ui = u.inverse()?;
        Some(CliffordData {
            n: self.n,
            gamma_x: u.mul(&self.gamma_x).mul(&ui),
            gamma_y: u.mul(&self.gamma_y).mul(&ui),
            metric_scale: self.metric_scale,
        })
    }

    pub fn chirality(&self) -> Mat<T> {
        self.gamma_x.mul(&self.gamma_y).scale(c(0.0, 1.0))
    }

    /// `γ(Z*)` with `Z* = (dx + i dy)/√2`.
    pub fn gamma_z(&self) -> Mat<T> {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        self.gamma_x.scale(c(s, 0.0)).add(&self.gamma_y.scale(c(0.0, s)))
    }

    /// `γ(Z̄*)` with `Z̄* = (dx − i dy)/√2`.
    pub fn gamma_zbar(&self) -> Mat<T> {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        self.gamma_x.scale(c(s, 0.0)).add(&self.gamma_y.scale(c(0.0, -s)))
    }
}

/// Defects of `γ² = −Id`, anticommutation, skew-adjointness and `H² = Id`.
pub fn check_clifford<T: Real>(cd: &CliffordData<T>) -> CliffordReport {
    let id = Mat::<T>::identity(2 * cd.n);
    let (gx, gy) = (&cd.gamma_x, &cd.gamma_y);
    let d = |m: Mat<T>| m.max_abs().f64();
    let h = cd.chirality();
    CliffordReport {
        x_square: d(gx.mul(gx).add(&id)),
        y_square: d(gy.mul(gy).add(&id)),
        anticommutator: d(gx.mul(gy).add(&gy.mul(gx))),
        x_skew: d(gx.add(&gx.adjoint())),
        y_skew: d(gy.add(&gy.adjoint())),
        chirality: d(h.mul(&h).sub(&id)),
    }
}

/// Splitting `E = E₀ ⊕ γ(Z̄*)E₀` and the isomorphism `B` onto
/// `E₀ ⊕ E₀ ⊗ (T^{0,1})*`, written in the basis of `E₀` and the coefficient
/// of `Z̄*`.
#[derive(Clone, Debug)]
pub struct DiracReduction<T: Real> {
    pub e0_basis: Mat<T>,
    pub b: Mat<T>,
    pub b_inv: Mat<T>,
    /// Ratio of extreme singular values of `B`.
    pub condition: f64,
}

impl<T: Real> DiracReduction<T> {
    /// `𝔢(Z̄*)` in the split basis.
    pub fn exterior(&self) -> Mat<T> {
        let n = self.e0_basis.cols;
        Mat::from_fn(2 * n, 2 * n, |i, j| if i >= n && j == i - n { c(1.0, 0.0) } else { c(0.0, 0.0) })
    }

    /// `𝔦(Z̄*)` in the split basis (`|Z̄*| = 1`).
    pub fn interior(&self) -> Mat<T> {
        self.exterior().adjoint()
    }

    /// Defects of `Bγ(Z̄*) = √2 𝔢(Z̄*) B` and `Bγ(Z*) = −√2 𝔦(Z̄*) B`.
    pub fn relation_defects(&self, cd: &CliffordData<T>) -> (f64, f64) {
        let r2 = std::f64::consts::SQRT_2;
        let a = self.b.mul(&cd.gamma_zbar()).sub(&self.exterior().mul(&self.b).scale(c(r2, 0.0)));
        let b = self.b.mul(&cd.gamma_z()).add(&self.interior().mul(&self.b).scale(c(r2, 0.0)));
        (a.max_abs().f64(), b.max_abs().f64())
    }
}

/// Build `E₀ = γ(Z*)E` and `B : v + γ(Z̄*)w ↦ v + √2 w Z̄*`.
pub fn reduce_dirac<T: Real>(cd: &CliffordData<T>) -> Result<DiracReduction<T>> {
    let rep = check_clifford(cd);
    let gz = cd.gamma_z();
    let scale = gz.max_abs().f64().max(1.0);
    let nilpotent = gz.mul(&gz).max_abs().f64();
    if rep.max() > 1e-10 || nilpotent > 1e-10 * scale {
        return Err(Error::Precondition(format!(
            "rank defect: γ(Z*) image and kernel differ (Clifford defect {:.2e}, γ(Z*)² = {:.2e})",
            rep.max(),
            nilpotent
        )));
    }
    let e0 = orthonormal_columns(&gz, T::of(1e-10));
    if e0.cols != cd.n {
        return Err(Error::Precondition(format!("rank defect: γ(Z*) has rank {}, expected {}", e0.cols, cd.n)));
    }
    let n = cd.n;
    let gze = cd.gamma_zbar().mul(&e0);
    let m = Mat::from_fn(2 * n, 2 * n, |i, j| if j < n { e0.at(i, j) } else { gze.at(i, j - n) });
    let m_inv = m.inverse().ok_or_else(|| Error::Singular("E₀ ⊕ γ(Z̄*)E₀ is not a splitting".into()))?;
    let r2 = std::f64::consts::SQRT_2;
    let scale_split = Mat::from_fn(2 * n, 2 * n, |i, j| {
        if i != j {
            c(0.0, 0.0)
        } else if i < n {
            c(1.0, 0.0)
        } else {
            c(r2, 0.0)
        }
    });
    let b = scale_split.mul(&m_inv);
    let b_inv = b.inverse().ok_or_else(|| Error::Singular("reduction map not invertible".into()))?;
    let sv = crate::linalg::singular_values(&b);
    let condition = sv[0].f64() / sv[sv.len() - 1].f64();
    Ok(DiracReduction { e0_basis: e0, b, b_inv, condition })
}

/// Apply the flat Dirac operator `γ(dx)∂x + γ(dy)∂y` to a `2n × k` field.
pub fn apply_dirac<T: Real>(cd: &CliffordData<T>, u: &MatrixField<T>) -> MatrixField<T> {
    let gx = MatrixField::constant(&u.grid, &cd.gamma_x, FormType::Function);
    let gy = MatrixField::constant(&u.grid, &cd.gamma_y, FormType::Function);
    gx.matmul(&crate::diff::dx(u)).add(&gy.matmul(&crate::diff::dy(u))).with_form(FormType::Function)
}

/// Compare `B D B⁻¹ U` with `√2(∂̄ + ∂̄*) U` for a split section
/// `U = (a, b)` stacked as a `2n × k` field. Returns the max residual over
/// nodes whose difference stencil stays inside the disk.
pub fn conjugate_by_reduction<T: Real>(red: &DiracReduction<T>, cd: &CliffordData<T>, section: &MatrixField<T>) -> f64 {
    let g = &section.grid;
    let n = cd.n;
    let b = MatrixField::constant(g, &red.b, FormType::Function);
    let binv = MatrixField::constant(g, &red.b_inv, FormType::Function);
    let lhs = b.matmul(&apply_dirac(cd, &binv.matmul(section)));
    let (a, bb) = split_rows(section, n);
    let top = dz(&bb).scale(c(-2.0, 0.0));
    let bottom = dbar(&a).scale(c(2.0, 0.0));
    let rhs = stack_rows(&top, &bottom);
    let inner = g.interior_mask(crate::diff::FD_HALF_WIDTH);
    lhs.with_form(FormType::Function).sub(&rhs.with_form(FormType::Function)).max_abs_on(&inner).f64()
}

/// First `n` rows and the remaining rows of a field.
pub fn split_rows<T: Real>(f: &MatrixField<T>, n: usize) -> (MatrixField<T>, MatrixField<T>) {
    let mut a = MatrixField::zeros(&f.grid, n, f.cols, f.form);
    let mut b = MatrixField::zeros(&f.grid, f.rows - n, f.cols, f.form);
    for i in 0..f.rows {
        for j in 0..f.cols {
            let src = f.plane(i * f.cols + j).to_vec();
            if i < n {
                a.plane_mut(i * f.cols + j).copy_from_slice(&src);
            } else {
                b.plane_mut((i - n) * f.cols + j).copy_from_slice(&src);
            }
        }
    }
    (a, b)
}

/// Stack two fields with equal column count.
pub fn stack_rows<T: Real>(a: &MatrixField<T>, b: &MatrixField<T>) -> MatrixField<T> {
    assert_eq!(a.cols, b.cols);
    let mut data = a.data.clone();
    data.extend_from_slice(&b.data);
    MatrixField { grid: a.grid.clone(), rows: a.rows + b.rows, cols: a.cols, form: a.form, data }
}

/// Which operator a block potential perturbs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Layout {
    /// `D = [[0, ∂̄*], [∂̄, 0]]`, blocks `[[Q⁺, A'*], [A, Q⁻]]`.
    Dirac,
    /// `D = diag(∂̄, ∂)`, blocks `[[A, Q⁺], [Q⁻, B]]`.
    Domain,
}

/// Two-component section `(u, v)`. In the Dirac layout `v` is the
/// coefficient of `dz̄`.
#[derive(Clone, Debug)]
pub struct FieldPair<T: Real> {
    pub u: MatrixField<T>,
    pub v: MatrixField<T>,
}

impl<T: Real> FieldPair<T> {
    pub fn new(u: MatrixField<T>, v: MatrixField<T>) -> Self {
        FieldPair { u, v }
    }

    pub fn zeros(grid: &Arc<DomainGrid<T>>, n: usize, k: usize, layout: Layout) -> Self {
        let vf = match layout {
            Layout::Dirac => FormType::Form01,
            Layout::Domain => FormType::Function,
        };
        FieldPair { u: MatrixField::zeros(grid, n, k, FormType::Function), v: MatrixField::zeros(grid, n, k, vf) }
    }

    pub fn add(&self, o: &Self) -> Self {
        FieldPair { u: self.u.add(&o.u), v: self.v.add(&o.v) }
    }

    pub fn sub(&self, o: &Self) -> Self {
        FieldPair { u: self.u.sub(&o.u), v: self.v.sub(&o.v) }
    }

    pub fn scale(&self, s: C<T>) -> Self {
        FieldPair { u: self.u.scale(s), v: self.v.scale(s) }
    }

    pub fn map(&self, f: impl Fn(&MatrixField<T>) -> MatrixField<T>) -> Self {
        FieldPair { u: f(&self.u), v: f(&self.v) }
    }

    /// Masked L² norm using each component's pairing weight.
    pub fn norm(&self) -> T {
        let a = self.u.norm_l2();
        let b = self.v.norm_l2();
        (a * a + b * b).sqrt()
    }

    pub fn norm_on(&self, mask: &[bool]) -> T {
        let a = self.u.norm_on(mask);
        let b = self.v.norm_on(mask);
        (a * a + b * b).sqrt()
    }

    /// Column `j` of both components.
    pub fn column(&self, j: usize) -> Self {
        FieldPair { u: self.u.column(j), v: self.v.column(j) }
    }

    /// Boundary traces of both components, stacked as one `2n × k` trace.
    pub fn trace(&self, order: usize) -> BoundaryTrace<T> {
        let a = crate::field::trace_boundary_order(&self.u, order);
        let b = crate::field::trace_boundary_order(&self.v, order);
        stack_traces(&a, &b)
    }
}

/// Stack two traces row-wise.
pub fn stack_traces<T: Real>(a: &BoundaryTrace<T>, b: &BoundaryTrace<T>) -> BoundaryTrace<T> {
    assert_eq!(a.cols, b.cols);
    assert_eq!(a.len(), b.len());
    let (da, db) = (a.dim(), b.dim());
    let mut values = Vec::with_capacity(a.values.len() + b.values.len());
    for k in 0..a.len() {
        values.extend_from_slice(&a.values[k * da..(k + 1) * da]);
        values.extend_from_slice(&b.values[k * db..(k + 1) * db]);
    }
    BoundaryTrace { angles: a.angles.clone(), rows: a.rows + b.rows, cols: a.cols, form: a.form, values }
}

/// Split a stacked trace into its first `n` rows and the rest.
pub fn split_trace<T: Real>(t: &BoundaryTrace<T>, n: usize) -> (BoundaryTrace<T>, BoundaryTrace<T>) {
    let d = t.dim();
    let da = n * t.cols;
    let mut a = BoundaryTrace::zeros(&t.angles, n, t.cols, t.form);
    let mut b = BoundaryTrace::zeros(&t.angles, t.rows - n, t.cols, t.form);
    for k in 0..t.len() {
        a.values[k * da..(k + 1) * da].copy_from_slice(&t.values[k * d..k * d + da]);
        b.values[k * (d - da)..(k + 1) * (d - da)].copy_from_slice(&t.values[k * d + da..(k + 1) * d]);
    }
    (a, b)
}

/// 2×2 block potential. `blocks` are stored row-major:
/// Dirac layout `[Q⁺, A'*, A, Q⁻]`, domain layout `[A, Q⁺, Q⁻, B]`.
#[derive(Clone, Debug)]
pub struct BlockPotential<T: Real> {
    pub layout: Layout,
    pub blocks: [MatrixField<T>; 4],
}

impl<T: Real> BlockPotential<T> {
    fn expected_forms(layout: Layout) -> [FormType; 4] {
        match layout {
            Layout::Dirac => [FormType::Function, FormType::Form10, FormType::Form01, FormType::Function],
            Layout::Domain => [FormType::Form01, FormType::Function, FormType::Function, FormType::Form10],
        }
    }

    /// Validate shapes and retag blocks with the form type of their slot.
    pub fn new(layout: Layout, blocks: [MatrixField<T>; 4]) -> Result<Self> {
        let n = blocks[0].rows;
        for b in &blocks {
            if b.rows != n || b.cols != n {
                return Err(Error::Shape(format!("every block must be {n}x{n}, found {}x{}", b.rows, b.cols)));
            }
            if !b.grid.same_as(&blocks[0].grid) {
                return Err(Error::Shape("blocks live on different grids".into()));
            }
        }
        let forms = Self::expected_forms(layout);
        let [a, b, c_, d] = blocks;
        Ok(BlockPotential {
            layout,
            blocks: [a.with_form(forms[0]), b.with_form(forms[1]), c_.with_form(forms[2]), d.with_form(forms[3])],
        })
    }

    /// Dirac layout `[[Q⁺, A'*], [A, Q⁻]]`.
    pub fn dirac(q_plus: MatrixField<T>, a_prime_star: MatrixField<T>, a: MatrixField<T>, q_minus: MatrixField<T>) -> Result<Self> {
        Self::new(Layout::Dirac, [q_plus, a_prime_star, a, q_minus])
    }

    /// Dirac layout with vanishing off-diagonal blocks.
    pub fn diagonal(q_plus: MatrixField<T>, q_minus: MatrixField<T>) -> Result<Self> {
        let z = MatrixField::zeros(&q_plus.grid, q_plus.rows, q_plus.cols, FormType::Function);
        Self::dirac(q_plus, z.clone(), z, q_minus)
    }

    /// Domain layout `[[A, Q⁺], [Q⁻, B]]`.
    pub fn domain(a: MatrixField<T>, q_plus: MatrixField<T>, q_minus: MatrixField<T>, b: MatrixField<T>) -> Result<Self> {
        Self::new(Layout::Domain, [a, q_plus, q_minus, b])
    }

    pub fn zero(grid: &Arc<DomainGrid<T>>, n: usize, layout: Layout) -> Self {
        let z = MatrixField::zeros(grid, n, n, FormType::Function);
        Self::new(layout, [z.clone(), z.clone(), z.clone(), z]).expect("zero potential")
    }

    pub fn n(&self) -> usize {
        self.blocks[0].rows
    }

    pub fn grid(&self) -> &Arc<DomainGrid<T>> {
        &self.blocks[0].grid
    }

    pub fn q_plus(&self) -> &MatrixField<T> {
        match self.layout {
            Layout::Dirac => &self.blocks[0],
            Layout::Domain => &self.blocks[1],
        }
    }

    pub fn q_minus(&self) -> &MatrixField<T> {
        match self.layout {
            Layout::Dirac => &self.blocks[3],
            Layout::Domain => &self.blocks[2],
        }
    }

    /// `A` in either layout.
    pub fn a(&self) -> &MatrixField<T> {
        match self.layout {
            Layout::Dirac => &self.blocks[2],
            Layout::Domain => &self.blocks[0],
        }
    }

    /// The `A'*` slot (Dirac layout) or `B` (domain layout).
    pub fn second_connection(&self) -> &MatrixField<T> {
        match self.layout {
            Layout::Dirac => &self.blocks[1],
            Layout::Domain => &self.blocks[3],
        }
    }

    pub fn is_diagonal(&self, tol: f64) -> bool {
        self.a().max_abs().f64() <= tol && self.second_connection().max_abs().f64() <= tol
    }

    pub fn sub(&self, o: &Self) -> Self {
        assert_eq!(self.layout, o.layout);
        let b = |i: usize| self.blocks[i].sub(&o.blocks[i]);
        BlockPotential { layout: self.layout, blocks: [b(0), b(1), b(2), b(3)] }
    }

    pub fn max_abs(&self) -> f64 {
        self.blocks.iter().map(|b| b.max_abs().f64()).fold(0.0, f64::max)
    }

    /// Pointwise action `V U`.
    pub fn multiply(&self, p: &FieldPair<T>) -> FieldPair<T> {
        let [b0, b1, b2, b3] = &self.blocks;
        let u = b0.matmul(&p.u).with_form(p.u.form).add(&b1.matmul(&p.v).with_form(p.u.form));
        let v = b2.matmul(&p.u).with_form(p.v.form).add(&b3.matmul(&p.v).with_form(p.v.form));
        FieldPair { u, v }
    }

    /// Potential of the formal adjoint `(D + V)* = D + V*` in the Dirac
    /// layout, for the pairing with weight 2 on `dz̄` coefficients:
    /// `V* = [[Q⁺†, 2A†], [½A'*†, Q⁻†]]`.
    pub fn adjoint(&self) -> Result<Self> {
        if self.layout != Layout::Dirac {
            return Err(Error::Precondition("formal adjoint potential is defined for the Dirac layout".into()));
        }
        let [qp, p, a, qm] = &self.blocks;
        Self::dirac(
            qp.adjoint(),
            a.adjoint().scale(c(crate::field::C_FORM, 0.0)),
            p.adjoint().scale(c(1.0 / crate::field::C_FORM, 0.0)),
            qm.adjoint(),
        )
    }

    /// Multiply every block by the taper of the extension operator.
    pub fn extended(&self, width: f64) -> Result<Self> {
        let w = crate::field::taper_weights(self.grid(), width);
        let b = |i: usize| self.blocks[i].times_weights(&w);
        Ok(BlockPotential { layout: self.layout, blocks: [b(0), b(1), b(2), b(3)] })
    }
}

/// `D U` without potential.
pub fn apply_free<T: Real>(layout: Layout, p: &FieldPair<T>) -> FieldPair<T> {
    match layout {
        Layout::Dirac => FieldPair {
            u: dz(&p.v).scale(c(-C_FORM_F, 0.0)).with_form(FormType::Function),
            v: dbar(&p.u),
        },
        Layout::Domain => FieldPair { u: dbar(&p.u), v: dz(&p.v) },
    }
}

const C_FORM_F: f64 = crate::field::C_FORM;

/// `(D + V) U` with difference-based derivatives and pointwise blocks.
pub fn apply_operator<T: Real>(pot: &BlockPotential<T>, p: &FieldPair<T>) -> Result<FieldPair<T>> {
    let n = pot.n();
    if p.u.rows != n || p.v.rows != n || p.u.cols != p.v.cols {
        return Err(Error::Shape(format!(
            "section ({}x{}, {}x{}) does not fit a {n}x{n} block potential",
            p.u.rows, p.u.cols, p.v.rows, p.v.cols
        )));
    }
    let d = apply_free(pot.layout, p);
    let vu = pot.multiply(p);
    Ok(FieldPair { u: d.u.add(&vu.u.with_form(d.u.form)), v: d.v.add(&vu.v.with_form(d.v.form)) })
}
