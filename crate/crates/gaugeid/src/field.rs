//! Grids on the computational square, matrix-valued fields, boundary traces,
//! the taper extension and the masked quadratures.
//!
//! A [`MatrixField`] stores a value at every square node. Inside the disk the
//! values are the data; outside they are a continuation (zero after
//! [`restrict`]). Pipelines keep the natural continuation of their fields so
//! that difference stencils and boundary interpolation stay smooth across
//! the unit circle.

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::scalar::{c64, cof, Real, C};
use num_complex::Complex;
use num_traits::Zero;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::sync::Arc;

/// Pairing constant for `dz̄`- and `dz`-form coefficients: `|dz̄|² = 2`.
pub const C_FORM: f64 = 2.0;

/// Default collar width used by pipelines when extending disk data.
pub const DEFAULT_TAPER: f64 = 0.2;

/// The unit disk sitting inside the square `[-L, L)²` sampled by `n × n` nodes.
#[derive(Debug)]
pub struct DomainGrid<T: Real> {
    pub n: usize,
    pub half_side: T,
    pub spacing: T,
    pub cell_area: T,
    pub radius: T,
    /// Node `iy * n + ix` lies strictly inside the unit disk.
    pub mask: Vec<bool>,
    /// Angles `2πk / M_b`, `M_b = 4n`.
    pub boundary_angles: Vec<T>,
    pub boundary_nodes: Vec<C<T>>,
}

/// Build the computational grid. Nodes sit at `-L + i·(2L/n)` on both axes.
pub fn build_domain<T: Real>(n: usize, half_side: f64) -> Result<Arc<DomainGrid<T>>> {
    if n % 2 != 0 {
        return Err(Error::Grid("n must be even".into()));
    }
    if n < 16 {
        return Err(Error::Grid(format!("n must be at least 16, got {n}")));
    }
    if !(half_side > 1.0) || !half_side.is_finite() {
        return Err(Error::Grid(format!("L must exceed the disk radius 1, got {half_side}")));
    }
    let hs = 2.0 * half_side / n as f64;
    let mut mask = Vec::with_capacity(n * n);
    for iy in 0..n {
        for ix in 0..n {
            let x = -half_side + ix as f64 * hs;
            let y = -half_side + iy as f64 * hs;
            mask.push(x * x + y * y < 1.0);
        }
    }
    let mb = 4 * n;
    let angles: Vec<f64> = (0..mb).map(|k| 2.0 * std::f64::consts::PI * k as f64 / mb as f64).collect();
    let nodes = angles.iter().map(|&t| cof(Complex::from_polar(1.0, t))).collect();
    Ok(Arc::new(DomainGrid {
        n,
        half_side: T::of(half_side),
        spacing: T::of(hs),
        cell_area: T::of(hs * hs),
        radius: T::one(),
        mask,
        boundary_angles: angles.into_iter().map(T::of).collect(),
        boundary_nodes: nodes,
    }))
}

impl<T: Real> DomainGrid<T> {
    #[inline]
    pub fn len(&self) -> usize {
        self.n * self.n
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn index(&self, ix: usize, iy: usize) -> usize {
        iy * self.n + ix
    }

    #[inline]
    pub fn coord(&self, i: usize) -> f64 {
        -self.half_side.f64() + i as f64 * self.spacing.f64()
    }

    /// Position of node `idx` in double precision.
    #[inline]
    pub fn node(&self, idx: usize) -> Complex<f64> {
        Complex::new(self.coord(idx % self.n), self.coord(idx / self.n))
    }

    pub fn nodes(&self) -> impl Iterator<Item = Complex<f64>> + '_ {
        (0..self.len()).map(move |i| self.node(i))
    }

    pub fn mask_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// Number of boundary samples `M_b`.
    pub fn boundary_len(&self) -> usize {
        self.boundary_nodes.len()
    }

    /// Mask nodes whose axis-aligned stencil of half width `k` stays inside the disk.
    pub fn interior_mask(&self, k: usize) -> Vec<bool> {
        let n = self.n;
        let mut out = vec![false; n * n];
        for iy in k..n.saturating_sub(k) {
            for ix in k..n.saturating_sub(k) {
                let ok = (0..=k).all(|j| {
                    self.mask[self.index(ix + j, iy)]
                        && self.mask[self.index(ix - j, iy)]
                        && self.mask[self.index(ix, iy + j)]
                        && self.mask[self.index(ix, iy - j)]
                });
                out[self.index(ix, iy)] = ok;
            }
        }
        out
    }

    pub fn same_as(&self, o: &DomainGrid<T>) -> bool {
        self.n == o.n && self.half_side == o.half_side
    }
}

/// Geometric role of a field's coefficient.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FormType {
    Function,
    /// Coefficient of `dz̄`.
    Form01,
    /// Coefficient of `dz`.
    Form10,
}

impl FormType {
    /// Weight of the pointwise Hermitian pairing.
    pub fn pairing(self) -> f64 {
        match self {
            FormType::Function => 1.0,
            FormType::Form01 | FormType::Form10 => C_FORM,
        }
    }

    pub fn code(self) -> u8 {
        match self {
            FormType::Function => 0,
            FormType::Form01 => 1,
            FormType::Form10 => 2,
        }
    }

    pub fn from_code(c: u8) -> Result<Self> {
        match c {
            0 => Ok(FormType::Function),
            1 => Ok(FormType::Form01),
            2 => Ok(FormType::Form10),
            _ => Err(Error::Shape(format!("unknown form code {c}"))),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            FormType::Function => "function",
            FormType::Form01 => "(0,1)-form",
            FormType::Form10 => "(1,0)-form",
        }
    }
}

/// Grid-sampled map into `rows × cols` complex matrices.
///
/// Storage is one plane per matrix entry: `data[e * N + node]` with
/// `e = i * cols + j`.
#[derive(Clone, Debug)]
pub struct MatrixField<T: Real> {
    pub grid: Arc<DomainGrid<T>>,
    pub rows: usize,
    pub cols: usize,
    pub form: FormType,
    pub data: Vec<C<T>>,
}

impl<T: Real> MatrixField<T> {
    pub fn zeros(grid: &Arc<DomainGrid<T>>, rows: usize, cols: usize, form: FormType) -> Self {
        MatrixField { grid: grid.clone(), rows, cols, form, data: vec![C::zero(); rows * cols * grid.len()] }
    }

    /// Scalar field from a closure in double precision.
    pub fn scalar(grid: &Arc<DomainGrid<T>>, form: FormType, mut f: impl FnMut(Complex<f64>) -> Complex<f64>) -> Self {
        let data = grid.nodes().map(|z| cof(f(z))).collect();
        MatrixField { grid: grid.clone(), rows: 1, cols: 1, form, data }
    }

    /// Matrix field from a closure returning a row-major `rows × cols` array.
    pub fn from_fn(
        grid: &Arc<DomainGrid<T>>,
        rows: usize,
        cols: usize,
        form: FormType,
        mut f: impl FnMut(Complex<f64>) -> Vec<Complex<f64>>,
    ) -> Self {
        let nn = grid.len();
        let mut out = Self::zeros(grid, rows, cols, form);
        for idx in 0..nn {
            let v = f(grid.node(idx));
            assert_eq!(v.len(), rows * cols, "closure returned wrong entry count");
            for (e, z) in v.into_iter().enumerate() {
                out.data[e * nn + idx] = cof(z);
            }
        }
        out
    }

    /// Constant matrix at every node.
    pub fn constant(grid: &Arc<DomainGrid<T>>, m: &Mat<T>, form: FormType) -> Self {
        let nn = grid.len();
        let mut out = Self::zeros(grid, m.rows, m.cols, form);
        for (e, v) in m.data.iter().enumerate() {
            out.data[e * nn..(e + 1) * nn].iter_mut().for_each(|x| *x = *v);
        }
        out
    }

    pub fn identity(grid: &Arc<DomainGrid<T>>, n: usize) -> Self {
        Self::constant(grid, &Mat::identity(n), FormType::Function)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.rows * self.cols
    }

    #[inline]
    pub fn nodes(&self) -> usize {
        self.grid.len()
    }

    pub fn plane(&self, e: usize) -> &[C<T>] {
        let nn = self.nodes();
        &self.data[e * nn..(e + 1) * nn]
    }

    pub fn plane_mut(&mut self, e: usize) -> &mut [C<T>] {
        let nn = self.nodes();
        &mut self.data[e * nn..(e + 1) * nn]
    }

    /// Scalar field holding entry `(i, j)`.
    pub fn entry(&self, i: usize, j: usize) -> Self {
        let e = i * self.cols + j;
        MatrixField { grid: self.grid.clone(), rows: 1, cols: 1, form: self.form, data: self.plane(e).to_vec() }
    }

    /// Field holding column `j` as an `rows × 1` field.
    pub fn column(&self, j: usize) -> Self {
        let mut out = Self::zeros(&self.grid, self.rows, 1, self.form);
        for i in 0..self.rows {
            out.plane_mut(i).copy_from_slice(self.plane(i * self.cols + j));
        }
        out
    }

    /// Assemble a field from scalar entry fields, row-major.
    pub fn from_entries(rows: usize, cols: usize, entries: &[MatrixField<T>]) -> Self {
        assert_eq!(entries.len(), rows * cols);
        let g = entries[0].grid.clone();
        let mut data = Vec::with_capacity(rows * cols * g.len());
        for e in entries {
            assert_eq!(e.dim(), 1);
            data.extend_from_slice(&e.data);
        }
        MatrixField { grid: g, rows, cols, form: entries[0].form, data }
    }

    pub fn at(&self, idx: usize) -> Mat<T> {
        let nn = self.nodes();
        Mat { rows: self.rows, cols: self.cols, data: (0..self.dim()).map(|e| self.data[e * nn + idx]).collect() }
    }

    pub fn set(&mut self, idx: usize, m: &Mat<T>) {
        assert_eq!((m.rows, m.cols), (self.rows, self.cols));
        let nn = self.nodes();
        for (e, v) in m.data.iter().enumerate() {
            self.data[e * nn + idx] = *v;
        }
    }

    pub fn with_form(mut self, form: FormType) -> Self {
        self.form = form;
        self
    }

    fn check_same(&self, o: &Self) -> Result<()> {
        if !self.grid.same_as(&o.grid) {
            return Err(Error::Shape("fields live on different grids".into()));
        }
        if (self.rows, self.cols) != (o.rows, o.cols) {
            return Err(Error::Shape(format!("{}x{} vs {}x{}", self.rows, self.cols, o.rows, o.cols)));
        }
        Ok(())
    }

    pub fn try_add(&self, o: &Self) -> Result<Self> {
        self.check_same(o)?;
        Ok(self.zip(o, |a, b| a + b))
    }

    pub fn try_sub(&self, o: &Self) -> Result<Self> {
        self.check_same(o)?;
        Ok(self.zip(o, |a, b| a - b))
    }

    /// Panicking addition for internal use where shapes are known.
    pub fn add(&self, o: &Self) -> Self {
        self.try_add(o).expect("field addition")
    }

    pub fn sub(&self, o: &Self) -> Self {
        self.try_sub(o).expect("field subtraction")
    }

    fn zip(&self, o: &Self, f: impl Fn(C<T>, C<T>) -> C<T>) -> Self {
        MatrixField {
            grid: self.grid.clone(),
            rows: self.rows,
            cols: self.cols,
            form: self.form,
            data: self.data.iter().zip(&o.data).map(|(a, b)| f(*a, *b)).collect(),
        }
    }

    pub fn scale(&self, s: C<T>) -> Self {
        self.map(|z| z * s)
    }

    pub fn map(&self, f: impl Fn(C<T>) -> C<T>) -> Self {
        MatrixField {
            grid: self.grid.clone(),
            rows: self.rows,
            cols: self.cols,
            form: self.form,
            data: self.data.iter().map(|z| f(*z)).collect(),
        }
    }

    /// Multiply every entry by the scalar field `s` (1×1).
    pub fn times_scalar(&self, s: &MatrixField<T>) -> Self {
        assert_eq!(s.dim(), 1, "scalar multiplier must be 1x1");
        let nn = self.nodes();
        let mut out = self.clone();
        for e in 0..self.dim() {
            for (x, m) in out.data[e * nn..(e + 1) * nn].iter_mut().zip(&s.data) {
                *x = *x * *m;
            }
        }
        out
    }

    /// Multiply every entry by a real weight per node.
    pub fn times_weights(&self, w: &[T]) -> Self {
        let nn = self.nodes();
        let mut out = self.clone();
        for e in 0..self.dim() {
            for (x, m) in out.data[e * nn..(e + 1) * nn].iter_mut().zip(w) {
                *x = *x * *m;
            }
        }
        out
    }

    /// Pointwise matrix product `self · o`. The form type of the result is
    /// the non-function type among the two factors.
    pub fn matmul(&self, o: &Self) -> Self {
        assert_eq!(self.cols, o.rows, "pointwise product shape mismatch");
        let nn = self.nodes();
        let form = if self.form == FormType::Function { o.form } else { self.form };
        let mut out = MatrixField::zeros(&self.grid, self.rows, o.cols, form);
        for i in 0..self.rows {
            for j in 0..o.cols {
                let dst = i * o.cols + j;
                for k in 0..self.cols {
                    let a = &self.data[(i * self.cols + k) * nn..(i * self.cols + k + 1) * nn];
                    let b = &o.data[(k * o.cols + j) * nn..(k * o.cols + j + 1) * nn];
                    let d = &mut out.data[dst * nn..(dst + 1) * nn];
                    for ((x, p), q) in d.iter_mut().zip(a).zip(b) {
                        *x = *x + *p * *q;
                    }
                }
            }
        }
        out
    }

    /// Pointwise conjugate transpose.
    pub fn adjoint(&self) -> Self {
        let nn = self.nodes();
        let mut out = MatrixField::zeros(&self.grid, self.cols, self.rows, self.form);
        for i in 0..self.rows {
            for j in 0..self.cols {
                let src = i * self.cols + j;
                let dst = j * self.rows + i;
                for k in 0..nn {
                    out.data[dst * nn + k] = self.data[src * nn + k].conj();
                }
            }
        }
        out
    }

    pub fn conj(&self) -> Self {
        self.map(|z| z.conj())
    }

    /// Pointwise inverse; fails at the first singular node.
    pub fn inverse(&self) -> Result<Self> {
        if self.rows != self.cols {
            return Err(Error::Shape("inverse of a non-square field".into()));
        }
        let mut out = MatrixField::zeros(&self.grid, self.rows, self.cols, self.form);
        for idx in 0..self.nodes() {
            let inv = self.at(idx).inverse().ok_or_else(|| {
                Error::Singular(format!("matrix field singular at node {idx} ({})", self.grid.node(idx)))
            })?;
            out.set(idx, &inv);
        }
        Ok(out)
    }

    /// Pointwise determinant as a scalar field.
    pub fn det(&self) -> Self {
        let mut out = MatrixField::zeros(&self.grid, 1, 1, FormType::Function);
        for idx in 0..self.nodes() {
            out.data[idx] = self.at(idx).det();
        }
        out
    }

    /// Pointwise trace as a scalar field.
    pub fn trace(&self) -> Self {
        let mut out = MatrixField::zeros(&self.grid, 1, 1, self.form);
        for i in 0..self.rows.min(self.cols) {
            for (x, v) in out.data.iter_mut().zip(self.plane(i * self.cols + i)) {
                *x = *x + *v;
            }
        }
        out
    }

    /// Largest entry modulus over the mask.
    pub fn max_abs_masked(&self) -> T {
        self.max_abs_on(&self.grid.mask)
    }

    pub fn max_abs_on(&self, mask: &[bool]) -> T {
        let nn = self.nodes();
        let mut m = T::zero();
        for e in 0..self.dim() {
            for k in 0..nn {
                if mask[k] {
                    m = m.max(self.data[e * nn + k].norm());
                }
            }
        }
        m
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, z| m.max(z.norm()))
    }

    /// Masked L² norm including the form pairing weight.
    pub fn norm_l2(&self) -> T {
        l2_inner(self, self).map(|z| z.re.max(T::zero()).sqrt()).unwrap_or_else(|_| T::zero())
    }

    /// L² norm over an arbitrary node subset (form weight included).
    pub fn norm_on(&self, mask: &[bool]) -> T {
        let nn = self.nodes();
        let mut s = 0.0f64;
        for e in 0..self.dim() {
            for k in 0..nn {
                if mask[k] {
                    s += self.data[e * nn + k].norm_sqr().f64();
                }
            }
        }
        T::of((s * self.grid.cell_area.f64() * self.form.pairing()).sqrt())
    }

    /// Value at an arbitrary point by tensor Lagrange interpolation with
    /// `order` points per axis (2 gives bilinear).
    pub fn interpolate(&self, z: Complex<f64>, order: usize) -> Vec<C<T>> {
        let st = Stencil::new(&self.grid, z, order);
        (0..self.dim()).map(|e| st.apply(self.plane(e), self.grid.n)).collect()
    }

    /// Flat little-endian serialization: header then node-major values,
    /// each entry stored as two `f64`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let nn = self.nodes();
        let mut out = Vec::with_capacity(32 + 16 * nn * self.dim());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.grid.n as u32).to_le_bytes());
        out.extend_from_slice(&self.grid.half_side.f64().to_le_bytes());
        out.extend_from_slice(&(self.rows as u32).to_le_bytes());
        out.extend_from_slice(&(self.cols as u32).to_le_bytes());
        out.push(self.form.code());
        for k in 0..nn {
            for e in 0..self.dim() {
                let z = c64(self.data[e * nn + k]);
                out.extend_from_slice(&z.re.to_le_bytes());
                out.extend_from_slice(&z.im.to_le_bytes());
            }
        }
        out
    }

    /// Inverse of [`MatrixField::to_bytes`]; rebuilds the grid from the header.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Shape(format!("field file: {m}"));
        if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
            return Err(bad("missing header"));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let version = u32_at(4);
        if version != FORMAT_VERSION {
            return Err(bad(&format!("unsupported version {version}")));
        }
        let n = u32_at(8) as usize;
        let half = f64::from_le_bytes(bytes[12..20].try_into().unwrap());
        let rows = u32_at(20) as usize;
        let cols = u32_at(24) as usize;
        let form = FormType::from_code(bytes[28])?;
        let grid = build_domain::<T>(n, half)?;
        let nn = grid.len();
        let dim = rows * cols;
        if bytes.len() != HEADER_LEN + 16 * nn * dim {
            return Err(bad("payload length does not match header"));
        }
        let mut out = MatrixField::zeros(&grid, rows, cols, form);
        let mut o = HEADER_LEN;
        for k in 0..nn {
            for e in 0..dim {
                let re = f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
                let im = f64::from_le_bytes(bytes[o + 8..o + 16].try_into().unwrap());
                out.data[e * nn + k] = cof(Complex::new(re, im));
                o += 16;
            }
        }
        Ok(out)
    }
}

const MAGIC: &[u8; 4] = b"GIDF";
const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 29;

/// Interpolation stencil: base indices and Lagrange weights per axis.
pub(crate) struct Stencil {
    pub ix0: usize,
    pub iy0: usize,
    pub wx: Vec<f64>,
    pub wy: Vec<f64>,
}

impl Stencil {
    pub fn new<T: Real>(g: &DomainGrid<T>, z: Complex<f64>, order: usize) -> Stencil {
        let order = order.clamp(2, g.n);
        let (ix0, wx) = axis_weights(g, z.re, order);
        let (iy0, wy) = axis_weights(g, z.im, order);
        Stencil { ix0, iy0, wx, wy }
    }

    pub fn apply<T: Real>(&self, plane: &[C<T>], n: usize) -> C<T> {
        let mut acc = Complex::<f64>::zero();
        for (b, wy) in self.wy.iter().enumerate() {
            let row = (self.iy0 + b) * n;
            let mut s = Complex::<f64>::zero();
            for (a, wx) in self.wx.iter().enumerate() {
                s += c64(plane[row + self.ix0 + a]) * *wx;
            }
            acc += s * *wy;
        }
        cof(acc)
    }
}

fn axis_weights<T: Real>(g: &DomainGrid<T>, x: f64, order: usize) -> (usize, Vec<f64>) {
    let hs = g.spacing.f64();
    let u = (x + g.half_side.f64()) / hs;
    let base = u.floor() as i64 - (order as i64 / 2 - 1);
    let base = base.clamp(0, (g.n - order) as i64) as usize;
    let s = u - base as f64;
    let w = (0..order)
        .map(|k| {
            let mut p = 1.0;
            for m in 0..order {
                if m != k {
                    p *= (s - m as f64) / (k as f64 - m as f64);
                }
            }
            p
        })
        .collect();
    (base, w)
}

/// Radial taper used by [`extend`]: `1` up to radius `1 + w/2`, then
/// `1 − S(t)` across the collar `[1 + w/2, 1 + w]`, then `0`, where `S` is
/// the degree-9 smoothstep (four continuous derivatives at both ends).
pub fn taper(r: f64, w: f64) -> f64 {
    taper_between(r, 1.0 + 0.5 * w, 1.0 + w)
}

/// The same smoothstep profile across an arbitrary collar `[r0, r1]`.
pub fn taper_between(r: f64, r0: f64, r1: f64) -> f64 {
    if r <= r0 {
        1.0
    } else if r >= r1 {
        0.0
    } else {
        let t = (r - r0) / (r1 - r0);
        let s = t.powi(5) * (126.0 + t * (-420.0 + t * (540.0 + t * (-315.0 + 70.0 * t))));
        1.0 - s
    }
}

/// Taper values at every node.
pub fn taper_weights<T: Real>(grid: &DomainGrid<T>, w: f64) -> Vec<T> {
    grid.nodes().map(|z| T::of(taper(z.norm(), w))).collect()
}

/// Extension operator: multiplies the field (data plus continuation) by the
/// radial taper so it vanishes well before the edge of the square.
pub fn extend<T: Real>(f: &MatrixField<T>, taper_width: f64) -> Result<MatrixField<T>> {
    let l = f.grid.half_side.f64();
    if !(taper_width > 0.0 && taper_width < l - 1.0) {
        return Err(Error::Precondition(format!("taper width {taper_width} must lie in (0, L-1) = (0, {})", l - 1.0)));
    }
    Ok(f.times_weights(&taper_weights(&f.grid, taper_width)))
}

/// Restriction operator: zero every value outside the disk mask.
pub fn restrict<T: Real>(f: &MatrixField<T>) -> MatrixField<T> {
    let nn = f.nodes();
    let mut out = f.clone();
    for e in 0..f.dim() {
        for k in 0..nn {
            if !f.grid.mask[k] {
                out.data[e * nn + k] = C::zero();
            }
        }
    }
    out
}

/// Masked quadrature of the pointwise Hermitian pairing `Σ f_e conj(g_e)`,
/// weighted by the form pairing constant.
pub fn l2_inner<T: Real>(f: &MatrixField<T>, g: &MatrixField<T>) -> Result<C<T>> {
    f.check_same(g)?;
    if f.form != g.form {
        return Err(Error::FormType { expected: f.form.label().into(), found: g.form.label().into() });
    }
    let nn = f.nodes();
    let mut acc = Complex::<f64>::zero();
    for e in 0..f.dim() {
        let (a, b) = (f.plane(e), g.plane(e));
        for k in 0..nn {
            if f.grid.mask[k] {
                acc += c64(a[k] * b[k].conj());
            }
        }
    }
    Ok(cof(acc * (f.grid.cell_area.f64() * f.form.pairing())))
}

/// Values of a field on the boundary circle, one matrix per boundary node.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryTrace<T: Real> {
    pub angles: Vec<T>,
    pub rows: usize,
    pub cols: usize,
    pub form: FormType,
    /// `values[k * dim + e]`.
    pub values: Vec<C<T>>,
}

impl<T: Real> BoundaryTrace<T> {
    pub fn zeros(angles: &[T], rows: usize, cols: usize, form: FormType) -> Self {
        BoundaryTrace { angles: angles.to_vec(), rows, cols, form, values: vec![C::zero(); angles.len() * rows * cols] }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.rows * self.cols
    }

    pub fn len(&self) -> usize {
        self.angles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.angles.is_empty()
    }

    pub fn component(&self, e: usize) -> Vec<C<T>> {
        let d = self.dim();
        (0..self.len()).map(|k| self.values[k * d + e]).collect()
    }

    pub fn add(&self, o: &Self) -> Self {
        assert_eq!(self.values.len(), o.values.len());
        let mut out = self.clone();
        out.values.iter_mut().zip(&o.values).for_each(|(a, b)| *a = *a + *b);
        out
    }

    pub fn scale(&self, s: C<T>) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|a| *a = *a * s);
        out
    }

    /// Trapezoidal L² norm on the circle.
    pub fn norm(&self) -> T {
        let w = 2.0 * std::f64::consts::PI / self.len() as f64;
        let s: f64 = self.values.iter().map(|z| z.norm_sqr().f64()).sum();
        T::of((s * w).sqrt())
    }

    pub fn max_abs(&self) -> T {
        self.values.iter().fold(T::zero(), |m, z| m.max(z.norm()))
    }

    /// CSV with columns `angle, re_0, im_0, re_1, im_1, ...`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let d = self.dim();
        let mut header = String::from("angle");
        for e in 0..d {
            header.push_str(&format!(",re_{e},im_{e}"));
        }
        writeln!(w, "{header}")?;
        for k in 0..self.len() {
            let mut line = format!("{:.17e}", self.angles[k].f64());
            for e in 0..d {
                let z = c64(self.values[k * d + e]);
                line.push_str(&format!(",{:.17e},{:.17e}", z.re, z.im));
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }
}

/// Boundary trace by bilinear interpolation.
pub fn trace_boundary<T: Real>(f: &MatrixField<T>) -> BoundaryTrace<T> {
    trace_boundary_order(f, 2)
}

/// Boundary trace by tensor Lagrange interpolation of the given order.
pub fn trace_boundary_order<T: Real>(f: &MatrixField<T>, order: usize) -> BoundaryTrace<T> {
    let g = &f.grid;
    let d = f.dim();
    let mut out = BoundaryTrace::zeros(&g.boundary_angles, f.rows, f.cols, f.form);
    for (k, z) in g.boundary_nodes.iter().enumerate() {
        let st = Stencil::new(g, c64(*z), order);
        for e in 0..d {
            out.values[k * d + e] = st.apply(f.plane(e), g.n);
        }
    }
    out
}

/// Interpolation order used by pipelines for boundary traces.
pub const TRACE_ORDER: usize = 10;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::c;

    #[test]
    fn rejects_bad_grids() {
        assert!(matches!(build_domain::<f64>(15, 2.0), Err(Error::Grid(m)) if m.contains("even")));
        assert!(build_domain::<f64>(16, 1.0).is_err());
        assert!(build_domain::<f64>(8, 2.0).is_err());
    }

    #[test]
    fn mask_area_within_perimeter_layer() {
        let g = build_domain::<f64>(16, 2.0).unwrap();
        let area = g.mask_count() as f64 * g.cell_area;
        assert!((area - std::f64::consts::PI).abs() < 2.0 * std::f64::consts::PI * g.spacing);
        let g = build_domain::<f64>(128, 2.0).unwrap();
        let area = g.mask_count() as f64 * g.cell_area;
        assert!((area - std::f64::consts::PI).abs() < 4.0 * g.spacing);
    }

    #[test]
    fn mask_area_error_decreases() {
        let err = |n| {
            let g = build_domain::<f64>(n, 1.5).unwrap();
            (g.mask_count() as f64 * g.cell_area - std::f64::consts::PI).abs()
        };
        assert!(err(256) < err(64));
    }

    #[test]
    fn boundary_nodes_on_circle_and_ordered() {
        let g = build_domain::<f64>(32, 1.5).unwrap();
        assert_eq!(g.boundary_len(), 128);
        for z in &g.boundary_nodes {
            assert!((z.norm() - 1.0).abs() < 1e-15);
        }
        assert!(g.boundary_angles.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(g.boundary_angles[0], 0.0);
        assert!(*g.boundary_angles.last().unwrap() < 2.0 * std::f64::consts::PI);
    }

    #[test]
    fn taper_profile_is_smooth() {
        let w = 0.2;
        // five radii: plateau, collar start, collar middle, collar end, beyond
        let radii = [0.9, 1.1, 1.15, 1.2, 1.3];
        let expect = [1.0, 1.0, 0.5, 0.0, 0.0];
        for (r, e) in radii.iter().zip(expect) {
            assert!((taper(*r, w) - e).abs() < 1e-14, "r={r}");
        }
        let d = 1e-7;
        for r in [1.1, 1.2] {
            let left = (taper(r, w) - taper(r - d, w)) / d;
            let right = (taper(r + d, w) - taper(r, w)) / d;
            assert!((left - right).abs() < 1e-4, "slope jump at {r}");
        }
    }

    #[test]
    fn extend_then_restrict_is_identity_on_disk() {
        let g = build_domain::<f64>(32, 1.5).unwrap();
        let f = MatrixField::scalar(&g, FormType::Function, |z| z * z + 1.0);
        let back = restrict(&extend(&f, 0.3).unwrap());
        for k in 0..g.len() {
            if g.mask[k] {
                assert_eq!(back.data[k], f.data[k]);
            } else {
                assert_eq!(back.data[k], c(0.0, 0.0));
            }
        }
        assert!(extend(&f, 0.6).is_err());
    }

    #[test]
    fn extended_identity_vanishes_near_edge() {
        let g = build_domain::<f64>(32, 1.5).unwrap();
        let id = MatrixField::identity(&g, 2);
        let e = extend(&id, 0.3).unwrap();
        let corner = g.index(0, 0);
        assert!(e.at(corner).max_abs() == 0.0);
        let center = g.index(16, 16);
        assert!(e.at(center).sub(&Mat::identity(2)).max_abs() == 0.0);
    }

    #[test]
    fn inner_products() {
        let g = build_domain::<f64>(128, 1.5).unwrap();
        let one = MatrixField::scalar(&g, FormType::Function, |_| Complex::new(1.0, 0.0));
        let v = l2_inner(&one, &one).unwrap();
        assert!((v.re - std::f64::consts::PI).abs() < 10.0 * g.spacing);
        let form = one.clone().with_form(FormType::Form01);
        let v2 = l2_inner(&form, &form).unwrap();
        assert!((v2.re - C_FORM * v.re).abs() < 1e-12);
        assert!(l2_inner(&one, &form).is_err());
    }

    #[test]
    fn traces_of_polynomials() {
        let g = build_domain::<f64>(64, 1.5).unwrap();
        let f = MatrixField::scalar(&g, FormType::Function, |z| z);
        let t = trace_boundary(&f);
        for (k, th) in g.boundary_angles.iter().enumerate() {
            assert!((t.values[k] - Complex::from_polar(1.0, *th)).norm() < 1e-12);
        }
        let f2 = MatrixField::scalar(&g, FormType::Function, |z| z * z);
        let err = |n| {
            let g = build_domain::<f64>(n, 1.5).unwrap();
            let f2 = MatrixField::scalar(&g, FormType::Function, |z| z * z);
            let t = trace_boundary(&f2);
            g.boundary_angles
                .iter()
                .enumerate()
                .map(|(k, th)| (t.values[k] - Complex::from_polar(1.0, 2.0 * th)).norm())
                .fold(0.0, f64::max)
        };
        let (e1, e2) = (err(32), err(64));
        assert!(e2 < e1 / 3.0, "second-order convergence: {e1} {e2}");
        let hi = trace_boundary_order(&f2, TRACE_ORDER);
        for (k, th) in g.boundary_angles.iter().enumerate() {
            assert!((hi.values[k] - Complex::from_polar(1.0, 2.0 * th)).norm() < 1e-12);
        }
    }

    #[test]
    fn serialization_roundtrip() {
        let g = build_domain::<f64>(16, 1.5).unwrap();
        let f = MatrixField::from_fn(&g, 2, 1, FormType::Form01, |z| vec![z, z.conj() * 2.0]);
        let back = MatrixField::<f64>::from_bytes(&f.to_bytes()).unwrap();
        assert_eq!(back.data, f.data);
        assert_eq!(back.form, FormType::Form01);
        assert!(MatrixField::<f64>::from_bytes(&f.to_bytes()[..40]).is_err());
    }
}
