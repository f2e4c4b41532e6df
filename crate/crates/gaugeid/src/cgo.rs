//! Morse phases and complex geometric optics solutions built by Neumann
//! series.
//!
//! For a diagonal Dirac-layout potential `V = diag(Q⁺, Q⁻)` and a Morse
//! phase `Φ` the solutions take the form
//!
//! * `F_h = (e^{Φ/h} r, e^{Φ̄/h} (b + s))` driven by an anti-holomorphic form `b`,
//! * `G_h = (e^{Φ/h} (a + r), e^{Φ̄/h} s)` driven by a holomorphic `a`,
//!
//! with remainders obtained from the conjugated transforms `∂̄_ψ⁻¹` and
//! `(∂̄*_ψ)⁻¹`.

use crate::cauchy::{CauchyTransform, OscillatoryPhase, Support};
use crate::dirac::{apply_operator, BlockPotential, FieldPair};
use crate::error::{Error, Result};
use crate::field::{taper_weights, DomainGrid, FormType, MatrixField, DEFAULT_TAPER};
use crate::scalar::{c, cof, Real, C};
use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

/// Default distance kept between a critical point and the circle.
pub const DEFAULT_MARGIN: f64 = 0.05;

/// Quadratic holomorphic phase `Φ = ±(z − z₀)²`.
#[derive(Clone, Debug)]
pub struct MorsePhase<T: Real> {
    pub z0: Complex<f64>,
    /// `+1` for `(z − z₀)²`, `−1` for its negative.
    pub orientation: f64,
    pub phi: MatrixField<T>,
    pub psi: MatrixField<T>,
    pub phi_re: MatrixField<T>,
}

/// Build `Φ = (z − z₀)²` on the grid.
pub fn make_phase<T: Real>(grid: &Arc<DomainGrid<T>>, z0: Complex<f64>, margin: f64) -> Result<MorsePhase<T>> {
    if z0.norm() >= 1.0 - margin {
        return Err(Error::Precondition(format!("critical point {z0} lies within {margin} of the boundary")));
    }
    Ok(MorsePhase::build(grid, z0, 1.0))
}

impl<T: Real> MorsePhase<T> {
    fn build(grid: &Arc<DomainGrid<T>>, z0: Complex<f64>, orientation: f64) -> Self {
        let f = move |z: Complex<f64>| (z - z0) * (z - z0) * orientation;
        MorsePhase {
            z0,
            orientation,
            phi: MatrixField::scalar(grid, FormType::Function, f),
            psi: MatrixField::scalar(grid, FormType::Function, move |z| Complex::new(f(z).im, 0.0)),
            phi_re: MatrixField::scalar(grid, FormType::Function, move |z| Complex::new(f(z).re, 0.0)),
        }
    }

    /// The phase `−Φ`, used for solutions of the adjoint system.
    pub fn negate(&self) -> Self {
        Self::build(&self.phi.grid, self.z0, -self.orientation)
    }

    /// Closed-form value of `Φ`.
    pub fn value(&self, z: Complex<f64>) -> Complex<f64> {
        (z - self.z0) * (z - self.z0) * self.orientation
    }

    /// Oscillating factor `e^{±2iψ/h}` for the conjugated transforms.
    pub fn oscillatory(&self, h: f64) -> Result<OscillatoryPhase<T>> {
        let (z0, o) = (self.z0, self.orientation);
        OscillatoryPhase::new(&self.phi.grid, h, move |z| ((z - z0) * (z - z0) * o).im, move |z| 2.0 * (z - z0).norm())
    }
}

/// Which CGO family a solution belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum CgoKind {
    /// Driven by `b = dz̄ e_j` in the form slot.
    F,
    /// Driven by `a = e_j` in the function slot.
    G,
}

/// Incident data: `a` holomorphic, `b` anti-holomorphic `dz̄` coefficient.
#[derive(Clone, Debug)]
pub struct IncidentField<T: Real> {
    pub kind: CgoKind,
    pub a: MatrixField<T>,
    pub b: MatrixField<T>,
    /// `θ = dz̄` is constant; this is its coefficient.
    pub theta: Complex<f64>,
}

/// Constant incident field in component `j` of `ℂⁿ`.
pub fn make_incident<T: Real>(grid: &Arc<DomainGrid<T>>, n: usize, kind: CgoKind, j: usize) -> Result<IncidentField<T>> {
    if j >= n {
        return Err(Error::Precondition(format!("component index {j} out of range for n = {n}")));
    }
    let unit = |form| MatrixField::from_fn(grid, n, 1, form, |_| (0..n).map(|i| Complex::new(if i == j { 1.0 } else { 0.0 }, 0.0)).collect());
    let zeros = |form| MatrixField::zeros(grid, n, 1, form);
    Ok(match kind {
        CgoKind::F => IncidentField { kind, a: zeros(FormType::Function), b: unit(FormType::Form01), theta: Complex::new(1.0, 0.0) },
        CgoKind::G => IncidentField { kind, a: unit(FormType::Function), b: zeros(FormType::Form01), theta: Complex::new(1.0, 0.0) },
    })
}

/// Where the remainder operators live.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Region {
    /// Inputs are tapered onto the disk of radius `1 + w` and outputs keep
    /// their continuation there. Used to build solutions.
    Continuation,
    /// Inputs are cut to the disk of radius `rho ≤ 1` and outputs restricted
    /// to it. Used to measure operator norms on `L²`.
    Restricted(f64),
}

/// The operators `S_h = ∂̄_ψ⁻¹ Q⁻ (∂̄*_ψ)⁻¹ Q⁺` and
/// `T_h = (∂̄*_ψ)⁻¹ Q⁺ ∂̄_ψ⁻¹ Q⁻` for one potential, phase and `h`.
pub struct RemainderOperator<T: Real> {
    pub grid: Arc<DomainGrid<T>>,
    pub h: f64,
    q_plus: MatrixField<T>,
    q_minus: MatrixField<T>,
    transform: CauchyTransform<T>,
    /// `w · e^{−2iψ/h}` and `w · e^{2iψ/h}` with `w` the input weight.
    minus: Vec<C<T>>,
    plus: Vec<C<T>>,
    /// Nodes where the operator's `L²` space lives.
    pub region: Vec<bool>,
}

impl<T: Real> RemainderOperator<T> {
    pub fn new(pot: &BlockPotential<T>, phase: &MorsePhase<T>, h: f64, region: Region) -> Result<Self> {
        if pot.layout != crate::dirac::Layout::Dirac || !pot.is_diagonal(0.0) {
            return Err(Error::Precondition("remainder operators need a diagonal Dirac-layout potential".into()));
        }
        let grid = pot.grid().clone();
        let osc = phase.oscillatory(h)?;
        let (transform, weight, region_mask) = match region {
            Region::Continuation => {
                let t = CauchyTransform::for_extended(&grid);
                let w = taper_weights(&grid, t.taper_width);
                let r = grid.nodes().map(|z| z.norm() < 1.0 + t.taper_width).collect::<Vec<bool>>();
                (t, w, r)
            }
            Region::Restricted(rho) => {
                let t = CauchyTransform::with_supports(&grid, Support::Disk(rho), Support::Disk(rho));
                let r: Vec<bool> = grid.nodes().map(|z| z.norm() < rho.min(1.0) && z.norm() < 1.0).collect();
                let w = r.iter().map(|m| if *m { T::one() } else { T::zero() }).collect();
                (t, w, r)
            }
        };
        // the guard looks at where Q⁺ and Q⁻ are supported, which bounds every
        // oscillating input the operator ever sees
        let nn = grid.len();
        let support: Vec<bool> = (0..nn)
            .map(|k| {
                weight[k] != T::zero()
                    && (0..pot.n() * pot.n()).any(|e| {
                        pot.q_plus().data[e * nn + k] != C::new(T::zero(), T::zero())
                            || pot.q_minus().data[e * nn + k] != C::new(T::zero(), T::zero())
                    })
            })
            .collect();
        osc.check_resolution(&support)?;
        let mk = |sign: f64| -> Vec<C<T>> {
            (0..nn)
                .map(|k| cof(Complex::from_polar(weight[k].f64(), sign * 2.0 * osc.psi.data[k].re.f64() / h)))
                .collect()
        };
        Ok(RemainderOperator {
            minus: mk(-1.0),
            plus: mk(1.0),
            grid,
            h,
            q_plus: pot.q_plus().clone(),
            q_minus: pot.q_minus().clone(),
            transform,
            region: region_mask,
        })
    }

    fn weighted(f: &MatrixField<T>, w: &[C<T>]) -> MatrixField<T> {
        let mut g = f.clone();
        for e in 0..g.dim() {
            for (x, m) in g.plane_mut(e).iter_mut().zip(w) {
                *x = *x * *m;
            }
        }
        g
    }

    fn restrict_region(&self, f: MatrixField<T>) -> MatrixField<T> {
        let mut f = f;
        let nn = self.grid.len();
        for e in 0..f.dim() {
            for k in 0..nn {
                if !self.region[k] {
                    f.data[e * nn + k] = C::new(T::zero(), T::zero());
                }
            }
        }
        f
    }

    /// `∂̄_ψ⁻¹ f`: forms to functions.
    pub fn dbar_psi_inv(&self, f: &MatrixField<T>) -> MatrixField<T> {
        self.restrict_region(self.transform.dbar_inv(&Self::weighted(f, &self.minus)))
    }

    /// `(∂̄*_ψ)⁻¹ f`: functions to forms.
    pub fn dbar_star_psi_inv(&self, f: &MatrixField<T>) -> MatrixField<T> {
        let g = Self::weighted(f, &self.plus);
        let out = self.transform.d_inv(&g).scale(c(-0.5, 0.0)).with_form(FormType::Form01);
        self.restrict_region(out)
    }

    pub fn apply_s(&self, f: &MatrixField<T>) -> MatrixField<T> {
        let a = self.dbar_star_psi_inv(&self.q_plus.matmul(f).with_form(FormType::Function));
        self.dbar_psi_inv(&self.q_minus.matmul(&a).with_form(FormType::Form01))
    }

    pub fn apply_t(&self, f: &MatrixField<T>) -> MatrixField<T> {
        let a = self.dbar_psi_inv(&self.q_minus.matmul(f).with_form(FormType::Form01));
        self.dbar_star_psi_inv(&self.q_plus.matmul(&a).with_form(FormType::Function))
    }

    /// Adjoint of `S_h` for the `L²` pairing on the operator region.
    pub fn apply_s_adjoint(&self, f: &MatrixField<T>) -> MatrixField<T> {
        // (∂̄_ψ⁻¹)* f = −½ w e^{2iψ/h} ∂⁻¹ f, a dz̄ coefficient
        let f = self.restrict_region(f.clone());
        let a = Self::weighted(&self.transform.d_inv(&f).scale(c(-0.5, 0.0)), &self.plus).with_form(FormType::Form01);
        let a = self.restrict_region(a);
        let b = self.q_minus.adjoint().matmul(&a).with_form(FormType::Form01);
        // ((∂̄*_ψ)⁻¹)* g = w e^{−2iψ/h} ∂̄⁻¹ g
        let d = Self::weighted(&self.transform.dbar_inv(&b), &self.minus).with_form(FormType::Function);
        let d = self.restrict_region(d);
        self.q_plus.adjoint().matmul(&d).with_form(FormType::Function)
    }

    pub fn norm_on_region(&self, f: &MatrixField<T>) -> f64 {
        f.norm_on(&self.region).f64()
    }

    /// Power iteration on `S*S`; returns the estimate of `‖S_h‖`.
    pub fn norm_estimate(&self, n_comp: usize, iters: usize, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = MatrixField::zeros(&self.grid, n_comp, 1, FormType::Function);
        for v in x.data.iter_mut() {
            *v = c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        }
        x = self.restrict_region(x);
        let mut est = 0.0;
        for _ in 0..iters {
            let nx = self.norm_on_region(&x);
            if nx == 0.0 {
                return 0.0;
            }
            x = x.scale(c(1.0 / nx, 0.0));
            let y = self.apply_s_adjoint(&self.apply_s(&x));
            let ny = self.norm_on_region(&y);
            est = ny.sqrt();
            x = y;
        }
        est
    }
}

/// `S_h f` for a diagonal potential, with the continuation convention.
pub fn apply_sh<T: Real>(f: &MatrixField<T>, pot: &BlockPotential<T>, phase: &MorsePhase<T>, h: f64) -> Result<MatrixField<T>> {
    Ok(RemainderOperator::new(pot, phase, h, Region::Continuation)?.apply_s(f))
}

/// Series controls.
#[derive(Clone, Debug)]
pub struct CgoOptions {
    /// Stop when a series term falls below this fraction of the first term.
    pub term_tol: f64,
    /// Refuse to sum when the estimated `‖S_h‖` reaches this bound.
    pub max_norm: f64,
    pub max_terms: usize,
    pub power_iters: usize,
    pub seed: u64,
}

impl Default for CgoOptions {
    fn default() -> Self {
        CgoOptions { term_tol: 1e-10, max_norm: 0.9, max_terms: 400, power_iters: 8, seed: 17 }
    }
}

/// A CGO solution with its remainders and diagnostics.
#[derive(Clone, Debug)]
pub struct CgoSolution<T: Real> {
    pub phase: MorsePhase<T>,
    pub h: f64,
    pub kind: CgoKind,
    pub incident: IncidentField<T>,
    pub r: MatrixField<T>,
    pub s: MatrixField<T>,
    pub assembled: FieldPair<T>,
    pub term_norms: Vec<f64>,
    pub sh_norm: f64,
}

impl<T: Real> CgoSolution<T> {
    /// `‖(D+V)F‖ / ‖F‖` on nodes where the difference stencil stays in the disk.
    pub fn residual(&self, pot: &BlockPotential<T>) -> Result<f64> {
        let inner = pot.grid().interior_mask(crate::diff::FD_HALF_WIDTH);
        let out = apply_operator(pot, &self.assembled)?;
        Ok(out.norm_on(&inner).f64() / self.assembled.norm_on(&inner).f64())
    }

    pub fn remainder_norm(&self) -> (f64, f64) {
        (self.r.norm_l2().f64(), self.s.norm_l2().f64())
    }
}

/// Largest `|Re Φ| / h` representable without overflow in the scalar type.
fn exponent_limit<T: Real>() -> f64 {
    T::max_value().f64().ln() - 2.0
}

/// Solve for the remainders by Neumann series and assemble the solution.
pub fn solve_remainders<T: Real>(
    pot: &BlockPotential<T>,
    incident: &IncidentField<T>,
    phase: &MorsePhase<T>,
    h: f64,
    opts: &CgoOptions,
) -> Result<CgoSolution<T>> {
    let grid = pot.grid().clone();
    let n = pot.n();
    if incident.a.rows != n || incident.b.rows != n {
        return Err(Error::Shape(format!("incident field has {} rows, potential is {n}x{n}", incident.a.rows)));
    }
    let inner = grid.interior_mask(crate::diff::FD_HALF_WIDTH);
    let scale = incident.b.norm_on(&inner).f64().max(1.0);
    if crate::diff::dz(&incident.b).norm_on(&inner).f64() > 1e-8 * scale
        || crate::diff::dbar(&incident.a).norm_on(&inner).f64() > 1e-8 * incident.a.norm_on(&inner).f64().max(1.0)
    {
        return Err(Error::Precondition("incident a must be holomorphic and b anti-holomorphic".into()));
    }
    let op = RemainderOperator::new(pot, phase, h, Region::Continuation)?;
    let sh_norm = if pot.max_abs() == 0.0 { 0.0 } else { op.norm_estimate(n, opts.power_iters, opts.seed) };
    if sh_norm >= opts.max_norm {
        return Err(Error::Divergence(format!("estimated ‖S_h‖ = {sh_norm:.3} ≥ {}: reduce h", opts.max_norm)));
    }
    let neg = c::<T>(-1.0, 0.0);
    let (r, s, term_norms) = match incident.kind {
        CgoKind::F => {
            let first = op.dbar_psi_inv(&pot.q_minus().matmul(&incident.b).with_form(FormType::Form01)).scale(neg);
            let (sum, norms) = neumann(&first, |x| op.apply_s(x), |x| op.norm_on_region(x), opts)?;
            let s = op.dbar_star_psi_inv(&pot.q_plus().matmul(&sum).with_form(FormType::Function)).scale(neg);
            (sum, s, norms)
        }
        CgoKind::G => {
            let first = op.dbar_star_psi_inv(&pot.q_plus().matmul(&incident.a).with_form(FormType::Function)).scale(neg);
            let (sum, norms) = neumann(&first, |x| op.apply_t(x), |x| op.norm_on_region(x), opts)?;
            let r = op.dbar_psi_inv(&pot.q_minus().matmul(&sum).with_form(FormType::Form01)).scale(neg);
            (r, sum, norms)
        }
    };
    let assembled = assemble(&grid, phase, h, incident, &r, &s, &op.region)?;
    Ok(CgoSolution { phase: phase.clone(), h, kind: incident.kind, incident: incident.clone(), r, s, assembled, term_norms, sh_norm })
}

fn neumann<T: Real>(
    first: &MatrixField<T>,
    apply: impl Fn(&MatrixField<T>) -> MatrixField<T>,
    norm: impl Fn(&MatrixField<T>) -> f64,
    opts: &CgoOptions,
) -> Result<(MatrixField<T>, Vec<f64>)> {
    let mut sum = first.clone();
    let n0 = norm(first);
    let mut norms = vec![n0];
    if n0 == 0.0 {
        return Ok((sum, norms));
    }
    let mut term = first.clone();
    for _ in 0..opts.max_terms {
        term = apply(&term);
        let nt = norm(&term);
        norms.push(nt);
        sum = sum.add(&term);
        if nt < opts.term_tol * n0 {
            return Ok((sum, norms));
        }
        if !nt.is_finite() || nt > 1e3 * n0 {
            return Err(Error::Divergence(format!("series terms grow (‖term‖ = {nt:.3e})")));
        }
    }
    Err(Error::Divergence(format!("series not converged after {} terms", opts.max_terms)))
}

fn assemble<T: Real>(
    grid: &Arc<DomainGrid<T>>,
    phase: &MorsePhase<T>,
    h: f64,
    inc: &IncidentField<T>,
    r: &MatrixField<T>,
    s: &MatrixField<T>,
    region: &[bool],
) -> Result<FieldPair<T>> {
    let nn = grid.len();
    let limit = exponent_limit::<T>();
    let mut ep = vec![C::new(T::zero(), T::zero()); nn];
    let mut em = vec![C::new(T::zero(), T::zero()); nn];
    for k in 0..nn {
        if !region[k] {
            continue;
        }
        let p = phase.value(grid.node(k)) / h;
        if p.re.abs() > limit {
            return Err(Error::Numerical(format!("e^(Φ/h) overflows at h = {h}; use a larger h or double precision")));
        }
        ep[k] = cof(p.exp());
        em[k] = cof(p.conj().exp());
    }
    let u = RemainderOperator::weighted(&inc.a.add(r), &ep).with_form(FormType::Function);
    let v = RemainderOperator::weighted(&inc.b.add(s), &em).with_form(FormType::Form01);
    Ok(FieldPair::new(u, v))
}

/// One row of an `h` sweep.
#[derive(Clone, Debug, serde::Serialize)]
pub struct SweepRow {
    pub h: f64,
    pub norm_r: f64,
    pub norm_s: f64,
    pub residual: f64,
    pub sh_norm: f64,
}

pub const SWEEP_HEADER: &str = "h,norm_r,norm_s,residual,Sh_norm";

impl SweepRow {
    pub fn csv(&self) -> String {
        format!("{:.6e},{:.6e},{:.6e},{:.6e},{:.6e}", self.h, self.norm_r, self.norm_s, self.residual, self.sh_norm)
    }
}

/// Default collar used by CGO grids.
pub fn default_taper() -> f64 {
    DEFAULT_TAPER
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::build_domain;

    fn bump_potential(g: &Arc<DomainGrid<f64>>, amp_p: f64, amp_m: f64) -> BlockPotential<f64> {
        let bump = |z: Complex<f64>| {
            let r2 = z.norm_sqr() / 0.64;
            if r2 < 1.0 {
                (1.0 - r2).powi(4)
            } else {
                0.0
            }
        };
        BlockPotential::diagonal(
            MatrixField::scalar(g, FormType::Function, |z| Complex::new(amp_p * bump(z), 0.0)),
            MatrixField::scalar(g, FormType::Function, |z| Complex::new(amp_m * bump(z - 0.1) * (1.0 + z.re), 0.3 * amp_m * bump(z))),
        )
        .unwrap()
    }

    #[test]
    fn phase_at_origin() {
        let g = build_domain::<f64>(32, 1.25).unwrap();
        let p = make_phase(&g, Complex::new(0.0, 0.0), DEFAULT_MARGIN).unwrap();
        for k in 0..g.len() {
            let z = g.node(k);
            assert!((p.psi.data[k].re - 2.0 * z.re * z.im).abs() < 1e-14);
        }
        let inner = g.interior_mask(crate::diff::FD_HALF_WIDTH);
        assert!(crate::diff::dbar(&p.phi).max_abs_on(&inner) < 1e-12);
        assert!(make_phase(&g, Complex::new(0.99, 0.0), DEFAULT_MARGIN).is_err());
    }

    #[test]
    fn shifted_critical_point() {
        let g = build_domain::<f64>(100, 1.25).unwrap();
        let z0 = Complex::new(0.3, 0.0);
        let p = make_phase(&g, z0, DEFAULT_MARGIN).unwrap();
        let (gx, gy) = (crate::diff::dx(&p.psi), crate::diff::dy(&p.psi));
        let mut best = (f64::MAX, 0);
        for k in 0..g.len() {
            if g.mask[k] {
                let v = gx.data[k].norm().hypot(gy.data[k].norm());
                if v < best.0 {
                    best = (v, k);
                }
            }
        }
        assert!((g.node(best.1) - z0).norm() < 1e-9);
        assert!(best.0 < 1e-9);
    }

    #[test]
    fn incident_fields() {
        let g = build_domain::<f64>(32, 1.25).unwrap();
        let f = make_incident::<f64>(&g, 2, CgoKind::F, 0).unwrap();
        assert_eq!(f.b.form, FormType::Form01);
        assert_eq!(crate::diff::dz(&f.b).max_abs(), 0.0);
        let a = make_incident::<f64>(&g, 2, CgoKind::G, 1).unwrap();
        assert_eq!(crate::diff::dbar(&a.a).max_abs(), 0.0);
        assert!(make_incident::<f64>(&g, 2, CgoKind::F, 2).is_err());
    }

    #[test]
    fn zero_potential_gives_exact_free_solution() {
        let g = build_domain::<f64>(64, 1.25).unwrap();
        let pot = BlockPotential::diagonal(MatrixField::zeros(&g, 1, 1, FormType::Function), MatrixField::zeros(&g, 1, 1, FormType::Function)).unwrap();
        let ph = make_phase(&g, Complex::new(0.0, 0.0), DEFAULT_MARGIN).unwrap();
        let inc = make_incident(&g, 1, CgoKind::F, 0).unwrap();
        let sol = solve_remainders(&pot, &inc, &ph, 0.25, &CgoOptions::default()).unwrap();
        assert_eq!(sol.r.max_abs(), 0.0);
        assert_eq!(sol.s.max_abs(), 0.0);
        assert_eq!(sol.assembled.u.max_abs(), 0.0);
        let k = g.index(32, 40);
        let z = g.node(k);
        assert!((sol.assembled.v.data[k] - (z * z).conj().scale(4.0).exp()).norm() < 1e-12);
    }

    #[test]
    fn adjoint_of_remainder_operator() {
        let g = build_domain::<f64>(64, 1.25).unwrap();
        let pot = bump_potential(&g, 1.0, 1.0);
        let ph = make_phase(&g, Complex::new(0.1, 0.0), DEFAULT_MARGIN).unwrap();
        let op = RemainderOperator::new(&pot, &ph, 0.5, Region::Restricted(0.9)).unwrap();
        let f = op.restrict_region(MatrixField::scalar(&g, FormType::Function, |z| z + 0.5));
        let h = op.restrict_region(MatrixField::scalar(&g, FormType::Function, |z| z.conj() * z - 0.2));
        let lhs = crate::field::l2_inner(&op.apply_s(&f), &h).unwrap();
        let rhs = crate::field::l2_inner(&f, &op.apply_s_adjoint(&h)).unwrap();
        assert!((lhs - rhs).norm() < 1e-10 * lhs.norm().max(1e-3), "{lhs} {rhs}");
    }

    #[test]
    fn constant_potentials_compose() {
        let g = build_domain::<f64>(64, 1.25).unwrap();
        let c0 = Complex::new(0.7, 0.0);
        let id = MatrixField::identity(&g, 1);
        let pot = BlockPotential::diagonal(id.scale(c0), id.scale(c0)).unwrap();
        let ph = make_phase(&g, Complex::new(0.0, 0.0), DEFAULT_MARGIN).unwrap();
        let op = RemainderOperator::new(&pot, &ph, 0.5, Region::Continuation).unwrap();
        let f = MatrixField::scalar(&g, FormType::Function, |z| z * 0.3 + 1.0);
        let a = op.apply_s(&f);
        let b = op.dbar_psi_inv(&op.dbar_star_psi_inv(&f)).scale(c0 * c0);
        assert!(a.sub(&b).max_abs() < 1e-12);
        let zero = BlockPotential::diagonal(id.scale(c0 * 0.0), id.scale(c0)).unwrap();
        assert_eq!(apply_sh(&f, &zero, &ph, 0.5).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn solution_residual_small() {
        let g = build_domain::<f64>(128, 1.25).unwrap();
        let pot = bump_potential(&g, 1.0, 1.0);
        let ph = make_phase(&g, Complex::new(0.0, 0.0), DEFAULT_MARGIN).unwrap();
        for kind in [CgoKind::F, CgoKind::G] {
            let inc = make_incident(&g, 1, kind, 0).unwrap();
            let sol = solve_remainders(&pot, &inc, &ph, 0.25, &CgoOptions::default()).unwrap();
            let res = sol.residual(&pot).unwrap();
            assert!(res < 1e-5, "{kind:?} residual {res}");
            assert!(sol.sh_norm < 0.9);
            // term norms decay at most at the estimated norm plus slack
            for w in sol.term_norms.windows(2).skip(1) {
                if w[0] > 1e-14 {
                    assert!(w[1] / w[0] <= sol.sh_norm + 0.05, "{:?}", sol.term_norms);
                }
            }
        }
    }

    #[test]
    fn divergence_is_reported() {
        let g = build_domain::<f64>(64, 1.25).unwrap();
        let pot = bump_potential(&g, 40.0, 40.0);
        let ph = make_phase(&g, Complex::new(0.0, 0.0), DEFAULT_MARGIN).unwrap();
        let inc = make_incident(&g, 1, CgoKind::F, 0).unwrap();
        let err = solve_remainders(&pot, &inc, &ph, 0.5, &CgoOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Divergence(ref m) if m.contains("reduce h")), "{err}");
    }

    #[test]
    fn sweep_row_csv() {
        let r = SweepRow { h: 0.5, norm_r: 0.0, norm_s: 0.0, residual: 0.0, sh_norm: 0.0 };
        assert_eq!(r.csv().split(',').count(), SWEEP_HEADER.split(',').count());
    }
}
