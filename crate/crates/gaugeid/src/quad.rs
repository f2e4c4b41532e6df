//! Quadrature rules on the unit disk.

use crate::field::{MatrixField, Stencil};
use crate::scalar::{c64, Real};
use num_complex::Complex;
use std::f64::consts::PI;

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; m];
    let mut w = vec![0.0; m];
    for i in 0..m {
        let mut t = (PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, t);
            for k in 2..=m {
                let p2 = ((2 * k - 1) as f64 * t * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let p = if m == 0 { 1.0 } else { p1 };
            let pm = if m == 1 { 1.0 } else { p0 };
            dp = m as f64 * (t * p - pm) / (t * t - 1.0);
            let dt = p / dp;
            t -= dt;
            if dt.abs() < 1e-16 {
                break;
            }
        }
        x[i] = t;
        w[i] = 2.0 / ((1.0 - t * t) * dp * dp);
    }
    (x, w)
}

/// Polar rule on the disk of radius `rho`: Gauss–Legendre in `r`,
/// trapezoid in angle. Returns `(points, weights)`.
pub fn disk_rule(n_r: usize, n_theta: usize, rho: f64) -> (Vec<Complex<f64>>, Vec<f64>) {
    let (x, w) = gauss_legendre(n_r);
    let mut pts = Vec::with_capacity(n_r * n_theta);
    let mut wts = Vec::with_capacity(n_r * n_theta);
    let dth = 2.0 * PI / n_theta as f64;
    for (xi, wi) in x.iter().zip(&w) {
        let r = 0.5 * rho * (xi + 1.0);
        for k in 0..n_theta {
            pts.push(Complex::from_polar(r, (k as f64 + 0.5) * dth));
            wts.push(0.5 * rho * wi * r * dth);
        }
    }
    (pts, wts)
}

/// `∫_{|z|<1} f dA` for a closed-form integrand.
pub fn disk_integral_fn(f: impl Fn(Complex<f64>) -> Complex<f64>, n_r: usize, n_theta: usize) -> Complex<f64> {
    let (p, w) = disk_rule(n_r, n_theta, 1.0);
    p.iter().zip(&w).map(|(z, wi)| f(*z) * *wi).sum()
}

/// High-order `∫_{|z|<1} f dA` of every entry of a field, using tensor
/// Lagrange interpolation of the grid values (the continuation outside the
/// disk must be smooth for full accuracy).
pub fn disk_integral<T: Real>(f: &MatrixField<T>, order: usize) -> Vec<Complex<f64>> {
    let g = &f.grid;
    let n_r = g.n / 2 + 8;
    let n_theta = 2 * g.n;
    let (pts, wts) = disk_rule(n_r, n_theta, 1.0);
    let mut acc = vec![Complex::new(0.0, 0.0); f.dim()];
    for (z, w) in pts.iter().zip(&wts) {
        let st = Stencil::new(g, *z, order);
        for (e, a) in acc.iter_mut().enumerate() {
            *a += c64(st.apply(f.plane(e), g.n)) * *w;
        }
    }
    acc
}

/// High-order `∫_Ω ⟨f, g⟩` with the form pairing weight of `f`.
pub fn disk_inner<T: Real>(f: &MatrixField<T>, g: &MatrixField<T>, order: usize) -> Complex<f64> {
    let prod = pointwise_pairing(f, g);
    disk_integral(&prod, order)[0] * f.form.pairing()
}

/// Scalar field `Σ_e f_e conj(g_e)`.
pub fn pointwise_pairing<T: Real>(f: &MatrixField<T>, g: &MatrixField<T>) -> MatrixField<T> {
    assert_eq!(f.dim(), g.dim());
    let mut out = MatrixField::zeros(&f.grid, 1, 1, crate::field::FormType::Function);
    for e in 0..f.dim() {
        for ((o, a), b) in out.data.iter_mut().zip(f.plane(e)).zip(g.plane(e)) {
            *o = *o + *a * b.conj();
        }
    }
    out
}
