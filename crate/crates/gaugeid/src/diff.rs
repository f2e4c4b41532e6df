//! Centered finite differences of high order on the square grid.
//!
//! Derivatives use `FD_HALF_WIDTH` points on each side. Near the edge of the
//! square the stencil shrinks to whatever fits; pipelines only read
//! derivatives well inside the square where all fields are tapered to zero.

use crate::field::{FormType, MatrixField};
use crate::scalar::{c64, cof, Real, C};
use num_complex::Complex;

/// Stencil half width (order `2 * FD_HALF_WIDTH`).
pub const FD_HALF_WIDTH: usize = 6;

/// Weights `c_j`, `j = 1..=k`, of the centered first derivative
/// `f'(x) ≈ Σ c_j (f(x + j h) − f(x − j h)) / h`.
pub fn central_weights(k: usize) -> Vec<f64> {
    let fact = |m: usize| (1..=m).fold(1.0f64, |a, b| a * b as f64);
    (1..=k)
        .map(|j| {
            let sign = if j % 2 == 1 { 1.0 } else { -1.0 };
            sign * fact(k) * fact(k) / (j as f64 * fact(k - j) * fact(k + j))
        })
        .collect()
}

/// Derivative of one plane along x (`axis = 0`) or y (`axis = 1`).
pub fn diff_plane<T: Real>(plane: &[C<T>], n: usize, hs: f64, axis: usize) -> Vec<C<T>> {
    let tables: Vec<Vec<f64>> = (0..=FD_HALF_WIDTH).map(central_weights).collect();
    let mut out = vec![C::new(T::zero(), T::zero()); n * n];
    let (stride, step) = if axis == 0 { (n, 1) } else { (1, n) };
    for line in 0..n {
        let base = line * stride;
        for i in 0..n {
            let k = i.min(n - 1 - i).min(FD_HALF_WIDTH);
            if k == 0 {
                continue;
            }
            let w = &tables[k];
            let mut acc = Complex::<f64>::new(0.0, 0.0);
            for (j, cj) in w.iter().enumerate() {
                let j1 = j + 1;
                acc += (c64(plane[base + (i + j1) * step]) - c64(plane[base + (i - j1) * step])) * *cj;
            }
            out[base + i * step] = cof(acc / hs);
        }
    }
    out
}

fn map_planes<T: Real>(f: &MatrixField<T>, form: FormType, op: impl Fn(&[C<T>]) -> Vec<C<T>>) -> MatrixField<T> {
    let mut out = MatrixField::zeros(&f.grid, f.rows, f.cols, form);
    for e in 0..f.dim() {
        let d = op(f.plane(e));
        out.plane_mut(e).copy_from_slice(&d);
    }
    out
}

/// `∂_x f`.
pub fn dx<T: Real>(f: &MatrixField<T>) -> MatrixField<T> {
    let (n, hs) = (f.grid.n, f.grid.spacing.f64());
    map_planes(f, f.form, |p| diff_plane(p, n, hs, 0))
}

/// `∂_y f`.
pub fn dy<T: Real>(f: &MatrixField<T>) -> MatrixField<T> {
    let (n, hs) = (f.grid.n, f.grid.spacing.f64());
    map_planes(f, f.form, |p| diff_plane(p, n, hs, 1))
}

fn combine<T: Real>(f: &MatrixField<T>, sign: f64, form: FormType) -> MatrixField<T> {
    let (n, hs) = (f.grid.n, f.grid.spacing.f64());
    map_planes(f, form, |p| {
        let a = diff_plane(p, n, hs, 0);
        let b = diff_plane(p, n, hs, 1);
        let half = T::of(0.5);
        let i = C::new(T::zero(), T::of(sign));
        a.iter().zip(&b).map(|(x, y)| (*x + i * *y) * half).collect()
    })
}

/// `∂_z̄ f = ½(∂_x + i∂_y) f`; the result is tagged as a `dz̄` coefficient.
pub fn dbar<T: Real>(f: &MatrixField<T>) -> MatrixField<T> {
    combine(f, 1.0, FormType::Form01)
}

/// `∂_z f = ½(∂_x − i∂_y) f`; the result is tagged as a `dz` coefficient.
pub fn dz<T: Real>(f: &MatrixField<T>) -> MatrixField<T> {
    combine(f, -1.0, FormType::Form10)
}

/// `∂_z̄` keeping the form tag of the input.
pub fn dbar_raw<T: Real>(f: &MatrixField<T>) -> MatrixField<T> {
    combine(f, 1.0, f.form)
}

/// `∂_z` keeping the form tag of the input.
pub fn dz_raw<T: Real>(f: &MatrixField<T>) -> MatrixField<T> {
    combine(f, -1.0, f.form)
}
