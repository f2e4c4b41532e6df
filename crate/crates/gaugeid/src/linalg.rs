//! Small dense complex linear algebra and a matrix-free GMRES.
//!
//! Matrices here are tiny (pointwise field values, Cauchy-data bases of a
//! few hundred columns), so straightforward algorithms suffice.

use crate::scalar::{Real, C};
use num_traits::{One, Zero};

/// Dense row-major complex matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Mat<T: Real> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<C<T>>,
}

impl<T: Real> Mat<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat { rows, cols, data: vec![C::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = C::one();
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C<T>) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Mat { rows, cols, data }
    }

    pub fn from_rows(rows: &[&[C<T>]]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |x| x.len());
        Self::from_fn(r, c, |i, j| rows[i][j])
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> C<T> {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: C<T>) {
        self.data[i * self.cols + j] = v;
    }

    pub fn col(&self, j: usize) -> Vec<C<T>> {
        (0..self.rows).map(|i| self.at(i, j)).collect()
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.at(j, i).conj())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.at(j, i))
    }

    pub fn mul(&self, o: &Self) -> Self {
        assert_eq!(self.cols, o.rows, "matrix product shape mismatch");
        let mut out = Self::zeros(self.rows, o.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.at(i, k);
                if a.is_zero() {
                    continue;
                }
                let orow = &o.data[k * o.cols..(k + 1) * o.cols];
                let dst = &mut out.data[i * o.cols..(i + 1) * o.cols];
                for (d, b) in dst.iter_mut().zip(orow) {
                    *d = *d + a * *b;
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &[C<T>]) -> Vec<C<T>> {
        assert_eq!(self.cols, v.len());
        (0..self.rows)
            .map(|i| {
                let row = &self.data[i * self.cols..(i + 1) * self.cols];
                row.iter().zip(v).fold(C::zero(), |acc, (a, b)| acc + *a * *b)
            })
            .collect()
    }

    pub fn add(&self, o: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (o.rows, o.cols));
        Mat { rows: self.rows, cols: self.cols, data: self.data.iter().zip(&o.data).map(|(a, b)| *a + *b).collect() }
    }

    pub fn sub(&self, o: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (o.rows, o.cols));
        Mat { rows: self.rows, cols: self.cols, data: self.data.iter().zip(&o.data).map(|(a, b)| *a - *b).collect() }
    }

    pub fn scale(&self, s: C<T>) -> Self {
        Mat { rows: self.rows, cols: self.cols, data: self.data.iter().map(|a| *a * s).collect() }
    }

    /// Largest entry modulus.
    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, z| m.max(z.norm()))
    }

    pub fn frobenius(&self) -> T {
        self.data.iter().map(|z| z.norm_sqr()).sum::<T>().sqrt()
    }

    /// LU factorization with partial pivoting; `None` when numerically singular.
    pub fn lu(&self) -> Option<Lu<T>> {
        assert_eq!(self.rows, self.cols, "LU needs a square matrix");
        let n = self.rows;
        let mut a = self.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut sign = T::one();
        let scale = self.max_abs();
        if scale == T::zero() {
            return None;
        }
        for k in 0..n {
            let (mut p, mut best) = (k, T::zero());
            for i in k..n {
                let v = a.at(i, k).norm();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best <= scale * T::epsilon() * T::of(n as f64) {
                return None;
            }
            if p != k {
                for j in 0..n {
                    a.data.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
                sign = -sign;
            }
            let piv = a.at(k, k);
            for i in k + 1..n {
                let f = a.at(i, k) / piv;
                a.set(i, k, f);
                for j in k + 1..n {
                    let v = a.at(i, j) - f * a.at(k, j);
                    a.set(i, j, v);
                }
            }
        }
        Some(Lu { a, perm, sign })
    }

    pub fn inverse(&self) -> Option<Self> {
        let lu = self.lu()?;
        let n = self.rows;
        let mut inv = Self::zeros(n, n);
        for j in 0..n {
            let mut e = vec![C::zero(); n];
            e[j] = C::one();
            let x = lu.solve(&e);
            for i in 0..n {
                inv.set(i, j, x[i]);
            }
        }
        Some(inv)
    }

    pub fn det(&self) -> C<T> {
        match self.lu() {
            None => C::zero(),
            Some(lu) => {
                let mut d = C::new(lu.sign, T::zero());
                for i in 0..self.rows {
                    d = d * lu.a.at(i, i);
                }
                d
            }
        }
    }

    pub fn trace(&self) -> C<T> {
        (0..self.rows.min(self.cols)).fold(C::zero(), |acc, i| acc + self.at(i, i))
    }

    /// Spectral norm (largest singular value).
    pub fn norm2(&self) -> T {
        singular_values(self).first().copied().unwrap_or_else(T::zero)
    }
}

/// Packed LU factors from [`Mat::lu`].
pub struct Lu<T: Real> {
    a: Mat<T>,
    perm: Vec<usize>,
    sign: T,
}

impl<T: Real> Lu<T> {
    pub fn solve(&self, b: &[C<T>]) -> Vec<C<T>> {
        let n = self.a.rows;
        let mut x: Vec<C<T>> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            for j in 0..i {
                x[i] = x[i] - self.a.at(i, j) * x[j];
            }
        }
        for i in (0..n).rev() {
            for j in i + 1..n {
                x[i] = x[i] - self.a.at(i, j) * x[j];
            }
            x[i] = x[i] / self.a.at(i, i);
        }
        x
    }
}

/// Eigen-decomposition of a Hermitian matrix by cyclic Jacobi rotations.
/// Returns eigenvalues in descending order and the matching unit eigenvectors as columns.
pub fn hermitian_eigen<T: Real>(h: &Mat<T>) -> (Vec<T>, Mat<T>) {
    assert_eq!(h.rows, h.cols);
    let n = h.rows;
    let mut a = h.clone();
    let mut v = Mat::identity(n);
    let tol = T::epsilon() * T::of(0.5);
    for _sweep in 0..60 {
        let mut off = T::zero();
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    off = off + a.at(i, j).norm_sqr();
                }
            }
        }
        let total = a.frobenius();
        if off.sqrt() <= tol * total.max(T::min_positive_value()) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a.at(p, q);
                let r = apq.norm();
                if r <= T::min_positive_value() {
                    continue;
                }
                let app = a.at(p, p).re;
                let aqq = a.at(q, q).re;
                let phase = apq / r;
                let theta = (aqq - app) / (r + r);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let cs = T::one() / (t * t + T::one()).sqrt();
                let sn = t * cs;
                // rotation acting on columns p, q: [c, s*phase; -s*conj(phase), c]
                let g_pq = phase * sn;
                for k in 0..n {
                    let akp = a.at(k, p);
                    let akq = a.at(k, q);
                    a.set(k, p, akp * cs - akq * g_pq.conj());
                    a.set(k, q, akp * g_pq + akq * cs);
                }
                for k in 0..n {
                    let apk = a.at(p, k);
                    let aqk = a.at(q, k);
                    a.set(p, k, apk * cs - aqk * g_pq);
                    a.set(q, k, apk * g_pq.conj() + aqk * cs);
                }
                for k in 0..n {
                    let vkp = v.at(k, p);
                    let vkq = v.at(k, q);
                    v.set(k, p, vkp * cs - vkq * g_pq.conj());
                    v.set(k, q, vkp * g_pq + vkq * cs);
                }
            }
        }
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| a.at(j, j).re.partial_cmp(&a.at(i, i).re).unwrap_or(std::cmp::Ordering::Equal));
    let vals = idx.iter().map(|&i| a.at(i, i).re).collect();
    let vecs = Mat::from_fn(n, n, |r, c| v.at(r, idx[c]));
    (vals, vecs)
}

/// Singular values in descending order.
pub fn singular_values<T: Real>(m: &Mat<T>) -> Vec<T> {
    let g = if m.rows >= m.cols { m.adjoint().mul(m) } else { m.mul(&m.adjoint()) };
    let (vals, _) = hermitian_eigen(&g);
    vals.into_iter().map(|x| x.max(T::zero()).sqrt()).collect()
}

/// Orthonormal basis of the column space by modified Gram-Schmidt with one
/// reorthogonalization pass. Columns whose residual falls below `rel_tol`
/// times the largest column norm are dropped.
pub fn orthonormal_columns<T: Real>(m: &Mat<T>, rel_tol: T) -> Mat<T> {
    let scale = (0..m.cols).map(|j| norm(&m.col(j))).fold(T::zero(), T::max);
    let mut basis: Vec<Vec<C<T>>> = Vec::new();
    for j in 0..m.cols {
        let mut v = m.col(j);
        for _pass in 0..2 {
            for q in &basis {
                let p = dot(q, &v);
                for (x, y) in v.iter_mut().zip(q) {
                    *x = *x - *y * p;
                }
            }
        }
        let nv = norm(&v);
        if nv > rel_tol * scale && nv > T::zero() {
            let inv = T::one() / nv;
            basis.push(v.into_iter().map(|x| x * inv).collect());
        }
    }
    let k = basis.len();
    Mat::from_fn(m.rows, k, |i, j| basis[j][i])
}

/// Least-squares solution of `a x ≈ b` through the normal equations of an
/// orthonormalized basis; `a` must have full column rank.
pub fn least_squares<T: Real>(a: &Mat<T>, b: &[C<T>]) -> Option<Vec<C<T>>> {
    let (q, r) = qr(a)?;
    let qb = q.adjoint().mul_vec(b);
    let n = a.cols;
    let mut x = vec![C::zero(); n];
    for i in (0..n).rev() {
        let mut s = qb[i];
        for j in i + 1..n {
            s = s - r.at(i, j) * x[j];
        }
        let d = r.at(i, i);
        if d.norm() == T::zero() {
            return None;
        }
        x[i] = s / d;
    }
    Some(x)
}

/// Thin QR factorization by modified Gram-Schmidt with reorthogonalization.
pub fn qr<T: Real>(a: &Mat<T>) -> Option<(Mat<T>, Mat<T>)> {
    let (m, n) = (a.rows, a.cols);
    let mut q = Mat::zeros(m, n);
    let mut r = Mat::zeros(n, n);
    let scale = a.max_abs();
    for j in 0..n {
        let mut v = a.col(j);
        for _pass in 0..2 {
            for k in 0..j {
                let qk = q.col(k);
                let p = dot(&qk, &v);
                r.set(k, j, r.at(k, j) + p);
                for (x, y) in v.iter_mut().zip(&qk) {
                    *x = *x - *y * p;
                }
            }
        }
        let nv = norm(&v);
        if nv <= scale * T::epsilon() * T::of(m as f64) {
            return None;
        }
        r.set(j, j, C::new(nv, T::zero()));
        for i in 0..m {
            q.set(i, j, v[i] / nv);
        }
    }
    Some((q, r))
}

/// Hermitian inner product `Σ conj(a_i) b_i`.
pub fn dot<T: Real>(a: &[C<T>], b: &[C<T>]) -> C<T> {
    a.iter().zip(b).fold(C::zero(), |acc, (x, y)| acc + x.conj() * *y)
}

pub fn norm<T: Real>(a: &[C<T>]) -> T {
    a.iter().map(|z| z.norm_sqr()).sum::<T>().sqrt()
}

/// Outcome of a [`gmres`] solve.
#[derive(Clone, Debug)]
pub struct GmresReport {
    pub iterations: usize,
    pub relative_residual: f64,
    pub converged: bool,
}

/// Restarted GMRES for `A x = b` with a matrix-free operator. The initial
/// guess is zero.
pub fn gmres<T: Real>(
    apply: &mut dyn FnMut(&[C<T>]) -> Vec<C<T>>,
    b: &[C<T>],
    restart: usize,
    max_iter: usize,
    tol: f64,
) -> (Vec<C<T>>, GmresReport) {
    let n = b.len();
    let bnorm = norm(b).f64();
    let mut x = vec![C::zero(); n];
    if bnorm == 0.0 {
        return (x, GmresReport { iterations: 0, relative_residual: 0.0, converged: true });
    }
    let mut total = 0;
    let mut rel = 1.0;
    while total < max_iter {
        let ax = apply(&x);
        let r: Vec<C<T>> = b.iter().zip(&ax).map(|(p, q)| *p - *q).collect();
        let beta = norm(&r);
        rel = beta.f64() / bnorm;
        if rel <= tol {
            return (x, GmresReport { iterations: total, relative_residual: rel, converged: true });
        }
        let m = restart.min(max_iter - total).max(1);
        let mut basis: Vec<Vec<C<T>>> = Vec::with_capacity(m + 1);
        basis.push(r.iter().map(|z| *z / beta).collect());
        let mut hcol: Vec<Vec<C<T>>> = Vec::with_capacity(m);
        let mut cs: Vec<C<T>> = Vec::new();
        let mut sn: Vec<C<T>> = Vec::new();
        let mut g = vec![C::new(beta, T::zero())];
        let mut k_done = 0;
        for k in 0..m {
            let mut w = apply(&basis[k]);
            let mut hk = vec![C::zero(); k + 2];
            for _pass in 0..2 {
                for (i, q) in basis.iter().enumerate() {
                    let p = dot(q, &w);
                    hk[i] = hk[i] + p;
                    for (x_, y) in w.iter_mut().zip(q) {
                        *x_ = *x_ - *y * p;
                    }
                }
            }
            let wn = norm(&w);
            hk[k + 1] = C::new(wn, T::zero());
            for i in 0..k {
                let t = cs[i].conj() * hk[i] + sn[i].conj() * hk[i + 1];
                hk[i + 1] = -sn[i] * hk[i] + cs[i] * hk[i + 1];
                hk[i] = t;
            }
            let (a, bb) = (hk[k], hk[k + 1]);
            let den = (a.norm_sqr() + bb.norm_sqr()).sqrt();
            let (c_k, s_k) = if den == T::zero() { (C::one(), C::zero()) } else { (a / den, bb / den) };
            hk[k] = c_k.conj() * a + s_k.conj() * bb;
            hk[k + 1] = C::zero();
            let gk = g[k];
            g.push(-s_k * gk);
            g[k] = c_k.conj() * gk;
            cs.push(c_k);
            sn.push(s_k);
            hcol.push(hk);
            total += 1;
            k_done = k + 1;
            rel = g[k + 1].norm().f64() / bnorm;
            if rel <= tol || wn == T::zero() {
                break;
            }
            basis.push(w.into_iter().map(|z| z / wn).collect());
        }
        let mut y = vec![C::zero(); k_done];
        for i in (0..k_done).rev() {
            let mut s = g[i];
            for j in i + 1..k_done {
                s = s - hcol[j][i] * y[j];
            }
            y[i] = s / hcol[i][i];
        }
        for (j, yj) in y.iter().enumerate() {
            for (xi, qi) in x.iter_mut().zip(&basis[j]) {
                *xi = *xi + *qi * *yj;
            }
        }
        if rel <= tol {
            let ax = apply(&x);
            let res: Vec<C<T>> = b.iter().zip(&ax).map(|(p, q)| *p - *q).collect();
            rel = norm(&res).f64() / bnorm;
            if rel <= tol * 10.0 {
                return (x, GmresReport { iterations: total, relative_residual: rel, converged: true });
            }
        }
    }
    (x, GmresReport { iterations: total, relative_residual: rel, converged: rel <= tol })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::c;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(n: usize, m: usize, seed: u64) -> Mat<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Mat::from_fn(n, m, |_, _| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
    }

    #[test]
    fn inverse_roundtrip() {
        let a = random(6, 6, 1);
        let inv = a.inverse().unwrap();
        assert!(a.mul(&inv).sub(&Mat::identity(6)).max_abs() < 1e-12);
    }

    #[test]
    fn det_of_diagonal() {
        let a = Mat::<f64>::from_fn(3, 3, |i, j| if i == j { c(i as f64 + 1.0, 0.0) } else { c(0.0, 0.0) });
        assert!((a.det() - c(6.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn singular_matrix_has_no_lu() {
        let a = Mat::<f64>::from_fn(3, 3, |i, _| c(i as f64, 0.0));
        assert!(a.lu().is_none());
    }

    #[test]
    fn eigen_reconstructs_hermitian() {
        let b = random(5, 5, 2);
        let h = b.add(&b.adjoint());
        let (vals, vecs) = hermitian_eigen(&h);
        let d = Mat::from_fn(5, 5, |i, j| if i == j { c(vals[i], 0.0) } else { c(0.0, 0.0) });
        let back = vecs.mul(&d).mul(&vecs.adjoint());
        assert!(back.sub(&h).max_abs() < 1e-10);
        assert!(vals.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn unitary_has_unit_singular_values() {
        let q = orthonormal_columns(&random(4, 4, 3), 1e-12);
        for s in singular_values(&q) {
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn least_squares_recovers_exact_solution() {
        let a = random(10, 4, 4);
        let x: Vec<_> = (0..4).map(|i| c(i as f64, 1.0)).collect();
        let b = a.mul_vec(&x);
        let got = least_squares(&a, &b).unwrap();
        for (p, q) in got.iter().zip(&x) {
            assert!((p - q).norm() < 1e-12);
        }
    }

    #[test]
    fn gmres_solves_shifted_system() {
        let a = random(30, 30, 5).scale(c(0.1, 0.0)).add(&Mat::identity(30));
        let b: Vec<_> = (0..30).map(|i| c((i as f64).sin(), 0.5)).collect();
        let (x, rep) = gmres(&mut |v: &[C<f64>]| a.mul_vec(v), &b, 10, 200, 1e-12);
        assert!(rep.converged, "{rep:?}");
        let r = a.mul_vec(&x);
        let err: f64 = r.iter().zip(&b).map(|(p, q)| (p - q).norm_sqr()).sum::<f64>().sqrt();
        assert!(err < 1e-10);
    }
}
