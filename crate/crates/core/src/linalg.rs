//! Minimal dense linear algebra: square matrices, a cyclic Jacobi
//! eigensolver for real symmetric matrices, and a Cholesky solve used by the
//! least-squares driver.

use crate::error::{Error, Result};
use crate::real::Real;

/// Dense square matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat<R> {
    n: usize,
    data: Vec<R>,
}

impl<R: Real> Mat<R> {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![R::zero(); n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for k in 0..n {
            m.set(k, k, R::one());
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> R {
        self.data[r * self.n + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: R) {
        self.data[r * self.n + c] = v;
    }

    #[inline]
    pub fn add_to(&mut self, r: usize, c: usize, v: R) {
        self.data[r * self.n + c] = self.data[r * self.n + c] + v;
    }

    pub fn row(&self, r: usize) -> &[R] {
        &self.data[r * self.n..(r + 1) * self.n]
    }

    /// C = A + s*B
    pub fn add_scaled(&self, other: &Self, s: R) -> Self {
        assert_eq!(self.n, other.n);
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| a + s * b)
            .collect();
        Self { n: self.n, data }
    }

    pub fn scale(&self, s: R) -> Self {
        Self {
            n: self.n,
            data: self.data.iter().map(|&a| a * s).collect(),
        }
    }

    /// Matrix product (used by operator-algebra tests; n is small).
    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.n, other.n);
        let n = self.n;
        let mut out = Self::zeros(n);
        for r in 0..n {
            for k in 0..n {
                let a = self.get(r, k);
                if a == R::zero() {
                    continue;
                }
                for c in 0..n {
                    out.add_to(r, c, a * other.get(k, c));
                }
            }
        }
        out
    }

    /// Kronecker product of two square matrices.
    pub fn kron(a: &Self, b: &Self) -> Self {
        let (na, nb) = (a.n, b.n);
        let n = na * nb;
        let mut out = Self::zeros(n);
        for ra in 0..na {
            for ca in 0..na {
                let v = a.get(ra, ca);
                if v == R::zero() {
                    continue;
                }
                for rb in 0..nb {
                    for cb in 0..nb {
                        out.set(ra * nb + rb, ca * nb + cb, v * b.get(rb, cb));
                    }
                }
            }
        }
        out
    }

    pub fn matvec(&self, v: &[R]) -> Vec<R> {
        assert_eq!(v.len(), self.n);
        (0..self.n)
            .map(|r| {
                self.row(r)
                    .iter()
                    .zip(v)
                    .fold(R::zero(), |acc, (&a, &x)| acc + a * x)
            })
            .collect()
    }

    /// Bilinear form u^T M v.
    pub fn bilinear(&self, u: &[R], v: &[R]) -> R {
        let mv = self.matvec(v);
        dot(u, &mv)
    }

    pub fn trace(&self) -> R {
        (0..self.n).fold(R::zero(), |acc, k| acc + self.get(k, k))
    }

    pub fn frobenius_norm(&self) -> R {
        self.data
            .iter()
            .fold(R::zero(), |acc, &a| acc + a * a)
            .sqrt()
    }

    pub fn max_abs(&self) -> R {
        self.data
            .iter()
            .fold(R::zero(), |acc, &a| acc.max(a.abs()))
    }
}

pub fn dot<R: Real>(a: &[R], b: &[R]) -> R {
    a.iter().zip(b).fold(R::zero(), |acc, (&x, &y)| acc + x * y)
}

/// Eigendecomposition of a real symmetric matrix.
///
/// Cyclic Jacobi rotations (Numerical Recipes flavour). Plane rotations only
/// ever touch entry pairs that are non-zero, so exact structural zeros of the
/// input are preserved: a Hamiltonian that is block diagonal over an exact
/// quantum number stays block diagonal, and every eigenvector ends up
/// supported on a single block.
///
/// Returns eigenvalues (unsorted) and eigenvectors as columns of `v`.
pub fn jacobi_eigen<R: Real>(a: &Mat<R>) -> Result<(Vec<R>, Mat<R>)> {
    let n = a.dim();
    let mut a = a.clone();
    let mut v = Mat::identity(n);
    let mut d: Vec<R> = (0..n).map(|k| a.get(k, k)).collect();
    let mut b = d.clone();
    let mut z = vec![R::zero(); n];

    let scale = a.max_abs().max(R::one());
    let tol = R::epsilon() * scale * R::of(1e-2);

    for sweep in 0..64 {
        let mut off = R::zero();
        for p in 0..n.saturating_sub(1) {
            for q in (p + 1)..n {
                off = off + a.get(p, q).abs();
            }
        }
        if off <= tol {
            return Ok((d, v));
        }

        // First sweeps: skip tiny elements, as in the classic scheme.
        let thresh = if sweep < 3 {
            R::of(0.2) * off / R::of((n * n) as f64)
        } else {
            R::zero()
        };

        for p in 0..n - 1 {
            for q in (p + 1)..n {
                let apq = a.get(p, q);
                let g = R::of(100.0) * apq.abs();
                if sweep > 3
                    && d[p].abs() + g == d[p].abs()
                    && d[q].abs() + g == d[q].abs()
                {
                    a.set(p, q, R::zero());
                    continue;
                }
                if apq.abs() <= thresh {
                    continue;
                }

                let h = d[q] - d[p];
                let t = if h.abs() + g == h.abs() {
                    apq / h
                } else {
                    let theta = R::half() * h / apq;
                    let mut t = R::one() / (theta.abs() + (R::one() + theta * theta).sqrt());
                    if theta < R::zero() {
                        t = -t;
                    }
                    t
                };
                let c = R::one() / (R::one() + t * t).sqrt();
                let s = t * c;
                let tau = s / (R::one() + c);
                let h = t * apq;
                z[p] = z[p] - h;
                z[q] = z[q] + h;
                d[p] = d[p] - h;
                d[q] = d[q] + h;
                a.set(p, q, R::zero());

                let rot = |x: R, y: R| (x - s * (y + x * tau), y + s * (x - y * tau));
                for j in 0..p {
                    let (x, y) = rot(a.get(j, p), a.get(j, q));
                    a.set(j, p, x);
                    a.set(j, q, y);
                }
                for j in (p + 1)..q {
                    let (x, y) = rot(a.get(p, j), a.get(j, q));
                    a.set(p, j, x);
                    a.set(j, q, y);
                }
                for j in (q + 1)..n {
                    let (x, y) = rot(a.get(p, j), a.get(q, j));
                    a.set(p, j, x);
                    a.set(q, j, y);
                }
                for j in 0..n {
                    let (x, y) = rot(v.get(j, p), v.get(j, q));
                    v.set(j, p, x);
                    v.set(j, q, y);
                }
            }
        }
        for p in 0..n {
            b[p] = b[p] + z[p];
            d[p] = b[p];
            z[p] = R::zero();
        }
    }

    Err(Error::NonConvergence { b0: f64::NAN })
}

/// Solve the symmetric positive definite system M x = rhs by Cholesky.
pub fn solve_spd<R: Real>(m: &Mat<R>, rhs: &[R]) -> Result<Vec<R>> {
    let n = m.dim();
    assert_eq!(rhs.len(), n);
    let mut l = Mat::zeros(n);
    for j in 0..n {
        let mut diag = m.get(j, j);
        for k in 0..j {
            diag = diag - l.get(j, k) * l.get(j, k);
        }
        if diag <= R::zero() {
            return Err(Error::RankDeficient(format!(
                "non positive-definite pivot at column {j}"
            )));
        }
        let diag = diag.sqrt();
        l.set(j, j, diag);
        for i in (j + 1)..n {
            let mut v = m.get(i, j);
            for k in 0..j {
                v = v - l.get(i, k) * l.get(j, k);
            }
            l.set(i, j, v / diag);
        }
    }
    // forward then back substitution
    let mut y = vec![R::zero(); n];
    for i in 0..n {
        let mut v = rhs[i];
        for k in 0..i {
            v = v - l.get(i, k) * y[k];
        }
        y[i] = v / l.get(i, i);
    }
    let mut x = vec![R::zero(); n];
    for i in (0..n).rev() {
        let mut v = y[i];
        for k in (i + 1)..n {
            v = v - l.get(k, i) * x[k];
        }
        x[i] = v / l.get(i, i);
    }
    Ok(x)
}

/// Inverse of a symmetric positive definite matrix (for fit covariances).
pub fn invert_spd<R: Real>(m: &Mat<R>) -> Result<Mat<R>> {
    let n = m.dim();
    let mut out = Mat::zeros(n);
    for c in 0..n {
        let mut e = vec![R::zero(); n];
        e[c] = R::one();
        let col = solve_spd(m, &e)?;
        for r in 0..n {
            out.set(r, c, col[r]);
        }
    }
    Ok(out)
}
