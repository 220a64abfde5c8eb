//! Symmetric tridiagonal matrices and pencils: inertia by LDLᵀ pivots,
//! bisection for individual eigenvalues, inverse iteration for vectors.

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Tridiag {
    pub diag: Vec<f64>,
    /// `off[i]` couples rows `i` and `i + 1`.
    pub off: Vec<f64>,
}

impl Tridiag {
    pub fn zeros(n: usize) -> Self {
        Tridiag {
            diag: vec![0.0; n],
            off: vec![0.0; n.saturating_sub(1)],
        }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let n = self.len();
        let mut y = vec![0.0; n];
        for i in 0..n {
            let mut v = self.diag[i] * x[i];
            if i > 0 {
                v += self.off[i - 1] * x[i - 1];
            }
            if i + 1 < n {
                v += self.off[i] * x[i + 1];
            }
            y[i] = v;
        }
        y
    }

    pub fn quad_form(&self, x: &[f64]) -> f64 {
        let y = self.matvec(x);
        x.iter().zip(&y).map(|(a, b)| a * b).sum()
    }

    /// `self - theta * other`.
    pub fn shifted(&self, theta: f64, other: &Tridiag) -> Tridiag {
        Tridiag {
            diag: self.diag.iter().zip(&other.diag).map(|(a, b)| a - theta * b).collect(),
            off: self.off.iter().zip(&other.off).map(|(a, b)| a - theta * b).collect(),
        }
    }

    /// `D S D` for a diagonal scaling `D`.
    pub fn congruence(&self, scale: &[f64]) -> Tridiag {
        Tridiag {
            diag: self.diag.iter().enumerate().map(|(i, a)| a * scale[i] * scale[i]).collect(),
            off: self.off.iter().enumerate().map(|(i, a)| a * scale[i] * scale[i + 1]).collect(),
        }
    }

    /// Drops the last row and column.
    pub fn leading(&self, n: usize) -> Tridiag {
        Tridiag {
            diag: self.diag[..n].to_vec(),
            off: self.off[..n.saturating_sub(1)].to_vec(),
        }
    }

    fn norm_inf(&self) -> f64 {
        (0..self.len())
            .map(|i| {
                let mut s = self.diag[i].abs();
                if i > 0 {
                    s += self.off[i - 1].abs();
                }
                if i < self.off.len() {
                    s += self.off[i].abs();
                }
                s
            })
            .fold(0.0, f64::max)
    }

    /// LDLᵀ pivots, or `None` if an exact zero pivot occurs.
    fn pivots(&self) -> Option<Vec<f64>> {
        let n = self.len();
        let mut d = Vec::with_capacity(n);
        for i in 0..n {
            let v = if i == 0 {
                self.diag[0]
            } else {
                self.diag[i] - self.off[i - 1] * self.off[i - 1] / d[i - 1]
            };
            if v == 0.0 || !v.is_finite() {
                return None;
            }
            d.push(v);
        }
        Some(d)
    }

    /// Number of negative eigenvalues, by Sylvester's law of inertia.
    pub fn negative_count(&self) -> Result<usize> {
        if let Some(d) = self.pivots() {
            return Ok(d.iter().filter(|&&v| v < 0.0).count());
        }
        let scale = self.norm_inf().max(f64::MIN_POSITIVE);
        for k in 1..=3 {
            let eps = scale * f64::EPSILON * 10f64.powi(k);
            let mut a = self.clone();
            for v in &mut a.diag {
                *v += eps;
            }
            if let Some(d) = a.pivots() {
                return Ok(d.iter().filter(|&&v| v < 0.0).count());
            }
        }
        Err(Error::Numerical("persistent zero pivot in inertia count".into()))
    }

    /// Solves `self · x = rhs` by Gaussian elimination with partial pivoting.
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let n = self.len();
        if n == 1 {
            if self.diag[0] == 0.0 {
                return Err(Error::Numerical("singular 1x1 system".into()));
            }
            return Ok(vec![rhs[0] / self.diag[0]]);
        }
        // Rows hold (sub, diag, sup, sup2) after pivoting.
        let mut dl: Vec<f64> = self.off.clone();
        let mut d: Vec<f64> = self.diag.clone();
        let mut du: Vec<f64> = self.off.clone();
        let mut du2 = vec![0.0; n.saturating_sub(2)];
        let mut b = rhs.to_vec();
        let tiny = self.norm_inf() * f64::EPSILON * 1e-3;
        for i in 0..n - 1 {
            if d[i].abs() >= dl[i].abs() {
                if d[i] == 0.0 {
                    d[i] = tiny.max(f64::MIN_POSITIVE);
                }
                let f = dl[i] / d[i];
                dl[i] = f;
                d[i + 1] -= f * du[i];
                b[i + 1] -= f * b[i];
                if i < n - 2 {
                    du2[i] = 0.0;
                }
            } else {
                let f = d[i] / dl[i];
                d[i] = dl[i];
                dl[i] = f;
                let tmp = du[i];
                du[i] = d[i + 1];
                d[i + 1] = tmp - f * d[i + 1];
                if i < n - 2 {
                    du2[i] = du[i + 1];
                    du[i + 1] = -f * du[i + 1];
                }
                b.swap(i, i + 1);
                b[i + 1] -= f * b[i];
            }
        }
        if d[n - 1] == 0.0 {
            d[n - 1] = tiny.max(f64::MIN_POSITIVE);
        }
        let mut x = vec![0.0; n];
        x[n - 1] = b[n - 1] / d[n - 1];
        x[n - 2] = (b[n - 2] - du[n - 2] * x[n - 1]) / d[n - 2];
        for i in (0..n.saturating_sub(2)).rev() {
            x[i] = (b[i] - du[i] * x[i + 1] - du2[i] * x[i + 2]) / d[i];
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("tridiagonal solve produced non-finite values".into()));
        }
        Ok(x)
    }
}

/// Symmetric pencil `S x = theta B x` with `B` positive definite.
#[derive(Debug, Clone, Copy)]
pub struct Pencil<'a> {
    pub s: &'a Tridiag,
    pub b: &'a Tridiag,
}

impl<'a> Pencil<'a> {
    pub fn new(s: &'a Tridiag, b: &'a Tridiag) -> Self {
        Pencil { s, b }
    }

    /// Number of pencil eigenvalues strictly below `theta`.
    pub fn count_below(&self, theta: f64) -> Result<usize> {
        self.s.shifted(theta, self.b).negative_count()
    }

    /// Any `theta` with at least `k` eigenvalues below it, found by doubling.
    fn upper_bound(&self, k: usize) -> Result<f64> {
        let mut t = 1.0;
        for _ in 0..200 {
            if self.count_below(t)? >= k {
                return Ok(t);
            }
            t *= 2.0;
        }
        Err(Error::Numerical("could not bracket pencil eigenvalue from above".into()))
    }

    fn lower_bound(&self, k: usize) -> Result<f64> {
        let mut t = -1.0;
        for _ in 0..200 {
            if self.count_below(t)? < k {
                return Ok(t);
            }
            t *= 2.0;
        }
        Err(Error::Numerical("could not bracket pencil eigenvalue from below".into()))
    }

    /// The `k`-th smallest eigenvalue (1-based) by bisection on the count.
    pub fn eigenvalue(&self, k: usize) -> Result<f64> {
        assert!(k >= 1 && k <= self.s.len());
        let mut lo = self.lower_bound(k)?;
        let mut hi = self.upper_bound(k)?;
        for _ in 0..300 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.count_below(mid)? >= k {
                hi = mid;
            } else {
                lo = mid;
            }
            if hi - lo <= 1e-14 * lo.abs().max(hi.abs()) {
                break;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// Eigenvector for an eigenvalue estimate, normalised to `xᵀ B x = 1`.
    pub fn eigenvector(&self, theta: f64) -> Result<Vec<f64>> {
        let n = self.s.len();
        let scale = theta.abs().max(1e-8);
        let shift = theta + 1e-10 * scale;
        let a = self.s.shifted(shift, self.b);
        let mut x: Vec<f64> = (0..n).map(|i| 1.0 + 0.1 * ((i * 7 + 3) % 11) as f64).collect();
        let mut last_q = f64::NAN;
        for _ in 0..20 {
            let bx = self.b.matvec(&x);
            let mut next = a.solve(&bx)?;
            let norm = self.b.quad_form(&next).sqrt();
            if !(norm > 0.0 && norm.is_finite()) {
                return Err(Error::Numerical("inverse iteration collapsed".into()));
            }
            for v in &mut next {
                *v /= norm;
            }
            let q = self.s.quad_form(&next);
            x = next;
            if (q - last_q).abs() <= 1e-13 * q.abs().max(1e-300) {
                break;
            }
            last_q = q;
        }
        // Fix the sign so the largest component is positive.
        let imax = (0..n).max_by(|&i, &j| x[i].abs().partial_cmp(&x[j].abs()).unwrap()).unwrap();
        if x[imax] < 0.0 {
            for v in &mut x {
                *v = -*v;
            }
        }
        Ok(x)
    }

    pub fn rayleigh_quotient(&self, x: &[f64]) -> f64 {
        self.s.quad_form(x) / self.b.quad_form(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian(n: usize) -> Tridiag {
        Tridiag {
            diag: vec![2.0; n],
            off: vec![-1.0; n - 1],
        }
    }

    fn identity(n: usize) -> Tridiag {
        Tridiag {
            diag: vec![1.0; n],
            off: vec![0.0; n - 1],
        }
    }

    #[test]
    fn laplacian_eigenvalues() {
        let n = 50;
        let s = laplacian(n);
        let b = identity(n);
        let p = Pencil::new(&s, &b);
        for k in [1usize, 7, 50] {
            let exact = 2.0 - 2.0 * (k as f64 * std::f64::consts::PI / (n as f64 + 1.0)).cos();
            assert!((p.eigenvalue(k).unwrap() - exact).abs() < 1e-12);
        }
        let shifted = s.shifted(1.0, &b);
        let expected = (1..=n)
            .filter(|&k| 2.0 - 2.0 * (k as f64 * std::f64::consts::PI / (n as f64 + 1.0)).cos() < 1.0)
            .count();
        assert_eq!(shifted.negative_count().unwrap(), expected);
    }

    #[test]
    fn eigenvector_satisfies_pencil() {
        let n = 30;
        let s = laplacian(n).shifted(0.5, &identity(n));
        let b = Tridiag {
            diag: vec![4.0; n],
            off: vec![1.0; n - 1],
        };
        let p = Pencil::new(&s, &b);
        let theta = p.eigenvalue(1).unwrap();
        let x = p.eigenvector(theta).unwrap();
        let sx = s.matvec(&x);
        let bx = b.matvec(&x);
        let res: f64 = sx.iter().zip(&bx).map(|(a, c)| (a - theta * c).abs()).fold(0.0, f64::max);
        assert!(res < 1e-10, "{res}");
        assert!((p.rayleigh_quotient(&x) - theta).abs() < 1e-12);
    }

    #[test]
    fn solve_with_pivoting() {
        let a = Tridiag {
            diag: vec![0.0, 0.0, 3.0, 1.0],
            off: vec![1.0, 2.0, 1.0],
        };
        let x = vec![1.0, -2.0, 0.5, 4.0];
        let rhs = a.matvec(&x);
        let got = a.solve(&rhs).unwrap();
        for i in 0..4 {
            assert!((got[i] - x[i]).abs() < 1e-13);
        }
    }

    #[test]
    fn zero_pivot_is_perturbed() {
        let a = Tridiag {
            diag: vec![0.0, -1.0],
            off: vec![1.0],
        };
        // Eigenvalues (-1 ± sqrt 5)/2: one negative.
        assert_eq!(a.negative_count().unwrap(), 1);
    }

    proptest::proptest! {
        #[test]
        fn inertia_is_congruence_invariant(
            diag in proptest::collection::vec(-3.0f64..3.0, 12),
            off in proptest::collection::vec(-2.0f64..2.0, 11),
            scale in proptest::collection::vec(0.01f64..100.0, 12),
        ) {
            let a = Tridiag { diag, off };
            let c = a.congruence(&scale);
            proptest::prop_assert_eq!(a.negative_count().unwrap(), c.negative_count().unwrap());
        }
    }
}
