use num_complex::Complex64;

use super::matrix::ComplexMatrix;
use crate::error::{Error, Result};

/// A pivot smaller than this multiple of the largest initial entry marks the
/// matrix as singular to working precision.
pub const SINGULAR_PIVOT_RATIO: f64 = 1e-14;

/// Partial-pivot LU factorization `PA = LU`, reusable across right-hand sides.
#[derive(Clone, Debug)]
pub struct LuFactorization {
    lu: ComplexMatrix,
    // row i of PA is row perm[i] of A
    perm: Vec<usize>,
    norm1: f64,
}

pub fn lu_factor(a: &ComplexMatrix) -> Result<LuFactorization> {
    if !a.is_square() {
        return Err(Error::NotSquare {
            rows: a.rows(),
            cols: a.cols(),
        });
    }
    let n = a.rows();
    let norm1 = a.max_col_abs_sum();
    let scale = a.max_abs();
    let mut lu = a.clone();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut max_pivot = 0.0f64;
    for k in 0..n {
        let (p, pmag) = (k..n)
            .map(|i| (i, lu[(i, k)].norm()))
            .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if !(pmag >= SINGULAR_PIVOT_RATIO * scale) || pmag == 0.0 {
            let smallest = pmag.max(f64::MIN_POSITIVE);
            return Err(Error::Singular {
                pivot: k,
                condition_estimate: max_pivot.max(scale) / smallest,
            });
        }
        max_pivot = max_pivot.max(pmag);
        if p != k {
            perm.swap(p, k);
            for j in 0..n {
                let tmp = lu[(k, j)];
                lu[(k, j)] = lu[(p, j)];
                lu[(p, j)] = tmp;
            }
        }
        let pivot_inv = 1.0 / lu[(k, k)];
        let (upper, lower) = split_rows(&mut lu, k);
        let pivot_row = &upper[k + 1..];
        for row in lower.chunks_mut(n) {
            let l = row[k] * pivot_inv;
            row[k] = l;
            if l == Complex64::new(0.0, 0.0) {
                continue;
            }
            for (r, u) in row[k + 1..].iter_mut().zip(pivot_row) {
                *r -= l * u;
            }
        }
    }
    Ok(LuFactorization { lu, perm, norm1 })
}

// Returns (row k, rows k+1..n) as disjoint slices.
fn split_rows(m: &mut ComplexMatrix, k: usize) -> (&mut [Complex64], &mut [Complex64]) {
    let n = m.cols();
    let (head, tail) = m.as_mut_slice().split_at_mut((k + 1) * n);
    (&mut head[k * n..], tail)
}

impl LuFactorization {
    pub fn dim(&self) -> usize {
        self.lu.rows()
    }

    /// Solves `A x = b` for a single right-hand side.
    pub fn solve_vec(&self, b: &[Complex64]) -> Vec<Complex64> {
        let n = self.dim();
        assert_eq!(b.len(), n, "right-hand side length mismatch");
        let mut x: Vec<Complex64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let row = self.lu.row(i);
            let s: Complex64 = row[..i].iter().zip(&x[..i]).map(|(l, v)| l * v).sum();
            x[i] -= s;
        }
        for i in (0..n).rev() {
            let row = self.lu.row(i);
            let s: Complex64 = row[i + 1..].iter().zip(&x[i + 1..]).map(|(u, v)| u * v).sum();
            x[i] = (x[i] - s) / row[i];
        }
        x
    }

    /// Solves `A X = B` for a block of right-hand sides.
    pub fn solve(&self, b: &ComplexMatrix) -> Result<ComplexMatrix> {
        let n = self.dim();
        if b.rows() != n {
            return Err(Error::DimensionMismatch(format!(
                "factorization of order {n} against {} right-hand-side rows",
                b.rows()
            )));
        }
        let m = b.cols();
        let mut data = Vec::with_capacity(n * m);
        for &p in &self.perm {
            data.extend_from_slice(b.row(p));
        }
        let mut x = ComplexMatrix::from_row_major(n, m, data)?;
        let zero = Complex64::new(0.0, 0.0);
        for i in 0..n {
            for k in 0..i {
                let l = self.lu[(i, k)];
                if l == zero {
                    continue;
                }
                let (src, dst) = two_rows(&mut x, k, i);
                for (d, s) in dst.iter_mut().zip(src) {
                    *d -= l * s;
                }
            }
        }
        for i in (0..n).rev() {
            for k in i + 1..n {
                let u = self.lu[(i, k)];
                if u == zero {
                    continue;
                }
                let (src, dst) = two_rows(&mut x, k, i);
                for (d, s) in dst.iter_mut().zip(src) {
                    *d -= u * s;
                }
            }
            let inv = 1.0 / self.lu[(i, i)];
            for d in x.row_mut(i) {
                *d *= inv;
            }
        }
        Ok(x)
    }

    /// Solves `A^H x = b`.
    #[allow(clippy::needless_range_loop)]
    pub fn solve_adjoint_vec(&self, b: &[Complex64]) -> Vec<Complex64> {
        let n = self.dim();
        // A^H = U^H L^H P
        let mut w = b.to_vec();
        for i in 0..n {
            let mut s = w[i];
            for k in 0..i {
                s -= self.lu[(k, i)].conj() * w[k];
            }
            w[i] = s / self.lu[(i, i)].conj();
        }
        for i in (0..n).rev() {
            let mut s = w[i];
            for k in i + 1..n {
                s -= self.lu[(k, i)].conj() * w[k];
            }
            w[i] = s;
        }
        let mut x = vec![Complex64::new(0.0, 0.0); n];
        for (i, &p) in self.perm.iter().enumerate() {
            x[p] = w[i];
        }
        x
    }

    pub fn inverse(&self) -> ComplexMatrix {
        self.solve(&ComplexMatrix::identity(self.dim()))
            .expect("identity has matching dimension")
    }

    /// 1-norm condition number estimate (Hager's method).
    pub fn condition_estimate(&self) -> f64 {
        let n = self.dim();
        if n == 0 {
            return 1.0;
        }
        let mut x = vec![Complex64::new(1.0 / n as f64, 0.0); n];
        let mut est = 0.0;
        for _ in 0..5 {
            let y = self.solve_vec(&x);
            let new_est: f64 = y.iter().map(|v| v.norm()).sum();
            let xi: Vec<Complex64> = y
                .iter()
                .map(|v| {
                    let r = v.norm();
                    if r == 0.0 {
                        Complex64::new(1.0, 0.0)
                    } else {
                        v / r
                    }
                })
                .collect();
            let z = self.solve_adjoint_vec(&xi);
            let (j, zmax) = z
                .iter()
                .enumerate()
                .map(|(j, v)| (j, v.norm()))
                .fold((0, -1.0), |b, c| if c.1 > b.1 { c } else { b });
            let ztx: f64 = z.iter().zip(&x).map(|(a, b)| (a.conj() * b).re).sum();
            if new_est <= est || zmax <= ztx {
                est = est.max(new_est);
                break;
            }
            est = new_est;
            x = vec![Complex64::new(0.0, 0.0); n];
            x[j] = Complex64::new(1.0, 0.0);
        }
        est * self.norm1
    }
}

// Returns (row src, row dst) for src != dst.
fn two_rows(m: &mut ComplexMatrix, src: usize, dst: usize) -> (&[Complex64], &mut [Complex64]) {
    let n = m.cols();
    let all = m.as_mut_slice();
    if src < dst {
        let (a, b) = all.split_at_mut(dst * n);
        (&a[src * n..(src + 1) * n], &mut b[..n])
    } else {
        let (a, b) = all.split_at_mut(src * n);
        (&b[..n], &mut a[dst * n..(dst + 1) * n])
    }
}

/// Solves `A X = B` with a fresh factorization.
pub fn lu_solve(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
    lu_factor(a)?.solve(b)
}
