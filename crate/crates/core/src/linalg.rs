//! Symmetric banded matrices and a banded Cholesky factorization.
//!
//! The Hermite element Gram matrices couple only the four degrees of freedom
//! of neighbouring nodes, so everything the solver needs is a symmetric band
//! of half-bandwidth 3. Lower triangle storage, row major: row `i` keeps
//! `A[i][j]` for `j in [i-hbw, i]` at offset `j - i + hbw`.

use alloc::vec;
use alloc::vec::Vec;

#[derive(Clone, Debug)]
pub struct BandedSym {
    n: usize,
    hbw: usize,
    data: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct BandedChol {
    n: usize,
    hbw: usize,
    data: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FactorError {
    /// Pivot `sqrt` argument was not strictly positive at the given row.
    NotPositiveDefinite(usize),
}

impl core::fmt::Display for FactorError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            FactorError::NotPositiveDefinite(row) => {
                write!(f, "matrix not positive definite at row {row}")
            }
        }
    }
}

impl BandedSym {
    pub fn zeros(n: usize, hbw: usize) -> Self {
        BandedSym {
            n,
            hbw,
            data: vec![0.0; n * (hbw + 1)],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(j <= i && i - j <= self.hbw);
        i * (self.hbw + 1) + (j + self.hbw - i)
    }

    /// Read `A[i][j]`; either triangle, zero outside the band.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        if r - c > self.hbw {
            0.0
        } else {
            self.data[self.idx(r, c)]
        }
    }

    /// Accumulate into `A[i][j]` (and by symmetry `A[j][i]`).
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        assert!(r - c <= self.hbw, "entry ({i},{j}) outside band");
        let k = self.idx(r, c);
        self.data[k] += v;
    }

    /// y = A x, using both triangles of the stored band.
    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n);
        assert_eq!(y.len(), self.n);
        y.fill(0.0);
        for i in 0..self.n {
            let lo = i.saturating_sub(self.hbw);
            for j in lo..=i {
                let a = self.data[self.idx(i, j)];
                y[i] += a * x[j];
                if i != j {
                    y[j] += a * x[i];
                }
            }
        }
    }

    /// x^T A y.
    pub fn quadratic_form(&self, x: &[f64], y: &[f64]) -> f64 {
        assert_eq!(x.len(), self.n);
        assert_eq!(y.len(), self.n);
        let mut acc = 0.0;
        for i in 0..self.n {
            let lo = i.saturating_sub(self.hbw);
            for j in lo..=i {
                let a = self.data[self.idx(i, j)];
                acc += a * x[i] * y[j];
                if i != j {
                    acc += a * x[j] * y[i];
                }
            }
        }
        acc
    }

    pub fn cholesky(&self) -> Result<BandedChol, FactorError> {
        let n = self.n;
        let hbw = self.hbw;
        let mut l = vec![0.0f64; n * (hbw + 1)];
        let at = |i: usize, j: usize| i * (hbw + 1) + (j + hbw - i);
        for i in 0..n {
            let lo = i.saturating_sub(hbw);
            for j in lo..=i {
                let mut sum = self.data[self.idx(i, j)];
                let klo = lo.max(j.saturating_sub(hbw));
                for k in klo..j {
                    sum -= l[at(i, k)] * l[at(j, k)];
                }
                if i == j {
                    if sum <= 0.0 {
                        return Err(FactorError::NotPositiveDefinite(i));
                    }
                    l[at(i, i)] = libm::sqrt(sum);
                } else {
                    l[at(i, j)] = sum / l[at(j, j)];
                }
            }
        }
        Ok(BandedChol { n, hbw, data: l })
    }
}

impl BandedChol {
    /// Solve A x = b in place, A = L L^T.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        assert_eq!(b.len(), self.n);
        let hbw = self.hbw;
        let at = |i: usize, j: usize| i * (hbw + 1) + (j + hbw - i);
        for i in 0..self.n {
            let lo = i.saturating_sub(hbw);
            let mut sum = b[i];
            for j in lo..i {
                sum -= self.data[at(i, j)] * b[j];
            }
            b[i] = sum / self.data[at(i, i)];
        }
        for i in (0..self.n).rev() {
            let hi = (i + hbw).min(self.n - 1);
            let mut sum = b[i];
            for j in (i + 1)..=hi {
                sum -= self.data[at(j, i)] * b[j];
            }
            b[i] = sum / self.data[at(i, i)];
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

/// Solve a dense square system `A x = b` by LU with partial pivoting.
///
/// `a` is row major `n * n` and is destroyed; `b` is overwritten with the
/// solution. Returns `false` when a pivot falls to round-off relative to the
/// largest entry of `A` (singular to working precision), in which case `b`
/// is garbage. Meant for the small Jacobian systems the critical point
/// refinement builds — not a general workhorse.
pub fn lu_solve(a: &mut [f64], b: &mut [f64]) -> bool {
    let n = b.len();
    assert_eq!(a.len(), n * n);
    let amax = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let pivot_tol = (n as f64 * f64::EPSILON * amax).max(f64::MIN_POSITIVE);
    for col in 0..n {
        let mut piv = col;
        let mut best = a[col * n + col].abs();
        for r in (col + 1)..n {
            let v = a[r * n + col].abs();
            if v > best {
                best = v;
                piv = r;
            }
        }
        if best <= pivot_tol {
            return false;
        }
        if piv != col {
            for c in 0..n {
                a.swap(col * n + c, piv * n + c);
            }
            b.swap(col, piv);
        }
        let d = a[col * n + col];
        for r in (col + 1)..n {
            let f = a[r * n + col] / d;
            if f == 0.0 {
                continue;
            }
            for c in (col + 1)..n {
                a[r * n + c] -= f * a[col * n + c];
            }
            b[r] -= f * b[col];
        }
    }
    for i in (0..n).rev() {
        let mut s = b[i];
        for j in (i + 1)..n {
            s -= a[i * n + j] * b[j];
        }
        b[i] = s / a[i * n + i];
    }
    true
}
