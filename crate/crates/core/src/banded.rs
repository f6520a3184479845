//! Banded LU factorization with partial pivoting.
//!
//! Storage follows the LAPACK `gbtrf` convention: column-major with leading
//! dimension `2·kl + ku + 1`, where the top `kl` rows of each column hold
//! fill-in produced by row interchanges.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BandError {
    #[error("matrix is singular: zero pivot in column {col}")]
    Singular { col: usize },
    #[error("entry ({row}, {col}) outside the band (kl = {kl}, ku = {ku})")]
    OutsideBand {
        row: usize,
        col: usize,
        kl: usize,
        ku: usize,
    },
}

#[derive(Debug, Clone)]
pub struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    ldab: usize,
    ab: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let ldab = 2 * kl + ku + 1;
        Self {
            n,
            kl,
            ku,
            ldab,
            ab: vec![0.0; ldab * n],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    fn offset(&self, row: usize, col: usize) -> Option<usize> {
        if row + self.ku < col || col + self.kl < row || row >= self.n || col >= self.n {
            return None;
        }
        Some(self.kl + self.ku + row - col + col * self.ldab)
    }

    #[inline]
    pub fn add(&mut self, row: usize, col: usize, v: f64) -> Result<(), BandError> {
        match self.offset(row, col) {
            Some(k) => {
                self.ab[k] += v;
                Ok(())
            }
            None => Err(BandError::OutsideBand {
                row,
                col,
                kl: self.kl,
                ku: self.ku,
            }),
        }
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.offset(row, col).map_or(0.0, |k| self.ab[k])
    }

    /// `y = A x`.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for col in 0..self.n {
            let lo = col.saturating_sub(self.ku);
            let hi = (col + self.kl).min(self.n - 1);
            for row in lo..=hi {
                y[row] += self.get(row, col) * x[col];
            }
        }
        y
    }

    /// In-place LU factorization.
    pub fn factor(mut self) -> Result<BandLu, BandError> {
        let (n, kl, ku, ld) = (self.n, self.kl, self.ku, self.ldab);
        let kv = kl + ku;
        let ab = &mut self.ab;
        let mut ipiv = vec![0usize; n];
        let mut ju = 0usize;
        for j in 0..n {
            let km = kl.min(n - 1 - j);
            let col = j * ld;
            let mut jp = 0;
            let mut best = ab[col + kv].abs();
            for i in 1..=km {
                let v = ab[col + kv + i].abs();
                if v > best {
                    best = v;
                    jp = i;
                }
            }
            ipiv[j] = j + jp;
            if best == 0.0 {
                return Err(BandError::Singular { col: j });
            }
            ju = ju.max((j + ku + jp).min(n - 1));
            if jp != 0 {
                // swap rows j and j + jp across columns j..=ju
                for c in j..=ju {
                    let base = kv + j - c + c * ld;
                    ab.swap(base, base + jp);
                }
            }
            if km > 0 {
                let inv = 1.0 / ab[col + kv];
                for v in &mut ab[col + kv + 1..col + kv + 1 + km] {
                    *v *= inv;
                }
                for c in j + 1..=ju {
                    let top = kv + j - c + c * ld;
                    let a = ab[top];
                    if a == 0.0 {
                        continue;
                    }
                    let (left, right) = ab.split_at_mut(top + 1);
                    let l = &left[col + kv + 1..col + kv + 1 + km];
                    for (x, li) in right[..km].iter_mut().zip(l) {
                        *x -= li * a;
                    }
                }
            }
        }
        Ok(BandLu { m: self, ipiv })
    }
}

#[derive(Debug, Clone)]
pub struct BandLu {
    m: BandMatrix,
    ipiv: Vec<usize>,
}

impl BandLu {
    /// Overwrites `b` with `A⁻¹ b`.
    pub fn solve(&self, b: &mut [f64]) {
        let BandMatrix {
            n, kl, ku, ldab, ..
        } = self.m;
        let ab = &self.m.ab;
        let kv = kl + ku;
        for j in 0..n {
            let p = self.ipiv[j];
            if p != j {
                b.swap(p, j);
            }
            let km = kl.min(n - 1 - j);
            let bj = b[j];
            if bj != 0.0 {
                let col = j * ldab + kv;
                for i in 1..=km {
                    b[j + i] -= ab[col + i] * bj;
                }
            }
        }
        for j in (0..n).rev() {
            let col = j * ldab + kv;
            b[j] /= ab[col];
            let bj = b[j];
            if bj != 0.0 {
                for i in 1..=kv.min(j) {
                    b[j - i] -= ab[col - i] * bj;
                }
            }
        }
    }
}
