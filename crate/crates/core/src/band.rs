//! Banded LU factorization with partial pivoting.

use crate::error::{Error, Result};
use crate::grid::Csr;

#[derive(Debug, Clone)]
pub struct BandLu {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<f64>,
    pivots: Vec<usize>,
}

impl BandLu {
    #[inline]
    fn at(&self, i: usize, j: usize) -> usize {
        i * self.width + (j + self.kl - i)
    }

    /// Factors a square CSR matrix.
    pub fn factor(a: &Csr) -> Result<Self> {
        let n = a.rows();
        let (mut kl, mut ku) = (0usize, 0usize);
        for i in 0..n {
            for k in a.indptr[i]..a.indptr[i + 1] {
                let j = a.indices[k];
                if j < i {
                    kl = kl.max(i - j);
                } else {
                    ku = ku.max(j - i);
                }
            }
        }
        let width = 2 * kl + ku + 1;
        let mut lu = BandLu { n, kl, ku, width, data: vec![0.0; n * width], pivots: vec![0; n] };
        for i in 0..n {
            for k in a.indptr[i]..a.indptr[i + 1] {
                let idx = lu.at(i, a.indices[k]);
                lu.data[idx] += a.data[k];
            }
        }
        let reach = kl + ku;
        for k in 0..n {
            let last_row = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = lu.data[lu.at(k, k)].abs();
            for i in k + 1..=last_row {
                let v = lu.data[lu.at(i, k)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best == 0.0 {
                return Err(Error::InvalidArgument(format!("singular banded matrix at column {k}")));
            }
            lu.pivots[k] = p;
            let last_col = (k + reach).min(n - 1);
            if p != k {
                for j in k..=last_col {
                    let (x, y) = (lu.at(k, j), lu.at(p, j));
                    lu.data.swap(x, y);
                }
            }
            let pivot = lu.data[lu.at(k, k)];
            for i in k + 1..=last_row {
                let ik = lu.at(i, k);
                let l = lu.data[ik] / pivot;
                lu.data[ik] = l;
                if l != 0.0 {
                    for j in k + 1..=last_col {
                        let kj = lu.data[lu.at(k, j)];
                        let ij = lu.at(i, j);
                        lu.data[ij] -= l * kj;
                    }
                }
            }
        }
        Ok(lu)
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x = b.to_vec();
        for k in 0..n {
            let p = self.pivots[k];
            if p != k {
                x.swap(k, p);
            }
            let xk = x[k];
            for i in k + 1..=(k + self.kl).min(n.saturating_sub(1)) {
                x[i] -= self.data[self.at(i, k)] * xk;
            }
        }
        for k in (0..n).rev() {
            let mut s = x[k];
            for j in k + 1..=(k + self.kl + self.ku).min(n - 1) {
                s -= self.data[self.at(k, j)] * x[j];
            }
            x[k] = s / self.data[self.at(k, k)];
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_indefinite_tridiagonal_with_pivoting() {
        // [[0,1,0],[1,0,2],[0,3,1]]
        let a = Csr { indptr: vec![0, 1, 3, 5], indices: vec![1, 0, 2, 1, 2], data: vec![1.0, 1.0, 2.0, 3.0, 1.0] };
        let lu = BandLu::factor(&a).unwrap();
        let x = lu.solve(&[1.0, 2.0, 3.0]);
        let mut ax = vec![0.0; 3];
        a.mul(&x, &mut ax);
        for (u, v) in ax.iter().zip([1.0, 2.0, 3.0]) {
            assert!((u - v).abs() < 1e-14);
        }
    }
}
