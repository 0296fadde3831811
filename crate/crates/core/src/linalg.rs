//! Small dense helpers. Vectors are plain `[f64]` slices.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    // Four accumulators let the compiler vectorise without reassociating.
    let mut acc = [0.0f64; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (x, y) in ra.iter().zip(rb) {
        s += x * y;
    }
    s
}

/// `dot(r, x)` for four rows at once, sharing the loads of `x`. Each result
/// is bit-identical to [`dot`].
#[inline]
fn dot4(r: [&[f64]; 4], x: &[f64]) -> [f64; 4] {
    let mut acc = [[0.0f64; 4]; 4];
    let n4 = x.len() / 4 * 4;
    let (xh, xt) = x.split_at(n4);
    let heads = r.map(|row| &row[..n4]);
    for (c, xc) in xh.chunks_exact(4).enumerate() {
        let i = 4 * c;
        for (acc, row) in acc.iter_mut().zip(&heads) {
            let rc = &row[i..i + 4];
            acc[0] += rc[0] * xc[0];
            acc[1] += rc[1] * xc[1];
            acc[2] += rc[2] * xc[2];
            acc[3] += rc[3] * xc[3];
        }
    }
    let mut out = [0.0; 4];
    for ((o, a), row) in out.iter_mut().zip(&acc).zip(&r) {
        let mut s = (a[0] + a[1]) + (a[2] + a[3]);
        for (rv, xv) in row[n4..].iter().zip(xt) {
            s += rv * xv;
        }
        *o = s;
    }
    out
}

#[inline]
pub fn norm2_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

#[inline]
pub fn norm2(a: &[f64]) -> f64 {
    norm2_sq(a).sqrt()
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

pub fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

pub fn dist_inf(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        check_dim(rows * cols, data.len())?;
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            check_dim(cols, r.len())?;
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    /// `out = A x`
    pub fn mul_vec_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        let mut blocks = out.chunks_exact_mut(4);
        for (b, o) in (&mut blocks).enumerate() {
            let i = 4 * b;
            o.copy_from_slice(&dot4([self.row(i), self.row(i + 1), self.row(i + 2), self.row(i + 3)], x));
        }
        let done = self.rows / 4 * 4;
        for (k, o) in blocks.into_remainder().iter_mut().enumerate() {
            *o = dot(self.row(done + k), x);
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.rows];
        self.mul_vec_into(x, &mut out);
        out
    }

    /// `out = Aᵀ r`
    pub fn tr_mul_vec_into(&self, r: &[f64], out: &mut [f64]) {
        debug_assert_eq!(r.len(), self.rows);
        debug_assert_eq!(out.len(), self.cols);
        out.iter_mut().for_each(|o| *o = 0.0);
        let axpy = |out: &mut [f64], ri: f64, row: &[f64]| {
            if ri != 0.0 {
                for (o, a) in out.iter_mut().zip(row) {
                    *o += ri * a;
                }
            }
        };
        let mut i = 0;
        while i + 4 <= self.rows {
            let rs = [r[i], r[i + 1], r[i + 2], r[i + 3]];
            if rs.iter().all(|v| *v != 0.0) {
                // Same per-element order as four separate row updates.
                let (a0, a1, a2, a3) = (self.row(i), self.row(i + 1), self.row(i + 2), self.row(i + 3));
                for ((((o, x0), x1), x2), x3) in out.iter_mut().zip(a0).zip(a1).zip(a2).zip(a3) {
                    let mut v = *o;
                    v += rs[0] * x0;
                    v += rs[1] * x1;
                    v += rs[2] * x2;
                    v += rs[3] * x3;
                    *o = v;
                }
            } else {
                for k in 0..4 {
                    axpy(out, rs[k], self.row(i + k));
                }
            }
            i += 4;
        }
        for k in i..self.rows {
            axpy(out, r[k], self.row(k));
        }
    }

    pub fn tr_mul_vec(&self, r: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        self.tr_mul_vec_into(r, &mut out);
        out
    }

    /// Largest eigenvalue of `AᵀA` by power iteration.
    pub fn spectral_norm_sq(&self, iters: usize) -> f64 {
        if self.cols == 0 || self.rows == 0 {
            return 0.0;
        }
        let mut x = vec![1.0 / (self.cols as f64).sqrt(); self.cols];
        let mut est = 0.0;
        for _ in 0..iters {
            let ax = self.mul_vec(&x);
            let y = self.tr_mul_vec(&ax);
            let n = norm2(&y);
            if n == 0.0 {
                return 0.0;
            }
            est = n;
            x = y.into_iter().map(|v| v / n).collect();
        }
        est
    }
}
