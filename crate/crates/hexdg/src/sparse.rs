//! Compressed sparse row blocks built from triplet streams.
//!
//! Triplets are sorted stably by (row, col) and duplicates summed in
//! insertion order, so assembly is bit-deterministic for a fixed insertion
//! sequence regardless of how the local contributions were computed.

use nalgebra::DMatrix;
use std::io::Write;

#[derive(Clone, Debug)]
pub struct SparseBlock {
    pub nrows: usize,
    pub ncols: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl SparseBlock {
    pub fn from_triplets(nrows: usize, ncols: usize, mut t: Vec<(usize, usize, f64)>) -> Self {
        t.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut row_ptr = vec![0usize; nrows + 1];
        let mut col_idx = Vec::with_capacity(t.len());
        let mut values: Vec<f64> = Vec::with_capacity(t.len());
        let mut last = None;
        for (r, c, v) in t {
            debug_assert!(r < nrows && c < ncols);
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] = col_idx.len();
                last = Some((r, c));
            }
        }
        // prefix-fill rows without entries
        for i in 1..=nrows {
            row_ptr[i] = row_ptr[i].max(row_ptr[i - 1]);
        }
        SparseBlock { nrows, ncols, row_ptr, col_idx, values }
    }

    /// Same as [`from_triplets`], but on compact 32-bit indices; assembly
    /// streams use this to halve the transient footprint.
    pub fn from_triplets_u32(nrows: usize, ncols: usize, mut t: Vec<(u32, u32, f64)>) -> Self {
        t.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.cmp(&b.1)));
        Self::from_sorted_triplets_u32(nrows, ncols, t)
    }

    /// Builds from a stream already stably sorted by (row, col). Duplicates
    /// are summed in stream order.
    pub fn from_sorted_triplets_u32(nrows: usize, ncols: usize, t: Vec<(u32, u32, f64)>) -> Self {
        debug_assert!(t.windows(2).all(|w| (w[0].0, w[0].1) <= (w[1].0, w[1].1)));
        let mut row_ptr = vec![0usize; nrows + 1];
        let mut col_idx = Vec::with_capacity(t.len());
        let mut values: Vec<f64> = Vec::with_capacity(t.len());
        let mut last = None;
        for (r, c, v) in t {
            debug_assert!((r as usize) < nrows && (c as usize) < ncols);
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(c as usize);
                values.push(v);
                row_ptr[r as usize + 1] = col_idx.len();
                last = Some((r, c));
            }
        }
        for i in 1..=nrows {
            row_ptr[i] = row_ptr[i].max(row_ptr[i - 1]);
        }
        SparseBlock { nrows, ncols, row_ptr, col_idx, values }
    }

    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        SparseBlock {
            nrows,
            ncols,
            row_ptr: vec![0; nrows + 1],
            col_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let (a, b) = (self.row_ptr[r], self.row_ptr[r + 1]);
        (&self.col_idx[a..b], &self.values[a..b])
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.ncols);
        debug_assert_eq!(y.len(), self.nrows);
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            let mut s = 0.0;
            for (c, v) in cols.iter().zip(vals) {
                s += v * x[*c];
            }
            y[r] = s;
        }
    }

    pub fn matvec_transpose(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.nrows);
        debug_assert_eq!(y.len(), self.ncols);
        y.fill(0.0);
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            for (c, v) in cols.iter().zip(vals) {
                y[*c] += v * x[r];
            }
        }
    }

    /// Returns a copy with every stored value multiplied by `s` (pattern
    /// preserved, even for s = 0).
    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        for v in &mut out.values {
            *v *= s;
        }
        out
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.nrows, self.ncols);
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            for (c, v) in cols.iter().zip(vals) {
                m[(r, *c)] += v;
            }
        }
        m
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    /// max |A - A^T| over the stored pattern.
    pub fn symmetry_error(&self) -> f64 {
        let mut err: f64 = 0.0;
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            for (c, v) in cols.iter().zip(vals) {
                let vt = self.get(*c, r);
                err = err.max((v - vt).abs());
            }
        }
        err
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (cols, vals) = self.row(r);
        match cols.binary_search(&c) {
            Ok(i) => vals[i],
            Err(_) => 0.0,
        }
    }

    /// MatrixMarket coordinate format (1-based indices).
    pub fn write_matrix_market<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
        writeln!(w, "{} {} {}", self.nrows, self.ncols, self.nnz())?;
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            for (c, v) in cols.iter().zip(vals) {
                writeln!(w, "{} {} {:.16e}", r + 1, c + 1, v)?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triplets_merge_and_order() {
        let t = vec![(1, 2, 1.0), (0, 0, 2.0), (1, 2, 0.5), (1, 0, -1.0), (2, 1, 3.0)];
        let m = SparseBlock::from_triplets(3, 3, t);
        assert_eq!(m.nnz(), 4);
        assert_eq!(m.get(1, 2), 1.5);
        assert_eq!(m.get(0, 0), 2.0);
        assert_eq!(m.get(1, 0), -1.0);
        assert_eq!(m.get(0, 2), 0.0);
        let d = m.to_dense();
        assert_eq!(d[(2, 1)], 3.0);
    }

    #[test]
    fn matvec_and_transpose() {
        let t = vec![(0, 0, 1.0), (0, 1, 2.0), (1, 1, 3.0), (2, 0, 4.0)];
        let m = SparseBlock::from_triplets(3, 2, t);
        let mut y = vec![0.0; 3];
        m.matvec(&[1.0, -1.0], &mut y);
        assert_eq!(y, vec![-1.0, -3.0, 4.0]);
        let mut z = vec![0.0; 2];
        m.matvec_transpose(&[1.0, 1.0, 1.0], &mut z);
        assert_eq!(z, vec![5.0, 5.0]);
    }

    #[test]
    fn empty_rows_are_fine() {
        let m = SparseBlock::from_triplets(4, 4, vec![(3, 3, 1.0)]);
        assert_eq!(m.row(0).0.len(), 0);
        assert_eq!(m.row(3).0, &[3]);
    }

    #[test]
    fn matrix_market_output() {
        let m = SparseBlock::from_triplets(2, 2, vec![(0, 0, 1.0), (1, 0, -2.0)]);
        let mut buf = Vec::new();
        m.write_matrix_market(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("%%MatrixMarket"));
        assert!(s.contains("2 2 2"));
        assert!(s.contains("2 1 -2"));
    }
}
