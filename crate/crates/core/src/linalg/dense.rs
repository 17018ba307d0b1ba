use alloc::vec;
use alloc::vec::Vec;

use crate::error::{dim_err, Error, Result};
use crate::math::sqrt;

/// Column-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return dim_err(alloc::format!(
                "{}x{} matrix needs {} entries, got {}",
                rows,
                cols,
                rows * cols,
                data.len()
            ));
        }
        if !super::all_finite(&data) {
            return Err(Error::NonFinite("matrix entries"));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_row_major(rows: usize, cols: usize, entries: &[f64]) -> Result<Self> {
        if entries.len() != rows * cols {
            return dim_err("row-major data length does not match shape");
        }
        let mut m = Self::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m.data[j * rows + i] = entries[i * cols + j];
            }
        }
        if !super::all_finite(&m.data) {
            return Err(Error::NonFinite("matrix entries"));
        }
        Ok(m)
    }

    pub fn from_columns(rows: usize, columns: &[Vec<f64>]) -> Result<Self> {
        let mut m = Self::with_capacity(rows, columns.len());
        for c in columns {
            if c.len() != rows {
                return dim_err("column length does not match row count");
            }
            m.push_column(c);
        }
        Ok(m)
    }

    /// Empty `rows x 0` matrix with room for `cap` columns.
    pub fn with_capacity(rows: usize, cap: usize) -> Self {
        Self { rows, cols: 0, data: Vec::with_capacity(rows * cap) }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[j * self.rows + i]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[j * self.rows + i] = v;
    }

    #[inline]
    pub fn column(&self, j: usize) -> &[f64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    #[inline]
    pub fn column_mut(&mut self, j: usize) -> &mut [f64] {
        let r = self.rows;
        &mut self.data[j * r..(j + 1) * r]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn push_column(&mut self, col: &[f64]) {
        assert_eq!(col.len(), self.rows, "column length mismatch");
        self.data.extend_from_slice(col);
        self.cols += 1;
    }

    pub fn truncate_columns(&mut self, k: usize) {
        if k < self.cols {
            self.cols = k;
            self.data.truncate(k * self.rows);
        }
    }

    /// First `k` columns.
    pub fn leading_columns(&self, k: usize) -> DenseMatrix {
        let k = k.min(self.cols);
        Self { rows: self.rows, cols: k, data: self.data[..k * self.rows].to_vec() }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols, "mul_vec dimension mismatch");
        let mut y = vec![0.0; self.rows];
        for (j, xj) in x.iter().enumerate() {
            if *xj != 0.0 {
                super::axpy(*xj, self.column(j), &mut y);
            }
        }
        y
    }

    pub fn tr_mul_vec(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len(), self.rows, "tr_mul_vec dimension mismatch");
        (0..self.cols).map(|j| super::dot(self.column(j), y)).collect()
    }

    pub fn matmul(&self, other: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.cols, other.rows, "matmul dimension mismatch");
        let mut out = Self::zeros(self.rows, other.cols);
        for j in 0..other.cols {
            let oc = other.column(j);
            let dst = &mut out.data[j * self.rows..(j + 1) * self.rows];
            for (k, w) in oc.iter().enumerate() {
                if *w != 0.0 {
                    super::axpy(*w, &self.data[k * self.rows..(k + 1) * self.rows], dst);
                }
            }
        }
        out
    }

    /// `selfᵀ * other`
    pub fn tr_matmul(&self, other: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.rows, other.rows, "tr_matmul dimension mismatch");
        let mut out = Self::zeros(self.cols, other.cols);
        for j in 0..other.cols {
            for i in 0..self.cols {
                out.data[j * self.cols + i] = super::dot(self.column(i), other.column(j));
            }
        }
        out
    }

    pub fn transpose(&self) -> DenseMatrix {
        let mut t = Self::zeros(self.cols, self.rows);
        for j in 0..self.cols {
            for i in 0..self.rows {
                t.data[i * self.cols + j] = self.data[j * self.rows + i];
            }
        }
        t
    }

    /// `diag(w) * self`
    pub fn scale_rows(&self, w: &[f64]) -> DenseMatrix {
        assert_eq!(w.len(), self.rows);
        let mut out = self.clone();
        for j in 0..self.cols {
            for (v, wi) in out.column_mut(j).iter_mut().zip(w) {
                *v *= wi;
            }
        }
        out
    }

    pub fn scaled(&self, alpha: f64) -> DenseMatrix {
        let mut out = self.clone();
        super::scale(&mut out.data, alpha);
        out
    }

    /// `[top; bottom]`
    pub fn vstack(top: &DenseMatrix, bottom: &DenseMatrix) -> DenseMatrix {
        assert_eq!(top.cols, bottom.cols, "vstack column mismatch");
        let rows = top.rows + bottom.rows;
        let mut out = Self::zeros(rows, top.cols);
        for j in 0..top.cols {
            out.data[j * rows..j * rows + top.rows].copy_from_slice(top.column(j));
            out.data[j * rows + top.rows..(j + 1) * rows].copy_from_slice(bottom.column(j));
        }
        out
    }

    /// Same matrix with zero rows appended up to `rows`.
    pub fn pad_rows(&self, rows: usize) -> DenseMatrix {
        if rows <= self.rows {
            return self.clone();
        }
        Self::vstack(self, &Self::zeros(rows - self.rows, self.cols))
    }

    pub fn frobenius_norm(&self) -> f64 {
        sqrt(super::dot(&self.data, &self.data))
    }

    pub fn max_abs_diff(&self, other: &DenseMatrix) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data.iter().zip(&other.data).fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn sub(&self, other: &DenseMatrix) -> DenseMatrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Self { rows: self.rows, cols: self.cols, data }
    }
}
