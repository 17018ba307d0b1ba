use alloc::vec;
use alloc::vec::Vec;

use super::LinearOperator;

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<u32>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> (&[u32], &[f64]) {
        let (a, b) = (self.indptr[i], self.indptr[i + 1]);
        (&self.indices[a..b], &self.values[a..b])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (idx, val) = self.row(i);
        match idx.binary_search(&(j as u32)) {
            Ok(k) => val[k],
            Err(_) => 0.0,
        }
    }

    /// Rows `0..rows` of this matrix taken in the order given.
    pub fn select_rows(&self, rows: &[usize]) -> CsrMatrix {
        let mut b = CsrBuilder::new(self.cols);
        for &r in rows {
            let (idx, val) = self.row(r);
            for (j, v) in idx.iter().zip(val) {
                b.add(*j as usize, *v);
            }
            b.finish_row();
        }
        b.build()
    }
}

impl LinearOperator for CsrMatrix {
    fn rows(&self) -> usize {
        self.rows
    }
    fn cols(&self) -> usize {
        self.cols
    }
    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let (a, b) = (self.indptr[i], self.indptr[i + 1]);
            let mut s = 0.0;
            for k in a..b {
                s += self.values[k] * x[self.indices[k] as usize];
            }
            *yi = s;
        }
    }
    fn adjoint_into(&self, y: &[f64], x: &mut [f64]) {
        x.iter_mut().for_each(|v| *v = 0.0);
        for (i, yi) in y.iter().enumerate() {
            if *yi == 0.0 {
                continue;
            }
            for k in self.indptr[i]..self.indptr[i + 1] {
                x[self.indices[k] as usize] += self.values[k] * yi;
            }
        }
    }
}

/// Row-by-row assembly with duplicate accumulation. Column indices within a
/// row come out sorted, so assembly order never changes the result layout.
#[derive(Debug, Clone)]
pub struct CsrBuilder {
    cols: usize,
    scratch: Vec<f64>,
    marked: Vec<bool>,
    touched: Vec<u32>,
    indptr: Vec<usize>,
    indices: Vec<u32>,
    values: Vec<f64>,
}

impl CsrBuilder {
    pub fn new(cols: usize) -> Self {
        Self {
            cols,
            scratch: vec![0.0; cols],
            marked: vec![false; cols],
            touched: Vec::new(),
            indptr: vec![0],
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    #[inline]
    pub fn add(&mut self, col: usize, v: f64) {
        if v == 0.0 {
            return;
        }
        if !self.marked[col] {
            self.marked[col] = true;
            self.touched.push(col as u32);
        }
        self.scratch[col] += v;
    }

    pub fn finish_row(&mut self) {
        self.touched.sort_unstable();
        for &j in &self.touched {
            let j = j as usize;
            let v = self.scratch[j];
            self.scratch[j] = 0.0;
            self.marked[j] = false;
            if v != 0.0 {
                self.indices.push(j as u32);
                self.values.push(v);
            }
        }
        self.touched.clear();
        self.indptr.push(self.indices.len());
    }

    pub fn build(self) -> CsrMatrix {
        CsrMatrix {
            rows: self.indptr.len() - 1,
            cols: self.cols,
            indptr: self.indptr,
            indices: self.indices,
            values: self.values,
        }
    }
}
