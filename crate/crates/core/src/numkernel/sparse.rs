use serde::{Deserialize, Serialize};

use super::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::par;

/// Compressed sparse row matrix with strictly increasing column indices per row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    offsets: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    pub fn empty(rows: usize, cols: usize) -> Self {
        SparseMatrix {
            rows,
            cols,
            offsets: vec![0; rows + 1],
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        SparseMatrix {
            rows: n,
            cols: n,
            offsets: (0..=n).collect(),
            indices: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    /// Build from COO triplets. Duplicates are summed, explicit zeros dropped.
    pub fn from_triplets(
        rows: usize,
        cols: usize,
        triplets: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<Self> {
        let mut entries: Vec<(usize, usize, f64)> = Vec::new();
        for (i, j, v) in triplets {
            if i >= rows || j >= cols {
                return Err(Error::shape(
                    "SparseMatrix::from_triplets",
                    format!("entry ({i}, {j}) outside {rows}x{cols}"),
                ));
            }
            if !v.is_finite() {
                return Err(Error::Invalid(format!("non-finite value at ({i}, {j})")));
            }
            entries.push((i, j, v));
        }
        entries.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));

        let mut offsets = vec![0usize; rows + 1];
        let mut indices = Vec::with_capacity(entries.len());
        let mut values: Vec<f64> = Vec::with_capacity(entries.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in entries {
            if last == Some((i, j)) {
                *values.last_mut().expect("duplicate follows an entry") += v;
                continue;
            }
            indices.push(j);
            values.push(v);
            offsets[i + 1] += 1;
            last = Some((i, j));
        }
        for i in 0..rows {
            offsets[i + 1] += offsets[i];
        }
        let mut m = SparseMatrix {
            rows,
            cols,
            offsets,
            indices,
            values,
        };
        m.drop_zeros();
        Ok(m)
    }

    pub fn from_dense(d: &DenseMatrix) -> Self {
        let mut trip = Vec::new();
        for i in 0..d.rows() {
            for j in 0..d.cols() {
                let v = d.get(i, j);
                if v != 0.0 {
                    trip.push((i, j, v));
                }
            }
        }
        Self::from_triplets(d.rows(), d.cols(), trip).expect("in-range triplets")
    }

    fn drop_zeros(&mut self) {
        if self.values.iter().all(|&v| v != 0.0) {
            return;
        }
        let mut offsets = vec![0usize; self.rows + 1];
        let mut indices = Vec::with_capacity(self.indices.len());
        let mut values = Vec::with_capacity(self.values.len());
        for i in 0..self.rows {
            for (j, v) in self.row(i) {
                if v != 0.0 {
                    indices.push(j);
                    values.push(v);
                }
            }
            offsets[i + 1] = indices.len();
        }
        self.offsets = offsets;
        self.indices = indices;
        self.values = values;
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `(column, value)` pairs of row `i`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.offsets[i]..self.offsets[i + 1];
        self.indices[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn row_nnz(&self, i: usize) -> usize {
        self.offsets[i + 1] - self.offsets[i]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let span = self.offsets[i]..self.offsets[i + 1];
        match self.indices[span.clone()].binary_search(&j) {
            Ok(k) => self.values[span.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        let span = self.offsets[i]..self.offsets[i + 1];
        self.indices[span].binary_search(&j).is_ok()
    }

    /// COO triplets in row-major order.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.rows).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut d = DenseMatrix::zeros(self.rows, self.cols);
        for (i, j, v) in self.triplets() {
            d.set(i, j, v);
        }
        d
    }

    pub fn transpose(&self) -> Self {
        Self::from_triplets(
            self.cols,
            self.rows,
            self.triplets().map(|(i, j, v)| (j, i, v)),
        )
        .expect("transpose stays in range")
    }

    /// Same pattern with every stored value replaced by 1.
    pub fn binarized(&self) -> Self {
        SparseMatrix {
            values: vec![1.0; self.values.len()],
            ..self.clone()
        }
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.rows).map(|i| self.row(i).map(|(_, v)| v).sum()).collect()
    }

    /// Horizontal concatenation `[self | other]`.
    pub fn hstack(&self, other: &Self) -> Result<Self> {
        if self.rows != other.rows {
            return Err(Error::shape(
                "hstack",
                format!("{} rows vs {} rows", self.rows, other.rows),
            ));
        }
        let shift = self.cols;
        Self::from_triplets(
            self.rows,
            self.cols + other.cols,
            self.triplets()
                .chain(other.triplets().map(|(i, j, v)| (i, j + shift, v))),
        )
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.rows == self.cols
            && self
                .triplets()
                .all(|(i, j, v)| (self.get(j, i) - v).abs() <= tol)
    }

    fn check_spmm(&self, d: &DenseMatrix) -> Result<()> {
        if self.cols != d.rows() {
            return Err(Error::shape(
                "spmm",
                format!(
                    "sparse {}x{} times dense {}x{}",
                    self.rows,
                    self.cols,
                    d.rows(),
                    d.cols()
                ),
            ));
        }
        Ok(())
    }

    /// Sparse × dense product.
    pub fn spmm(&self, d: &DenseMatrix) -> Result<DenseMatrix> {
        self.check_spmm(d)?;
        let mut out = DenseMatrix::zeros(self.rows, d.cols());
        par::rows_mut(out.as_mut_slice(), d.cols(), |i, row| {
            spmm_row(self, i, d, row)
        });
        Ok(out)
    }

    /// Single-threaded sparse × dense product.
    pub fn spmm_seq(&self, d: &DenseMatrix) -> Result<DenseMatrix> {
        self.check_spmm(d)?;
        let mut out = DenseMatrix::zeros(self.rows, d.cols());
        par::rows_mut_seq(out.as_mut_slice(), d.cols(), |i, row| {
            spmm_row(self, i, d, row)
        });
        Ok(out)
    }

    /// `selfᵀ · d`, used for the backward pass of [`SparseMatrix::spmm`].
    pub fn spmm_t(&self, d: &DenseMatrix) -> Result<DenseMatrix> {
        if self.rows != d.rows() {
            return Err(Error::shape(
                "spmm_t",
                format!("sparse has {} rows, dense has {}", self.rows, d.rows()),
            ));
        }
        let mut out = DenseMatrix::zeros(self.cols, d.cols());
        for i in 0..self.rows {
            let src = d.row(i);
            for (j, v) in self.row(i) {
                for (o, &s) in out.row_mut(j).iter_mut().zip(src) {
                    *o += v * s;
                }
            }
        }
        Ok(out)
    }
}

fn spmm_row(s: &SparseMatrix, i: usize, d: &DenseMatrix, out: &mut [f64]) {
    for (k, v) in s.row(i) {
        for (o, &b) in out.iter_mut().zip(d.row(k)) {
            *o += v * b;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicates_are_summed() {
        let s = SparseMatrix::from_triplets(2, 2, [(0, 1, 1.0), (0, 1, 1.0), (1, 0, 3.0)]).unwrap();
        assert_eq!(s.nnz(), 2);
        assert_eq!(s.get(0, 1), 2.0);
        assert_eq!(s.get(1, 1), 0.0);
    }

    #[test]
    fn indices_strictly_increasing() {
        let s = SparseMatrix::from_triplets(1, 5, [(0, 4, 1.0), (0, 0, 1.0), (0, 2, 1.0)]).unwrap();
        assert!(s.indices().windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn out_of_range_rejected() {
        assert!(SparseMatrix::from_triplets(2, 2, [(2, 0, 1.0)]).is_err());
    }

    #[test]
    fn identity_spmm() {
        let d = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]);
        assert_eq!(SparseMatrix::identity(3).spmm(&d).unwrap(), d);
    }

    #[test]
    fn zero_spmm() {
        let d = DenseMatrix::filled(3, 2, 7.0);
        let z = SparseMatrix::empty(3, 3).spmm(&d).unwrap();
        assert_eq!(z, DenseMatrix::zeros(3, 2));
    }

    #[test]
    fn spmm_dimension_mismatch() {
        let d = DenseMatrix::zeros(2, 2);
        assert!(SparseMatrix::identity(3).spmm(&d).is_err());
    }

    #[test]
    fn spmm_t_matches_transpose() {
        let s = SparseMatrix::from_triplets(3, 2, [(0, 1, 2.0), (2, 0, -1.0), (1, 1, 0.5)]).unwrap();
        let d = DenseMatrix::from_fn(3, 2, |i, j| (i + 2 * j) as f64 - 1.0);
        assert_eq!(s.spmm_t(&d).unwrap(), s.transpose().spmm(&d).unwrap());
    }

    #[test]
    fn hstack_places_blocks() {
        let a = SparseMatrix::from_triplets(2, 2, [(0, 1, 1.0), (1, 0, 1.0)]).unwrap();
        let x = SparseMatrix::from_triplets(2, 1, [(0, 0, 1.0)]).unwrap();
        let f = a.hstack(&x).unwrap().to_dense();
        assert_eq!(f, DenseMatrix::from_rows(&[vec![0.0, 1.0, 1.0], vec![1.0, 0.0, 0.0]]));
    }
}
