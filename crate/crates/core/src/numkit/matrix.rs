use crate::error::{Error, Result};

use super::Real;

/// Dense row-major matrix.
///
/// Shape mismatches in the arithmetic helpers are programmer errors and
/// panic; constructors that take external data return `Result`.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, T::zero())
    }

    pub fn filled(rows: usize, cols: usize, value: T) -> Self {
        Self { rows, cols, data: vec![value; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::invalid(format!("matrix data has {} entries, expected {rows}×{cols}", data.len())));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    /// Single-row matrix.
    pub fn row_vector(data: Vec<T>) -> Self {
        Self { rows: 1, cols: data.len(), data }
    }

    /// Stacks equally long rows.
    pub fn from_rows<R: AsRef<[T]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::invalid(format!("row {i} has {} entries, expected {cols}", r.len())));
            }
            data.extend_from_slice(r);
        }
        Ok(Self { rows: rows.len(), cols, data })
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
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: T) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [T] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self.get(c, r))
    }

    /// `self · rhs`
    pub fn matmul(&self, rhs: &Self) -> Self {
        assert_eq!(self.cols, rhs.rows, "matmul: inner dimensions differ");
        let mut out = Self::zeros(self.rows, rhs.cols);
        T::gemm(
            self.rows,
            self.cols,
            rhs.cols,
            T::one(),
            &self.data,
            self.cols as isize,
            1,
            &rhs.data,
            rhs.cols as isize,
            1,
            T::zero(),
            &mut out.data,
            rhs.cols as isize,
            1,
        );
        out
    }

    /// `selfᵀ · rhs`
    pub fn t_matmul(&self, rhs: &Self) -> Self {
        assert_eq!(self.rows, rhs.rows, "t_matmul: row counts differ");
        let mut out = Self::zeros(self.cols, rhs.cols);
        T::gemm(
            self.cols,
            self.rows,
            rhs.cols,
            T::one(),
            &self.data,
            1,
            self.cols as isize,
            &rhs.data,
            rhs.cols as isize,
            1,
            T::zero(),
            &mut out.data,
            rhs.cols as isize,
            1,
        );
        out
    }

    /// `self · rhsᵀ`
    pub fn matmul_t(&self, rhs: &Self) -> Self {
        assert_eq!(self.cols, rhs.cols, "matmul_t: column counts differ");
        let mut out = Self::zeros(self.rows, rhs.rows);
        T::gemm(
            self.rows,
            self.cols,
            rhs.rows,
            T::one(),
            &self.data,
            self.cols as isize,
            1,
            &rhs.data,
            1,
            rhs.cols as isize,
            T::zero(),
            &mut out.data,
            rhs.rows as isize,
            1,
        );
        out
    }

    /// Adds a `1 × cols` row to every row.
    pub fn add_row_broadcast(&mut self, bias: &Self) {
        assert_eq!(bias.shape(), (1, self.cols), "bias must be 1×cols");
        for row in self.data.chunks_exact_mut(self.cols.max(1)) {
            for (x, b) in row.iter_mut().zip(&bias.data) {
                *x = *x + *b;
            }
        }
    }

    /// Column sums as a `1 × cols` row.
    pub fn column_sums(&self) -> Self {
        let mut out = Self::zeros(1, self.cols);
        for row in self.data.chunks_exact(self.cols.max(1)) {
            for (acc, x) in out.data.iter_mut().zip(row) {
                *acc = *acc + *x;
            }
        }
        out
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&x| f(x)).collect() }
    }

    /// Element-wise conversion into another scalar type.
    pub fn map_to<U>(&self, f: impl Fn(T) -> U) -> Matrix<U> {
        Matrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&x| f(x)).collect() }
    }

    pub fn map_inplace(&mut self, f: impl Fn(T) -> T) {
        for x in &mut self.data {
            *x = f(*x);
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Self {
        assert_eq!(self.shape(), other.shape(), "zip_map: shapes differ");
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    pub fn hadamard(&self, other: &Self) -> Self {
        self.zip_map(other, |a, b| a * b)
    }

    pub fn add_assign(&mut self, other: &Self) {
        assert_eq!(self.shape(), other.shape(), "add_assign: shapes differ");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + *b;
        }
    }

    /// Row-wise inner product of two equally shaped matrices.
    pub fn row_dots(&self, other: &Self) -> Vec<T> {
        assert_eq!(self.shape(), other.shape(), "row_dots: shapes differ");
        self.data
            .chunks_exact(self.cols.max(1))
            .zip(other.data.chunks_exact(self.cols.max(1)))
            .map(|(a, b)| a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y))
            .take(self.rows)
            .collect()
    }

    /// Selects rows by index into a new matrix.
    pub fn gather_rows(&self, indices: &[usize]) -> Self {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Self { rows: indices.len(), cols: self.cols, data }
    }
}
