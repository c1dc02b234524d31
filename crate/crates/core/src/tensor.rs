use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Copy> Matrix<T> {
    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{} elements cannot fill a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn filled(rows: usize, cols: usize, value: T) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
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

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn get(&self, row: usize, col: usize) -> T {
        self.data[row * self.cols + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: T) {
        self.data[row * self.cols + col] = value;
    }

    pub fn row(&self, row: usize) -> &[T] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }

    pub fn map<U: Copy>(&self, f: impl FnMut(T) -> U) -> Matrix<U> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().copied().map(f).collect(),
        }
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self.get(c, r))
    }
}

/// Dense `(batch, channel, height, width)` tensor, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4<T> {
    dims: [usize; 4],
    data: Vec<T>,
}

impl<T: Copy + Default> Tensor4<T> {
    pub fn zeros(dims: [usize; 4]) -> Self {
        Self {
            dims,
            data: vec![T::default(); dims.iter().product()],
        }
    }

    pub fn from_vec(dims: [usize; 4], data: Vec<T>) -> Result<Self> {
        let expected: usize = dims.iter().product();
        if data.len() != expected {
            return Err(Error::Shape(format!(
                "{} elements cannot fill a tensor of dims {dims:?}",
                data.len()
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn from_fn(dims: [usize; 4], mut f: impl FnMut([usize; 4]) -> T) -> Self {
        let mut data = Vec::with_capacity(dims.iter().product());
        for b in 0..dims[0] {
            for c in 0..dims[1] {
                for h in 0..dims[2] {
                    for w in 0..dims[3] {
                        data.push(f([b, c, h, w]));
                    }
                }
            }
        }
        Self { dims, data }
    }

    pub fn dims(&self) -> [usize; 4] {
        self.dims
    }

    pub fn batch(&self) -> usize {
        self.dims[0]
    }

    pub fn channels(&self) -> usize {
        self.dims[1]
    }

    pub fn height(&self) -> usize {
        self.dims[2]
    }

    pub fn width(&self) -> usize {
        self.dims[3]
    }

    /// Number of elements in one `(height, width)` plane.
    pub fn plane_len(&self) -> usize {
        self.dims[2] * self.dims[3]
    }

    /// Number of elements in one batch item.
    pub fn item_len(&self) -> usize {
        self.dims[1] * self.dims[2] * self.dims[3]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    fn offset(&self, [b, c, h, w]: [usize; 4]) -> usize {
        ((b * self.dims[1] + c) * self.dims[2] + h) * self.dims[3] + w
    }

    pub fn get(&self, index: [usize; 4]) -> T {
        self.data[self.offset(index)]
    }

    pub fn set(&mut self, index: [usize; 4], value: T) {
        let at = self.offset(index);
        self.data[at] = value;
    }

    pub fn item(&self, b: usize) -> &[T] {
        let len = self.item_len();
        &self.data[b * len..(b + 1) * len]
    }

    pub fn item_mut(&mut self, b: usize) -> &mut [T] {
        let len = self.item_len();
        &mut self.data[b * len..(b + 1) * len]
    }

    pub fn plane(&self, b: usize, c: usize) -> &[T] {
        let len = self.plane_len();
        let start = (b * self.dims[1] + c) * len;
        &self.data[start..start + len]
    }

    pub fn plane_mut(&mut self, b: usize, c: usize) -> &mut [T] {
        let len = self.plane_len();
        let start = (b * self.dims[1] + c) * len;
        &mut self.data[start..start + len]
    }

    /// Iterates over every `(height, width)` plane in memory order.
    pub fn planes_mut(&mut self) -> core::slice::ChunksExactMut<'_, T> {
        let len = self.plane_len().max(1);
        self.data.chunks_exact_mut(len)
    }

    /// Reinterprets the layout without moving data.
    pub fn reshape(self, dims: [usize; 4]) -> Result<Self> {
        Self::from_vec(dims, self.data)
    }

    /// Copies out a contiguous range of batch items.
    pub fn batch_range(&self, start: usize, end: usize) -> Self {
        let len = self.item_len();
        let mut dims = self.dims;
        dims[0] = end - start;
        Self {
            dims,
            data: self.data[start * len..end * len].to_vec(),
        }
    }

    /// Gathers the listed batch items, in order.
    pub fn gather(&self, indices: &[usize]) -> Self {
        let len = self.item_len();
        let mut data = Vec::with_capacity(indices.len() * len);
        for &i in indices {
            data.extend_from_slice(self.item(i));
        }
        let mut dims = self.dims;
        dims[0] = indices.len();
        Self { dims, data }
    }

    pub fn map<U: Copy + Default>(&self, f: impl FnMut(T) -> U) -> Tensor4<U> {
        Tensor4 {
            dims: self.dims,
            data: self.data.iter().copied().map(f).collect(),
        }
    }

    pub fn ensure_dims(&self, dims: [usize; 4], what: &str) -> Result<()> {
        if self.dims != dims {
            return Err(Error::Shape(format!(
                "{what}: expected dims {dims:?}, got {:?}",
                self.dims
            )));
        }
        Ok(())
    }
}
