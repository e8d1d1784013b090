//! Dense real vectors and matrices, the vec operator, ReLU, global average
//! pooling and induced matrix norms.
//!
//! Matrices are stored row-major. [`vec`] stacks columns (the classical
//! column-stacking operator); applying it to a transpose yields row-major
//! order, which is how spatial grids are flattened for convolution.

use std::ops::{Deref, DerefMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A real column vector.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Vector(Vec<f64>);

impl Vector {
    pub fn new(entries: Vec<f64>) -> Self {
        Vector(entries)
    }

    pub fn zeros(len: usize) -> Self {
        Vector(vec![0.0; len])
    }

    pub fn filled(len: usize, value: f64) -> Self {
        Vector(vec![value; len])
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn add(&self, other: &Vector) -> Vector {
        debug_assert_eq!(self.len(), other.len());
        Vector(self.iter().zip(other.iter()).map(|(a, b)| a + b).collect())
    }

    pub fn sub(&self, other: &Vector) -> Vector {
        debug_assert_eq!(self.len(), other.len());
        Vector(self.iter().zip(other.iter()).map(|(a, b)| a - b).collect())
    }

    pub fn scale(&self, alpha: f64) -> Vector {
        Vector(self.iter().map(|v| alpha * v).collect())
    }

    /// Largest absolute entry; zero for an empty vector.
    pub fn max_abs(&self) -> f64 {
        self.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    /// The l^p norm for `p` in `[1, inf]`.
    pub fn norm_p(&self, p: f64) -> f64 {
        vector_norm(&self.0, p)
    }
}

impl Deref for Vector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for Vector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl From<&[f64]> for Vector {
    fn from(v: &[f64]) -> Self {
        Vector(v.to_vec())
    }
}

impl From<Vec<f64>> for Vector {
    fn from(v: Vec<f64>) -> Self {
        Vector(v)
    }
}

impl FromIterator<f64> for Vector {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        Vector(iter.into_iter().collect())
    }
}

/// l^p norm of a slice. `p = f64::INFINITY` gives the max norm.
pub fn vector_norm(v: &[f64], p: f64) -> f64 {
    if p.is_infinite() {
        v.iter().fold(0.0, |acc, x| acc.max(x.abs()))
    } else if p == 1.0 {
        v.iter().map(|x| x.abs()).sum()
    } else {
        // Scale by the max entry so large p does not overflow.
        let top = v.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()));
        if top == 0.0 {
            return 0.0;
        }
        top * v.iter().map(|x| (x.abs() / top).powf(p)).sum::<f64>().powf(1.0 / p)
    }
}

/// Dense row-major matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(
                "Matrix::from_row_major",
                format!("{} entries", rows * cols),
                format!("{} entries", data.len()),
            ));
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Builds a matrix from nested rows. All rows must share one length.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::shape(
                    format!("row {i}"),
                    format!("{cols} columns"),
                    format!("{} columns", r.len()),
                ));
            }
            data.extend_from_slice(r);
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Matrix { rows, cols, data }
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

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&v| v == 0.0)
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    pub fn scale(&self, alpha: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| alpha * v).collect(),
        }
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, "Matrix::add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, "Matrix::sub", |a, b| a - b)
    }

    fn zip_with(&self, other: &Matrix, ctx: &str, f: impl Fn(f64, f64) -> f64) -> Result<Matrix> {
        if self.shape() != other.shape() {
            return Err(Error::shape(
                ctx,
                format!("{:?}", self.shape()),
                format!("{:?}", other.shape()),
            ));
        }
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    /// `self * x`.
    pub fn matvec(&self, x: &[f64]) -> Result<Vector> {
        if x.len() != self.cols {
            return Err(Error::shape(
                "Matrix::matvec",
                format!("vector of length {}", self.cols),
                format!("length {}", x.len()),
            ));
        }
        Ok((0..self.rows)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect())
    }

    /// `self * other`.
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::shape(
                "Matrix::matmul",
                format!("{} rows on the right", self.cols),
                format!("{}", other.rows),
            ));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for (k, &a) in self.row(i).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (o, &b) in out_row.iter_mut().zip(other.row(k)) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// Maximum absolute column sum: the operator norm induced by l^1.
    pub fn norm_one(&self) -> f64 {
        let mut sums = vec![0.0; self.cols];
        for i in 0..self.rows {
            for (s, v) in sums.iter_mut().zip(self.row(i)) {
                *s += v.abs();
            }
        }
        sums.into_iter().fold(0.0, f64::max)
    }

    /// Maximum absolute row sum: the operator norm induced by l^inf.
    pub fn norm_inf(&self) -> f64 {
        (0..self.rows)
            .map(|i| self.row(i).iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Exact induced norm, admitted only at `p = 1` and `p = inf`.
    pub fn norm_induced(&self, p: f64) -> Result<f64> {
        norm_induced(self, p)
    }

    /// Interpolation bound `||A||_1^{1/p} ||A||_inf^{1-1/p}` on `||A||_p`.
    pub fn norm_p_bound(&self, p: f64) -> Result<f64> {
        norm_p_bound(self, p)
    }

    /// Largest absolute entrywise difference; infinite on shape mismatch.
    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        if self.shape() != other.shape() {
            return f64::INFINITY;
        }
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |acc, (a, b)| acc.max((a - b).abs()))
    }
}

/// Column-stacking vec operator: columns of `m` top to bottom.
pub fn vec(m: &Matrix) -> Vector {
    let mut out = Vec::with_capacity(m.rows() * m.cols());
    for j in 0..m.cols() {
        for i in 0..m.rows() {
            out.push(m.get(i, j));
        }
    }
    Vector(out)
}

/// ReLU applied componentwise.
pub fn relu(v: &[f64]) -> Vector {
    v.iter().map(|&x| x.max(0.0)).collect()
}

pub(crate) fn relu_in_place(v: &mut [f64]) {
    for x in v {
        *x = x.max(0.0);
    }
}

/// Exact induced matrix norm for `p` in `{1, inf}`.
pub fn norm_induced(m: &Matrix, p: f64) -> Result<f64> {
    if p == 1.0 {
        Ok(m.norm_one())
    } else if p == f64::INFINITY {
        Ok(m.norm_inf())
    } else {
        Err(Error::InvalidNormIndex(p))
    }
}

/// Upper bound on `||m||_p` from the two exact endpoint norms.
pub fn norm_p_bound(m: &Matrix, p: f64) -> Result<f64> {
    check_p(p)?;
    let one = m.norm_one();
    let inf = m.norm_inf();
    Ok(interpolate(one, inf, p))
}

/// `one^{1/p} * inf^{1-1/p}` with exact endpoints at `p = 1` and `p = inf`.
pub(crate) fn interpolate(one: f64, inf: f64, p: f64) -> f64 {
    if p == 1.0 {
        one
    } else if p.is_infinite() {
        inf
    } else {
        let t = 1.0 / p;
        one.powf(t) * inf.powf(1.0 - t)
    }
}

pub(crate) fn check_p(p: f64) -> Result<()> {
    if p.is_nan() || p < 1.0 {
        Err(Error::InvalidNormIndex(p))
    } else {
        Ok(())
    }
}

/// Per-channel spatial mean of a vector laid out as `channels` blocks of
/// `d * d` entries.
pub fn global_average_pool(v: &[f64], d: usize, channels: usize) -> Result<Vector> {
    let area = d * d;
    if v.len() != area * channels || area == 0 {
        return Err(Error::shape(
            "global_average_pool",
            format!("length {}", area * channels),
            format!("length {}", v.len()),
        ));
    }
    Ok(v
        .chunks_exact(area)
        .map(|c| c.iter().sum::<f64>() / area as f64)
        .collect())
}

/// A stack of `channels` square `d x d` grids.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageStack {
    d: usize,
    grids: Vec<Matrix>,
}

impl ImageStack {
    pub fn new(d: usize, grids: Vec<Matrix>) -> Result<Self> {
        if d == 0 || grids.is_empty() {
            return Err(Error::shape(
                "ImageStack::new",
                "d >= 1 and at least one channel",
                format!("d = {d}, {} channels", grids.len()),
            ));
        }
        for (c, g) in grids.iter().enumerate() {
            if g.shape() != (d, d) {
                return Err(Error::shape(
                    format!("ImageStack channel {c}"),
                    format!("({d}, {d})"),
                    format!("{:?}", g.shape()),
                ));
            }
        }
        Ok(ImageStack { d, grids })
    }

    pub fn zeros(d: usize, channels: usize) -> Self {
        ImageStack {
            d,
            grids: vec![Matrix::zeros(d, d); channels],
        }
    }

    /// Inverse of [`vec_stack`].
    pub fn from_vec_stack(v: &[f64], d: usize, channels: usize) -> Result<Self> {
        let area = d * d;
        if v.len() != area * channels {
            return Err(Error::shape(
                "ImageStack::from_vec_stack",
                format!("length {}", area * channels),
                format!("length {}", v.len()),
            ));
        }
        let grids = v
            .chunks_exact(area)
            .map(|c| Matrix::from_row_major(d, d, c.to_vec()))
            .collect::<Result<Vec<_>>>()?;
        ImageStack::new(d, grids)
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn channels(&self) -> usize {
        self.grids.len()
    }

    pub fn grid(&self, c: usize) -> &Matrix {
        &self.grids[c]
    }

    pub fn grids(&self) -> &[Matrix] {
        &self.grids
    }
}

/// Concatenation over channels of `vec(grid^T)`: channel-major, row-major
/// within a channel.
pub fn vec_stack(x: &ImageStack) -> Vector {
    x.grids.iter().flat_map(|g| vec(&g.transpose()).into_inner()).collect()
}
