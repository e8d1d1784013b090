//! Zero-padded, stride-1 convolution and the Toeplitz matrices that realize it.
//!
//! Every matrix builder here has a direct summation counterpart
//! (`*_direct`) that evaluates the convolution sum term by term. The
//! direct routes exist to certify the matrix routes and are never used to
//! build them.
//!
//! Index convention: taps are numbered `0..=2f`, signals from 0, and
//! `y[i] = sum_j x[i + j] * w[f - j]` over `|j| <= f` with out-of-range
//! `x` treated as zero.

use crate::error::{Error, Result};
use crate::tensor::{ImageStack, Matrix, Vector};

/// One-dimensional filter with `2f + 1` taps.
#[derive(Clone, Debug, PartialEq)]
pub struct FilterMask1D {
    f: usize,
    taps: Vec<f64>,
}

impl FilterMask1D {
    pub fn new(taps: Vec<f64>) -> Result<Self> {
        if taps.len().is_multiple_of(2) {
            return Err(Error::shape("FilterMask1D", "odd tap count 2f+1", taps.len()));
        }
        Ok(FilterMask1D {
            f: taps.len() / 2,
            taps,
        })
    }

    pub fn delta(f: usize) -> Self {
        let mut taps = vec![0.0; 2 * f + 1];
        taps[f] = 1.0;
        FilterMask1D { f, taps }
    }

    pub fn radius(&self) -> usize {
        self.f
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }
}

/// Square `(2f+1) x (2f+1)` filter, taps stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct FilterMask2D {
    f: usize,
    taps: Vec<f64>,
}

impl FilterMask2D {
    pub fn new(f: usize, taps: Vec<f64>) -> Result<Self> {
        let side = 2 * f + 1;
        if taps.len() != side * side {
            return Err(Error::shape(
                "FilterMask2D",
                format!("{} taps", side * side),
                taps.len(),
            ));
        }
        Ok(FilterMask2D { f, taps })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let side = rows.len();
        if side.is_multiple_of(2) {
            return Err(Error::shape("FilterMask2D", "odd side 2f+1", side));
        }
        let mut taps = Vec::with_capacity(side * side);
        for r in rows {
            if r.len() != side {
                return Err(Error::shape("FilterMask2D row", side, r.len()));
            }
            taps.extend_from_slice(r);
        }
        FilterMask2D::new(side / 2, taps)
    }

    pub fn zeros(f: usize) -> Self {
        let side = 2 * f + 1;
        FilterMask2D {
            f,
            taps: vec![0.0; side * side],
        }
    }

    pub fn delta(f: usize) -> Self {
        let mut w = FilterMask2D::zeros(f);
        let side = 2 * f + 1;
        w.taps[f * side + f] = 1.0;
        w
    }

    pub fn radius(&self) -> usize {
        self.f
    }

    pub fn side(&self) -> usize {
        2 * self.f + 1
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    pub(crate) fn taps_mut(&mut self) -> &mut [f64] {
        &mut self.taps
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.taps[r * self.side() + c]
    }

    /// Row `r` of the kernel as a 1-D filter.
    pub fn row(&self, r: usize) -> FilterMask1D {
        let side = self.side();
        FilterMask1D {
            f: self.f,
            taps: self.taps[r * side..(r + 1) * side].to_vec(),
        }
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.taps.chunks(self.side()).map(<[f64]>::to_vec).collect()
    }

    pub fn abs_sum(&self) -> f64 {
        self.taps.iter().map(|v| v.abs()).sum()
    }
}

/// Multi-channel filter: a `c_out x c_in` grid of 2-D kernels sharing one radius.
#[derive(Clone, Debug, PartialEq)]
pub struct FilterMask {
    f: usize,
    c_out: usize,
    c_in: usize,
    kernels: Vec<FilterMask2D>,
}

impl FilterMask {
    /// `kernels[i][j]` maps input channel `j` to output channel `i`.
    pub fn new(kernels: Vec<Vec<FilterMask2D>>) -> Result<Self> {
        let c_out = kernels.len();
        let c_in = kernels.first().map_or(0, Vec::len);
        if c_out == 0 || c_in == 0 {
            return Err(Error::shape("FilterMask", "c_out, c_in >= 1", format!("{c_out} x {c_in}")));
        }
        let f = kernels[0][0].radius();
        let mut flat = Vec::with_capacity(c_out * c_in);
        for (i, row) in kernels.into_iter().enumerate() {
            if row.len() != c_in {
                return Err(Error::shape(format!("FilterMask output channel {i}"), c_in, row.len()));
            }
            for k in row {
                if k.radius() != f {
                    return Err(Error::shape("FilterMask kernel radius", f, k.radius()));
                }
                flat.push(k);
            }
        }
        Ok(FilterMask {
            f,
            c_out,
            c_in,
            kernels: flat,
        })
    }

    pub fn zeros(f: usize, c_out: usize, c_in: usize) -> Self {
        FilterMask {
            f,
            c_out,
            c_in,
            kernels: vec![FilterMask2D::zeros(f); c_out * c_in],
        }
    }

    /// Per-channel delta kernels on the diagonal: `T(w)` is the identity.
    pub fn identity(f: usize, channels: usize) -> Self {
        let mut w = FilterMask::zeros(f, channels, channels);
        for c in 0..channels {
            *w.kernel_mut(c, c) = FilterMask2D::delta(f);
        }
        w
    }

    pub fn radius(&self) -> usize {
        self.f
    }

    pub fn c_out(&self) -> usize {
        self.c_out
    }

    pub fn c_in(&self) -> usize {
        self.c_in
    }

    pub fn kernel(&self, i: usize, j: usize) -> &FilterMask2D {
        &self.kernels[i * self.c_in + j]
    }

    pub fn kernel_mut(&mut self, i: usize, j: usize) -> &mut FilterMask2D {
        &mut self.kernels[i * self.c_in + j]
    }

    pub(crate) fn kernels_mut(&mut self) -> impl Iterator<Item = &mut FilterMask2D> {
        self.kernels.iter_mut()
    }

    pub fn is_zero(&self) -> bool {
        self.kernels.iter().all(|k| k.taps().iter().all(|&v| v == 0.0))
    }

    pub fn scale(&self, alpha: f64) -> FilterMask {
        self.map(|v| alpha * v)
    }

    pub fn map(&self, g: impl Fn(f64) -> f64) -> FilterMask {
        let mut out = self.clone();
        for k in out.kernels_mut() {
            for t in k.taps_mut() {
                *t = g(*t);
            }
        }
        out
    }

    /// Entrywise `self + other`; radius and channel counts must agree.
    pub fn add(&self, other: &FilterMask) -> Result<FilterMask> {
        self.check_same(other)?;
        let mut out = self.clone();
        for (a, b) in out.kernels_mut().zip(&other.kernels) {
            for (x, y) in a.taps_mut().iter_mut().zip(b.taps()) {
                *x += y;
            }
        }
        Ok(out)
    }

    pub fn sub(&self, other: &FilterMask) -> Result<FilterMask> {
        self.add(&other.scale(-1.0))
    }

    fn check_same(&self, other: &FilterMask) -> Result<()> {
        if (self.f, self.c_out, self.c_in) != (other.f, other.c_out, other.c_in) {
            return Err(Error::shape(
                "FilterMask",
                format!("f={} {}x{}", self.f, self.c_out, self.c_in),
                format!("f={} {}x{}", other.f, other.c_out, other.c_in),
            ));
        }
        Ok(())
    }

    /// Extends the input-channel axis to `c_in` with zero kernels.
    pub fn pad_inputs(&self, c_in: usize) -> Result<FilterMask> {
        if c_in < self.c_in {
            return Err(Error::shape("FilterMask::pad_inputs", format!(">= {}", self.c_in), c_in));
        }
        let mut out = FilterMask::zeros(self.f, self.c_out, c_in);
        for i in 0..self.c_out {
            for j in 0..self.c_in {
                *out.kernel_mut(i, j) = self.kernel(i, j).clone();
            }
        }
        Ok(out)
    }

    /// Keeps only the first `c_in` input channels.
    pub fn truncate_inputs(&self, c_in: usize) -> Result<FilterMask> {
        if c_in == 0 || c_in > self.c_in {
            return Err(Error::shape("FilterMask::truncate_inputs", format!("1..={}", self.c_in), c_in));
        }
        let mut out = FilterMask::zeros(self.f, self.c_out, c_in);
        for i in 0..self.c_out {
            for j in 0..c_in {
                *out.kernel_mut(i, j) = self.kernel(i, j).clone();
            }
        }
        Ok(out)
    }

    /// Sum of |taps| over one (output, input) kernel.
    pub fn kernel_abs_sum(&self, i: usize, j: usize) -> f64 {
        self.kernel(i, j).abs_sum()
    }
}

fn check_radius(f: usize, d: usize) -> Result<()> {
    if f + 1 > d {
        Err(Error::FilterTooLarge { f, d })
    } else {
        Ok(())
    }
}

/// Direct evaluation of the 1-D zero-padded convolution sum.
pub fn conv1d_direct(x: &[f64], w: &FilterMask1D) -> Vector {
    let d = x.len() as isize;
    let f = w.f as isize;
    (0..d)
        .map(|i| {
            let lo = (-i).max(-f);
            let hi = (d - 1 - i).min(f);
            (lo..=hi)
                .map(|j| x[(i + j) as usize] * w.taps[(f - j) as usize])
                .sum()
        })
        .collect()
}

/// `d x d` Toeplitz matrix with `T[i][j] = w[f - j + i]` on the band `|j - i| <= f`.
pub fn toeplitz_1d(w: &FilterMask1D, d: usize) -> Result<Matrix> {
    check_radius(w.f, d)?;
    let f = w.f as isize;
    Ok(Matrix::from_fn(d, d, |i, j| {
        let off = j as isize - i as isize;
        if off.abs() <= f {
            w.taps[(f - off) as usize]
        } else {
            0.0
        }
    }))
}

/// Direct evaluation of the 2-D zero-padded convolution double sum.
pub fn conv2d_direct(x: &Matrix, w: &FilterMask2D) -> Result<Matrix> {
    let (rows, cols) = x.shape();
    if rows != cols || rows == 0 {
        return Err(Error::shape("conv2d_direct", "square non-empty input", format!("{rows}x{cols}")));
    }
    let d = rows as isize;
    let f = w.f as isize;
    Ok(Matrix::from_fn(rows, cols, |i, j| {
        let (i, j) = (i as isize, j as isize);
        let mut acc = 0.0;
        for k1 in (-i).max(-f)..=(d - 1 - i).min(f) {
            for k2 in (-j).max(-f)..=(d - 1 - j).min(f) {
                acc += x.get((i + k1) as usize, (j + k2) as usize)
                    * w.get((f - k1) as usize, (f - k2) as usize);
            }
        }
        acc
    }))
}

/// `d^2 x d^2` block-Toeplitz matrix: block `(I, J)` is `T(w_{f - J + I})`
/// where `w_r` is kernel row `r`. Acts on `vec(x^T)`.
pub fn toeplitz_2d(w: &FilterMask2D, d: usize) -> Result<Matrix> {
    check_radius(w.f, d)?;
    let rows: Vec<Matrix> = (0..w.side())
        .map(|r| toeplitz_1d(&w.row(r), d))
        .collect::<Result<_>>()?;
    let n = d * d;
    let mut out = Matrix::zeros(n, n);
    write_block_toeplitz(&mut out, 0, 0, &rows, w.f, d);
    Ok(out)
}

fn write_block_toeplitz(
    out: &mut Matrix,
    row0: usize,
    col0: usize,
    row_blocks: &[Matrix],
    f: usize,
    d: usize,
) {
    let f = f as isize;
    for bi in 0..d {
        for bj in 0..d {
            let off = bj as isize - bi as isize;
            if off.abs() > f {
                continue;
            }
            let block = &row_blocks[(f - off) as usize];
            for r in 0..d {
                for c in 0..d {
                    let v = block.get(r, c);
                    if v != 0.0 {
                        out.set(row0 + bi * d + r, col0 + bj * d + c, v);
                    }
                }
            }
        }
    }
}

/// Direct multi-channel convolution: output channel `i` is the sum over
/// input channels `j` of `conv2d_direct(x_j, w_{i,j})`.
pub fn conv_mc_direct(x: &ImageStack, w: &FilterMask) -> Result<ImageStack> {
    if x.channels() != w.c_in {
        return Err(Error::shape("conv_mc_direct channels", w.c_in, x.channels()));
    }
    let d = x.d();
    let grids = (0..w.c_out)
        .map(|i| {
            let mut acc = Matrix::zeros(d, d);
            for j in 0..w.c_in {
                acc = acc.add(&conv2d_direct(x.grid(j), w.kernel(i, j))?)?;
            }
            Ok(acc)
        })
        .collect::<Result<Vec<_>>>()?;
    ImageStack::new(d, grids)
}

/// `(d^2 c_out) x (d^2 c_in)` block matrix of single-channel block-Toeplitz
/// matrices, block `(i, j)` built from kernel `w_{i,j}`.
pub fn toeplitz_mc(w: &FilterMask, d: usize) -> Result<Matrix> {
    check_radius(w.f, d)?;
    let n = d * d;
    let mut out = Matrix::zeros(n * w.c_out, n * w.c_in);
    for i in 0..w.c_out {
        for j in 0..w.c_in {
            let k = w.kernel(i, j);
            let rows: Vec<Matrix> = (0..k.side())
                .map(|r| toeplitz_1d(&k.row(r), d))
                .collect::<Result<_>>()?;
            write_block_toeplitz(&mut out, i * n, j * n, &rows, w.f, d);
        }
    }
    Ok(out)
}
