//! Shared fixtures and independent reference implementations for the
//! integration tests. Nothing here calls the library's evaluation code.

#![allow(dead_code)]

use resnet_lab::conv::{FilterMask, FilterMask1D, FilterMask2D};
use resnet_lab::generator::{BiasDecay, GeneratorConfig, SpecInput, UniformSpec};
use resnet_lab::model::{DenseNetWeights, Form, ResidualBlockWeights};
use resnet_lab::rng::Stream;
use resnet_lab::tensor::{Matrix, Vector};

pub fn rng(seed: u64) -> Stream {
    Stream::new(seed, 0xA11CE)
}

pub fn max_dev(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "length mismatch");
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

// ---------------------------------------------------------------------------
// Reference convolutions on explicitly zero-padded arrays.

/// `y_i = sum_t w[t] * xp[i + 2f - t]` with `xp` the input padded by `f`.
pub fn ref_conv1d(x: &[f64], w: &[f64]) -> Vec<f64> {
    let f = (w.len() - 1) / 2;
    let mut xp = vec![0.0; x.len() + 2 * f];
    xp[f..f + x.len()].copy_from_slice(x);
    (0..x.len())
        .map(|i| (0..w.len()).map(|t| w[t] * xp[i + 2 * f - t]).sum())
        .collect()
}

/// 2-D analogue of [`ref_conv1d`] on a `d x d` grid given as rows.
pub fn ref_conv2d(x: &[Vec<f64>], w: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let d = x.len();
    let s = w.len();
    let f = (s - 1) / 2;
    let mut xp = vec![vec![0.0; d + 2 * f]; d + 2 * f];
    for r in 0..d {
        xp[r + f][f..f + d].copy_from_slice(&x[r]);
    }
    (0..d)
        .map(|r| {
            (0..d)
                .map(|c| {
                    let mut acc = 0.0;
                    for a in 0..s {
                        for b in 0..s {
                            acc += w[a][b] * xp[r + 2 * f - a][c + 2 * f - b];
                        }
                    }
                    acc
                })
                .collect()
        })
        .collect()
}

/// Multi-channel reference: `x[j]` is channel `j` as rows, `w[i][j]` the
/// kernel from input `j` to output `i`.
pub fn ref_conv_mc(x: &[Vec<Vec<f64>>], w: &[Vec<Vec<Vec<f64>>>]) -> Vec<Vec<Vec<f64>>> {
    let d = x[0].len();
    w.iter()
        .map(|wi| {
            let mut acc = vec![vec![0.0; d]; d];
            for (xj, wij) in x.iter().zip(wi) {
                let y = ref_conv2d(xj, wij);
                for r in 0..d {
                    for c in 0..d {
                        acc[r][c] += y[r][c];
                    }
                }
            }
            acc
        })
        .collect()
}

/// Channel-major, row-major flattening (the layout the matrix route uses).
pub fn flatten(x: &[Vec<Vec<f64>>]) -> Vec<f64> {
    x.iter().flat_map(|g| g.iter().flatten().copied()).collect()
}

pub fn random_grid(rng: &mut Stream, d: usize) -> Vec<Vec<f64>> {
    (0..d).map(|_| rng.signed_vec(d)).collect()
}

pub fn random_kernel_rows(rng: &mut Stream, f: usize) -> Vec<Vec<f64>> {
    random_grid(rng, 2 * f + 1)
}

pub fn random_filter_rows(rng: &mut Stream, f: usize, c_out: usize, c_in: usize) -> Vec<Vec<Vec<Vec<f64>>>> {
    (0..c_out)
        .map(|_| (0..c_in).map(|_| random_kernel_rows(rng, f)).collect())
        .collect()
}

pub fn filter_from_rows(w: &[Vec<Vec<Vec<f64>>>]) -> FilterMask {
    FilterMask::new(
        w.iter()
            .map(|wi| wi.iter().map(|k| FilterMask2D::from_rows(k).unwrap()).collect())
            .collect(),
    )
    .unwrap()
}

pub fn mask1d(w: &[f64]) -> FilterMask1D {
    FilterMask1D::new(w.to_vec()).unwrap()
}

// ---------------------------------------------------------------------------
// Reference residual network evaluation on plain nested vectors.

pub struct RefLayer {
    pub w: Vec<Vec<f64>>,
    pub b: Vec<f64>,
}

pub type RefNet = Vec<Vec<RefLayer>>;

fn affine(l: &RefLayer, x: &[f64]) -> Vec<f64> {
    l.w.iter()
        .zip(&l.b)
        .map(|(row, b)| row.iter().zip(x).map(|(a, v)| a * v).sum::<f64>() + b)
        .collect()
}

/// Blocks `0..=depth`, each `q - 1` plain ReLU layers then the shortcut layer.
pub fn ref_forward(net: &RefNet, x: &[f64], depth: usize) -> Vec<f64> {
    let mut h = x.to_vec();
    for block in &net[..=depth] {
        let input = h.clone();
        let (last, hidden) = block.split_last().unwrap();
        for l in hidden {
            h = affine(l, &h).into_iter().map(|v| v.max(0.0)).collect();
        }
        h = affine(last, &h).iter().zip(&input).map(|(z, s)| (z + s).max(0.0)).collect();
    }
    h
}

pub fn to_dense(net: &RefNet) -> DenseNetWeights {
    DenseNetWeights::new(
        net.iter()
            .map(|block| {
                ResidualBlockWeights::from_parts(
                    block.iter().map(|l| Matrix::from_rows(&l.w).unwrap()).collect(),
                    block.iter().map(|l| Vector::new(l.b.clone())).collect(),
                )
                .unwrap()
            })
            .collect(),
    )
    .unwrap()
}

/// Random network with `n + 1` blocks (block 0 single-layer), depths in
/// `1..=max_q`, widths in `1..=max_width`. Entries are scaled so that
/// activation patterns are mixed.
pub fn random_net(rng: &mut Stream, n: usize, max_q: usize, d_res: usize, max_width: usize) -> RefNet {
    (0..=n)
        .map(|k| {
            let q = if k == 0 { 1 } else { 1 + rng.index(max_q) };
            let mut widths = vec![d_res];
            for _ in 1..q {
                widths.push(1 + rng.index(max_width));
            }
            widths.push(d_res);
            (0..q)
                .map(|m| {
                    let (rows, cols) = (widths[m + 1], widths[m]);
                    let scale = 1.5 / (cols as f64).sqrt();
                    RefLayer {
                        w: (0..rows).map(|_| rng.signed_vec(cols).iter().map(|v| v * scale).collect()).collect(),
                        b: rng.signed_vec(rows).iter().map(|v| 0.5 * v).collect(),
                    }
                })
                .collect()
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Generator fixtures.

pub fn matrix_config(n: usize, q: usize, width: usize, decay: f64, bias: BiasDecay, seed: u64) -> GeneratorConfig {
    GeneratorConfig {
        spec: SpecInput::Uniform(UniformSpec {
            n,
            q,
            hidden: Some(width),
            input: width,
            residual: width,
            output: 3,
            radius: None,
            side: None,
        }),
        form: Form::Matrix,
        decay,
        scale: 1.0,
        bias_decay: bias,
        seed,
        p: 1.0,
    }
}

/// The convergent desk-scale fixture: 401 single-layer blocks of width 16
/// with weight products `(k + 1)^{-2}` and bias norms `0.1 (k + 1)^{-2}`.
pub fn convergent_config() -> GeneratorConfig {
    matrix_config(400, 1, 16, 2.0, BiasDecay { exponent: 2.0, scale: 0.1 }, 42)
}

/// Constant unit weight norms.
pub fn constant_norm_config() -> GeneratorConfig {
    matrix_config(400, 1, 16, 0.0, BiasDecay { exponent: 2.0, scale: 0.1 }, 43)
}

/// Decaying weights but constant unit bias norms.
pub fn constant_bias_config() -> GeneratorConfig {
    matrix_config(400, 1, 16, 2.0, BiasDecay { exponent: 0.0, scale: 1.0 }, 44)
}

pub fn conv_config(n: usize, seed: u64) -> GeneratorConfig {
    GeneratorConfig {
        spec: SpecInput::Uniform(UniformSpec {
            n,
            q: 2,
            hidden: Some(3),
            input: 2,
            residual: 2,
            output: 3,
            radius: Some(1),
            side: Some(4),
        }),
        form: Form::Conv,
        decay: 2.0,
        scale: 0.5,
        bias_decay: BiasDecay { exponent: 3.0, scale: 0.1 },
        seed,
        p: 1.0,
    }
}

pub const BASEL: f64 = std::f64::consts::PI * std::f64::consts::PI / 6.0;
