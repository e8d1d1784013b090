//! Activation matrices and the closed-form affine piece of a residual network.
//!
//! On the set of inputs that share one firing pattern, the network restricted
//! to blocks `0..=n` is affine: `N(x) = A x + B` with
//!
//! ```text
//! F_k = J_q W_q ... J_1 W_1 + J_q                      (block k factor)
//! A   = F_n F_{n-1} ... F_0
//! B   = sum_k sum_m [F_n ... F_{k+1}] (J_q W_q ... J_{m+1} W_{m+1}) J_m b_m
//! ```
//!
//! Patterns are extracted pointwise from a forward pass; regions are never
//! enumerated.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::DenseNetWeights;
use crate::tensor::{Matrix, Vector};

/// Diagonal 0/1 matrix recording which ReLU units fire.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ActivationMatrix {
    #[serde(with = "bitmask")]
    mask: Vec<bool>,
}

impl ActivationMatrix {
    pub fn new(mask: Vec<bool>) -> Self {
        ActivationMatrix { mask }
    }

    pub fn ones(dim: usize) -> Self {
        ActivationMatrix { mask: vec![true; dim] }
    }

    /// Strict positivity: a zero pre-activation is inactive.
    pub fn from_preactivation(z: &[f64]) -> Self {
        ActivationMatrix {
            mask: z.iter().map(|&v| v > 0.0).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.mask.len()
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    /// Indices `k` with `J_kk = 1`.
    pub fn support(&self) -> Vec<usize> {
        self.mask.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i).collect()
    }

    pub fn to_matrix(&self) -> Matrix {
        let n = self.dim();
        Matrix::from_fn(n, n, |i, j| if i == j && self.mask[i] { 1.0 } else { 0.0 })
    }

    /// `J v`.
    pub fn apply(&self, v: &[f64]) -> Vector {
        v.iter().zip(&self.mask).map(|(&x, &on)| if on { x } else { 0.0 }).collect()
    }

    /// `J M`: zeroes the rows of `m` outside the support.
    pub fn apply_rows(&self, m: &Matrix) -> Matrix {
        Matrix::from_fn(m.rows(), m.cols(), |i, j| if self.mask[i] { m.get(i, j) } else { 0.0 })
    }
}

mod bitmask {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(mask: &[bool], s: S) -> Result<S::Ok, S::Error> {
        mask.iter().map(|&b| u8::from(b)).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<bool>, D::Error> {
        Ok(Vec::<u8>::deserialize(d)?.into_iter().map(|b| b != 0).collect())
    }
}

/// Pattern of `W x + b`.
pub fn activation_pattern(w: &Matrix, b: &[f64], x: &[f64]) -> Result<ActivationMatrix> {
    if b.len() != w.rows() {
        return Err(Error::shape("activation_pattern bias", w.rows(), b.len()));
    }
    let mut z = w.matvec(x)?;
    for (v, bi) in z.iter_mut().zip(b) {
        *v += bi;
    }
    Ok(ActivationMatrix::from_preactivation(&z))
}

/// Firing pattern realized by one input: `blocks[k][m]` is `J^{(k)}_{m+1}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatternTrace {
    pub blocks: Vec<Vec<ActivationMatrix>>,
    /// Smallest `|pre-activation|` seen along the pass. Inputs whose margin
    /// is small sit near a region boundary.
    pub margin: f64,
}

impl PatternTrace {
    pub fn depth(&self) -> usize {
        self.blocks.len()
    }
}

/// Runs blocks `0..=depth` on `x` and records the pattern at every layer,
/// including the final shortcut layer of each block.
pub fn trace_forward(w: &DenseNetWeights, x: &[f64], depth: usize) -> Result<PatternTrace> {
    w.check_depth(depth as isize)?;
    if x.len() != w.d_res() {
        return Err(Error::shape("trace input", w.d_res(), x.len()));
    }
    let mut h: Vector = x.into();
    let mut margin = f64::INFINITY;
    let mut blocks = Vec::with_capacity(depth + 1);
    for block in &w.blocks()[..=depth] {
        let mut pats = Vec::with_capacity(block.depth());
        h = block.forward_observed(&h, |_, z| {
            margin = z.iter().fold(margin, |acc, v| acc.min(v.abs()));
            pats.push(ActivationMatrix::from_preactivation(z));
        })?;
        blocks.push(pats);
    }
    Ok(PatternTrace { blocks, margin })
}

/// Affine map `x -> A x + B` valid on one activation region.
#[derive(Clone, Debug, PartialEq)]
pub struct AffinePiece {
    pub a: Matrix,
    pub b: Vector,
}

impl AffinePiece {
    pub fn apply(&self, x: &[f64]) -> Result<Vector> {
        Ok(self.a.matvec(x)?.add(&self.b))
    }
}

/// Assembles `(A, B)` for blocks `0..=depth` under the patterns in `t`.
/// Products over blocks put later blocks on the left.
pub fn accumulate_piece(w: &DenseNetWeights, t: &PatternTrace, depth: usize) -> Result<AffinePiece> {
    w.check_depth(depth as isize)?;
    if t.depth() <= depth {
        return Err(Error::shape("pattern trace blocks", depth + 1, t.depth()));
    }
    let d = w.d_res();
    // `suffix` holds F_depth ... F_{k+1} while block k is processed.
    let mut suffix = Matrix::identity(d);
    let mut b_total = Vector::zeros(d);
    for k in (0..=depth).rev() {
        let block = w.block(k);
        let pats = &t.blocks[k];
        if pats.len() != block.depth() {
            return Err(Error::shape(format!("trace block {k} layers"), block.depth(), pats.len()));
        }
        for (m, (layer, j)) in block.layers().iter().zip(pats).enumerate() {
            if j.dim() != layer.weight.rows() {
                return Err(Error::shape(format!("trace block {k} layer {}", m + 1), layer.weight.rows(), j.dim()));
            }
        }
        let layers = block.layers();
        let q = layers.len();

        // Bias terms (J_q W_q ... J_{m+1} W_{m+1}) J_m b_m.
        let mut block_bias = Vector::zeros(d);
        for m in 0..q {
            let mut v = pats[m].apply(&layers[m].bias);
            for mp in m + 1..q {
                v = pats[mp].apply(&layers[mp].weight.matvec(&v)?);
            }
            block_bias = block_bias.add(&v);
        }
        b_total = b_total.add(&suffix.matvec(&block_bias)?);

        // F_k = J_q W_q ... J_1 W_1 + J_q.
        let mut chain = pats[0].apply_rows(&layers[0].weight);
        for mp in 1..q {
            chain = pats[mp].apply_rows(&layers[mp].weight.matmul(&chain)?);
        }
        let factor = chain.add(&pats[q - 1].to_matrix())?;
        suffix = suffix.matmul(&factor)?;
    }
    Ok(AffinePiece { a: suffix, b: b_total })
}

/// Network output through the closed form: trace, accumulate, then `A x + B`.
/// `x` must lie in the unit cube.
pub fn explicit_eval(w: &DenseNetWeights, x: &[f64], depth: usize) -> Result<Vector> {
    check_unit_cube(x)?;
    let trace = trace_forward(w, x, depth)?;
    accumulate_piece(w, &trace, depth)?.apply(x)
}

pub(crate) fn check_unit_cube(x: &[f64]) -> Result<()> {
    match x.iter().position(|v| !(0.0..=1.0).contains(v)) {
        Some(index) => Err(Error::OutsideUnitCube { index, value: x[index] }),
        None => Ok(()),
    }
}
