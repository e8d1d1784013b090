//! Residual networks in convolutional form and in general matrix form.
//!
//! A residual block applies `q - 1` layers `h -> relu(W h + b)` and then a
//! final layer whose pre-activation also receives the block input:
//! `x_next = relu(W_q h + x + b_q)`. The sampling layer `relu(W_s x + b_s)`
//! becomes block 0 through [`embed_sampling`], so the whole network is a
//! consecutive composition of residual blocks on `R^{d_res}`.

use serde::{Deserialize, Serialize};

use crate::conv::{conv_mc_direct, toeplitz_mc, FilterMask};
use crate::error::{Error, Result};
use crate::tensor::{global_average_pool, relu_in_place, vec_stack, ImageStack, Matrix, Vector};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Form {
    Conv,
    Matrix,
}

/// Architecture of a network with `n` residual blocks after the sampling block.
///
/// `c[k]` lists the layer widths of block `k` (channel counts in conv form);
/// `c[0] = [input, residual]` describes the sampling layer. `d_in`, `d_res`
/// and `d_out` are always vector widths, so in conv form `d_in = d^2 c[0][0]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub form: Form,
    pub n: usize,
    pub q: Vec<usize>,
    pub c: Vec<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f: Option<Vec<Vec<usize>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<usize>,
    pub d_in: usize,
    pub d_res: usize,
    pub d_out: usize,
}

impl NetworkSpec {
    /// Matrix form with every residual block of depth `q` and hidden width `hidden`.
    pub fn uniform_matrix(n: usize, q: usize, hidden: usize, d_in: usize, d_res: usize, d_out: usize) -> Self {
        let (qs, c) = uniform_layout(n, q, hidden, d_in, d_res);
        NetworkSpec {
            form: Form::Matrix,
            n,
            q: qs,
            c,
            f: None,
            d: None,
            d_in,
            d_res,
            d_out,
        }
    }

    /// Conv form on `d x d` images with uniform block depth and filter radius.
    #[allow(clippy::too_many_arguments)]
    pub fn uniform_conv(
        n: usize,
        q: usize,
        hidden: usize,
        c_in: usize,
        c_res: usize,
        d_out: usize,
        radius: usize,
        d: usize,
    ) -> Self {
        let (qs, c) = uniform_layout(n, q, hidden, c_in, c_res);
        let f = qs.iter().map(|&qk| vec![radius; qk]).collect();
        NetworkSpec {
            form: Form::Conv,
            n,
            q: qs,
            c,
            f: Some(f),
            d: Some(d),
            d_in: d * d * c_in,
            d_res: d * d * c_res,
            d_out,
        }
    }

    /// Spatial area `d^2` in conv form, 1 in matrix form.
    pub fn area(&self) -> usize {
        self.d.map_or(1, |d| d * d)
    }

    /// Width of the residual stream in the native unit (channels in conv form).
    pub fn residual_units(&self) -> usize {
        self.c[0][1]
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidSpec(msg));
        if self.q.len() != self.n + 1 || self.c.len() != self.n + 1 {
            return bad(format!(
                "q and c must have n + 1 = {} entries (got {} and {})",
                self.n + 1,
                self.q.len(),
                self.c.len()
            ));
        }
        if self.q[0] != 1 {
            return bad(format!("q[0] must be 1, got {}", self.q[0]));
        }
        for (k, (&qk, ck)) in self.q.iter().zip(&self.c).enumerate() {
            if qk == 0 {
                return bad(format!("block {k} has depth 0"));
            }
            if ck.len() != qk + 1 {
                return bad(format!("c[{k}] must have q[{k}] + 1 = {} entries", qk + 1));
            }
            if ck.contains(&0) {
                return bad(format!("c[{k}] has a zero width"));
            }
        }
        let res = self.c[0][1];
        for (k, ck) in self.c.iter().enumerate().skip(1) {
            if ck[0] != res || ck[ck.len() - 1] != res {
                return bad(format!("block {k} must start and end at the residual width {res}"));
            }
        }
        if self.c[0][0] > res {
            return bad(format!("input width {} exceeds residual width {res}", self.c[0][0]));
        }
        let area = match self.form {
            Form::Matrix => {
                if self.f.is_some() || self.d.is_some() {
                    return bad("matrix form takes no f or d".into());
                }
                1
            }
            Form::Conv => {
                let d = match self.d {
                    Some(d) if d >= 1 => d,
                    _ => return bad("conv form needs a spatial side d >= 1".into()),
                };
                let f = match &self.f {
                    Some(f) => f,
                    None => return bad("conv form needs filter radii f".into()),
                };
                if f.len() != self.n + 1 {
                    return bad(format!("f must have n + 1 = {} entries", self.n + 1));
                }
                for (k, (fk, &qk)) in f.iter().zip(&self.q).enumerate() {
                    if fk.len() != qk {
                        return bad(format!("f[{k}] must have q[{k}] = {qk} entries"));
                    }
                    if let Some(&r) = fk.iter().find(|&&r| r + 1 > d) {
                        return Err(Error::FilterTooLarge { f: r, d });
                    }
                }
                d * d
            }
        };
        if self.d_in != area * self.c[0][0] || self.d_res != area * res {
            return bad(format!(
                "d_in/d_res must equal {} and {} for this layout",
                area * self.c[0][0],
                area * res
            ));
        }
        if self.d_out == 0 {
            return bad("d_out must be positive".into());
        }
        Ok(())
    }
}

fn uniform_layout(n: usize, q: usize, hidden: usize, input: usize, res: usize) -> (Vec<usize>, Vec<Vec<usize>>) {
    let mut qs = vec![1];
    let mut c = vec![vec![input, res]];
    for _ in 0..n {
        qs.push(q);
        let mut ck = vec![res];
        ck.extend(std::iter::repeat_n(hidden, q.saturating_sub(1)));
        ck.push(res);
        c.push(ck);
    }
    (qs, c)
}

/// One affine layer `W x + b`.
#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub weight: Matrix,
    pub bias: Vector,
}

impl Layer {
    pub fn new(weight: Matrix, bias: Vector) -> Result<Self> {
        if bias.len() != weight.rows() {
            return Err(Error::shape("Layer bias", weight.rows(), bias.len()));
        }
        if !weight.is_finite() || !bias.is_finite() {
            return Err(Error::NonFinite("layer".into()));
        }
        Ok(Layer { weight, bias })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Layer {
            weight: Matrix::zeros(rows, cols),
            bias: Vector::zeros(rows),
        }
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vector> {
        let mut y = self.weight.matvec(x)?;
        for (v, b) in y.iter_mut().zip(self.bias.iter()) {
            *v += b;
        }
        Ok(y)
    }
}

/// Weights `W_1..W_q` and biases `b_1..b_q` of one residual block.
#[derive(Clone, Debug, PartialEq)]
pub struct ResidualBlockWeights {
    layers: Vec<Layer>,
}

impl ResidualBlockWeights {
    /// Validates the layer chain: `W_m` is `c_m x c_{m-1}` and the block
    /// ends at the width it starts from.
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        let Some(first) = layers.first() else {
            return Err(Error::shape("ResidualBlockWeights", "at least one layer", 0));
        };
        let width = first.weight.cols();
        let mut prev = width;
        for (m, l) in layers.iter().enumerate() {
            if l.weight.cols() != prev {
                return Err(Error::shape(format!("block layer {} input width", m + 1), prev, l.weight.cols()));
            }
            prev = l.weight.rows();
        }
        if prev != width {
            return Err(Error::shape("block output width", width, prev));
        }
        Ok(ResidualBlockWeights { layers })
    }

    pub fn from_parts(mats: Vec<Matrix>, biases: Vec<Vector>) -> Result<Self> {
        if mats.len() != biases.len() {
            return Err(Error::shape("block biases", mats.len(), biases.len()));
        }
        let layers = mats
            .into_iter()
            .zip(biases)
            .map(|(w, b)| Layer::new(w, b))
            .collect::<Result<_>>()?;
        ResidualBlockWeights::new(layers)
    }

    /// The pure-shortcut block: zero weights and biases, identity on the
    /// nonnegative orthant.
    pub fn zeros(widths: &[usize]) -> Self {
        let layers = widths.windows(2).map(|w| Layer::zeros(w[1], w[0])).collect();
        ResidualBlockWeights { layers }
    }

    pub fn width(&self) -> usize {
        self.layers[0].weight.cols()
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn mats(&self) -> impl Iterator<Item = &Matrix> {
        self.layers.iter().map(|l| &l.weight)
    }

    pub fn biases(&self) -> impl Iterator<Item = &Vector> {
        self.layers.iter().map(|l| &l.bias)
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vector> {
        self.forward_observed(x, |_, _| {})
    }

    /// Forward pass that hands every pre-activation (before ReLU) to
    /// `observe(layer_index, pre_activation)`.
    pub(crate) fn forward_observed(&self, x: &[f64], mut observe: impl FnMut(usize, &[f64])) -> Result<Vector> {
        if x.len() != self.width() {
            return Err(Error::shape("residual block input", self.width(), x.len()));
        }
        let q = self.layers.len();
        let mut h: Vector = x.into();
        for (m, layer) in self.layers[..q - 1].iter().enumerate() {
            let mut z = layer.apply(&h)?;
            observe(m, &z);
            relu_in_place(&mut z);
            h = z;
        }
        let mut z = self.layers[q - 1].apply(&h)?;
        for (v, s) in z.iter_mut().zip(x) {
            *v += s;
        }
        observe(q - 1, &z);
        relu_in_place(&mut z);
        Ok(z)
    }
}

/// Applies one residual block to `x`.
pub fn forward_block(bw: &ResidualBlockWeights, x: &[f64]) -> Result<Vector> {
    bw.forward(x)
}

/// Block 0 equivalent to the sampling layer `relu(W_s x + b_s)`:
/// `W = [W_s 0] - I`, `b = b_s`, acting on `[x; 0]`.
pub fn embed_sampling(w_s: &Matrix, b_s: &Vector, d_in: usize, d_res: usize) -> Result<ResidualBlockWeights> {
    if w_s.shape() != (d_res, d_in) {
        return Err(Error::shape("sampling weight", format!("({d_res}, {d_in})"), format!("{:?}", w_s.shape())));
    }
    if d_in > d_res {
        return Err(Error::shape("sampling widths", format!("d_in <= {d_res}"), d_in));
    }
    let w = Matrix::from_fn(d_res, d_res, |i, j| {
        let base = if j < d_in { w_s.get(i, j) } else { 0.0 };
        if i == j {
            base - 1.0
        } else {
            base
        }
    });
    ResidualBlockWeights::new(vec![Layer::new(w, b_s.clone())?])
}

/// `[x; 0]` padded to `d_res`.
pub fn pad_input(x: &[f64], d_res: usize) -> Vector {
    let mut v = x.to_vec();
    v.resize(d_res.max(x.len()), 0.0);
    v.into()
}

/// Residual blocks `0..=n` acting on `R^{d_res}`; block 0 has a single layer.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseNetWeights {
    blocks: Vec<ResidualBlockWeights>,
}

impl DenseNetWeights {
    pub fn new(blocks: Vec<ResidualBlockWeights>) -> Result<Self> {
        let Some(first) = blocks.first() else {
            return Err(Error::shape("DenseNetWeights", "at least block 0", 0));
        };
        if first.depth() != 1 {
            return Err(Error::shape("block 0 depth", 1, first.depth()));
        }
        let width = first.width();
        for (k, b) in blocks.iter().enumerate() {
            if b.width() != width {
                return Err(Error::shape(format!("block {k} width"), width, b.width()));
            }
        }
        Ok(DenseNetWeights { blocks })
    }

    /// Every block a zero-weight shortcut; the identity on `[0, 1]^{d_res}`.
    pub fn identity(d_res: usize, n: usize) -> Self {
        DenseNetWeights {
            blocks: vec![ResidualBlockWeights::zeros(&[d_res, d_res]); n + 1],
        }
    }

    pub fn d_res(&self) -> usize {
        self.blocks[0].width()
    }

    /// Index of the last block.
    pub fn n(&self) -> usize {
        self.blocks.len() - 1
    }

    pub fn blocks(&self) -> &[ResidualBlockWeights] {
        &self.blocks
    }

    pub fn block(&self, k: usize) -> &ResidualBlockWeights {
        &self.blocks[k]
    }

    pub(crate) fn check_depth(&self, depth: isize) -> Result<()> {
        if depth > self.n() as isize {
            return Err(Error::DepthOutOfRange { depth, max: self.n() });
        }
        Ok(())
    }

    /// Blocks `0..=depth` applied in order; a negative depth is the empty
    /// composition and returns `x` unchanged.
    pub fn forward_network(&self, x: &[f64], depth: isize) -> Result<Vector> {
        self.check_depth(depth)?;
        if x.len() != self.d_res() {
            return Err(Error::shape("network input", self.d_res(), x.len()));
        }
        let mut h: Vector = x.into();
        for k in 0..=depth.max(-1) {
            h = self.blocks[k as usize].forward(&h)?;
        }
        Ok(h)
    }

    /// Outputs at each depth in `depths` (nondecreasing, each `>= -1`) in
    /// one sweep through the blocks.
    pub fn forward_at_depths(&self, x: &[f64], depths: &[isize]) -> Result<Vec<Vector>> {
        if x.len() != self.d_res() {
            return Err(Error::shape("network input", self.d_res(), x.len()));
        }
        let mut out = Vec::with_capacity(depths.len());
        let mut h: Vector = x.into();
        let mut done: isize = -1;
        for &target in depths {
            self.check_depth(target)?;
            if target < done {
                return Err(Error::InvalidSpec(format!("depths must be nondecreasing (saw {target} after {done})")));
            }
            while done < target {
                done += 1;
                h = self.blocks[done as usize].forward(&h)?;
            }
            out.push(h.clone());
        }
        Ok(out)
    }
}

/// Applies blocks `0..=depth` of `w` to `x`.
pub fn forward_network(w: &DenseNetWeights, x: &[f64], depth: isize) -> Result<Vector> {
    w.forward_network(x, depth)
}

/// Matrix-form network with explicit sampling and output layers.
#[derive(Clone, Debug, PartialEq)]
pub struct MatrixNet {
    pub spec: NetworkSpec,
    pub sampling: Layer,
    /// Residual blocks `1..=n`.
    pub blocks: Vec<ResidualBlockWeights>,
    pub output: Layer,
}

impl MatrixNet {
    pub fn new(spec: NetworkSpec, sampling: Layer, blocks: Vec<ResidualBlockWeights>, output: Layer) -> Result<Self> {
        spec.validate()?;
        if spec.form != Form::Matrix {
            return Err(Error::InvalidSpec("MatrixNet needs a matrix-form spec".into()));
        }
        if sampling.weight.shape() != (spec.d_res, spec.d_in) {
            return Err(Error::shape(
                "sampling weight",
                format!("({}, {})", spec.d_res, spec.d_in),
                format!("{:?}", sampling.weight.shape()),
            ));
        }
        if blocks.len() != spec.n {
            return Err(Error::shape("residual block count", spec.n, blocks.len()));
        }
        for (k, b) in blocks.iter().enumerate() {
            let widths = &spec.c[k + 1];
            if b.depth() != spec.q[k + 1] {
                return Err(Error::shape(format!("block {} depth", k + 1), spec.q[k + 1], b.depth()));
            }
            for (m, l) in b.layers().iter().enumerate() {
                let want = (widths[m + 1], widths[m]);
                if l.weight.shape() != want {
                    return Err(Error::shape(
                        format!("block {} layer {} weight", k + 1, m + 1),
                        format!("{want:?}"),
                        format!("{:?}", l.weight.shape()),
                    ));
                }
            }
        }
        if output.weight.shape() != (spec.d_out, spec.d_res) {
            return Err(Error::shape(
                "output weight",
                format!("({}, {})", spec.d_out, spec.d_res),
                format!("{:?}", output.weight.shape()),
            ));
        }
        Ok(MatrixNet {
            spec,
            sampling,
            blocks,
            output,
        })
    }

    /// Blocks `0..=n` with the sampling layer embedded as block 0.
    pub fn dense(&self) -> Result<DenseNetWeights> {
        let mut blocks = Vec::with_capacity(self.blocks.len() + 1);
        blocks.push(embed_sampling(&self.sampling.weight, &self.sampling.bias, self.spec.d_in, self.spec.d_res)?);
        blocks.extend(self.blocks.iter().cloned());
        DenseNetWeights::new(blocks)
    }

    /// Full pipeline on `x in R^{d_in}`: sampling, residual blocks, output layer.
    pub fn forward(&self, x: &[f64]) -> Result<Vector> {
        let mut h = self.sampling.apply(x)?;
        relu_in_place(&mut h);
        for b in &self.blocks {
            h = b.forward(&h)?;
        }
        self.output.apply(&h)
    }
}

/// Convolutional layer: multi-channel filter plus one bias scalar per output channel.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvLayer {
    pub filter: FilterMask,
    pub bias: Vec<f64>,
}

impl ConvLayer {
    pub fn new(filter: FilterMask, bias: Vec<f64>) -> Result<Self> {
        if bias.len() != filter.c_out() {
            return Err(Error::shape("conv bias", filter.c_out(), bias.len()));
        }
        if bias.iter().any(|b| !b.is_finite()) || filter.kernel_abs_sums().any(|s| !s.is_finite()) {
            return Err(Error::NonFinite("conv layer".into()));
        }
        Ok(ConvLayer { filter, bias })
    }

    fn apply(&self, x: &ImageStack) -> Result<ImageStack> {
        let y = conv_mc_direct(x, &self.filter)?;
        let d = y.d();
        let grids = y
            .grids()
            .iter()
            .zip(&self.bias)
            .map(|(g, &b)| Matrix::from_fn(d, d, |i, j| g.get(i, j) + b))
            .collect();
        ImageStack::new(d, grids)
    }

    /// Bias replicated over the `d x d` grid of each channel, in `vec_stack` order.
    pub fn expanded_bias(&self, d: usize) -> Vector {
        self.bias
            .iter()
            .flat_map(|&b| std::iter::repeat_n(b, d * d))
            .collect()
    }
}

impl FilterMask {
    pub(crate) fn kernel_abs_sums(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.c_out()).flat_map(move |i| (0..self.c_in()).map(move |j| self.kernel_abs_sum(i, j)))
    }
}

/// Convolutional residual network: sampling convolution, residual blocks of
/// convolutions, global average pooling and an affine output map.
#[derive(Clone, Debug, PartialEq)]
pub struct ResNetWeights {
    pub spec: NetworkSpec,
    pub sampling: ConvLayer,
    /// Residual blocks `1..=n`, each a sequence of `q_k` conv layers.
    pub blocks: Vec<Vec<ConvLayer>>,
    pub output: Layer,
}

impl ResNetWeights {
    pub fn new(spec: NetworkSpec, sampling: ConvLayer, blocks: Vec<Vec<ConvLayer>>, output: Layer) -> Result<Self> {
        spec.validate()?;
        if spec.form != Form::Conv {
            return Err(Error::InvalidSpec("ResNetWeights needs a conv-form spec".into()));
        }
        let radii = spec.f.as_ref().expect("validated conv spec has radii");
        let check = |ctx: String, layer: &ConvLayer, c_out: usize, c_in: usize, f: usize| -> Result<()> {
            let w = &layer.filter;
            if (w.c_out(), w.c_in(), w.radius()) != (c_out, c_in, f) {
                return Err(Error::shape(
                    ctx,
                    format!("{c_out}x{c_in} channels, radius {f}"),
                    format!("{}x{} channels, radius {}", w.c_out(), w.c_in(), w.radius()),
                ));
            }
            Ok(())
        };
        check("sampling filter".into(), &sampling, spec.c[0][1], spec.c[0][0], radii[0][0])?;
        if blocks.len() != spec.n {
            return Err(Error::shape("residual block count", spec.n, blocks.len()));
        }
        for (k, block) in blocks.iter().enumerate() {
            let kk = k + 1;
            if block.len() != spec.q[kk] {
                return Err(Error::shape(format!("block {kk} depth"), spec.q[kk], block.len()));
            }
            for (m, layer) in block.iter().enumerate() {
                check(
                    format!("block {kk} layer {} filter", m + 1),
                    layer,
                    spec.c[kk][m + 1],
                    spec.c[kk][m],
                    radii[kk][m],
                )?;
            }
        }
        if output.weight.shape() != (spec.d_out, spec.residual_units()) {
            return Err(Error::shape(
                "output weight",
                format!("({}, {})", spec.d_out, spec.residual_units()),
                format!("{:?}", output.weight.shape()),
            ));
        }
        Ok(ResNetWeights {
            spec,
            sampling,
            blocks,
            output,
        })
    }

    pub fn d(&self) -> usize {
        self.spec.d.expect("validated conv spec has d")
    }

    /// Residual stream after the sampling layer and all blocks, before pooling.
    pub fn forward_features(&self, x: &ImageStack) -> Result<ImageStack> {
        if x.d() != self.d() || x.channels() != self.spec.c[0][0] {
            return Err(Error::shape(
                "resnet input",
                format!("{0}x{0}x{1}", self.d(), self.spec.c[0][0]),
                format!("{0}x{0}x{1}", x.d(), x.channels()),
            ));
        }
        let mut h = relu_stack(self.sampling.apply(x)?)?;
        for block in &self.blocks {
            let input = h.clone();
            let q = block.len();
            for layer in &block[..q - 1] {
                h = relu_stack(layer.apply(&h)?)?;
            }
            let z = block[q - 1].apply(&h)?;
            let d = z.d();
            let grids = z
                .grids()
                .iter()
                .zip(input.grids())
                .map(|(a, b)| a.add(b))
                .collect::<Result<Vec<_>>>()?;
            h = relu_stack(ImageStack::new(d, grids)?)?;
        }
        Ok(h)
    }
}

fn relu_stack(x: ImageStack) -> Result<ImageStack> {
    let d = x.d();
    let grids = x
        .grids()
        .iter()
        .map(|g| Matrix::from_fn(d, d, |i, j| g.get(i, j).max(0.0)))
        .collect();
    ImageStack::new(d, grids)
}

/// Conv-form forward: sampling conv + ReLU, residual blocks, global average
/// pooling, then `W_o (.) + b_o`.
pub fn forward_resnet(w: &ResNetWeights, x: &ImageStack) -> Result<Vector> {
    let h = w.forward_features(x)?;
    let pooled = global_average_pool(&vec_stack(&h), h.d(), h.channels())?;
    w.output.apply(&pooled)
}

/// Lowers every convolution to its block-Toeplitz matrix and every
/// per-channel bias to its replicated vector; the sampling layer is
/// embedded as block 0.
pub fn lower_to_matrix(w: &ResNetWeights) -> Result<DenseNetWeights> {
    let d = w.d();
    let w_s = toeplitz_mc(&w.sampling.filter, d)?;
    let b_s = w.sampling.expanded_bias(d);
    let mut blocks = vec![embed_sampling(&w_s, &b_s, w.spec.d_in, w.spec.d_res)?];
    for block in &w.blocks {
        let layers = block
            .iter()
            .map(|l| Layer::new(toeplitz_mc(&l.filter, d)?, l.expanded_bias(d)))
            .collect::<Result<Vec<_>>>()?;
        blocks.push(ResidualBlockWeights::new(layers)?);
    }
    DenseNetWeights::new(blocks)
}

/// Either network form, as stored in a weight file.
#[derive(Clone, Debug, PartialEq)]
pub enum Weights {
    Conv(ResNetWeights),
    Matrix(MatrixNet),
}

impl Weights {
    pub fn spec(&self) -> &NetworkSpec {
        match self {
            Weights::Conv(w) => &w.spec,
            Weights::Matrix(w) => &w.spec,
        }
    }

    /// Matrix-form blocks `0..=n` (lowering conv weights when needed).
    pub fn dense(&self) -> Result<DenseNetWeights> {
        match self {
            Weights::Conv(w) => lower_to_matrix(w),
            Weights::Matrix(w) => w.dense(),
        }
    }
}
