//! Synthetic weights with prescribed per-block norm decay.
//!
//! Block `k` gets i.i.d. entries uniform on `[-1, 1)`, then every layer is
//! rescaled to norm `t_k^{1/q_k}` with `t_k = s (k + 1)^{-alpha}`, so the
//! block's weight product equals `t_k`. Biases are rescaled to
//! `s_b (k + 1)^{-beta}` per layer. Norms are the diagnostics' norms at the
//! configured `p` (the filter bound in conv form).
//!
//! Block 0 is the sampling layer. Its embedded matrix `M = [W_s 0] - I` is
//! drawn and rescaled like any other block, and `W_s` is read back as the
//! first `d_in` columns of `M + I`. When `d_in = d_res` the embedded norm is
//! exactly `s`; otherwise the dropped columns are replaced by `-e_j` and the
//! embedded norm is `max(s, 1)` at most.
//!
//! Every block draws from its own ChaCha8 stream (`set_stream(k)`), the
//! output layer from stream `n + 1`; see [`crate::rng`].

use serde::{Deserialize, Serialize};

use crate::conv::{FilterMask, FilterMask2D};
use crate::diagnostics::filter_norm_bound;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::model::{ConvLayer, Form, Layer, MatrixNet, NetworkSpec, ResNetWeights, ResidualBlockWeights, Weights};
use crate::rng::Stream;
use crate::tensor::{check_p, norm_p_bound, vector_norm, Matrix, Vector};

const MAX_RETRIES: usize = 16;

/// Bias norm schedule `scale * (k + 1)^{-exponent}` per layer.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BiasDecay {
    pub exponent: f64,
    pub scale: f64,
}

impl Default for BiasDecay {
    fn default() -> Self {
        BiasDecay {
            exponent: 2.0,
            scale: 0.0,
        }
    }
}

/// Shorthand for specs whose residual blocks all share one depth and width.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UniformSpec {
    pub n: usize,
    #[serde(default = "one")]
    pub q: usize,
    /// Hidden width (channels in conv form); defaults to the residual width.
    #[serde(default)]
    pub hidden: Option<usize>,
    pub input: usize,
    pub residual: usize,
    pub output: usize,
    /// Filter radius (conv form).
    #[serde(default)]
    pub radius: Option<usize>,
    /// Spatial side (conv form).
    #[serde(default)]
    pub side: Option<usize>,
}

fn one() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SpecInput {
    Full(NetworkSpec),
    Uniform(UniformSpec),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorConfig {
    pub spec: SpecInput,
    pub form: Form,
    /// Weight decay exponent `alpha >= 0`.
    pub decay: f64,
    /// Weight scale `s > 0`.
    #[serde(default = "unit_scale")]
    pub scale: f64,
    #[serde(default, alias = "biasDecay")]
    pub bias_decay: BiasDecay,
    pub seed: u64,
    /// Norm index for the rescaling (`"inf"` accepted).
    #[serde(default = "default_p", with = "norm_index")]
    pub p: f64,
}

fn unit_scale() -> f64 {
    1.0
}

fn default_p() -> f64 {
    1.0
}

pub(crate) mod norm_index {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(p: &f64, s: S) -> Result<S::Ok, S::Error> {
        if p.is_infinite() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*p)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(p) => Ok(p),
            Raw::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

impl GeneratorConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Resolved network spec (expanding the uniform shorthand).
    pub fn network_spec(&self) -> Result<NetworkSpec> {
        let spec = match &self.spec {
            SpecInput::Full(s) => s.clone(),
            SpecInput::Uniform(u) => {
                let hidden = u.hidden.unwrap_or(u.residual);
                match self.form {
                    Form::Matrix => {
                        if u.radius.is_some() || u.side.is_some() {
                            return Err(Error::InvalidConfig("radius/side only apply to conv form".into()));
                        }
                        NetworkSpec::uniform_matrix(u.n, u.q, hidden, u.input, u.residual, u.output)
                    }
                    Form::Conv => {
                        let (Some(radius), Some(side)) = (u.radius, u.side) else {
                            return Err(Error::InvalidConfig("conv form needs radius and side".into()));
                        };
                        NetworkSpec::uniform_conv(u.n, u.q, hidden, u.input, u.residual, u.output, radius, side)
                    }
                }
            }
        };
        if spec.form != self.form {
            return Err(Error::InvalidConfig("spec.form disagrees with form".into()));
        }
        spec.validate()?;
        Ok(spec)
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if !(self.decay.is_finite() && self.decay >= 0.0) {
            return bad("decay must be finite and >= 0");
        }
        if !(self.scale.is_finite() && self.scale > 0.0) {
            return bad("scale must be finite and > 0");
        }
        let b = &self.bias_decay;
        if !(b.exponent.is_finite() && b.scale.is_finite() && b.scale >= 0.0) {
            return bad("bias decay needs finite exponent and scale >= 0");
        }
        check_p(self.p).map_err(|_| Error::InvalidConfig(format!("invalid norm index {}", self.p)))
    }

    /// Target weight product of block `k`.
    pub fn weight_target(&self, k: usize) -> f64 {
        self.scale * ((k + 1) as f64).powf(-self.decay)
    }

    /// Target norm of each bias in block `k`.
    pub fn bias_target(&self, k: usize) -> f64 {
        self.bias_decay.scale * ((k + 1) as f64).powf(-self.bias_decay.exponent)
    }
}

/// Draws a network from `cfg`; identical configs give identical weights.
pub fn generate(cfg: &GeneratorConfig) -> Result<Weights> {
    generate_with(cfg, Exec::default())
}

pub fn generate_with(cfg: &GeneratorConfig, exec: Exec) -> Result<Weights> {
    cfg.validate()?;
    let spec = cfg.network_spec()?;
    match spec.form {
        Form::Matrix => generate_matrix(cfg, spec, exec).map(Weights::Matrix),
        Form::Conv => generate_conv(cfg, spec, exec).map(Weights::Conv),
    }
}

/// Rescales a nonzero draw to norm `target`; redraws all-zero draws.
fn draw_scaled<T>(
    rng: &mut Stream,
    (block, layer): (usize, usize),
    target: f64,
    mut draw: impl FnMut(&mut Stream) -> T,
    norm: impl Fn(&T) -> Result<f64>,
    scale: impl Fn(&T, f64) -> T,
) -> Result<T> {
    for _ in 0..=MAX_RETRIES {
        let x = draw(rng);
        let nx = norm(&x)?;
        if nx > 0.0 && nx.is_finite() {
            return Ok(scale(&x, target / nx));
        }
    }
    Err(Error::DegenerateDraw {
        block,
        layer,
        retries: MAX_RETRIES,
    })
}

fn draw_matrix(rng: &mut Stream, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.signed())
}

fn draw_filter(rng: &mut Stream, f: usize, c_out: usize, c_in: usize) -> FilterMask {
    let side = 2 * f + 1;
    let kernels = (0..c_out)
        .map(|_| {
            (0..c_in)
                .map(|_| FilterMask2D::new(f, rng.signed_vec(side * side)).expect("odd side"))
                .collect()
        })
        .collect();
    FilterMask::new(kernels).expect("nonempty channels")
}

fn bias_vec(cfg: &GeneratorConfig, rng: &mut Stream, k: usize, m: usize, len: usize) -> Result<Vector> {
    let target = cfg.bias_target(k);
    if target == 0.0 {
        return Ok(Vector::zeros(len));
    }
    draw_scaled(
        rng,
        (k, m),
        target,
        |r| Vector::new(r.signed_vec(len)),
        |v| Ok(vector_norm(v, cfg.p)),
        |v, a| v.scale(a),
    )
}

fn output_layer(cfg: &GeneratorConfig, spec: &NetworkSpec, cols: usize) -> Layer {
    let mut rng = Stream::new(cfg.seed, spec.n as u64 + 1);
    let w = Matrix::from_fn(spec.d_out, cols, |_, _| rng.signed() / cols as f64);
    let b = Vector::new(rng.signed_vec(spec.d_out));
    Layer::new(w, b).expect("shapes match")
}

fn generate_matrix(cfg: &GeneratorConfig, spec: NetworkSpec, exec: Exec) -> Result<MatrixNet> {
    let p = cfg.p;
    let d_res = spec.d_res;
    let mnorm = |m: &Matrix| norm_p_bound(m, p);

    let mut rng0 = Stream::new(cfg.seed, 0);
    let m0 = draw_scaled(&mut rng0, (0, 1), cfg.weight_target(0), |r| draw_matrix(r, d_res, d_res), mnorm, Matrix::scale)?;
    let full = m0.add(&Matrix::identity(d_res))?;
    let w_s = Matrix::from_fn(d_res, spec.d_in, |i, j| full.get(i, j));
    let b_s = bias_vec(cfg, &mut rng0, 0, 1, d_res)?;
    let sampling = Layer::new(w_s, b_s)?;

    let blocks = exec.try_map(spec.n, |i| -> Result<ResidualBlockWeights> {
        let k = i + 1;
        let mut rng = Stream::new(cfg.seed, k as u64);
        let widths = &spec.c[k];
        let q = spec.q[k];
        let per_layer = cfg.weight_target(k).powf(1.0 / q as f64);
        let mut layers = Vec::with_capacity(q);
        for m in 0..q {
            let w = draw_scaled(&mut rng, (k, m + 1), per_layer, |r| draw_matrix(r, widths[m + 1], widths[m]), mnorm, Matrix::scale)?;
            let b = bias_vec(cfg, &mut rng, k, m + 1, widths[m + 1])?;
            layers.push(Layer::new(w, b)?);
        }
        ResidualBlockWeights::new(layers)
    })?;
    let output = output_layer(cfg, &spec, d_res);
    MatrixNet::new(spec, sampling, blocks, output)
}

fn generate_conv(cfg: &GeneratorConfig, spec: NetworkSpec, exec: Exec) -> Result<ResNetWeights> {
    let p = cfg.p;
    let radii = spec.f.clone().expect("validated conv spec");
    let c_in = spec.c[0][0];
    let c_res = spec.residual_units();
    let fnorm = |w: &FilterMask| filter_norm_bound(w, p);

    let mut rng0 = Stream::new(cfg.seed, 0);
    let f0 = radii[0][0];
    let m0 = draw_scaled(&mut rng0, (0, 1), cfg.weight_target(0), |r| draw_filter(r, f0, c_res, c_res), fnorm, FilterMask::scale)?;
    let w_s = m0.add(&FilterMask::identity(f0, c_res))?.truncate_inputs(c_in)?;
    let b_s = bias_vec(cfg, &mut rng0, 0, 1, c_res)?.into_inner();
    let sampling = ConvLayer::new(w_s, b_s)?;

    let blocks = exec.try_map(spec.n, |i| -> Result<Vec<ConvLayer>> {
        let k = i + 1;
        let mut rng = Stream::new(cfg.seed, k as u64);
        let widths = &spec.c[k];
        let q = spec.q[k];
        let per_layer = cfg.weight_target(k).powf(1.0 / q as f64);
        (0..q)
            .map(|m| {
                let f = radii[k][m];
                let w = draw_scaled(&mut rng, (k, m + 1), per_layer, |r| draw_filter(r, f, widths[m + 1], widths[m]), fnorm, FilterMask::scale)?;
                let b = bias_vec(cfg, &mut rng, k, m + 1, widths[m + 1])?.into_inner();
                ConvLayer::new(w, b)
            })
            .collect()
    })?;
    let output = output_layer(cfg, &spec, c_res);
    ResNetWeights::new(spec, sampling, blocks, output)
}

/// Shrinks every block toward a pure shortcut: each layer keeps its
/// direction but gets norm `eps (k + 1)^{-2}`, and so does each bias. Block
/// 0 is treated through its embedded matrix `[W_s 0] - I`. At `eps = 0` the
/// network is the identity on the unit cube (for `d_in = d_res`; with
/// `d_in < d_res` it is the identity on inputs padded with zeros).
/// Layers that are exactly zero stay zero; the output layer is unchanged.
pub fn perturb_identity(w: &Weights, eps: f64, p: f64) -> Result<Weights> {
    if !(eps.is_finite() && eps >= 0.0) {
        return Err(Error::InvalidConfig(format!("eps must be finite and >= 0, got {eps}")));
    }
    check_p(p)?;
    let target = |k: usize| eps * ((k + 1) as f64).powi(-2);
    let shrink_m = |m: &Matrix, t: f64| -> Result<Matrix> {
        let nm = norm_p_bound(m, p)?;
        Ok(if nm > 0.0 { m.scale(t / nm) } else { m.clone() })
    };
    let shrink_v = |v: &[f64], t: f64| -> Vec<f64> {
        let nv = vector_norm(v, p);
        if nv > 0.0 {
            v.iter().map(|x| x * t / nv).collect()
        } else {
            v.to_vec()
        }
    };
    let shrink_f = |f: &FilterMask, t: f64| -> Result<FilterMask> {
        let nf = filter_norm_bound(f, p)?;
        Ok(if nf > 0.0 { f.scale(t / nf) } else { f.clone() })
    };
    match w {
        Weights::Matrix(net) => {
            let spec = net.spec.clone();
            let d_res = spec.d_res;
            let embedded = net.dense()?.block(0).layers()[0].weight.clone();
            let full = shrink_m(&embedded, target(0))?.add(&Matrix::identity(d_res))?;
            let w_s = Matrix::from_fn(d_res, spec.d_in, |i, j| full.get(i, j));
            let sampling = Layer::new(w_s, shrink_v(&net.sampling.bias, target(0)).into())?;
            let blocks = net
                .blocks
                .iter()
                .enumerate()
                .map(|(i, b)| {
                    let t = target(i + 1);
                    let layers = b
                        .layers()
                        .iter()
                        .map(|l| Layer::new(shrink_m(&l.weight, t)?, shrink_v(&l.bias, t).into()))
                        .collect::<Result<Vec<_>>>()?;
                    ResidualBlockWeights::new(layers)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(Weights::Matrix(MatrixNet::new(spec, sampling, blocks, net.output.clone())?))
        }
        Weights::Conv(net) => {
            let spec = net.spec.clone();
            let c_res = spec.residual_units();
            let s = &net.sampling.filter;
            let id = FilterMask::identity(s.radius(), c_res);
            let embedded = s.pad_inputs(c_res)?.sub(&id)?;
            let w_s = shrink_f(&embedded, target(0))?.add(&id)?.truncate_inputs(s.c_in())?;
            let sampling = ConvLayer::new(w_s, shrink_v(&net.sampling.bias, target(0)))?;
            let blocks = net
                .blocks
                .iter()
                .enumerate()
                .map(|(i, b)| {
                    let t = target(i + 1);
                    b.iter()
                        .map(|l| ConvLayer::new(shrink_f(&l.filter, t)?, shrink_v(&l.bias, t)))
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(Weights::Conv(ResNetWeights::new(spec, sampling, blocks, net.output.clone())?))
        }
    }
}
