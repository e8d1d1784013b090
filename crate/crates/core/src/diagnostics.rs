//! Norm partial sums, filter-norm bounds and an empirical Cauchy-tail test
//! for pointwise convergence of a residual network as blocks are appended.
//!
//! For every block `k` the diagnostics track the weight product
//! `a_k = prod_m ||W^(k)_m||` and the bias term
//! `c_k = sum_m (prod_{m' > m} ||W^(k)_{m'}||) ||b^(k)_m||`. Bounded partial
//! sums `S1_n = sum a_k` and `S2_n = sum c_k` are sufficient for the
//! network outputs to converge on the unit cube.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::conv::FilterMask;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::model::{DenseNetWeights, ResNetWeights, Weights};
use crate::rng::Stream;
use crate::tensor::{check_p, interpolate, norm_p_bound, vector_norm};

/// Stream offset that keeps tail-test samples apart from generator streams.
const SAMPLE_STREAM_BASE: u64 = 1 << 40;

/// Per-block, per-layer weight and bias norms under one norm index `p`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormSequence {
    pub p: f64,
    /// `weights[k][m]` is `||W^(k)_{m+1}||` (or its filter bound).
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl NormSequence {
    pub fn new(p: f64, weights: Vec<Vec<f64>>, biases: Vec<Vec<f64>>) -> Result<Self> {
        check_p(p)?;
        if weights.len() != biases.len() {
            return Err(Error::shape("norm sequence blocks", weights.len(), biases.len()));
        }
        for (k, (w, b)) in weights.iter().zip(&biases).enumerate() {
            if w.len() != b.len() || w.is_empty() {
                return Err(Error::shape(format!("norm sequence block {k}"), w.len(), b.len()));
            }
            if w.iter().chain(b).any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(Error::NonFinite(format!("norm sequence block {k}")));
            }
        }
        Ok(NormSequence { p, weights, biases })
    }

    /// Norms of a matrix-form network; exact at `p = 1` and `p = inf`,
    /// the interpolation bound otherwise.
    pub fn from_dense(w: &DenseNetWeights, p: f64, exec: Exec) -> Result<Self> {
        check_p(p)?;
        let per_block = exec.try_map(w.blocks().len(), |k| -> Result<(Vec<f64>, Vec<f64>)> {
            let block = w.block(k);
            let ws = block.mats().map(|m| norm_p_bound(m, p)).collect::<Result<Vec<_>>>()?;
            let bs = block.biases().map(|b| vector_norm(b, p)).collect();
            Ok((ws, bs))
        })?;
        let (weights, biases) = per_block.into_iter().unzip();
        NormSequence::new(p, weights, biases)
    }

    /// Norms of a conv-form network from the filter bound, with each bias
    /// measured on its per-channel scalars. Block 0 uses the embedded
    /// sampling filter (`w_s` padded to the residual channels, minus the
    /// identity filter).
    pub fn from_conv(w: &ResNetWeights, p: f64, exec: Exec) -> Result<Self> {
        check_p(p)?;
        let res = w.spec.residual_units();
        let s = &w.sampling.filter;
        let embedded = s.pad_inputs(res)?.sub(&FilterMask::identity(s.radius(), res))?;
        let mut weights = vec![vec![filter_norm_bound(&embedded, p)?]];
        let mut biases = vec![vec![vector_norm(&w.sampling.bias, p)]];
        let per_block = exec.try_map(w.blocks.len(), |k| -> Result<(Vec<f64>, Vec<f64>)> {
            let ws = w.blocks[k].iter().map(|l| filter_norm_bound(&l.filter, p)).collect::<Result<Vec<_>>>()?;
            let bs = w.blocks[k].iter().map(|l| vector_norm(&l.bias, p)).collect();
            Ok((ws, bs))
        })?;
        for (ws, bs) in per_block {
            weights.push(ws);
            biases.push(bs);
        }
        NormSequence::new(p, weights, biases)
    }

    pub fn from_weights(w: &Weights, p: f64, exec: Exec) -> Result<Self> {
        match w {
            Weights::Conv(c) => NormSequence::from_conv(c, p, exec),
            Weights::Matrix(m) => NormSequence::from_dense(&m.dense()?, p, exec),
        }
    }

    /// Number of blocks covered (`n + 1`).
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// `prod_m ||W^(k)_m||`.
    pub fn weight_product(&self, k: usize) -> f64 {
        self.weights[k].iter().product()
    }

    /// `sum_m (prod_{m' > m} ||W^(k)_{m'}||) ||b^(k)_m||`.
    pub fn bias_term(&self, k: usize) -> f64 {
        let ws = &self.weights[k];
        let bs = &self.biases[k];
        let mut tail = 1.0;
        let mut sum = 0.0;
        for m in (0..ws.len()).rev() {
            sum += tail * bs[m];
            tail *= ws[m];
        }
        sum
    }

    fn check(&self, depth: usize) -> Result<()> {
        if depth >= self.len() {
            return Err(Error::DepthOutOfRange {
                depth: depth as isize,
                max: self.len().saturating_sub(1),
            });
        }
        Ok(())
    }
}

/// Depth-independent bound on `||T(w)||_p` for a multi-channel filter:
/// `(max_j sum_i |w_ij|_1)^{1/p} (max_i sum_j |w_ij|_1)^{1 - 1/p}`, where
/// `|w_ij|_1` is the tap sum of the kernel from input `j` to output `i`.
pub fn filter_norm_bound(w: &FilterMask, p: f64) -> Result<f64> {
    check_p(p)?;
    let col = (0..w.c_in())
        .map(|j| (0..w.c_out()).map(|i| w.kernel_abs_sum(i, j)).sum::<f64>())
        .fold(0.0, f64::max);
    let row = (0..w.c_out())
        .map(|i| (0..w.c_in()).map(|j| w.kernel_abs_sum(i, j)).sum::<f64>())
        .fold(0.0, f64::max);
    Ok(interpolate(col, row, p))
}

/// `S1_depth = sum_{k <= depth} prod_m ||W^(k)_m||`.
pub fn partial_sum_weights(ns: &NormSequence, depth: usize) -> Result<f64> {
    ns.check(depth)?;
    Ok((0..=depth).map(|k| ns.weight_product(k)).sum())
}

/// `S2_depth = sum_{k <= depth} sum_m (prod_{m' > m} ||W^(k)_{m'}||) ||b^(k)_m||`.
pub fn partial_sum_biases(ns: &NormSequence, depth: usize) -> Result<f64> {
    ns.check(depth)?;
    Ok((0..=depth).map(|k| ns.bias_term(k)).sum())
}

/// `prod_{k = from}^{to} (prod_m ||W^(k)_m|| + 1)`.
pub fn product_bound(ns: &NormSequence, from: usize, to: usize) -> Result<f64> {
    ns.check(to)?;
    if from > to {
        return Err(Error::InvalidSpec(format!("product range {from}..={to} is empty")));
    }
    Ok((from..=to).map(|k| ns.weight_product(k) + 1.0).product())
}

/// Uniform sample points in `[0, 1]^dim`, one ChaCha8 stream per point.
pub fn sample_unit_cube(dim: usize, samples: usize, seed: u64) -> Vec<Vec<f64>> {
    (0..samples)
        .map(|i| Stream::new(seed, SAMPLE_STREAM_BASE + i as u64).unit_vec(dim))
        .collect()
}

/// For each tested depth `depths[j]`, the max over `samples` random points
/// of `||N_{depths[j]}(x) - N_{depths[j-1]}(x)||_inf`. The first entry is
/// measured against the input itself (depth -1). Depths must be strictly
/// increasing.
pub fn cauchy_tail_test(w: &DenseNetWeights, samples: usize, depths: &[usize], seed: u64) -> Result<Vec<f64>> {
    cauchy_tail_test_with(w, samples, depths, seed, Exec::default())
}

pub fn cauchy_tail_test_with(
    w: &DenseNetWeights,
    samples: usize,
    depths: &[usize],
    seed: u64,
    exec: Exec,
) -> Result<Vec<f64>> {
    if samples == 0 {
        return Err(Error::InvalidConfig("cauchy_tail_test needs at least one sample".into()));
    }
    check_depths(depths, w.n())?;
    let ds: Vec<isize> = depths.iter().map(|&d| d as isize).collect();
    let points = sample_unit_cube(w.d_res(), samples, seed);
    let per_sample = exec.try_map(samples, |i| -> Result<Vec<f64>> {
        let x = &points[i];
        let outs = w.forward_at_depths(x, &ds)?;
        let mut prev: &[f64] = x;
        let mut tails = Vec::with_capacity(outs.len());
        for out in &outs {
            let diff = out.iter().zip(prev).fold(0.0_f64, |acc, (a, b)| acc.max((a - b).abs()));
            tails.push(diff);
            prev = out;
        }
        Ok(tails)
    })?;
    let mut tails = vec![0.0_f64; depths.len()];
    for s in per_sample {
        for (t, v) in tails.iter_mut().zip(s) {
            *t = t.max(v);
        }
    }
    if let Some(j) = tails.iter().position(|t| !t.is_finite()) {
        return Err(Error::NonFinite(format!("tail at depth {}", depths[j])));
    }
    Ok(tails)
}

fn check_depths(depths: &[usize], max: usize) -> Result<()> {
    if depths.is_empty() {
        return Err(Error::InvalidConfig("no depths requested".into()));
    }
    if depths.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidConfig("depths must be strictly increasing".into()));
    }
    let last = depths[depths.len() - 1];
    if last > max {
        return Err(Error::DepthOutOfRange {
            depth: last as isize,
            max,
        });
    }
    Ok(())
}

/// Decision thresholds for [`diagnose`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Largest S1/S2 increment that still counts as settled.
    pub cauchy: f64,
    /// Largest tail that still counts as settled.
    pub tail: f64,
    /// Fraction of the tested depths forming the trailing window.
    pub window: f64,
    /// Fitted decay exponents must clear `1 +/- margin` to be decisive.
    pub margin: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            cauchy: 1e-8,
            tail: 1e-6,
            window: 0.25,
            margin: 0.1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Converged,
    Diverged,
    Inconclusive,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Converged => "converged",
            Verdict::Diverged => "diverged",
            Verdict::Inconclusive => "inconclusive",
        })
    }
}

/// How a nonnegative increment sequence behaves over the trailing window.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Trend {
    /// Every increment in the window is within tolerance.
    Settled,
    /// Per-block increments decay faster than `1/k`.
    Summable,
    /// Per-block increments decay slower than `1/k`: the sum grows
    /// faster than logarithmically.
    Divergent,
    /// Too few points or an exponent too close to 1.
    Unresolved,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrendFit {
    pub trend: Trend,
    /// Least-squares `beta` in `increment per block ~ (k + 1)^{-beta}`.
    pub exponent: Option<f64>,
    pub window_max: f64,
}

/// Classifies the increments `inc[j]` observed between `depths[j-1]` and
/// `depths[j]` (`inc[0]` spans `depths[0] + 1` blocks from depth -1).
pub fn classify_increments(depths: &[usize], inc: &[f64], tol: f64, tolerances: &Tolerances) -> TrendFit {
    let len = depths.len().min(inc.len());
    let window = ((len as f64 * tolerances.window).ceil() as usize).clamp(len.min(3), len);
    let start = len - window;
    let window_max = inc[start..len].iter().fold(0.0_f64, |a, &b| a.max(b));
    if window_max <= tol {
        return TrendFit {
            trend: Trend::Settled,
            exponent: None,
            window_max,
        };
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for j in start..len {
        let (lo, gap) = if j == 0 { (-1.0, depths[0] as f64 + 1.0) } else { (depths[j - 1] as f64, (depths[j] - depths[j - 1]) as f64) };
        if inc[j] > 0.0 {
            let mid = 0.5 * (lo + 1.0 + depths[j] as f64);
            xs.push((mid + 1.0).ln());
            ys.push((inc[j] / gap).ln());
        }
    }
    let exponent = least_squares_slope(&xs, &ys).map(|s| -s);
    let trend = match exponent {
        Some(b) if b > 1.0 + tolerances.margin => Trend::Summable,
        Some(b) if b < 1.0 - tolerances.margin => Trend::Divergent,
        _ => Trend::Unresolved,
    };
    TrendFit {
        trend,
        exponent,
        window_max,
    }
}

fn least_squares_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() < 3 {
        return None;
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    Some(sxy / sxx)
}

/// Verdict from the trends of S1, S2 and the tails.
pub fn decide(s1: &TrendFit, s2: &TrendFit, tail: &TrendFit) -> Verdict {
    let ok = |t: &TrendFit| matches!(t.trend, Trend::Settled | Trend::Summable);
    if s1.trend == Trend::Divergent || s2.trend == Trend::Divergent {
        Verdict::Diverged
    } else if ok(s1) && ok(s2) && ok(tail) {
        Verdict::Converged
    } else {
        Verdict::Inconclusive
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnoseOptions {
    pub p: f64,
    /// Strictly increasing depths; `None` means every block `0..=n`.
    pub depths: Option<Vec<usize>>,
    pub samples: usize,
    pub seed: u64,
    pub tolerances: Tolerances,
}

impl Default for DiagnoseOptions {
    fn default() -> Self {
        DiagnoseOptions {
            p: 1.0,
            depths: None,
            samples: 64,
            seed: 0,
            tolerances: Tolerances::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DiagnosticsReport {
    pub p: f64,
    pub depths: Vec<usize>,
    #[serde(rename = "S1")]
    pub s1: Vec<f64>,
    #[serde(rename = "S2")]
    pub s2: Vec<f64>,
    pub product_bound: Vec<f64>,
    pub tail: Vec<f64>,
    pub verdict: Verdict,
    pub s1_trend: TrendFit,
    pub s2_trend: TrendFit,
    pub tail_trend: TrendFit,
    /// Norm of the embedded sampling block `[W_s 0] - I` (used in S1).
    pub sampling_norm_embedded: f64,
    /// Norm of `W_s` alone (the alternative reading).
    pub sampling_norm_plain: f64,
    /// S1 with the plain sampling norm substituted for block 0.
    #[serde(rename = "S1SamplingPlain")]
    pub s1_sampling_plain: Vec<f64>,
    pub samples: usize,
    pub seed: u64,
    pub tolerances: Tolerances,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<String>,
}

/// Builds the norm sequence, partial sums, product bound and tail test for
/// `w`, then issues a verdict.
///
/// The verdict uses the trailing window of tested depths: a series counts
/// as convergent when its increments are within tolerance or decay faster
/// than `1/k` (fitted exponent above `1 + margin`); S1 or S2 increments
/// decaying slower than `1/k` mean divergence.
pub fn diagnose(w: &Weights, opts: &DiagnoseOptions) -> Result<DiagnosticsReport> {
    diagnose_with(w, opts, Exec::default())
}

pub fn diagnose_with(w: &Weights, opts: &DiagnoseOptions, exec: Exec) -> Result<DiagnosticsReport> {
    let ns = NormSequence::from_weights(w, opts.p, exec)?;
    let dense = w.dense()?;
    let plain = match w {
        Weights::Matrix(m) => norm_p_bound(&m.sampling.weight, opts.p)?,
        Weights::Conv(c) => filter_norm_bound(&c.sampling.filter, opts.p)?,
    };
    diagnose_parts(&dense, &ns, plain, opts, exec)
}

/// [`diagnose`] for a bare block sequence; the plain sampling norm is
/// reported as the embedded one.
pub fn diagnose_dense(w: &DenseNetWeights, opts: &DiagnoseOptions, exec: Exec) -> Result<DiagnosticsReport> {
    let ns = NormSequence::from_dense(w, opts.p, exec)?;
    let plain = ns.weight_product(0);
    diagnose_parts(w, &ns, plain, opts, exec)
}

fn diagnose_parts(
    dense: &DenseNetWeights,
    ns: &NormSequence,
    plain: f64,
    opts: &DiagnoseOptions,
    exec: Exec,
) -> Result<DiagnosticsReport> {
    let depths = match &opts.depths {
        Some(d) => d.clone(),
        None => (0..=dense.n()).collect(),
    };
    check_depths(&depths, dense.n())?;
    if ns.len() != dense.n() + 1 {
        return Err(Error::shape("norm sequence blocks", dense.n() + 1, ns.len()));
    }

    // Running sums over every block, sampled at the requested depths.
    let (mut s1_run, mut s2_run, mut p_run) = (0.0, 0.0, 1.0);
    let (mut s1, mut s2, mut pb) = (Vec::new(), Vec::new(), Vec::new());
    let mut next = 0;
    for k in 0..=depths[depths.len() - 1] {
        let a = ns.weight_product(k);
        s1_run += a;
        s2_run += ns.bias_term(k);
        p_run *= a + 1.0;
        if depths[next] == k {
            s1.push(s1_run);
            s2.push(s2_run);
            pb.push(p_run);
            next += 1;
        }
    }
    let embedded = ns.weight_product(0);
    let s1_sampling_plain = s1.iter().map(|v| v - embedded + plain).collect();

    let tail = cauchy_tail_test_with(dense, opts.samples, &depths, opts.seed, exec)?;

    let tol = &opts.tolerances;
    let increments = |series: &[f64]| -> Vec<f64> {
        let mut prev = 0.0;
        series
            .iter()
            .map(|&v| {
                let d = (v - prev).max(0.0);
                prev = v;
                d
            })
            .collect()
    };
    let s1_trend = classify_increments(&depths, &increments(&s1), tol.cauchy, tol);
    let s2_trend = classify_increments(&depths, &increments(&s2), tol.cauchy, tol);
    let tail_trend = classify_increments(&depths, &tail, tol.tail, tol);
    let verdict = decide(&s1_trend, &s2_trend, &tail_trend);

    Ok(DiagnosticsReport {
        p: ns.p,
        depths,
        s1,
        s2,
        product_bound: pb,
        tail,
        verdict,
        s1_trend,
        s2_trend,
        tail_trend,
        sampling_norm_embedded: embedded,
        sampling_norm_plain: plain,
        s1_sampling_plain,
        samples: opts.samples,
        seed: opts.seed,
        tolerances: *tol,
        manifest: None,
    })
}

#[derive(Serialize)]
struct CsvRow {
    depth: usize,
    #[serde(rename = "S1")]
    s1: f64,
    #[serde(rename = "S2")]
    s2: f64,
    #[serde(rename = "productBound")]
    product_bound: f64,
    tail: f64,
}

impl DiagnosticsReport {
    /// CSV with columns `depth,S1,S2,productBound,tail`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for (j, &depth) in self.depths.iter().enumerate() {
            w.serialize(CsvRow {
                depth,
                s1: self.s1[j],
                s2: self.s2[j],
                product_bound: self.product_bound[j],
                tail: self.tail[j],
            })?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        std::fs::write(path, buf)?;
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    /// Structural invariants every report must satisfy: monotone S1, S2
    /// and product bound, `productBound <= exp(S1)`, nonnegative tails.
    /// Returns a description of each violation.
    pub fn invariant_violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let monotone = |name: &str, v: &[f64], out: &mut Vec<String>| {
            if let Some(j) = (1..v.len()).find(|&j| v[j] < v[j - 1]) {
                out.push(format!("{name} decreases at depth {}", self.depths[j]));
            }
        };
        monotone("S1", &self.s1, &mut out);
        monotone("S2", &self.s2, &mut out);
        monotone("productBound", &self.product_bound, &mut out);
        for (j, (&pb, &s)) in self.product_bound.iter().zip(&self.s1).enumerate() {
            if pb > s.exp() * (1.0 + 1e-12) {
                out.push(format!("productBound {pb} exceeds exp(S1) {} at depth {}", s.exp(), self.depths[j]));
            }
        }
        if let Some(j) = self.tail.iter().position(|t| t.is_nan() || *t < 0.0) {
            out.push(format!("negative or NaN tail at depth {}", self.depths[j]));
        }
        out
    }
}

/// Rigorous per-depth tail bound for matrix-form norms.
///
/// With `P = prod_k (a_k + 1)` over all blocks and `R = sup ||x||_p` over
/// the unit cube, every step between depths `n' < n` satisfies
/// `||N_n(x) - N_{n'}(x)||_p <= (S1_n - S1_{n'}) P (R + S2_N) + (S2_n - S2_{n'})`.
/// Since `||.||_inf <= ||.||_p`, the bound also caps the reported tails.
pub fn tail_bounds(report: &DiagnosticsReport, d_res: usize) -> Vec<f64> {
    let p = report.p;
    let radius = if p.is_infinite() { 1.0 } else { (d_res as f64).powf(1.0 / p) };
    let last = report.depths.len() - 1;
    let big_p = report.product_bound[last];
    let s2_max = report.s2[last];
    let mut out = Vec::with_capacity(report.depths.len());
    for j in 0..report.depths.len() {
        let (ds1, ds2) = if j == 0 {
            (report.s1[0], report.s2[0])
        } else {
            (report.s1[j] - report.s1[j - 1], report.s2[j] - report.s2[j - 1])
        };
        out.push(ds1 * big_p * (radius + s2_max) + ds2);
    }
    out
}
