//! Deep residual networks as products of structured matrices.
//!
//! * [`tensor`] and [`conv`]: dense vectors/matrices, the vec operator and
//!   the Toeplitz lowering of zero-padded convolutions.
//! * [`model`]: residual networks in conv and matrix form.
//! * [`activation`]: activation patterns and the closed-form affine piece
//!   `x -> A x + B` of a network on one activation region.
//! * [`diagnostics`]: norm partial sums, filter-norm bounds and a sampled
//!   Cauchy-tail test for pointwise convergence in depth.
//! * [`generator`]: synthetic weights with prescribed norm decay.
//! * [`io`] and [`manifest`]: weight files and run manifests.
//!
//! Sample and block loops run on rayon when the `parallel` feature is on
//! (the default); see [`exec::Exec`].

pub mod activation;
pub mod conv;
pub mod diagnostics;
pub mod error;
pub mod exec;
pub mod generator;
pub mod io;
pub mod manifest;
pub mod model;
pub mod rng;
pub mod tensor;

pub use activation::{accumulate_piece, activation_pattern, explicit_eval, trace_forward, ActivationMatrix, AffinePiece, PatternTrace};
pub use conv::{conv1d_direct, conv2d_direct, conv_mc_direct, toeplitz_1d, toeplitz_2d, toeplitz_mc, FilterMask, FilterMask1D, FilterMask2D};
pub use diagnostics::{
    cauchy_tail_test, diagnose, filter_norm_bound, partial_sum_biases, partial_sum_weights, product_bound, DiagnoseOptions,
    DiagnosticsReport, NormSequence, Tolerances, Verdict,
};
pub use error::{Error, Result};
pub use exec::Exec;
pub use generator::{generate, perturb_identity, GeneratorConfig};
pub use model::{
    embed_sampling, forward_block, forward_network, forward_resnet, lower_to_matrix, DenseNetWeights, Form, Layer, MatrixNet,
    NetworkSpec, ResNetWeights, ResidualBlockWeights, Weights,
};
pub use tensor::{global_average_pool, norm_induced, norm_p_bound, relu, vec, vec_stack, ImageStack, Matrix, Vector};
