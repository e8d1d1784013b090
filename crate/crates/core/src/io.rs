//! JSON weight files.
//!
//! ```text
//! {
//!   "spec":     { "form", "n", "q", "c", "f"?, "d"?, "d_in", "d_res", "d_out" },
//!   "sampling": { "w": ..., "b": [...] },
//!   "blocks":   [ [ { "w": ..., "b": [...] }, ... ], ... ],   // blocks 1..=n
//!   "output":   { "w": [[...], ...], "b": [...] }
//! }
//! ```
//!
//! In matrix form `w` is a list of rows. In conv form `w` is indexed
//! `[c_out][c_in][row][col]` with square kernels of odd side, and `b` holds
//! one scalar per output channel. Shapes are checked against the spec on
//! load.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::conv::{FilterMask, FilterMask2D};
use crate::error::{Error, Result};
use crate::model::{ConvLayer, Form, Layer, MatrixNet, NetworkSpec, ResNetWeights, ResidualBlockWeights, Weights};
use crate::tensor::Matrix;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WeightFile {
    spec: NetworkSpec,
    sampling: LayerJson,
    blocks: Vec<Vec<LayerJson>>,
    output: LayerJson,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerJson {
    w: WeightArray,
    b: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum WeightArray {
    Matrix(Vec<Vec<f64>>),
    Filter(Vec<Vec<Vec<Vec<f64>>>>),
}

impl LayerJson {
    fn from_layer(l: &Layer) -> Self {
        LayerJson {
            w: WeightArray::Matrix(l.weight.to_rows()),
            b: l.bias.to_vec(),
        }
    }

    fn from_conv(l: &ConvLayer) -> Self {
        let w = &l.filter;
        let kernels = (0..w.c_out())
            .map(|i| (0..w.c_in()).map(|j| w.kernel(i, j).to_rows()).collect())
            .collect();
        LayerJson {
            w: WeightArray::Filter(kernels),
            b: l.bias.clone(),
        }
    }

    fn to_layer(&self, ctx: &str) -> Result<Layer> {
        match &self.w {
            WeightArray::Matrix(rows) if !rows.is_empty() => Layer::new(Matrix::from_rows(rows)?, self.b.clone().into()),
            _ => Err(Error::InvalidSpec(format!("{ctx}: expected a nonempty matrix"))),
        }
    }

    fn to_conv(&self, ctx: &str) -> Result<ConvLayer> {
        let WeightArray::Filter(k) = &self.w else {
            return Err(Error::InvalidSpec(format!("{ctx}: expected a [c_out][c_in][row][col] filter")));
        };
        let kernels = k
            .iter()
            .map(|row| row.iter().map(|rows| FilterMask2D::from_rows(rows)).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        ConvLayer::new(FilterMask::new(kernels)?, self.b.clone())
    }
}

/// Serializes weights as compact JSON terminated by a newline. The output
/// depends only on the weights.
pub fn to_json(w: &Weights) -> Result<String> {
    let file = match w {
        Weights::Matrix(m) => WeightFile {
            spec: m.spec.clone(),
            sampling: LayerJson::from_layer(&m.sampling),
            blocks: m.blocks.iter().map(|b| b.layers().iter().map(LayerJson::from_layer).collect()).collect(),
            output: LayerJson::from_layer(&m.output),
        },
        Weights::Conv(c) => WeightFile {
            spec: c.spec.clone(),
            sampling: LayerJson::from_conv(&c.sampling),
            blocks: c.blocks.iter().map(|b| b.iter().map(LayerJson::from_conv).collect()).collect(),
            output: LayerJson::from_layer(&c.output),
        },
    };
    Ok(serde_json::to_string(&file)? + "\n")
}

/// Parses and validates a weight file.
pub fn from_json(text: &str) -> Result<Weights> {
    let file: WeightFile = serde_json::from_str(text)?;
    let output = file.output.to_layer("output")?;
    match file.spec.form {
        Form::Matrix => {
            let sampling = file.sampling.to_layer("sampling")?;
            let blocks = file
                .blocks
                .iter()
                .enumerate()
                .map(|(k, b)| {
                    let layers = b
                        .iter()
                        .enumerate()
                        .map(|(m, l)| l.to_layer(&format!("block {} layer {}", k + 1, m + 1)))
                        .collect::<Result<Vec<_>>>()?;
                    ResidualBlockWeights::new(layers)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(Weights::Matrix(MatrixNet::new(file.spec, sampling, blocks, output)?))
        }
        Form::Conv => {
            let sampling = file.sampling.to_conv("sampling")?;
            let blocks = file
                .blocks
                .iter()
                .enumerate()
                .map(|(k, b)| {
                    b.iter()
                        .enumerate()
                        .map(|(m, l)| l.to_conv(&format!("block {} layer {}", k + 1, m + 1)))
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(Weights::Conv(ResNetWeights::new(file.spec, sampling, blocks, output)?))
        }
    }
}

pub fn save_weights(w: &Weights, path: &Path) -> Result<()> {
    std::fs::write(path, to_json(w)?)?;
    Ok(())
}

pub fn load_weights(path: &Path) -> Result<Weights> {
    from_json(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Vector;

    fn small_matrix_net() -> Weights {
        let spec = NetworkSpec::uniform_matrix(1, 2, 3, 2, 2, 1);
        let sampling = Layer::new(Matrix::identity(2), Vector::zeros(2)).unwrap();
        let block = ResidualBlockWeights::zeros(&[2, 3, 2]);
        let output = Layer::new(Matrix::from_rows(&[[0.5, 0.5]]).unwrap(), Vector::new(vec![0.25])).unwrap();
        Weights::Matrix(MatrixNet::new(spec, sampling, vec![block], output).unwrap())
    }

    #[test]
    fn matrix_round_trip() {
        let w = small_matrix_net();
        let text = to_json(&w).unwrap();
        assert_eq!(from_json(&text).unwrap(), w);
        assert_eq!(to_json(&from_json(&text).unwrap()).unwrap(), text);
    }

    #[test]
    fn conv_round_trip() {
        let spec = NetworkSpec::uniform_conv(1, 1, 2, 1, 2, 1, 1, 3);
        let sampling = ConvLayer::new(FilterMask::identity(1, 2).truncate_inputs(1).unwrap(), vec![0.0, 0.1]).unwrap();
        let block = vec![ConvLayer::new(FilterMask::zeros(1, 2, 2), vec![0.0; 2]).unwrap()];
        let output = Layer::new(Matrix::from_rows(&[[1.0, -1.0]]).unwrap(), Vector::zeros(1)).unwrap();
        let w = Weights::Conv(ResNetWeights::new(spec, sampling, vec![block], output).unwrap());
        let text = to_json(&w).unwrap();
        assert!(text.contains(r#""form":"conv""#));
        assert_eq!(from_json(&text).unwrap(), w);
    }

    #[test]
    fn shape_errors_are_reported() {
        let text = to_json(&small_matrix_net()).unwrap();
        let broken = text.replace(r#""output":{"w":[[0.5,0.5]]"#, r#""output":{"w":[[0.5,0.5,0.5]]"#);
        assert_ne!(broken, text);
        assert!(matches!(from_json(&broken), Err(Error::Shape { .. })));
        assert!(matches!(from_json("{"), Err(Error::Json(_))));
    }
}
