//! A small feed-forward network engine: dense and convolutional layers,
//! softmax head, SGD with momentum, and any [`Loss`](crate::loss::Loss)
//! plugged in as the training objective.

mod arch;
mod network;
mod train;

pub use arch::{Architecture, CNN4_DEFAULT_HIDDEN, MLP_DEFAULT_HIDDEN};
pub use network::{argmax_lowest, softmax_in_place, Network};
pub use train::{accuracy, accuracy_of_predictions, curve_csv, train, write_curve_csv, EpochStats, TrainConfig, TrainReport};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Layer {
    Dense { inputs: usize, outputs: usize },
    Relu,
    /// Stride 1; `padding` zeros on every side.
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        padding: usize,
    },
    /// Non-overlapping `size × size` max pooling (trailing rows/columns that
    /// do not fill a window are dropped).
    MaxPool { size: usize },
    Flatten,
}

impl Layer {
    pub fn num_parameters(&self) -> usize {
        match *self {
            Layer::Dense { inputs, outputs } => inputs * outputs + outputs,
            Layer::Conv2d {
                in_channels,
                out_channels,
                kernel,
                ..
            } => out_channels * in_channels * kernel * kernel + out_channels,
            _ => 0,
        }
    }

    /// Output shape for a given input shape.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let width: usize = input.iter().product();
        match *self {
            Layer::Dense { inputs, outputs } => {
                if width != inputs {
                    return Err(Error::InvalidParams(format!(
                        "dense layer expects {inputs} inputs, receives {width} ({input:?})"
                    )));
                }
                Ok(vec![outputs])
            }
            Layer::Relu => Ok(input.to_vec()),
            Layer::Flatten => Ok(vec![width]),
            Layer::Conv2d {
                in_channels,
                out_channels,
                kernel,
                padding,
            } => match *input {
                [c, h, w] if c == in_channels && kernel >= 1 && h + 2 * padding >= kernel && w + 2 * padding >= kernel => {
                    Ok(vec![out_channels, h + 2 * padding - kernel + 1, w + 2 * padding - kernel + 1])
                }
                _ => Err(Error::InvalidParams(format!(
                    "conv {in_channels}->{out_channels} k{kernel} p{padding} cannot take input {input:?}"
                ))),
            },
            Layer::MaxPool { size } => match *input {
                [c, h, w] if size >= 1 && h >= size && w >= size => Ok(vec![c, h / size, w / size]),
                _ => Err(Error::InvalidParams(format!(
                    "max-pool {size} cannot take input {input:?}"
                ))),
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub name: String,
    pub layers: Vec<Layer>,
    /// `[d]` or `[channels, height, width]`.
    pub input_shape: Vec<usize>,
    pub num_classes: usize,
}

impl NetworkSpec {
    /// Shapes entering each layer, followed by the output shape.
    pub fn shapes(&self) -> Result<Vec<Vec<usize>>> {
        if self.num_classes < 2 {
            return Err(Error::InvalidParams("a classifier needs at least 2 classes".into()));
        }
        if self.input_shape.is_empty() || self.input_shape.iter().product::<usize>() == 0 {
            return Err(Error::InvalidParams(format!(
                "bad input shape {:?}",
                self.input_shape
            )));
        }
        let mut shapes = vec![self.input_shape.clone()];
        for layer in &self.layers {
            let next = layer.output_shape(shapes.last().unwrap())?;
            shapes.push(next);
        }
        let out = shapes.last().unwrap();
        if out.as_slice() != [self.num_classes] {
            return Err(Error::InvalidParams(format!(
                "network `{}` ends in shape {out:?}, expected [{}]",
                self.name, self.num_classes
            )));
        }
        Ok(shapes)
    }

    pub fn validate(&self) -> Result<()> {
        self.shapes().map(|_| ())
    }

    pub fn num_parameters(&self) -> usize {
        self.layers.iter().map(Layer::num_parameters).sum()
    }

    pub fn input_len(&self) -> usize {
        self.input_shape.iter().product()
    }

    /// Fully connected ReLU network with the given hidden widths.
    pub fn mlp(name: impl Into<String>, input_dim: usize, hidden: &[usize], num_classes: usize) -> Self {
        let mut layers = Vec::new();
        let mut prev = input_dim;
        for &h in hidden {
            layers.push(Layer::Dense {
                inputs: prev,
                outputs: h,
            });
            layers.push(Layer::Relu);
            prev = h;
        }
        layers.push(Layer::Dense {
            inputs: prev,
            outputs: num_classes,
        });
        Self {
            name: name.into(),
            layers,
            input_shape: vec![input_dim],
            num_classes,
        }
    }
}
