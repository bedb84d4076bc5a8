//! Named architectures: `linear`, `mlp2[:<hidden>]`, `mlp3[:<hidden>]`,
//! `cnn4[:<hidden>]`. A name is turned into a [`NetworkSpec`] once the
//! dataset's input shape and class count are known.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{Layer, NetworkSpec};
use crate::error::{Error, Result};

pub const MLP_DEFAULT_HIDDEN: usize = 256;
pub const CNN4_DEFAULT_HIDDEN: usize = 1024;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Architecture {
    Linear,
    Mlp2 { hidden: usize },
    Mlp3 { hidden: usize },
    /// conv5×5/32 → pool → conv5×5/64 → pool → FC hidden → FC C, "same"
    /// padding.
    Cnn4 { hidden: usize },
}

impl Architecture {
    pub fn build(&self, input_shape: &[usize], num_classes: usize) -> Result<NetworkSpec> {
        let d: usize = input_shape.iter().product();
        let name = self.to_string();
        let spec = match *self {
            Architecture::Linear => NetworkSpec::mlp(name, d, &[], num_classes),
            Architecture::Mlp2 { hidden } => NetworkSpec::mlp(name, d, &[hidden], num_classes),
            Architecture::Mlp3 { hidden } => NetworkSpec::mlp(name, d, &[hidden, hidden], num_classes),
            Architecture::Cnn4 { hidden } => {
                let [c, h, w] = *input_shape else {
                    return Err(Error::Config(format!(
                        "cnn4 needs image input [channels, height, width], got {input_shape:?}"
                    )));
                };
                let flat = 64 * (h / 4) * (w / 4);
                NetworkSpec {
                    name,
                    layers: vec![
                        Layer::Conv2d {
                            in_channels: c,
                            out_channels: 32,
                            kernel: 5,
                            padding: 2,
                        },
                        Layer::Relu,
                        Layer::MaxPool { size: 2 },
                        Layer::Conv2d {
                            in_channels: 32,
                            out_channels: 64,
                            kernel: 5,
                            padding: 2,
                        },
                        Layer::Relu,
                        Layer::MaxPool { size: 2 },
                        Layer::Flatten,
                        Layer::Dense {
                            inputs: flat,
                            outputs: hidden,
                        },
                        Layer::Relu,
                        Layer::Dense {
                            inputs: hidden,
                            outputs: num_classes,
                        },
                    ],
                    input_shape: input_shape.to_vec(),
                    num_classes,
                }
            }
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, hidden) = match s.split_once(':') {
            Some((n, h)) => {
                let h: usize = h
                    .parse()
                    .ok()
                    .filter(|&h| h > 0)
                    .ok_or_else(|| Error::Config(format!("bad hidden width in architecture `{s}`")))?;
                (n, Some(h))
            }
            None => (s, None),
        };
        match name {
            "linear" if hidden.is_none() => Ok(Architecture::Linear),
            "mlp2" => Ok(Architecture::Mlp2 {
                hidden: hidden.unwrap_or(MLP_DEFAULT_HIDDEN),
            }),
            "mlp3" => Ok(Architecture::Mlp3 {
                hidden: hidden.unwrap_or(MLP_DEFAULT_HIDDEN),
            }),
            "cnn4" => Ok(Architecture::Cnn4 {
                hidden: hidden.unwrap_or(CNN4_DEFAULT_HIDDEN),
            }),
            _ => Err(Error::Config(format!("unknown architecture `{s}`"))),
        }
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Architecture::Linear => write!(f, "linear"),
            Architecture::Mlp2 { hidden } => write!(f, "mlp2:{hidden}"),
            Architecture::Mlp3 { hidden } => write!(f, "mlp3:{hidden}"),
            Architecture::Cnn4 { hidden } => write!(f, "cnn4:{hidden}"),
        }
    }
}

impl Serialize for Architecture {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Architecture {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paper_mlps() {
        let two: Architecture = "mlp2".parse().unwrap();
        let spec = two.build(&[1, 28, 28], 10).unwrap();
        assert_eq!(spec.num_parameters(), 784 * 256 + 256 + 2570);
        let three: Architecture = "mlp3".parse().unwrap();
        let spec = three.build(&[784], 10).unwrap();
        assert_eq!(spec.num_parameters(), 784 * 256 + 256 + 256 * 256 + 256 + 2570);
    }

    #[test]
    fn cnn4_on_small_images() {
        let cnn: Architecture = "cnn4:64".parse().unwrap();
        let spec = cnn.build(&[1, 8, 8], 10).unwrap();
        assert_eq!(spec.input_shape, vec![1, 8, 8]);
        assert!(cnn.build(&[10], 3).is_err());
    }

    #[test]
    fn parse_round_trip() {
        for s in ["linear", "mlp2:32", "mlp3:64", "cnn4:1024"] {
            let a: Architecture = s.parse().unwrap();
            assert_eq!(a.to_string(), s);
        }
        for s in ["mlp4", "mlp2:0", "mlp2:x", "linear:3"] {
            assert!(s.parse::<Architecture>().is_err(), "{s}");
        }
    }
}
