//! Dataset selector strings:
//!
//! - `blobs:<C>:<per_class>:<spread>[:dim=<d>][:seed=<s>]`
//! - `rings:<C>:<per_class>[:seed=<s>]`
//! - `idx:<images>:<labels>[:downsample=<side>][:cap=<n>]`

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{load_idx, synth_blobs, synth_rings, Dataset, IdxOptions, DEFAULT_BLOB_DIM};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub enum DatasetSelector {
    Blobs {
        num_classes: usize,
        per_class: usize,
        spread: f64,
        dim: usize,
        seed: u64,
    },
    Rings {
        num_classes: usize,
        per_class: usize,
        seed: u64,
    },
    Idx {
        images: PathBuf,
        labels: PathBuf,
        options: IdxOptions,
    },
}

impl DatasetSelector {
    pub fn load(&self) -> Result<Dataset> {
        match self {
            DatasetSelector::Blobs {
                num_classes,
                per_class,
                spread,
                dim,
                seed,
            } => synth_blobs(*num_classes, *per_class, *dim, *spread, *seed),
            DatasetSelector::Rings {
                num_classes,
                per_class,
                seed,
            } => synth_rings(*num_classes, *per_class, *seed),
            DatasetSelector::Idx {
                images,
                labels,
                options,
            } => load_idx(images, labels, options),
        }
    }
}

fn bad(s: &str, why: impl fmt::Display) -> Error {
    Error::Config(format!("bad dataset selector `{s}`: {why}"))
}

fn parse_num<T: FromStr>(s: &str, field: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| bad(s, format!("cannot parse {field} from `{value}`")))
}

impl FromStr for DatasetSelector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let (positional, options): (Vec<&str>, Vec<&str>) =
            parts[1..].iter().partition(|p| !p.contains('='));
        let mut opts = Vec::new();
        for o in options {
            let (k, v) = o.split_once('=').unwrap();
            opts.push((k, v));
        }
        let known = |allowed: &[&str]| -> Result<()> {
            match opts.iter().find(|(k, _)| !allowed.contains(k)) {
                Some((k, _)) => Err(bad(s, format!("unknown option `{k}`"))),
                None => Ok(()),
            }
        };
        let opt = |key: &str| opts.iter().find(|(k, _)| *k == key).map(|(_, v)| *v);
        match parts[0] {
            "blobs" => {
                known(&["dim", "seed"])?;
                if positional.len() != 3 {
                    return Err(bad(s, "expected blobs:<C>:<per_class>:<spread>"));
                }
                Ok(DatasetSelector::Blobs {
                    num_classes: parse_num(s, "C", positional[0])?,
                    per_class: parse_num(s, "per_class", positional[1])?,
                    spread: parse_num(s, "spread", positional[2])?,
                    dim: opt("dim").map_or(Ok(DEFAULT_BLOB_DIM), |v| parse_num(s, "dim", v))?,
                    seed: opt("seed").map_or(Ok(0), |v| parse_num(s, "seed", v))?,
                })
            }
            "rings" => {
                known(&["seed"])?;
                if positional.len() != 2 {
                    return Err(bad(s, "expected rings:<C>:<per_class>"));
                }
                Ok(DatasetSelector::Rings {
                    num_classes: parse_num(s, "C", positional[0])?,
                    per_class: parse_num(s, "per_class", positional[1])?,
                    seed: opt("seed").map_or(Ok(0), |v| parse_num(s, "seed", v))?,
                })
            }
            "idx" => {
                known(&["downsample", "cap"])?;
                if positional.len() != 2 {
                    return Err(bad(s, "expected idx:<images>:<labels>"));
                }
                Ok(DatasetSelector::Idx {
                    images: PathBuf::from(positional[0]),
                    labels: PathBuf::from(positional[1]),
                    options: IdxOptions {
                        downsample: opt("downsample").map(|v| parse_num(s, "downsample", v)).transpose()?,
                        cap: opt("cap").map(|v| parse_num(s, "cap", v)).transpose()?,
                    },
                })
            }
            other => Err(bad(s, format!("unknown dataset kind `{other}`"))),
        }
    }
}

impl fmt::Display for DatasetSelector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DatasetSelector::Blobs {
                num_classes,
                per_class,
                spread,
                dim,
                seed,
            } => {
                write!(f, "blobs:{num_classes}:{per_class}:{spread}")?;
                if *dim != DEFAULT_BLOB_DIM {
                    write!(f, ":dim={dim}")?;
                }
                if *seed != 0 {
                    write!(f, ":seed={seed}")?;
                }
                Ok(())
            }
            DatasetSelector::Rings {
                num_classes,
                per_class,
                seed,
            } => {
                write!(f, "rings:{num_classes}:{per_class}")?;
                if *seed != 0 {
                    write!(f, ":seed={seed}")?;
                }
                Ok(())
            }
            DatasetSelector::Idx {
                images,
                labels,
                options,
            } => {
                write!(f, "idx:{}:{}", images.display(), labels.display())?;
                if let Some(d) = options.downsample {
                    write!(f, ":downsample={d}")?;
                }
                if let Some(c) = options.cap {
                    write!(f, ":cap={c}")?;
                }
                Ok(())
            }
        }
    }
}

impl Serialize for DatasetSelector {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for DatasetSelector {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
