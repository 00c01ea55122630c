//! The recurrent convolutional pose regressor: a stack of inception blocks,
//! two LSTM layers and an affine head producing 7 raw pose values per frame pair.

pub mod checkpoint;
pub mod inception;
pub mod lstm;
pub mod model;

use std::fmt::Write as _;

use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::layers::Activation;
use crate::pose::Pose;
use crate::tensor::{Precision, Real, Tensor};

pub use inception::{ConvParams, InceptionBlockParams};
pub use lstm::{LstmParams, LstmState};
pub use model::{Model, RecurrentState};

/// Number of values regressed per frame pair: translation (3) + quaternion (4).
pub const POSE_ARITY: usize = 7;
/// Two RGB-D frames stacked along channels.
pub const PAIR_CHANNELS: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct NetConfig {
    pub input_channels: usize,
    pub input_height: usize,
    pub input_width: usize,
    /// Per block: widths of the 1x1, 3x3, 5x5 and pool-projection branches.
    /// The 3x3/5x5 reduction convolutions use the same width as their branch.
    pub inception_widths: Vec<[usize; 4]>,
    pub lstm_hidden: usize,
    pub dropout_rate: f64,
    pub precision: Precision,
    pub conv_activation: Activation,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig {
            input_channels: PAIR_CHANNELS,
            input_height: 64,
            input_width: 64,
            inception_widths: vec![[8; 4], [16; 4], [32; 4]],
            lstm_hidden: 64,
            dropout_rate: 0.0,
            precision: Precision::F32,
            conv_activation: Activation::Relu,
        }
    }
}

impl NetConfig {
    /// Full-size hidden width; the desk default is 64.
    pub const FULL_LSTM_HIDDEN: usize = 1000;

    pub fn validate(&self) -> Result<()> {
        if self.input_channels == 0 || self.lstm_hidden == 0 {
            return Err(Error::Config("channel and hidden widths must be positive".into()));
        }
        if self.inception_widths.is_empty() {
            return Err(Error::Config("at least one inception block is required".into()));
        }
        if self.inception_widths.iter().flatten().any(|&w| w == 0) {
            return Err(Error::Config("inception widths must be positive".into()));
        }
        let factor = 1usize << self.inception_widths.len();
        if self.input_height == 0
            || self.input_width == 0
            || self.input_height % factor != 0
            || self.input_width % factor != 0
        {
            return Err(Error::Config(format!(
                "input {}x{} must be a positive multiple of {factor} for {} pooled blocks",
                self.input_height,
                self.input_width,
                self.inception_widths.len()
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config(format!(
                "dropout rate {} outside [0, 1)",
                self.dropout_rate
            )));
        }
        Ok(())
    }

    /// Channels entering each block, followed by the final block's output channels.
    pub fn block_channels(&self) -> Vec<usize> {
        std::iter::once(self.input_channels)
            .chain(self.inception_widths.iter().map(|w| w.iter().sum()))
            .collect()
    }

    /// `[C, H, W]` of the last block's output.
    pub fn feature_shape(&self) -> [usize; 3] {
        let factor = 1usize << self.inception_widths.len();
        [
            *self.block_channels().last().unwrap(),
            self.input_height / factor,
            self.input_width / factor,
        ]
    }

    pub fn feature_len(&self) -> usize {
        self.feature_shape().iter().product()
    }

    pub fn input_shape(&self) -> [usize; 3] {
        [self.input_channels, self.input_height, self.input_width]
    }

    /// Flat `key=value` lines, the form stored in checkpoints.
    pub fn to_text(&self) -> String {
        let widths = self
            .inception_widths
            .iter()
            .map(|w| {
                w.iter()
                    .map(|v| v.to_string())
                    .collect::<Vec<_>>()
                    .join(",")
            })
            .collect::<Vec<_>>()
            .join(";");
        let mut s = String::new();
        let _ = writeln!(s, "input_channels={}", self.input_channels);
        let _ = writeln!(s, "input_height={}", self.input_height);
        let _ = writeln!(s, "input_width={}", self.input_width);
        let _ = writeln!(s, "inception_widths={widths}");
        let _ = writeln!(s, "lstm_hidden={}", self.lstm_hidden);
        let _ = writeln!(s, "dropout_rate={}", self.dropout_rate);
        let _ = writeln!(s, "precision={}", self.precision.as_str());
        let _ = writeln!(s, "conv_activation={}", self.conv_activation.as_str());
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = NetConfig::default();
        let bad = |k: &str, v: &str| Error::Config(format!("bad value `{v}` for `{k}`"));
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("expected key=value, got `{line}`")))?;
            let (k, v) = (k.trim(), v.trim());
            let num = |v: &str| v.parse::<usize>().map_err(|_| bad(k, v));
            match k {
                "input_channels" => cfg.input_channels = num(v)?,
                "input_height" => cfg.input_height = num(v)?,
                "input_width" => cfg.input_width = num(v)?,
                "lstm_hidden" => cfg.lstm_hidden = num(v)?,
                "dropout_rate" => cfg.dropout_rate = v.parse().map_err(|_| bad(k, v))?,
                "precision" => cfg.precision = v.parse()?,
                "conv_activation" => cfg.conv_activation = v.parse()?,
                "inception_widths" => {
                    cfg.inception_widths = v
                        .split(';')
                        .map(|block| {
                            let w: Vec<usize> =
                                block.split(',').map(num).collect::<Result<_>>()?;
                            <[usize; 4]>::try_from(w).map_err(|_| bad(k, block))
                        })
                        .collect::<Result<_>>()?;
                }
                other => return Err(Error::Config(format!("unknown network key `{other}`"))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseParams<T: Real> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

/// Every learnable tensor of the network. The same type holds gradients and
/// optimizer moments, so all three stay co-shaped by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams<T: Real> {
    pub blocks: Vec<InceptionBlockParams<T>>,
    pub lstm1: LstmParams<T>,
    pub lstm2: LstmParams<T>,
    pub regressor: DenseParams<T>,
}

/// Gradients share the parameter layout.
pub type GradientSet<T> = NetworkParams<T>;

/// Uniform initializer shared by all layers.
struct Init {
    rng: ChaCha8Rng,
}

impl Init {
    fn uniform<T: Real>(&mut self, shape: &[usize], bound: f64) -> Tensor<T> {
        let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
        Tensor::from_fn(shape, |_| T::from_f64_lossy(dist.sample(&mut self.rng)))
    }

    fn glorot<T: Real>(&mut self, shape: &[usize], fan_in: usize, fan_out: usize) -> Tensor<T> {
        self.uniform(shape, (6.0 / (fan_in + fan_out) as f64).sqrt())
    }

    fn conv<T: Real>(&mut self, out_c: usize, in_c: usize, k: usize) -> ConvParams<T> {
        ConvParams {
            kernels: self.glorot(&[out_c, in_c, k, k], in_c * k * k, out_c * k * k),
            bias: Tensor::zeros(&[out_c]),
        }
    }

    fn lstm<T: Real>(&mut self, input: usize, hidden: usize) -> LstmParams<T> {
        let shape = [hidden, input + hidden];
        LstmParams {
            w_f: self.uniform(&shape, 0.08),
            w_i: self.uniform(&shape, 0.08),
            w_g: self.uniform(&shape, 0.08),
            w_o: self.uniform(&shape, 0.08),
            b_f: Tensor::full(&[hidden], T::one()),
            b_i: Tensor::zeros(&[hidden]),
            b_g: Tensor::zeros(&[hidden]),
            b_o: Tensor::zeros(&[hidden]),
        }
    }
}

impl<T: Real> NetworkParams<T> {
    /// Seeded initialization: Glorot-uniform convolutions and head, uniform
    /// ±0.08 LSTM weights, forget-gate bias 1, other biases 0.
    pub fn init(cfg: &NetConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut init = Init {
            rng: ChaCha8Rng::seed_from_u64(seed),
        };
        let channels = cfg.block_channels();
        let blocks = cfg
            .inception_widths
            .iter()
            .zip(&channels)
            .map(|(w, &in_c)| InceptionBlockParams {
                b1: init.conv(w[0], in_c, 1),
                b3_reduce: init.conv(w[1], in_c, 1),
                b3: init.conv(w[1], w[1], 3),
                b5_reduce: init.conv(w[2], in_c, 1),
                b5: init.conv(w[2], w[2], 5),
                pool_proj: init.conv(w[3], in_c, 1),
            })
            .collect();
        let h = cfg.lstm_hidden;
        let lstm1 = init.lstm(cfg.feature_len(), h);
        let lstm2 = init.lstm(h, h);
        let regressor = DenseParams {
            weight: init.glorot(&[POSE_ARITY, h], h, POSE_ARITY),
            bias: Tensor::zeros(&[POSE_ARITY]),
        };
        Ok(NetworkParams {
            blocks,
            lstm1,
            lstm2,
            regressor,
        })
    }

    /// All-zero parameters with the layout of `cfg`.
    pub fn zeros(cfg: &NetConfig) -> Result<Self> {
        Ok(Self::init(cfg, 0)?.zeros_like())
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for t in z.tensors_mut() {
            t.fill(T::zero());
        }
        z
    }

    /// `(name, tensor)` in a fixed canonical order.
    pub fn named(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out = Vec::new();
        for (b, block) in self.blocks.iter().enumerate() {
            for (conv_name, conv) in block.convs() {
                out.push((format!("block{b}.{conv_name}.kernels"), &conv.kernels));
                out.push((format!("block{b}.{conv_name}.bias"), &conv.bias));
            }
        }
        for (layer, p) in [("lstm1", &self.lstm1), ("lstm2", &self.lstm2)] {
            for (n, t) in p.named() {
                out.push((format!("{layer}.{n}"), t));
            }
        }
        out.push(("regressor.weight".into(), &self.regressor.weight));
        out.push(("regressor.bias".into(), &self.regressor.bias));
        out
    }

    pub fn tensors(&self) -> Vec<&Tensor<T>> {
        self.named().into_iter().map(|(_, t)| t).collect()
    }

    /// Mutable tensors in the same order as [`NetworkParams::named`].
    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out: Vec<&mut Tensor<T>> = Vec::new();
        for block in &mut self.blocks {
            for conv in block.convs_mut() {
                out.push(&mut conv.kernels);
                out.push(&mut conv.bias);
            }
        }
        out.extend(self.lstm1.tensors_mut());
        out.extend(self.lstm2.tensors_mut());
        out.push(&mut self.regressor.weight);
        out.push(&mut self.regressor.bias);
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// Elementwise `self += other`; layouts must match.
    pub fn accumulate(&mut self, other: &Self) -> Result<()> {
        let src = other.tensors();
        let mut dst = self.tensors_mut();
        if src.len() != dst.len() {
            return Err(Error::Dimension("parameter sets differ in length".into()));
        }
        for (d, s) in dst.iter_mut().zip(src) {
            d.add_assign(s)?;
        }
        Ok(())
    }

    /// Checks that every tensor matches the layout `cfg` prescribes.
    pub fn check_layout(&self, cfg: &NetConfig) -> Result<()> {
        let reference = Self::zeros(cfg)?;
        let expected = reference.named();
        let actual = self.named();
        if expected.len() != actual.len() {
            return Err(Error::Config(format!(
                "parameter set has {} tensors, config implies {}",
                actual.len(),
                expected.len()
            )));
        }
        for ((en, et), (an, at)) in expected.iter().zip(&actual) {
            if en != an || et.shape() != at.shape() {
                return Err(Error::Config(format!(
                    "parameter {an} {:?} does not match config ({en} {:?})",
                    at.shape(),
                    et.shape()
                )));
            }
        }
        Ok(())
    }

    pub fn cast<U: Real>(&self) -> NetworkParams<U> {
        let conv = |c: &ConvParams<T>| ConvParams {
            kernels: c.kernels.cast(),
            bias: c.bias.cast(),
        };
        let lstm = |l: &LstmParams<T>| LstmParams {
            w_f: l.w_f.cast(),
            w_i: l.w_i.cast(),
            w_g: l.w_g.cast(),
            w_o: l.w_o.cast(),
            b_f: l.b_f.cast(),
            b_i: l.b_i.cast(),
            b_g: l.b_g.cast(),
            b_o: l.b_o.cast(),
        };
        NetworkParams {
            blocks: self
                .blocks
                .iter()
                .map(|b| InceptionBlockParams {
                    b1: conv(&b.b1),
                    b3_reduce: conv(&b.b3_reduce),
                    b3: conv(&b.b3),
                    b5_reduce: conv(&b.b5_reduce),
                    b5: conv(&b.b5),
                    pool_proj: conv(&b.pool_proj),
                })
                .collect(),
            lstm1: lstm(&self.lstm1),
            lstm2: lstm(&self.lstm2),
            regressor: DenseParams {
                weight: self.regressor.weight.cast(),
                bias: self.regressor.bias.cast(),
            },
        }
    }
}

/// Turns 7 raw regressor values into a pose: unit quaternion with `w >= 0`.
pub fn extract_pose<T: Real>(raw: &Tensor<T>) -> Result<Pose> {
    if raw.len() != POSE_ARITY {
        return Err(Error::Dimension(format!(
            "raw pose has {} values, expected {POSE_ARITY}",
            raw.len()
        )));
    }
    Pose::from_raw(&raw.to_f64_vec())
}

/// Deterministic 64-bit mixing for deriving sub-seeds (splitmix64 finalizer).
pub fn mix_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> NetConfig {
        NetConfig {
            input_height: 16,
            input_width: 16,
            inception_widths: vec![[2, 2, 2, 2], [2, 3, 2, 1], [1, 1, 1, 1]],
            lstm_hidden: 8,
            precision: Precision::F64,
            ..NetConfig::default()
        }
    }

    #[test]
    fn config_text_round_trip() {
        let cfg = small();
        let text = cfg.to_text();
        assert_eq!(NetConfig::from_text(&text).unwrap(), cfg);
        assert!(NetConfig::from_text("lstm_hidden=abc").is_err());
        assert!(NetConfig::from_text("bogus=1").is_err());
    }

    #[test]
    fn config_rejects_unpoolable_input() {
        let cfg = NetConfig {
            input_height: 20,
            ..small()
        };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn feature_geometry() {
        let cfg = small();
        assert_eq!(cfg.block_channels(), vec![8, 8, 8, 4]);
        assert_eq!(cfg.feature_shape(), [4, 2, 2]);
        let d = NetConfig::default();
        assert_eq!(d.feature_shape(), [128, 8, 8]);
    }

    #[test]
    fn init_layout_and_forget_bias() {
        let cfg = small();
        let p = NetworkParams::<f64>::init(&cfg, 7).unwrap();
        p.check_layout(&cfg).unwrap();
        assert_eq!(p.lstm1.w_f.shape(), &[8, 16 + 8]);
        assert!(p.lstm1.b_f.data().iter().all(|&v| v == 1.0));
        assert!(p.lstm1.w_i.data().iter().all(|v| v.abs() <= 0.08));
        let names: Vec<String> = p.named().into_iter().map(|(n, _)| n).collect();
        assert_eq!(names.len(), p.tensors().len());
        assert_eq!(names[0], "block0.b1.kernels");
        assert_eq!(names.last().unwrap(), "regressor.bias");
        let q = NetworkParams::<f64>::init(&cfg, 7).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn extract_pose_checks_arity() {
        let raw = Tensor::<f64>::from_slice(&[0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(extract_pose(&raw).unwrap(), Pose::identity());
        let short = Tensor::<f64>::from_slice(&[1.0; 6]).unwrap();
        assert!(extract_pose(&short).is_err());
    }
}
