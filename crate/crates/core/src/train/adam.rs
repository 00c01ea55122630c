//! Adam with the bias correction folded into one step-size factor.

use crate::error::{Error, Result};
use crate::net::NetworkParams;
use crate::tensor::{Real, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AdamVariant {
    /// `W -= α · sqrt(1 - β2^t) / (1 - β1^t) · m / sqrt(v + ε)`.
    #[default]
    Printed,
    /// Textbook form: `W -= α · m̂ / (sqrt(v̂) + ε)` with separately
    /// bias-corrected moments.
    Standard,
}

impl std::str::FromStr for AdamVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "printed" => Ok(AdamVariant::Printed),
            "standard" => Ok(AdamVariant::Standard),
            other => Err(Error::Config(format!("unknown Adam variant `{other}`"))),
        }
    }
}

impl AdamVariant {
    pub fn as_str(self) -> &'static str {
        match self {
            AdamVariant::Printed => "printed",
            AdamVariant::Standard => "standard",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub variant: AdamVariant,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            alpha: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            variant: AdamVariant::Printed,
        }
    }
}

/// First and second moments per parameter tensor plus the step counter.
#[derive(Debug, Clone)]
pub struct AdamState<T: Real> {
    pub config: AdamConfig,
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
    pub t: u64,
}

impl<T: Real> AdamState<T> {
    pub fn new(config: AdamConfig, shapes: &[&[usize]]) -> Self {
        let zeros: Vec<Tensor<T>> = shapes.iter().map(|s| Tensor::zeros(s)).collect();
        AdamState {
            config,
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    pub fn for_params(config: AdamConfig, params: &NetworkParams<T>) -> Self {
        let shapes: Vec<&[usize]> = params.tensors().into_iter().map(|t| t.shape()).collect();
        Self::new(config, &shapes)
    }

    /// One update of every tensor; `t` increments by exactly one.
    pub fn step_tensors(&mut self, params: &mut [&mut Tensor<T>], grads: &[&Tensor<T>]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Dimension(format!(
                "Adam tracks {} tensors, got {} parameters and {} gradients",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        for ((p, g), m) in params.iter().zip(grads).zip(&self.m) {
            if p.shape() != m.shape() || g.shape() != m.shape() {
                return Err(Error::Dimension(format!(
                    "Adam shape mismatch: parameter {:?}, gradient {:?}, moment {:?}",
                    p.shape(),
                    g.shape(),
                    m.shape()
                )));
            }
        }
        self.t += 1;
        let c = self.config;
        let t = self.t as i32;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        let b1 = T::from_f64_lossy(c.beta1);
        let b2 = T::from_f64_lossy(c.beta2);
        let one = T::one();
        let eps = T::from_f64_lossy(c.epsilon);
        let alpha = T::from_f64_lossy(c.alpha);
        let factor = T::from_f64_lossy(c.alpha * bc2.sqrt() / bc1);
        let (inv_bc1, inv_bc2) = (T::from_f64_lossy(1.0 / bc1), T::from_f64_lossy(1.0 / bc2));
        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            let (pw, gw, mw, vw) = (p.data_mut(), g.data(), m.data_mut(), v.data_mut());
            for k in 0..pw.len() {
                let gk = gw[k];
                mw[k] = b1 * mw[k] + (one - b1) * gk;
                vw[k] = b2 * vw[k] + (one - b2) * gk * gk;
                pw[k] = pw[k]
                    - match c.variant {
                        AdamVariant::Printed => factor * mw[k] / (vw[k] + eps).sqrt(),
                        AdamVariant::Standard => {
                            alpha * (mw[k] * inv_bc1) / ((vw[k] * inv_bc2).sqrt() + eps)
                        }
                    };
            }
        }
        Ok(())
    }

    pub fn step(&mut self, params: &mut NetworkParams<T>, grads: &NetworkParams<T>) -> Result<()> {
        let g = grads.tensors();
        let mut p = params.tensors_mut();
        self.step_tensors(&mut p, &g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> Tensor<f64> {
        Tensor::from_slice(&[v]).unwrap()
    }

    #[test]
    fn zero_gradient_is_noop() {
        let mut s = AdamState::<f64>::new(AdamConfig::default(), &[&[3]]);
        let mut w = Tensor::from_slice(&[1.0, -2.0, 0.5]).unwrap();
        let before = w.clone();
        let g = Tensor::zeros(&[3]);
        s.step_tensors(&mut [&mut w], &[&g]).unwrap();
        assert_eq!(w, before);
        assert_eq!(s.t, 1);
    }

    #[test]
    fn first_step_scalar() {
        let mut s = AdamState::<f64>::new(AdamConfig::default(), &[&[1]]);
        let mut w = scalar(1.0);
        s.step_tensors(&mut [&mut w], &[&scalar(1.0)]).unwrap();
        assert!((s.m[0].data()[0] - 0.1).abs() < 1e-15);
        assert!((s.v[0].data()[0] - 0.001).abs() < 1e-15);
        assert!((1.0 - w.data()[0] - 1e-3).abs() < 1e-8);
    }

    #[test]
    fn standard_variant_first_step_is_alpha() {
        let cfg = AdamConfig {
            variant: AdamVariant::Standard,
            ..AdamConfig::default()
        };
        let mut s = AdamState::<f64>::new(cfg, &[&[1]]);
        let mut w = scalar(0.0);
        s.step_tensors(&mut [&mut w], &[&scalar(-4.0)]).unwrap();
        assert!((w.data()[0] - 1e-3 * 4.0 / (4.0 + 1e-8)).abs() < 1e-15);
    }

    #[test]
    fn shape_mismatch() {
        let mut s = AdamState::<f64>::new(AdamConfig::default(), &[&[2]]);
        let mut w = Tensor::zeros(&[3]);
        let g = Tensor::zeros(&[3]);
        assert!(matches!(
            s.step_tensors(&mut [&mut w], &[&g]),
            Err(Error::Dimension(_))
        ));
        assert_eq!(s.t, 0);
    }
}
