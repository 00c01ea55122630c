//! Four-branch inception block followed by 2x2 stride-2 max pooling.

use crate::error::{Error, Result};
use crate::layers::{
    activate_backward, activate_in_place, channel_concat, channel_split, conv2d_backward,
    conv2d_forward, maxpool_backward, maxpool_forward, maxpool_padded, Activation, PoolIndices,
};
use crate::tensor::{Real, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams<T: Real> {
    /// `[out, in, k, k]`.
    pub kernels: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Real> ConvParams<T> {
    pub fn out_channels(&self) -> usize {
        self.kernels.shape()[0]
    }

    pub fn in_channels(&self) -> usize {
        self.kernels.shape()[1]
    }

    pub fn size(&self) -> usize {
        self.kernels.shape()[2]
    }

    fn pad(&self) -> usize {
        self.size() / 2
    }

    fn forward(&self, input: &Tensor<T>, act: Activation) -> Result<Tensor<T>> {
        let mut out = conv2d_forward(input, &self.kernels, &self.bias, 1, self.pad())?;
        activate_in_place(&mut out, act);
        Ok(out)
    }

    /// Backward through activation and convolution; accumulates into `grad`.
    fn backward(
        &self,
        input: &Tensor<T>,
        output: &Tensor<T>,
        out_grad: &Tensor<T>,
        act: Activation,
        grad: &mut ConvParams<T>,
    ) -> Result<Tensor<T>> {
        let pre = activate_backward(output, out_grad, act)?;
        let mut g = conv2d_backward(input, &self.kernels, &pre, 1, self.pad())?;
        grad.kernels.add_assign(&g.take("kernels").expect("conv grad"))?;
        grad.bias.add_assign(&g.take("bias").expect("conv grad"))?;
        Ok(g.input_grad)
    }
}

/// Branches: `b1` (1x1), `b3_reduce -> b3` (1x1 then 3x3), `b5_reduce -> b5`
/// (1x1 then 5x5), and 3x3 stride-1 max pool then `pool_proj` (1x1).
#[derive(Debug, Clone, PartialEq)]
pub struct InceptionBlockParams<T: Real> {
    pub b1: ConvParams<T>,
    pub b3_reduce: ConvParams<T>,
    pub b3: ConvParams<T>,
    pub b5_reduce: ConvParams<T>,
    pub b5: ConvParams<T>,
    pub pool_proj: ConvParams<T>,
}

#[derive(Debug, Clone)]
struct BranchActivations<T: Real> {
    r3: Tensor<T>,
    r5: Tensor<T>,
    outputs: [Tensor<T>; 4],
    pooled_input: Tensor<T>,
    pool_idx: PoolIndices,
}

/// Activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct InceptionCache<T: Real> {
    input: Tensor<T>,
    acts: BranchActivations<T>,
    out_idx: PoolIndices,
}

impl<T: Real> InceptionBlockParams<T> {
    pub fn convs(&self) -> [(&'static str, &ConvParams<T>); 6] {
        [
            ("b1", &self.b1),
            ("b3_reduce", &self.b3_reduce),
            ("b3", &self.b3),
            ("b5_reduce", &self.b5_reduce),
            ("b5", &self.b5),
            ("pool_proj", &self.pool_proj),
        ]
    }

    pub fn convs_mut(&mut self) -> [&mut ConvParams<T>; 6] {
        [
            &mut self.b1,
            &mut self.b3_reduce,
            &mut self.b3,
            &mut self.b5_reduce,
            &mut self.b5,
            &mut self.pool_proj,
        ]
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for conv in z.convs_mut() {
            conv.kernels.fill(T::zero());
            conv.bias.fill(T::zero());
        }
        z
    }

    pub fn branch_widths(&self) -> [usize; 4] {
        [
            self.b1.out_channels(),
            self.b3.out_channels(),
            self.b5.out_channels(),
            self.pool_proj.out_channels(),
        ]
    }

    pub fn out_channels(&self) -> usize {
        self.branch_widths().iter().sum()
    }

    fn check(&self, input: &Tensor<T>) -> Result<()> {
        let &[c, h, w] = input.shape() else {
            return Err(Error::Config(format!(
                "inception input must be [C, H, W], got {:?}",
                input.shape()
            )));
        };
        for (name, conv) in [
            ("b1", &self.b1),
            ("b3_reduce", &self.b3_reduce),
            ("b5_reduce", &self.b5_reduce),
            ("pool_proj", &self.pool_proj),
        ] {
            if conv.in_channels() != c {
                return Err(Error::Config(format!(
                    "{name} expects {} input channels, got {c}",
                    conv.in_channels()
                )));
            }
        }
        if self.b3.in_channels() != self.b3_reduce.out_channels()
            || self.b5.in_channels() != self.b5_reduce.out_channels()
        {
            return Err(Error::Config("reduction width does not feed its branch".into()));
        }
        let sizes = [
            self.b1.size(),
            self.b3_reduce.size(),
            self.b3.size(),
            self.b5_reduce.size(),
            self.b5.size(),
            self.pool_proj.size(),
        ];
        if sizes != [1, 1, 3, 1, 5, 1] {
            return Err(Error::Config(format!("unexpected kernel sizes {sizes:?}")));
        }
        if h < 2 || w < 2 {
            return Err(Error::Config(format!("input {h}x{w} too small to pool")));
        }
        Ok(())
    }

    /// Branches before the reduction pool, concatenated along channels.
    pub fn branch_forward(&self, input: &Tensor<T>, act: Activation) -> Result<Tensor<T>> {
        let (concat, _) = self.forward_parts(input, act)?;
        Ok(concat)
    }

    fn forward_parts(
        &self,
        input: &Tensor<T>,
        act: Activation,
    ) -> Result<(Tensor<T>, BranchActivations<T>)> {
        self.check(input)?;
        let a = self.b1.forward(input, act)?;
        let r3 = self.b3_reduce.forward(input, act)?;
        let b = self.b3.forward(&r3, act)?;
        let r5 = self.b5_reduce.forward(input, act)?;
        let c = self.b5.forward(&r5, act)?;
        let (pooled_input, pool_idx) = maxpool_padded(input, 3, 1, 1)?;
        let d = self.pool_proj.forward(&pooled_input, act)?;
        let concat = channel_concat(&[&a, &b, &c, &d])?;
        Ok((
            concat,
            BranchActivations {
                r3,
                r5,
                outputs: [a, b, c, d],
                pooled_input,
                pool_idx,
            },
        ))
    }

    pub fn forward(&self, input: &Tensor<T>, act: Activation) -> Result<Tensor<T>> {
        Ok(self.forward_cached(input, act)?.0)
    }

    pub fn forward_cached(
        &self,
        input: &Tensor<T>,
        act: Activation,
    ) -> Result<(Tensor<T>, InceptionCache<T>)> {
        let (concat, acts) = self.forward_parts(input, act)?;
        let (out, out_idx) = maxpool_forward(&concat, 2, 2)?;
        Ok((
            out,
            InceptionCache {
                input: input.clone(),
                acts,
                out_idx,
            },
        ))
    }

    /// Accumulates parameter gradients into `grad` and returns the input gradient.
    pub fn backward(
        &self,
        cache: &InceptionCache<T>,
        out_grad: &Tensor<T>,
        act: Activation,
        grad: &mut InceptionBlockParams<T>,
    ) -> Result<Tensor<T>> {
        let concat_grad = maxpool_backward(&cache.out_idx, out_grad)?;
        let parts = channel_split(&concat_grad, &self.branch_widths())?;
        let acts = &cache.acts;
        let [a, b, c, d] = &acts.outputs;
        let x = &cache.input;

        let mut dx = self.b1.backward(x, a, &parts[0], act, &mut grad.b1)?;

        let dr3 = self.b3.backward(&acts.r3, b, &parts[1], act, &mut grad.b3)?;
        dx.add_assign(&self.b3_reduce.backward(x, &acts.r3, &dr3, act, &mut grad.b3_reduce)?)?;

        let dr5 = self.b5.backward(&acts.r5, c, &parts[2], act, &mut grad.b5)?;
        dx.add_assign(&self.b5_reduce.backward(x, &acts.r5, &dr5, act, &mut grad.b5_reduce)?)?;

        let dpooled =
            self.pool_proj
                .backward(&acts.pooled_input, d, &parts[3], act, &mut grad.pool_proj)?;
        dx.add_assign(&maxpool_backward(&acts.pool_idx, &dpooled)?)?;
        Ok(dx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn conv(out_c: usize, in_c: usize, k: usize, v: f64) -> ConvParams<f64> {
        ConvParams {
            kernels: Tensor::full(&[out_c, in_c, k, k], v),
            bias: Tensor::zeros(&[out_c]),
        }
    }

    fn block(in_c: usize, w: usize, v: f64) -> InceptionBlockParams<f64> {
        InceptionBlockParams {
            b1: conv(w, in_c, 1, v),
            b3_reduce: conv(w, in_c, 1, v),
            b3: conv(w, w, 3, v),
            b5_reduce: conv(w, in_c, 1, v),
            b5: conv(w, w, 5, v),
            pool_proj: conv(w, in_c, 1, v),
        }
    }

    #[test]
    fn zero_weights_give_zero_output() {
        let p = block(3, 2, 0.0);
        let x = Tensor::from_fn(&[3, 6, 6], |i| i as f64 * 0.1 - 2.0);
        let y = p.forward(&x, Activation::Relu).unwrap();
        assert_eq!(y.shape(), &[8, 3, 3]);
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn one_by_one_branch_reproduces_input() {
        let mut p = block(1, 1, 0.0);
        p.b1.kernels.fill(1.0);
        let x = Tensor::full(&[1, 4, 4], 1.0);
        let pre = p.branch_forward(&x, Activation::Relu).unwrap();
        assert_eq!(pre.channel(0).unwrap().data(), x.data());
        let y = p.forward(&x, Activation::Relu).unwrap();
        assert_eq!(y.shape(), &[4, 2, 2]);
    }

    #[test]
    fn channel_mismatch_is_config_error() {
        let p = block(3, 2, 0.1);
        let x = Tensor::zeros(&[2, 4, 4]);
        assert!(matches!(p.forward(&x, Activation::Relu), Err(Error::Config(_))));
    }

    #[test]
    fn output_channels_sum_branch_widths() {
        let p = InceptionBlockParams {
            b1: conv(1, 2, 1, 0.1),
            b3_reduce: conv(2, 2, 1, 0.1),
            b3: conv(3, 2, 3, 0.1),
            b5_reduce: conv(1, 2, 1, 0.1),
            b5: conv(4, 1, 5, 0.1),
            pool_proj: conv(5, 2, 1, 0.1),
        };
        let y = p.forward(&Tensor::full(&[2, 8, 6], 0.5), Activation::Relu).unwrap();
        assert_eq!(y.shape(), &[13, 4, 3]);
    }
}
