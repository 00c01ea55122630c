//! LSTM cell over the concatenated `[x, h_prev]`, with cached sequence
//! forward and backpropagation through time.

use crate::error::{Error, Result};
use crate::layers::{dense_forward, sigmoid};
use crate::tensor::{Real, Tensor};

/// Gate weights are `[hidden, input + hidden]`, biases `[hidden]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams<T: Real> {
    pub w_f: Tensor<T>,
    pub w_i: Tensor<T>,
    pub w_g: Tensor<T>,
    pub w_o: Tensor<T>,
    pub b_f: Tensor<T>,
    pub b_i: Tensor<T>,
    pub b_g: Tensor<T>,
    pub b_o: Tensor<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmState<T: Real> {
    pub h: Tensor<T>,
    pub c: Tensor<T>,
}

impl<T: Real> LstmState<T> {
    pub fn zeros(hidden: usize) -> Self {
        LstmState {
            h: Tensor::zeros(&[hidden]),
            c: Tensor::zeros(&[hidden]),
        }
    }
}

/// Gate activations of one step, kept for BPTT.
#[derive(Debug, Clone)]
pub struct LstmStepCache<T: Real> {
    xh: Vec<T>,
    c_prev: Vec<T>,
    f: Vec<T>,
    i: Vec<T>,
    g: Vec<T>,
    o: Vec<T>,
    tanh_c: Vec<T>,
}

impl<T: Real> LstmStepCache<T> {
    /// `(f, i, g, o)` gate values.
    pub fn gates(&self) -> (&[T], &[T], &[T], &[T]) {
        (&self.f, &self.i, &self.g, &self.o)
    }
}

/// Cached forward over a sequence.
#[derive(Debug, Clone)]
pub struct LstmSequenceCache<T: Real> {
    steps: Vec<LstmStepCache<T>>,
}

impl<T: Real> LstmSequenceCache<T> {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn step(&self, t: usize) -> Option<&LstmStepCache<T>> {
        self.steps.get(t)
    }
}

impl<T: Real> LstmParams<T> {
    pub fn hidden(&self) -> usize {
        self.b_f.len()
    }

    pub fn input_len(&self) -> usize {
        self.w_f.shape()[1] - self.hidden()
    }

    pub fn named(&self) -> [(&'static str, &Tensor<T>); 8] {
        [
            ("w_f", &self.w_f),
            ("w_i", &self.w_i),
            ("w_g", &self.w_g),
            ("w_o", &self.w_o),
            ("b_f", &self.b_f),
            ("b_i", &self.b_i),
            ("b_g", &self.b_g),
            ("b_o", &self.b_o),
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut Tensor<T>; 8] {
        [
            &mut self.w_f,
            &mut self.w_i,
            &mut self.w_g,
            &mut self.w_o,
            &mut self.b_f,
            &mut self.b_i,
            &mut self.b_g,
            &mut self.b_o,
        ]
    }

    fn check(&self, x: &Tensor<T>, prev: &LstmState<T>) -> Result<()> {
        let h = self.hidden();
        let shape = self.w_f.shape();
        if shape.len() != 2 || shape[0] != h || shape[1] < h {
            return Err(Error::Dimension(format!("bad LSTM weight shape {shape:?}")));
        }
        for (name, t) in self.named() {
            let expected: &[usize] = if name.starts_with('w') { shape } else { &[h] };
            if t.shape() != expected {
                return Err(Error::Dimension(format!(
                    "LSTM {name} is {:?}, expected {expected:?}",
                    t.shape()
                )));
            }
        }
        if x.len() != self.input_len() {
            return Err(Error::Dimension(format!(
                "LSTM input has {} values, expected {}",
                x.len(),
                self.input_len()
            )));
        }
        if prev.h.len() != h || prev.c.len() != h {
            return Err(Error::Dimension(format!("LSTM state width differs from {h}")));
        }
        x.check_finite("LSTM input")?;
        Ok(())
    }

    /// One step; the cache feeds [`LstmParams::sequence_backward`].
    pub fn step_cached(
        &self,
        x: &Tensor<T>,
        prev: &LstmState<T>,
    ) -> Result<(LstmState<T>, LstmStepCache<T>)> {
        self.check(x, prev)?;
        let mut xh = Vec::with_capacity(self.w_f.shape()[1]);
        xh.extend_from_slice(x.data());
        xh.extend_from_slice(prev.h.data());
        let xh = Tensor::new(&[xh.len()], xh)?;
        let gate = |w: &Tensor<T>, b: &Tensor<T>, act: fn(T) -> T| -> Result<Vec<T>> {
            let mut z = dense_forward(&xh, w, b)?.into_data();
            z.iter_mut().for_each(|v| *v = act(*v));
            Ok(z)
        };
        let f = gate(&self.w_f, &self.b_f, sigmoid)?;
        let i = gate(&self.w_i, &self.b_i, sigmoid)?;
        let g = gate(&self.w_g, &self.b_g, T::tanh)?;
        let o = gate(&self.w_o, &self.b_o, sigmoid)?;
        let c_prev = prev.c.data();
        let c: Vec<T> = (0..f.len())
            .map(|k| f[k] * c_prev[k] + i[k] * g[k])
            .collect();
        let tanh_c: Vec<T> = c.iter().map(|v| v.tanh()).collect();
        let h: Vec<T> = o.iter().zip(&tanh_c).map(|(&a, &b)| a * b).collect();
        let n = h.len();
        Ok((
            LstmState {
                h: Tensor::new(&[n], h)?,
                c: Tensor::new(&[n], c)?,
            },
            LstmStepCache {
                xh: xh.into_data(),
                c_prev: c_prev.to_vec(),
                f,
                i,
                g,
                o,
                tanh_c,
            },
        ))
    }

    pub fn step(&self, x: &Tensor<T>, prev: &LstmState<T>) -> Result<LstmState<T>> {
        Ok(self.step_cached(x, prev)?.0)
    }

    /// Left fold of [`LstmParams::step`]; returns every state after `init`.
    pub fn sequence_forward(
        &self,
        xs: &[Tensor<T>],
        init: &LstmState<T>,
    ) -> Result<(Vec<LstmState<T>>, LstmSequenceCache<T>)> {
        if xs.is_empty() {
            return Err(Error::Dimension("empty LSTM sequence".into()));
        }
        let mut states = Vec::with_capacity(xs.len());
        let mut steps = Vec::with_capacity(xs.len());
        let mut prev = init.clone();
        for x in xs {
            let (next, cache) = self.step_cached(x, &prev)?;
            states.push(next.clone());
            steps.push(cache);
            prev = next;
        }
        Ok((states, LstmSequenceCache { steps }))
    }

    /// BPTT over a cached sequence. `dh[t]` is the loss gradient w.r.t. the
    /// output `h_t`; `final_grad` carries gradient into the last state from
    /// beyond the window (zero for a truncated window). Accumulates parameter
    /// gradients into `grad`, returns input gradients per step and the
    /// gradient w.r.t. the initial state.
    pub fn sequence_backward(
        &self,
        cache: &LstmSequenceCache<T>,
        dh: &[Tensor<T>],
        final_grad: Option<&LstmState<T>>,
        grad: &mut LstmParams<T>,
    ) -> Result<(Vec<Tensor<T>>, LstmState<T>)> {
        let hid = self.hidden();
        let n_in = self.input_len();
        let width = n_in + hid;
        if dh.len() != cache.steps.len() {
            return Err(Error::Dimension(format!(
                "{} output gradients for {} cached steps",
                dh.len(),
                cache.steps.len()
            )));
        }
        let (mut dh_next, mut dc_next) = match final_grad {
            Some(s) => (s.h.data().to_vec(), s.c.data().to_vec()),
            None => (vec![T::zero(); hid], vec![T::zero(); hid]),
        };
        let one = T::one();
        let mut dxs = vec![Tensor::zeros(&[n_in]); dh.len()];
        let mut dz = [
            vec![T::zero(); hid],
            vec![T::zero(); hid],
            vec![T::zero(); hid],
            vec![T::zero(); hid],
        ];
        for t in (0..cache.steps.len()).rev() {
            let s = &cache.steps[t];
            if dh[t].len() != hid {
                return Err(Error::Dimension(format!(
                    "output gradient has {} values, expected {hid}",
                    dh[t].len()
                )));
            }
            let mut dc_prev = vec![T::zero(); hid];
            for k in 0..hid {
                let dhk = dh[t].data()[k] + dh_next[k];
                let dc = dc_next[k] + dhk * s.o[k] * (one - s.tanh_c[k] * s.tanh_c[k]);
                let (f, i, g, o) = (s.f[k], s.i[k], s.g[k], s.o[k]);
                dz[0][k] = dc * s.c_prev[k] * f * (one - f);
                dz[1][k] = dc * g * i * (one - i);
                dz[2][k] = dc * i * (one - g * g);
                dz[3][k] = dhk * s.tanh_c[k] * o * (one - o);
                dc_prev[k] = dc * f;
            }
            let mut dxh = vec![T::zero(); width];
            let weights = [&self.w_f, &self.w_i, &self.w_g, &self.w_o];
            let gw = [&mut grad.w_f, &mut grad.w_i, &mut grad.w_g, &mut grad.w_o];
            for gate in 0..4 {
                // dW += dz xh^T
                T::gemm(
                    hid,
                    1,
                    width,
                    one,
                    &dz[gate],
                    (1, 1),
                    &s.xh,
                    (width as isize, 1),
                    one,
                    gw[gate].data_mut(),
                );
                // dxh += W^T dz
                T::gemm(
                    width,
                    hid,
                    1,
                    one,
                    weights[gate].data(),
                    (1, width as isize),
                    &dz[gate],
                    (1, 1),
                    one,
                    &mut dxh,
                );
            }
            for (b, d) in [&mut grad.b_f, &mut grad.b_i, &mut grad.b_g, &mut grad.b_o]
                .into_iter()
                .zip(&dz)
            {
                for (bv, &dv) in b.data_mut().iter_mut().zip(d) {
                    *bv += dv;
                }
            }
            dxs[t] = Tensor::new(&[n_in], dxh[..n_in].to_vec())?;
            dh_next = dxh[n_in..].to_vec();
            dc_next = dc_prev;
        }
        Ok((
            dxs,
            LstmState {
                h: Tensor::new(&[hid], dh_next)?,
                c: Tensor::new(&[hid], dc_next)?,
            },
        ))
    }
}
