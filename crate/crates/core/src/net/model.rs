//! Full forward/backward: inception stack -> flatten -> dropout -> LSTM1 ->
//! dropout -> LSTM2 -> affine head, one 7-value output per frame pair.

use rayon::prelude::*;

use super::inception::InceptionCache;
use super::lstm::{LstmSequenceCache, LstmState};
use super::{mix_seed, NetConfig, NetworkParams, POSE_ARITY};
use crate::error::{Error, Result};
use crate::layers::{dense_backward, dense_forward, dropout, dropout_backward, DropoutMask, Mode};
use crate::tensor::{Real, Tensor};

/// Hidden and cell states of both LSTM layers.
#[derive(Debug, Clone, PartialEq)]
pub struct RecurrentState<T: Real> {
    pub lstm1: LstmState<T>,
    pub lstm2: LstmState<T>,
}

impl<T: Real> RecurrentState<T> {
    pub fn zeros(hidden: usize) -> Self {
        RecurrentState {
            lstm1: LstmState::zeros(hidden),
            lstm2: LstmState::zeros(hidden),
        }
    }
}

/// Everything the backward pass needs from one cached sequence forward.
#[derive(Debug, Clone)]
pub struct SequenceCache<T: Real> {
    blocks: Vec<Vec<InceptionCache<T>>>,
    feature_masks: Vec<DropoutMask<T>>,
    lstm1: LstmSequenceCache<T>,
    between_masks: Vec<DropoutMask<T>>,
    lstm2: LstmSequenceCache<T>,
    h2: Vec<Tensor<T>>,
}

impl<T: Real> SequenceCache<T> {
    pub fn len(&self) -> usize {
        self.h2.len()
    }

    pub fn is_empty(&self) -> bool {
        self.h2.is_empty()
    }
}

fn check_pair<T: Real>(cfg: &NetConfig, pair: &Tensor<T>) -> Result<()> {
    if pair.shape() != cfg.input_shape() {
        return Err(Error::Config(format!(
            "input pair {:?} does not match configured {:?}",
            pair.shape(),
            cfg.input_shape()
        )));
    }
    pair.check_finite("input pair")
}

fn features<T: Real>(
    cfg: &NetConfig,
    params: &NetworkParams<T>,
    pair: &Tensor<T>,
) -> Result<(Tensor<T>, Vec<InceptionCache<T>>)> {
    check_pair(cfg, pair)?;
    let mut x = pair.clone();
    let mut caches = Vec::with_capacity(params.blocks.len());
    for block in &params.blocks {
        let (y, cache) = block.forward_cached(&x, cfg.conv_activation)?;
        caches.push(cache);
        x = y;
    }
    Ok((x.flatten(), caches))
}

/// Single step without caching, always in eval mode.
pub fn forward_step<T: Real>(
    cfg: &NetConfig,
    params: &NetworkParams<T>,
    pair: &Tensor<T>,
    state: &RecurrentState<T>,
) -> Result<(Tensor<T>, RecurrentState<T>)> {
    check_pair(cfg, pair)?;
    let mut x = pair.clone();
    for block in &params.blocks {
        x = block.forward(&x, cfg.conv_activation)?;
    }
    let s1 = params.lstm1.step(&x.flatten(), &state.lstm1)?;
    let s2 = params.lstm2.step(&s1.h, &state.lstm2)?;
    let raw = dense_forward(&s2.h, &params.regressor.weight, &params.regressor.bias)?;
    Ok((raw, RecurrentState { lstm1: s1, lstm2: s2 }))
}

/// Cached forward over consecutive pairs of one trajectory. Dropout masks are
/// drawn from `seed` per step and per site, so a fixed seed reproduces them.
pub fn forward_sequence<T: Real>(
    cfg: &NetConfig,
    params: &NetworkParams<T>,
    pairs: &[Tensor<T>],
    init: &RecurrentState<T>,
    mode: Mode,
    seed: u64,
) -> Result<(Vec<Tensor<T>>, RecurrentState<T>, SequenceCache<T>)> {
    if pairs.is_empty() {
        return Err(Error::Dimension("empty input sequence".into()));
    }
    let extracted: Vec<_> = pairs
        .par_iter()
        .map(|p| features(cfg, params, p))
        .collect::<Result<_>>()?;
    let mut blocks = Vec::with_capacity(pairs.len());
    let mut xs1 = Vec::with_capacity(pairs.len());
    let mut feature_masks = Vec::with_capacity(pairs.len());
    for (t, (feat, cache)) in extracted.into_iter().enumerate() {
        let (x, mask) = dropout(&feat, cfg.dropout_rate, mix_seed(seed, 2 * t as u64), mode)?;
        xs1.push(x);
        feature_masks.push(mask);
        blocks.push(cache);
    }
    let (s1, lstm1) = params.lstm1.sequence_forward(&xs1, &init.lstm1)?;
    let mut xs2 = Vec::with_capacity(pairs.len());
    let mut between_masks = Vec::with_capacity(pairs.len());
    for (t, s) in s1.iter().enumerate() {
        let (x, mask) = dropout(&s.h, cfg.dropout_rate, mix_seed(seed, 2 * t as u64 + 1), mode)?;
        xs2.push(x);
        between_masks.push(mask);
    }
    let (s2, lstm2) = params.lstm2.sequence_forward(&xs2, &init.lstm2)?;
    let h2: Vec<Tensor<T>> = s2.iter().map(|s| s.h.clone()).collect();
    let raws = h2
        .iter()
        .map(|h| dense_forward(h, &params.regressor.weight, &params.regressor.bias))
        .collect::<Result<Vec<_>>>()?;
    let last = RecurrentState {
        lstm1: s1.last().expect("nonempty").clone(),
        lstm2: s2.last().expect("nonempty").clone(),
    };
    Ok((
        raws,
        last,
        SequenceCache {
            blocks,
            feature_masks,
            lstm1,
            between_masks,
            lstm2,
            h2,
        },
    ))
}

/// Exact BPTT through the cached window; gradients are summed over timesteps.
/// No gradient flows into the initial recurrent state.
pub fn backward_sequence<T: Real>(
    cfg: &NetConfig,
    params: &NetworkParams<T>,
    cache: &SequenceCache<T>,
    out_grads: &[Tensor<T>],
) -> Result<NetworkParams<T>> {
    if out_grads.len() != cache.len() {
        return Err(Error::Dimension(format!(
            "{} output gradients for a cached sequence of {}",
            out_grads.len(),
            cache.len()
        )));
    }
    let mut grad = params.zeros_like();
    let mut dh2 = Vec::with_capacity(cache.len());
    for (h, g) in cache.h2.iter().zip(out_grads) {
        if g.len() != POSE_ARITY {
            return Err(Error::Dimension(format!(
                "output gradient has {} values, expected {POSE_ARITY}",
                g.len()
            )));
        }
        let mut lg = dense_backward(h, &params.regressor.weight, g)?;
        grad.regressor.weight.add_assign(&lg.take("weight").expect("dense grad"))?;
        grad.regressor.bias.add_assign(&lg.take("bias").expect("dense grad"))?;
        dh2.push(lg.input_grad);
    }
    let (dx2, _) = params
        .lstm2
        .sequence_backward(&cache.lstm2, &dh2, None, &mut grad.lstm2)?;
    let dh1 = dx2
        .iter()
        .zip(&cache.between_masks)
        .map(|(g, m)| dropout_backward(m, g))
        .collect::<Result<Vec<_>>>()?;
    let (dx1, _) = params
        .lstm1
        .sequence_backward(&cache.lstm1, &dh1, None, &mut grad.lstm1)?;

    let feature_shape = cfg.feature_shape();
    let per_step: Vec<Vec<_>> = dx1
        .par_iter()
        .zip(&cache.feature_masks)
        .zip(&cache.blocks)
        .map(|((g, mask), block_caches)| {
            let mut d = dropout_backward(mask, g)?.reshape(&feature_shape)?;
            let mut block_grads: Vec<_> = params.blocks.iter().map(|b| b.zeros_like()).collect();
            for (b, block) in params.blocks.iter().enumerate().rev() {
                d = block.backward(&block_caches[b], &d, cfg.conv_activation, &mut block_grads[b])?;
            }
            Ok(block_grads)
        })
        .collect::<Result<_>>()?;
    for step in per_step {
        for (acc, g) in grad.blocks.iter_mut().zip(step) {
            for (a, s) in acc.convs_mut().into_iter().zip(g.convs()) {
                a.kernels.add_assign(&s.1.kernels)?;
                a.bias.add_assign(&s.1.bias)?;
            }
        }
    }
    Ok(grad)
}

/// Parameters plus the cache of the most recent training forward.
#[derive(Debug, Clone)]
pub struct Model<T: Real> {
    config: NetConfig,
    pub params: NetworkParams<T>,
    cache: Option<SequenceCache<T>>,
}

impl<T: Real> Model<T> {
    pub fn new(config: NetConfig, seed: u64) -> Result<Self> {
        let params = NetworkParams::init(&config, seed)?;
        Ok(Model {
            config,
            params,
            cache: None,
        })
    }

    pub fn from_params(config: NetConfig, params: NetworkParams<T>) -> Result<Self> {
        config.validate()?;
        params.check_layout(&config)?;
        Ok(Model {
            config,
            params,
            cache: None,
        })
    }

    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    pub fn set_dropout(&mut self, rate: f64) -> Result<()> {
        let mut cfg = self.config.clone();
        cfg.dropout_rate = rate;
        cfg.validate()?;
        self.config = cfg;
        Ok(())
    }

    pub fn initial_state(&self) -> RecurrentState<T> {
        RecurrentState::zeros(self.config.lstm_hidden)
    }

    pub fn step(
        &self,
        pair: &Tensor<T>,
        state: &RecurrentState<T>,
    ) -> Result<(Tensor<T>, RecurrentState<T>)> {
        forward_step(&self.config, &self.params, pair, state)
    }

    /// Runs and caches a forward for the next [`Model::backward`].
    pub fn forward(
        &mut self,
        pairs: &[Tensor<T>],
        init: &RecurrentState<T>,
        mode: Mode,
        seed: u64,
    ) -> Result<(Vec<Tensor<T>>, RecurrentState<T>)> {
        self.cache = None;
        let (raw, last, cache) =
            forward_sequence(&self.config, &self.params, pairs, init, mode, seed)?;
        self.cache = Some(cache);
        Ok((raw, last))
    }

    /// Consumes the cached forward.
    pub fn backward(&mut self, out_grads: &[Tensor<T>]) -> Result<NetworkParams<T>> {
        let cache = self
            .cache
            .take()
            .ok_or_else(|| Error::State("backward called without a cached forward".into()))?;
        backward_sequence(&self.config, &self.params, &cache, out_grads)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Precision;

    fn cfg() -> NetConfig {
        NetConfig {
            input_height: 8,
            input_width: 8,
            inception_widths: vec![[1, 1, 1, 1], [1, 1, 1, 1], [1, 1, 1, 1]],
            lstm_hidden: 3,
            precision: Precision::F64,
            ..NetConfig::default()
        }
    }

    #[test]
    fn zero_weights_output_regressor_bias() {
        let c = cfg();
        let mut params = NetworkParams::<f64>::zeros(&c).unwrap();
        params.regressor.bias = Tensor::from_fn(&[7], |i| i as f64 - 3.0);
        let pair = Tensor::from_fn(&c.input_shape(), |i| (i as f64).cos());
        let (raw, _) = forward_step(&c, &params, &pair, &RecurrentState::zeros(3)).unwrap();
        assert_eq!(raw, params.regressor.bias);
    }

    #[test]
    fn backward_needs_cache() {
        let mut m = Model::<f64>::new(cfg(), 1).unwrap();
        assert!(matches!(m.backward(&[]), Err(Error::State(_))));
    }

    #[test]
    fn wrong_input_shape_is_config_error() {
        let m = Model::<f64>::new(cfg(), 1).unwrap();
        let pair = Tensor::zeros(&[8, 4, 8]);
        assert!(matches!(
            m.step(&pair, &m.initial_state()),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn cached_sequence_matches_steps() {
        let mut m = Model::<f64>::new(cfg(), 5).unwrap();
        let pairs: Vec<_> = (0..3)
            .map(|k| Tensor::from_fn(&[8, 8, 8], |i| ((i * (k + 2)) as f64 * 0.01).sin()))
            .collect();
        let init = m.initial_state();
        let (raws, last) = m.forward(&pairs, &init, Mode::Eval, 0).unwrap();
        let mut s = init;
        for (p, r) in pairs.iter().zip(&raws) {
            let (raw, next) = m.step(p, &s).unwrap();
            assert_eq!(&raw, r);
            s = next;
        }
        assert_eq!(s, last);
        let zero = vec![Tensor::zeros(&[7]); 3];
        let g = m.backward(&zero).unwrap();
        assert!(g.tensors().iter().all(|t| t.max_abs() == 0.0));
    }
}
