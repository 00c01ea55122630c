//! Pose loss `|x̂ - x| + β |q̂ - q|` (plain norms, not squared) and weighted
//! aggregation over named heads.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::pose::Pose;
use crate::tensor::{Real, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct PoseLossConfig {
    pub beta: f64,
    pub loss_weights: BTreeMap<String, f64>,
}

impl Default for PoseLossConfig {
    fn default() -> Self {
        PoseLossConfig {
            beta: 1.0,
            loss_weights: BTreeMap::from([("pose".to_string(), 1.0)]),
        }
    }
}

impl PoseLossConfig {
    pub fn with_beta(beta: f64) -> Self {
        PoseLossConfig {
            beta,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::Config(format!("beta must be positive, got {}", self.beta)));
        }
        if let Some((k, w)) = self.loss_weights.iter().find(|(_, w)| !(**w >= 0.0)) {
            return Err(Error::Config(format!("loss weight for `{k}` is {w}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct PoseLoss<T: Real> {
    pub total: f64,
    /// `|x̂ - x|`.
    pub trans: f64,
    /// `|q̂ - q|` with `q` sign-aligned to the prediction, before weighting by β.
    pub rot: f64,
    /// d total / d raw prediction.
    pub grad: Tensor<T>,
}

/// Gradient of `|e|` with the subgradient at `e = 0` taken as 0.
fn norm_and_grad(e: &[f64]) -> (f64, Vec<f64>) {
    let n = e.iter().map(|v| v * v).sum::<f64>().sqrt();
    if n == 0.0 {
        (0.0, vec![0.0; e.len()])
    } else {
        (n, e.iter().map(|v| v / n).collect())
    }
}

/// Loss between 7 raw regressor outputs and a ground-truth relative pose.
/// The raw quaternion is not normalized; `gt.rotation` is flipped to whichever
/// sign lies closer to it.
pub fn pose_loss<T: Real>(pred: &Tensor<T>, gt: &Pose, beta: f64) -> Result<PoseLoss<T>> {
    if pred.len() != 7 {
        return Err(Error::Dimension(format!(
            "prediction has {} values, expected 7",
            pred.len()
        )));
    }
    pred.check_finite("pose prediction")?;
    let p = pred.to_f64_vec();
    let dt: Vec<f64> = (0..3).map(|k| p[k] - gt.translation[k]).collect();
    let minus: Vec<f64> = (0..4).map(|k| p[3 + k] - gt.rotation[k]).collect();
    let plus: Vec<f64> = (0..4).map(|k| p[3 + k] + gt.rotation[k]).collect();
    let sq = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>();
    let dq = if sq(&plus) < sq(&minus) { plus } else { minus };
    let (trans, gt_grad) = norm_and_grad(&dt);
    let (rot, gq_grad) = norm_and_grad(&dq);
    let grad: Vec<T> = gt_grad
        .iter()
        .copied()
        .chain(gq_grad.iter().map(|g| beta * g))
        .map(T::from_f64_lossy)
        .collect();
    Ok(PoseLoss {
        total: trans + beta * rot,
        trans,
        rot,
        grad: Tensor::new(&[7], grad)?,
    })
}

/// `Σ weight[name] · loss[name]` in name order.
pub fn aggregate_loss(
    per_head: &BTreeMap<String, f64>,
    weights: &BTreeMap<String, f64>,
) -> Result<f64> {
    per_head.iter().try_fold(0.0, |acc, (name, loss)| {
        let w = weights
            .get(name)
            .ok_or_else(|| Error::Config(format!("no loss weight for head `{name}`")))?;
        Ok(acc + w * loss)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw(v: [f64; 7]) -> Tensor<f64> {
        Tensor::from_slice(&v).unwrap()
    }

    #[test]
    fn exact_prediction_is_zero() {
        let gt = Pose::from_axis_angle([0.1, 0.2, -0.3], [0.05, 0.0, 0.1]);
        let l = pose_loss(&raw(gt.to_raw()), &gt, 3.0).unwrap();
        assert_eq!(l.total, 0.0);
        assert!(l.grad.data().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn hand_case() {
        let gt = Pose::identity();
        let l = pose_loss(&raw([3.0, 4.0, 0.0, 1.5, 0.0, 0.0, 0.0]), &gt, 2.0).unwrap();
        assert_eq!(l.trans, 5.0);
        assert_eq!(l.rot, 0.5);
        assert_eq!(l.total, 6.0);
    }

    #[test]
    fn beta_scales_only_rotation() {
        let gt = Pose::from_axis_angle([0.0, 0.1, 0.0], [0.3, 0.0, 0.0]);
        let p = raw([0.2, -0.1, 0.4, 0.9, 0.1, 0.2, 0.0]);
        let a = pose_loss(&p, &gt, 1.0).unwrap();
        let b = pose_loss(&p, &gt, 2.0).unwrap();
        assert!((b.total - a.total - a.rot).abs() < 1e-15);
    }

    #[test]
    fn sign_alignment() {
        let gt = Pose::from_axis_angle([0.0; 3], [0.0, 2.0, 0.0]);
        let flipped = Pose {
            rotation: gt.rotation.map(|c| -c),
            ..gt
        };
        let p = raw([0.1, 0.0, 0.0, -0.5, 0.1, -0.8, 0.0]);
        let a = pose_loss(&p, &gt, 1.5).unwrap();
        let b = pose_loss(&p, &flipped, 1.5).unwrap();
        assert_eq!(a.total, b.total);
        assert_eq!(a.grad, b.grad);
    }

    #[test]
    fn aggregation() {
        let heads = BTreeMap::from([("a".to_string(), 2.0), ("b".to_string(), 3.0)]);
        let w = BTreeMap::from([("a".to_string(), 1.0), ("b".to_string(), 2.0)]);
        assert_eq!(aggregate_loss(&heads, &w).unwrap(), 8.0);
        let zero = BTreeMap::from([("a".to_string(), 0.0), ("b".to_string(), 0.0)]);
        assert_eq!(aggregate_loss(&heads, &zero).unwrap(), 0.0);
        let single = BTreeMap::from([("a".to_string(), 2.5)]);
        let one = BTreeMap::from([("a".to_string(), 1.0)]);
        assert_eq!(aggregate_loss(&single, &one).unwrap(), 2.5);
        assert!(matches!(
            aggregate_loss(&heads, &one),
            Err(Error::Config(_))
        ));
    }
}
