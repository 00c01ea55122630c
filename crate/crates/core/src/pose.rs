//! Rigid poses as translation + unit quaternion `(w, x, y, z)`.

use nalgebra::{Isometry3, Quaternion, Translation3, UnitQuaternion, Vector3};

use crate::error::{Error, Result};

const MIN_QUAT_NORM: f64 = 1e-8;

/// Picks the representative of `{q, -q}` with `w > 0`; when `w == 0` the first
/// nonzero of `(x, y, z)` is made positive.
pub fn canonicalize_quaternion(q: [f64; 4]) -> [f64; 4] {
    let sign = q
        .iter()
        .copied()
        .find(|&c| c != 0.0)
        .map_or(1.0, |c| c.signum());
    if sign < 0.0 {
        q.map(|c| -c)
    } else {
        q
    }
}

/// `min(|a - b|, |a + b|)`, the distance between two rotations on the double cover.
pub fn quaternion_distance(a: [f64; 4], b: [f64; 4]) -> f64 {
    let diff: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum();
    let sum: f64 = a.iter().zip(&b).map(|(x, y)| (x + y).powi(2)).sum();
    diff.min(sum).sqrt()
}

/// Rigid transform. Absolute poses map camera to world; relative poses map
/// frame `k` into frame `k-1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    /// Meters.
    pub translation: [f64; 3],
    /// Unit quaternion `(w, x, y, z)`, canonicalized.
    pub rotation: [f64; 4],
}

/// Motion between two consecutive frames; output of the regressor.
pub type RelativePose = Pose;

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Pose {
            translation: [0.0; 3],
            rotation: [1.0, 0.0, 0.0, 0.0],
        }
    }

    /// Normalizes and canonicalizes `rotation`.
    pub fn new(translation: [f64; 3], rotation: [f64; 4]) -> Result<Self> {
        if !translation.iter().chain(&rotation).all(|v| v.is_finite()) {
            return Err(Error::Numeric(format!(
                "non-finite pose {translation:?} {rotation:?}"
            )));
        }
        let n = rotation.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n < MIN_QUAT_NORM {
            return Err(Error::DegenerateRotation(n));
        }
        Ok(Pose {
            translation,
            rotation: canonicalize_quaternion(rotation.map(|c| c / n)),
        })
    }

    /// Splits 7 raw regressor outputs `(tx, ty, tz, qw, qx, qy, qz)` into a pose.
    pub fn from_raw(raw: &[f64]) -> Result<Self> {
        if raw.len() != 7 {
            return Err(Error::Dimension(format!(
                "raw pose has {} values, expected 7",
                raw.len()
            )));
        }
        Pose::new([raw[0], raw[1], raw[2]], [raw[3], raw[4], raw[5], raw[6]])
    }

    pub fn to_raw(&self) -> [f64; 7] {
        let [tx, ty, tz] = self.translation;
        let [w, x, y, z] = self.rotation;
        [tx, ty, tz, w, x, y, z]
    }

    pub fn from_axis_angle(translation: [f64; 3], axis_angle: [f64; 3]) -> Self {
        let q = UnitQuaternion::from_scaled_axis(Vector3::from(axis_angle));
        Self::from_isometry(&Isometry3::from_parts(Translation3::from(translation), q))
    }

    pub fn to_isometry(&self) -> Isometry3<f64> {
        let [w, x, y, z] = self.rotation;
        Isometry3::from_parts(
            Translation3::from(self.translation),
            UnitQuaternion::new_normalize(Quaternion::new(w, x, y, z)),
        )
    }

    pub fn from_isometry(iso: &Isometry3<f64>) -> Self {
        let q = UnitQuaternion::new_normalize(*iso.rotation.quaternion());
        let c = q.quaternion().coords; // (i, j, k, w)
        let t = iso.translation.vector;
        Pose {
            translation: [t.x, t.y, t.z],
            rotation: canonicalize_quaternion([c.w, c.x, c.y, c.z]),
        }
    }

    /// `self ∘ other`: apply `other` first, then `self`.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose::from_isometry(&(self.to_isometry() * other.to_isometry()))
    }

    pub fn inverse(&self) -> Pose {
        Pose::from_isometry(&self.to_isometry().inverse())
    }

    /// Motion taking `self` to `later`: `self⁻¹ ∘ later`.
    pub fn between(&self, later: &Pose) -> Pose {
        Pose::from_isometry(&(self.to_isometry().inverse() * later.to_isometry()))
    }

    /// Geodesic rotation angle in radians, in `[0, π]`.
    pub fn rotation_angle(&self) -> f64 {
        let w = self.rotation[0].abs().min(1.0);
        let v = (1.0 - w * w).max(0.0).sqrt();
        2.0 * v.atan2(w)
    }

    pub fn translation_norm(&self) -> f64 {
        self.translation.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_unit(&self, tol: f64) -> bool {
        let n = self.rotation.iter().map(|v| v * v).sum::<f64>().sqrt();
        (n - 1.0).abs() <= tol
    }
}

/// Timestamped absolute poses.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// Seconds, strictly increasing.
    pub timestamps: Vec<f64>,
    pub poses: Vec<Pose>,
}

pub const POSES_HEADER: &str = "timestamp,tx,ty,tz,qw,qx,qy,qz";

impl Trajectory {
    pub fn new(timestamps: Vec<f64>, poses: Vec<Pose>) -> Result<Self> {
        if timestamps.len() != poses.len() {
            return Err(Error::Validation(format!(
                "{} timestamps for {} poses",
                timestamps.len(),
                poses.len()
            )));
        }
        if let Some(w) = timestamps.windows(2).find(|w| !(w[1] > w[0])) {
            return Err(Error::Validation(format!(
                "timestamps not strictly increasing at {} -> {}",
                w[0], w[1]
            )));
        }
        Ok(Trajectory { timestamps, poses })
    }

    /// Timestamps `k * interval`.
    pub fn uniform(poses: Vec<Pose>, interval: f64) -> Result<Self> {
        let ts = (0..poses.len()).map(|k| k as f64 * interval).collect();
        Trajectory::new(ts, poses)
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    /// Shortest round-trip float formatting, so parsing restores every value.
    pub fn to_csv(&self) -> String {
        let mut s = String::from(POSES_HEADER);
        s.push('\n');
        for (t, p) in self.timestamps.iter().zip(&self.poses) {
            let [tx, ty, tz, qw, qx, qy, qz] = p.to_raw();
            s.push_str(&format!("{t},{tx},{ty},{tz},{qw},{qx},{qy},{qz}\n"));
        }
        s
    }

    /// Quaternions are read as written; rows must already be unit and
    /// canonical to within 1e-6.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some(POSES_HEADER) {
            return Err(Error::Validation(format!("pose file must start with `{POSES_HEADER}`")));
        }
        let (mut ts, mut poses) = (Vec::new(), Vec::new());
        for (k, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let bad = |what: &str| Error::Validation(format!("pose row {}: {what}", k + 1));
            let v: Vec<f64> = line
                .split(',')
                .map(|f| f.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| bad("unparsable number"))?;
            if v.len() != 8 {
                return Err(bad("expected 8 fields"));
            }
            let rotation = [v[4], v[5], v[6], v[7]];
            let p = Pose {
                translation: [v[1], v[2], v[3]],
                rotation,
            };
            if !p.is_unit(1e-6) || canonicalize_quaternion(rotation) != rotation {
                return Err(bad("quaternion is not unit and canonical"));
            }
            ts.push(v[0]);
            poses.push(p);
        }
        Trajectory::new(ts, poses)
    }

    pub fn relatives(&self) -> Vec<Pose> {
        relatives_from_absolute(&self.poses)
    }
}

/// Relative motions between consecutive absolute poses.
pub fn relatives_from_absolute(poses: &[Pose]) -> Vec<Pose> {
    poses.windows(2).map(|w| w[0].between(&w[1])).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn raw_identity() {
        assert_eq!(
            Pose::from_raw(&[0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0]).unwrap(),
            Pose::identity()
        );
    }

    #[test]
    fn zero_w_canonical_rule() {
        let p = Pose::from_raw(&[1.0, 2.0, 3.0, 0.0, 2.0, 0.0, 0.0]).unwrap();
        assert_eq!(p.translation, [1.0, 2.0, 3.0]);
        assert_eq!(p.rotation, [0.0, 1.0, 0.0, 0.0]);
        let p = Pose::from_raw(&[1.0, 2.0, 3.0, 0.0, -2.0, 0.0, 0.0]).unwrap();
        assert_eq!(p.rotation, [0.0, 1.0, 0.0, 0.0]);
        let p = Pose::from_raw(&[0.0, 0.0, 0.0, 0.0, 0.0, -3.0, 4.0]).unwrap();
        assert_eq!(p.rotation, [0.0, 0.0, 0.6, -0.8]);
    }

    #[test]
    fn sign_invariance_and_idempotence() {
        let raw = [0.1, -0.2, 0.3, -0.4, 0.5, 0.1, -0.7];
        let neg = [0.1, -0.2, 0.3, 0.4, -0.5, -0.1, 0.7];
        let a = Pose::from_raw(&raw).unwrap();
        let b = Pose::from_raw(&neg).unwrap();
        assert_eq!(a, b);
        assert!(a.rotation[0] >= 0.0);
        assert_eq!(Pose::from_raw(&a.to_raw()).unwrap(), a);
    }

    #[test]
    fn degenerate_rotation() {
        assert!(matches!(
            Pose::from_raw(&[0.0, 0.0, 0.0, 1e-9, 0.0, 0.0, 0.0]),
            Err(Error::DegenerateRotation(_))
        ));
    }

    #[test]
    fn compose_and_between_are_inverse() {
        let a = Pose::from_axis_angle([1.0, -2.0, 0.5], [0.1, 0.2, -0.3]);
        let d = Pose::from_axis_angle([0.3, 0.0, -0.1], [-0.05, 0.4, 0.02]);
        let b = a.compose(&d);
        let back = a.between(&b);
        for i in 0..3 {
            assert_relative_eq!(back.translation[i], d.translation[i], epsilon = 1e-12);
        }
        assert!(quaternion_distance(back.rotation, d.rotation) < 1e-12);
        assert_relative_eq!(d.rotation_angle(), Vector3::new(-0.05, 0.4, 0.02).norm(), epsilon = 1e-12);
    }

    #[test]
    fn trajectory_csv_round_trip_is_exact() {
        let poses: Vec<Pose> = (0..5)
            .map(|k| Pose::from_axis_angle([0.1 * k as f64, 1.0 / 3.0, -0.2], [0.01 * k as f64, 0.3, 0.0]))
            .collect();
        let traj = Trajectory::uniform(poses, 0.1).unwrap();
        let text = traj.to_csv();
        let back = Trajectory::from_csv(&text).unwrap();
        assert_eq!(back, traj);
        assert_eq!(back.to_csv(), text);
        assert!(Trajectory::from_csv("t,x\n").is_err());
        assert!(Trajectory::new(vec![0.0, 0.0], vec![Pose::identity(); 2]).is_err());
    }
}
