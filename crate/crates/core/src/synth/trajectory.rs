//! Camera paths inside the tube: a Catmull-Rom spline for position walked at
//! a class-dependent speed profile, and an integrated body angular velocity
//! for orientation. The tube axis is world +z; the camera starts looking down it.

use nalgebra::{UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pose::Pose;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrajectoryClass {
    /// Slow, smooth translation and rotation.
    Incremental,
    /// Back-and-forth sweeps along the tube that revisit earlier positions.
    ScanWithLoops,
    /// Jerky speed, abrupt turns and rotational jitter.
    Sharp,
}

impl std::str::FromStr for TrajectoryClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "incremental" => Ok(TrajectoryClass::Incremental),
            "scan-with-loops" | "loops" => Ok(TrajectoryClass::ScanWithLoops),
            "sharp" => Ok(TrajectoryClass::Sharp),
            other => Err(Error::Config(format!("unknown trajectory class `{other}`"))),
        }
    }
}

impl TrajectoryClass {
    pub fn as_str(self) -> &'static str {
        match self {
            TrajectoryClass::Incremental => "incremental",
            TrajectoryClass::ScanWithLoops => "scan-with-loops",
            TrajectoryClass::Sharp => "sharp",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySpec {
    pub class: TrajectoryClass,
    /// Total path length, meters.
    pub length: f64,
    pub frames: usize,
    /// Meters per frame.
    pub max_speed: f64,
    /// Radians per frame.
    pub max_angular_speed: f64,
    /// Largest distance of spline knots from the tube axis, meters.
    pub max_lateral: f64,
    pub seed: u64,
}

impl TrajectorySpec {
    /// Desk defaults: up to 5 cm and 0.06 rad per frame, mean speed half the
    /// maximum, knots within 6 cm of the axis.
    pub fn new(class: TrajectoryClass, frames: usize, seed: u64) -> Self {
        let max_speed = 0.05;
        TrajectorySpec {
            class,
            length: 0.5 * max_speed * frames.saturating_sub(1) as f64,
            frames,
            max_speed,
            max_angular_speed: 0.06,
            max_lateral: 0.06,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.frames < 2 {
            return Err(Error::Config(format!("{} frames; need at least 2", self.frames)));
        }
        let finite_nonneg = |v: f64| v.is_finite() && v >= 0.0;
        if ![self.length, self.max_speed, self.max_angular_speed, self.max_lateral]
            .into_iter()
            .all(finite_nonneg)
        {
            return Err(Error::Config(
                "length, speeds and lateral extent must be finite and non-negative".into(),
            ));
        }
        let reachable = self.max_speed * (self.frames - 1) as f64;
        if self.length > reachable * (1.0 + 1e-12) {
            return Err(Error::Config(format!(
                "path of {} m cannot be covered in {} frames at {} m/frame",
                self.length,
                self.frames - 1,
                self.max_speed
            )));
        }
        Ok(())
    }
}

fn catmull_rom(p0: [f64; 3], p1: [f64; 3], p2: [f64; 3], p3: [f64; 3], t: f64) -> [f64; 3] {
    let (t2, t3) = (t * t, t * t * t);
    std::array::from_fn(|k| {
        0.5 * (2.0 * p1[k]
            + (p2[k] - p0[k]) * t
            + (2.0 * p0[k] - 5.0 * p1[k] + 4.0 * p2[k] - p3[k]) * t2
            + (3.0 * p1[k] - p0[k] - 3.0 * p2[k] + p3[k]) * t3)
    })
}

/// Spline through `knots` (endpoints repeated), sampled `per_segment` times
/// per span.
fn sample_spline(knots: &[[f64; 3]], per_segment: usize) -> Vec<[f64; 3]> {
    let n = knots.len();
    let at = |i: isize| knots[i.clamp(0, n as isize - 1) as usize];
    let mut out = Vec::with_capacity(n * per_segment + 1);
    for i in 0..n.saturating_sub(1) as isize {
        for s in 0..per_segment {
            let t = s as f64 / per_segment as f64;
            out.push(catmull_rom(at(i - 1), at(i), at(i + 1), at(i + 2), t));
        }
    }
    out.push(knots[n - 1]);
    out
}

fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

fn random_in_disc(rng: &mut ChaCha8Rng, radius: f64) -> [f64; 2] {
    let r = radius * rng.random::<f64>().sqrt();
    let a = rng.random::<f64>() * std::f64::consts::TAU;
    [r * a.cos(), r * a.sin()]
}

fn random_in_ball(rng: &mut ChaCha8Rng, radius: f64) -> Vector3<f64> {
    loop {
        let v = Vector3::new(
            rng.random::<f64>() * 2.0 - 1.0,
            rng.random::<f64>() * 2.0 - 1.0,
            rng.random::<f64>() * 2.0 - 1.0,
        );
        if v.norm_squared() <= 1.0 {
            return v * radius;
        }
    }
}

/// Knots along the tube until the sampled spline is at least `needed` long.
fn position_path(spec: &TrajectorySpec, rng: &mut ChaCha8Rng, needed: f64) -> Vec<[f64; 3]> {
    let lat = spec.max_lateral;
    let (spacing, pattern): (f64, &[i32]) = match spec.class {
        TrajectoryClass::Incremental => (0.3, &[1]),
        TrajectoryClass::Sharp => (0.15, &[1]),
        // ten knots forward, seven back
        TrajectoryClass::ScanWithLoops => (0.1, &[1, 1, 1, 1, 1, 1, 1, 1, 1, 1, -1, -1, -1, -1, -1, -1, -1]),
    };
    let mut knots = vec![[0.0, 0.0, 0.0]];
    let mut xy = [0.0, 0.0];
    let mut z = 0.0;
    let mut k = 0usize;
    loop {
        xy = match spec.class {
            TrajectoryClass::Sharp => random_in_disc(rng, lat),
            _ => {
                let step = random_in_disc(rng, 0.5 * lat);
                let mut next = [xy[0] + step[0], xy[1] + step[1]];
                let r = (next[0] * next[0] + next[1] * next[1]).sqrt();
                if r > lat {
                    next = next.map(|v| v * lat / r);
                }
                next
            }
        };
        z += spacing * pattern[k % pattern.len()] as f64;
        k += 1;
        knots.push([xy[0], xy[1], z]);
        let dense = sample_spline(&knots, 32);
        let len: f64 = dense.windows(2).map(|w| dist(w[0], w[1])).sum();
        if len >= needed + 2.0 * spacing || k > 100_000 {
            return dense;
        }
    }
}

/// Relative speed weights per step, in `(0, 1]`.
fn speed_profile(spec: &TrajectorySpec, rng: &mut ChaCha8Rng, steps: usize) -> Vec<f64> {
    match spec.class {
        TrajectoryClass::Sharp => {
            let mut out = Vec::with_capacity(steps);
            while out.len() < steps {
                let v = 0.1 + 0.9 * rng.random::<f64>();
                let hold = 1 + (rng.random::<f64>() * 2.0) as usize;
                out.extend(std::iter::repeat_n(v, hold));
            }
            out.truncate(steps);
            out
        }
        _ => {
            let every = if spec.class == TrajectoryClass::Incremental { 30 } else { 20 };
            let knots: Vec<f64> = (0..steps / every + 3)
                .map(|_| 0.6 + 0.4 * rng.random::<f64>())
                .collect();
            (0..steps)
                .map(|t| {
                    let i = t / every;
                    let u = (t % every) as f64 / every as f64;
                    let p = |j: usize| [knots[j.min(knots.len() - 1)], 0.0, 0.0];
                    let prev = if i == 0 { p(0) } else { p(i - 1) };
                    catmull_rom(prev, p(i), p(i + 1), p(i + 2), u)[0].clamp(0.05, 1.0)
                })
                .collect()
        }
    }
}

/// Scales `weights` to sum to `total` with no entry above `cap`.
fn fill_steps(weights: &[f64], total: f64, cap: f64) -> Vec<f64> {
    let mut out = vec![0.0; weights.len()];
    if total <= 0.0 {
        return out;
    }
    let mut capped = vec![false; weights.len()];
    loop {
        let fixed = capped.iter().filter(|&&c| c).count() as f64 * cap;
        let free: f64 = weights
            .iter()
            .zip(&capped)
            .filter(|(_, &c)| !c)
            .map(|(w, _)| w)
            .sum();
        let scale = if free > 0.0 { (total - fixed).max(0.0) / free } else { 0.0 };
        let mut changed = false;
        for k in 0..weights.len() {
            out[k] = if capped[k] { cap } else { weights[k] * scale };
            if !capped[k] && out[k] > cap {
                capped[k] = true;
                changed = true;
            }
        }
        if !changed {
            return out.into_iter().map(|v: f64| v.min(cap)).collect();
        }
    }
}

fn walk(dense: &[[f64; 3]], steps: &[f64]) -> Vec<[f64; 3]> {
    let mut cum = vec![0.0];
    for w in dense.windows(2) {
        cum.push(cum.last().unwrap() + dist(w[0], w[1]));
    }
    let mut s = 0.0;
    let mut out = vec![dense[0]];
    for &d in steps {
        s += d;
        let i = match cum.binary_search_by(|c| c.total_cmp(&s)) {
            Ok(i) => i.min(dense.len() - 2),
            Err(i) => i.clamp(1, dense.len() - 1) - 1,
        };
        let span = cum[i + 1] - cum[i];
        let t = if span > 0.0 { ((s - cum[i]) / span).clamp(0.0, 1.0) } else { 0.0 };
        out.push(std::array::from_fn(|k| dense[i][k] + t * (dense[i + 1][k] - dense[i][k])));
    }
    out
}

/// Commanded body angular velocity per step, before restoring and clamping.
fn angular_command(spec: &TrajectorySpec, rng: &mut ChaCha8Rng, steps: usize) -> Vec<Vector3<f64>> {
    let w = spec.max_angular_speed;
    match spec.class {
        TrajectoryClass::Sharp => {
            let mut out = Vec::with_capacity(steps);
            let mut turn = Vector3::zeros();
            let mut remaining = 0usize;
            for _ in 0..steps {
                if remaining == 0 && rng.random::<f64>() < 0.08 {
                    let a = rng.random::<f64>() * std::f64::consts::TAU;
                    let axis = Vector3::new(a.cos(), a.sin(), 0.3 * (rng.random::<f64>() - 0.5));
                    turn = axis.normalize() * w * (0.5 + 0.5 * rng.random::<f64>());
                    remaining = 3 + (rng.random::<f64>() * 6.0) as usize;
                }
                let jitter = random_in_ball(rng, 0.6 * w);
                out.push(if remaining > 0 { turn + jitter } else { jitter });
                remaining = remaining.saturating_sub(1);
            }
            out
        }
        _ => {
            let every = if spec.class == TrajectoryClass::Incremental { 25 } else { 20 };
            let knots: Vec<Vector3<f64>> = (0..steps / every + 3)
                .map(|_| random_in_ball(rng, 0.5 * w))
                .collect();
            let arr = |j: usize| {
                let v = knots[j.min(knots.len() - 1)];
                [v.x, v.y, v.z]
            };
            (0..steps)
                .map(|t| {
                    let i = t / every;
                    let u = (t % every) as f64 / every as f64;
                    let prev = if i == 0 { arr(0) } else { arr(i - 1) };
                    Vector3::from(catmull_rom(prev, arr(i), arr(i + 1), arr(i + 2), u))
                })
                .collect()
        }
    }
}

/// Absolute camera-to-world poses, one per frame.
pub fn generate_trajectory(spec: &TrajectorySpec) -> Result<Vec<Pose>> {
    spec.validate()?;
    let steps = spec.frames - 1;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let dense = position_path(spec, &mut rng, spec.length);
    let weights = speed_profile(spec, &mut rng, steps);
    let step_len = fill_steps(&weights, spec.length, spec.max_speed);
    let positions = walk(&dense, &step_len);

    let command = angular_command(spec, &mut rng, steps);
    let limit = spec.max_angular_speed * (1.0 - 1e-9);
    let mut q = UnitQuaternion::<f64>::identity();
    let mut rotations = vec![q];
    for cmd in command {
        let mut omega = cmd - 0.08 * q.scaled_axis();
        if omega.norm() > limit {
            omega *= limit / omega.norm();
        }
        q *= UnitQuaternion::from_scaled_axis(omega);
        rotations.push(q);
    }
    positions
        .iter()
        .zip(&rotations)
        .map(|(p, r)| {
            let c = r.quaternion().coords;
            Pose::new(*p, [c.w, c.x, c.y, c.z])
        })
        .collect()
}

/// Loop closures: frame `j` closes on frame `i` when they lie within
/// `2 * radius` of each other after at least `4 * radius` of path between
/// them. Closures count separately once the path has moved `4 * radius` on.
pub fn count_revisits(poses: &[Pose], radius: f64) -> usize {
    let mut cum = vec![0.0];
    for w in poses.windows(2) {
        cum.push(cum.last().unwrap() + dist(w[0].translation, w[1].translation));
    }
    let mut count = 0;
    let mut last_event: Option<usize> = None;
    for j in 0..poses.len() {
        if let Some(e) = last_event {
            if cum[j] - cum[e] < 4.0 * radius {
                continue;
            }
        }
        let closes = (0..j).any(|i| {
            cum[j] - cum[i] >= 4.0 * radius
                && dist(poses[i].translation, poses[j].translation) < 2.0 * radius
        });
        if closes {
            count += 1;
            last_event = Some(j);
        }
    }
    count
}
