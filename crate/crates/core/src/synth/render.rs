//! Ray-cast Lambertian renderer for a textured tube lit by a point light at
//! the camera center.

use nalgebra::{Point3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::noise::fractal_noise;
use crate::error::{Error, Result};
use crate::pose::Pose;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    /// Nominal tube radius, meters.
    pub radius: f64,
    /// Relative amplitude of the axial radius wave.
    pub radius_wave: f64,
    /// Wavelength of the axial radius wave, meters.
    pub radius_wavelength: f64,
    /// Wall relief, meters.
    pub bump_amplitude: f64,
    pub texture_seed: u64,
    /// 1 spans albedo over `[0.4, 1]`; 0 gives a uniform wall.
    pub texture_amplitude: f64,
    /// Texture feature size, meters.
    pub texture_scale: f64,
    pub height: usize,
    pub width: usize,
    /// Pixels.
    pub focal: f64,
    pub cx: f64,
    pub cy: f64,
    /// `k` in `1 / (1 + k d^2)`.
    pub falloff: f64,
    /// Sensor gain applied before clipping to `[0, 1]`.
    pub exposure: f64,
    /// Per-channel wall color.
    pub tint: [f64; 3],
    /// Rays that travel further without hitting report this depth.
    pub max_range: f64,
}

impl SceneConfig {
    pub fn new(height: usize, width: usize, texture_seed: u64) -> Self {
        let focal = 0.8 * width as f64;
        SceneConfig {
            radius: 0.2,
            radius_wave: 0.1,
            radius_wavelength: 1.5,
            bump_amplitude: 0.004,
            texture_seed,
            texture_amplitude: 1.0,
            texture_scale: 0.03,
            height,
            width,
            focal,
            cx: width as f64 / 2.0,
            cy: height as f64 / 2.0,
            falloff: 10.0,
            exposure: 2.5,
            tint: [1.0, 0.65, 0.55],
            max_range: 10.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let lowest = self.radius * (1.0 - self.radius_wave) - self.bump_amplitude;
        if !(lowest > 0.0) {
            return Err(Error::Config(format!(
                "tube radius reaches {lowest} m; must stay positive"
            )));
        }
        if !(self.focal > 0.0 && self.cx > 0.0 && self.cy > 0.0) || self.height == 0 || self.width == 0 {
            return Err(Error::Config("intrinsics and image size must be positive".into()));
        }
        if !(self.falloff >= 0.0 && self.radius_wavelength > 0.0 && self.texture_scale > 0.0) {
            return Err(Error::Config("falloff, wavelength and texture scale must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.texture_amplitude) {
            return Err(Error::Config("texture amplitude must lie in [0, 1]".into()));
        }
        if !(self.max_range > 0.0 && self.exposure > 0.0) {
            return Err(Error::Config("max range and exposure must be positive".into()));
        }
        Ok(())
    }

    /// Wall distance from the axis at axial position `z` and angle `theta`.
    pub fn wall_radius(&self, theta: f64, z: f64) -> f64 {
        let base = self.radius
            * (1.0 + self.radius_wave * (std::f64::consts::TAU * z / self.radius_wavelength).sin());
        if self.bump_amplitude == 0.0 {
            return base;
        }
        let p = [self.radius * theta.cos(), self.radius * theta.sin(), z];
        let n = fractal_noise(self.texture_seed ^ 0xB0B, p, 4.0 * self.texture_scale, 2);
        base + self.bump_amplitude * (2.0 * n - 1.0)
    }

    fn bounds(&self) -> (f64, f64) {
        (
            self.radius * (1.0 - self.radius_wave) - self.bump_amplitude,
            self.radius * (1.0 + self.radius_wave) + self.bump_amplitude,
        )
    }

    pub fn albedo(&self, p: [f64; 3]) -> f64 {
        // stretched so blotches read as patches, not a faint haze
        let n = fractal_noise(self.texture_seed, p, self.texture_scale, 3);
        let t = (0.5 + 2.5 * (n - 0.5)).clamp(0.0, 1.0);
        1.0 - 0.6 * self.texture_amplitude * t * t * (3.0 - 2.0 * t)
    }

    fn signed_gap(&self, p: &Point3<f64>) -> f64 {
        let rho = p.x.hypot(p.y);
        rho - self.wall_radius(p.y.atan2(p.x), p.z)
    }

    /// Inward unit normal at a wall point, from finite differences of the
    /// implicit surface `rho - r(theta, z)`.
    fn normal(&self, p: &Point3<f64>) -> Vector3<f64> {
        let h = 1e-5;
        let g = |q: Point3<f64>| self.signed_gap(&q);
        let grad = Vector3::new(
            g(p + Vector3::x() * h) - g(p - Vector3::x() * h),
            g(p + Vector3::y() * h) - g(p - Vector3::y() * h),
            g(p + Vector3::z() * h) - g(p - Vector3::z() * h),
        );
        -grad.normalize()
    }

    /// Distance along a unit ray to the first wall hit.
    fn intersect(&self, origin: &Point3<f64>, dir: &Vector3<f64>) -> Option<f64> {
        let (lo, hi) = self.bounds();
        let dxy = dir.x.hypot(dir.y);
        if dxy < 1e-9 {
            return None;
        }
        // exit distances from the axis-aligned cylinders bounding the wall
        let exit = |r: f64| -> f64 {
            let a = dir.x * dir.x + dir.y * dir.y;
            let b = origin.x * dir.x + origin.y * dir.y;
            let c = origin.x * origin.x + origin.y * origin.y - r * r;
            let disc = (b * b - a * c).max(0.0);
            ((-b + disc.sqrt()) / a).max(0.0)
        };
        // padded so coincident bounds still bracket the wall
        let (start, end) = (exit(lo), (exit(hi) + 1e-6).min(self.max_range));
        if start > end {
            return None;
        }
        let step = 0.002 / dxy.max(0.05);
        let at = |s: f64| self.signed_gap(&(origin + dir * s));
        let mut a = start;
        if at(a) >= 0.0 {
            return Some(a);
        }
        while a < end {
            let b = (a + step).min(end);
            let fb = at(b);
            if fb >= 0.0 {
                let (mut lo_s, mut hi_s) = (a, b);
                for _ in 0..40 {
                    let mid = 0.5 * (lo_s + hi_s);
                    if at(mid) >= 0.0 {
                        hi_s = mid;
                    } else {
                        lo_s = mid;
                    }
                }
                return Some(hi_s);
            }
            a = b;
        }
        None
    }
}

/// Renders `[3, H, W]` RGB in `[0, 1]` and `[H, W]` camera-frame depth
/// (meters along the optical axis).
pub fn render_frame(pose: &Pose, scene: &SceneConfig) -> Result<(Tensor<f64>, Tensor<f64>)> {
    scene.validate()?;
    let origin = Point3::from(pose.translation);
    let clearance = -scene.signed_gap(&origin);
    if !(clearance > 1e-3) {
        return Err(Error::Geometry(format!(
            "camera at {:?} is outside or touching the tube wall",
            pose.translation
        )));
    }
    let rot = pose.to_isometry().rotation;
    let (h, w) = (scene.height, scene.width);
    let pixels: Vec<([f64; 3], f64)> = (0..h * w)
        .into_par_iter()
        .map(|i| {
            let (v, u) = ((i / w) as f64 + 0.5, (i % w) as f64 + 0.5);
            let cam = Vector3::new((u - scene.cx) / scene.focal, (v - scene.cy) / scene.focal, 1.0)
                .normalize();
            let dir = rot * cam;
            match scene.intersect(&origin, &dir) {
                None => ([0.0; 3], scene.max_range),
                Some(s) => {
                    let p = origin + dir * s;
                    let n = scene.normal(&p);
                    let shade = scene.exposure * n.dot(&(-dir)).max(0.0) / (1.0 + scene.falloff * s * s);
                    let albedo = scene.albedo([p.x, p.y, p.z]);
                    let rgb = scene.tint.map(|t| (t * albedo * shade).clamp(0.0, 1.0));
                    (rgb, s * cam.z)
                }
            }
        })
        .collect();
    let plane = h * w;
    let mut rgb = vec![0.0; 3 * plane];
    let mut depth = vec![0.0; plane];
    for (i, (c, d)) in pixels.into_iter().enumerate() {
        for k in 0..3 {
            rgb[k * plane + i] = c[k];
        }
        depth[i] = d;
    }
    Ok((Tensor::new(&[3, h, w], rgb)?, Tensor::new(&[h, w], depth)?))
}

/// Orthographic Lambertian hemisphere of radius `0.4 * size` pixels on a flat
/// background, lit by a distant light. Returns intensity and depth (negated
/// height, pixel units).
pub fn render_hemisphere(size: usize, light: [f64; 3], albedo: f64) -> (Tensor<f64>, Tensor<f64>) {
    let r = 0.4 * size as f64;
    let c = (size as f64 - 1.0) / 2.0;
    let n = (light[0] * light[0] + light[1] * light[1] + light[2] * light[2]).sqrt();
    let l = light.map(|v| v / n);
    let mut intensity = Vec::with_capacity(size * size);
    let mut depth = Vec::with_capacity(size * size);
    for y in 0..size {
        for x in 0..size {
            let (dx, dy) = (x as f64 - c, y as f64 - c);
            let d2 = dx * dx + dy * dy;
            let (z, normal) = if d2 < r * r {
                let z = (r * r - d2).sqrt();
                (z, [dx / r, dy / r, z / r])
            } else {
                (0.0, [0.0, 0.0, 1.0])
            };
            let ndotl = normal[0] * l[0] + normal[1] * l[1] + normal[2] * l[2];
            intensity.push(albedo * ndotl.max(0.0));
            depth.push(-z);
        }
    }
    (
        Tensor::new(&[size, size], intensity).expect("square"),
        Tensor::new(&[size, size], depth).expect("square"),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn facing_wall_at_unit_distance_is_albedo() {
        // camera on the axis of a 1 m tube, looking straight at the wall
        let scene = SceneConfig {
            radius: 1.0,
            radius_wave: 0.0,
            bump_amplitude: 0.0,
            texture_amplitude: 0.0,
            falloff: 0.0,
            exposure: 1.0,
            tint: [1.0; 3],
            height: 1,
            width: 1,
            focal: 1.0,
            cx: 0.5,
            cy: 0.5,
            ..SceneConfig::new(1, 1, 0)
        };
        let pose = Pose::from_axis_angle([0.0; 3], [0.0, std::f64::consts::FRAC_PI_2, 0.0]);
        let (rgb, depth) = render_frame(&pose, &scene).unwrap();
        for v in rgb.data() {
            assert!((v - 1.0).abs() < 1e-6, "{v}");
        }
        assert!((depth.data()[0] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn radial_profile_is_monotone_without_texture() {
        let scene = SceneConfig {
            radius_wave: 0.0,
            bump_amplitude: 0.0,
            texture_amplitude: 0.0,
            ..SceneConfig::new(33, 33, 0)
        };
        let (rgb, depth) = render_frame(&Pose::identity(), &scene).unwrap();
        // moving from the border toward the center looks further down the tube
        let row: Vec<f64> = (0..=16).map(|x| rgb.get(&[0, 16, x])).collect();
        let drow: Vec<f64> = (0..=16).map(|x| depth.get(&[16, x])).collect();
        for k in 1..row.len() {
            assert!(row[k] <= row[k - 1] + 1e-12, "{row:?}");
            assert!(drow[k] >= drow[k - 1] - 1e-12);
        }
    }

    #[test]
    fn camera_outside_is_geometry_error() {
        let scene = SceneConfig::new(8, 8, 0);
        let pose = Pose::new([0.5, 0.0, 0.0], [1.0, 0.0, 0.0, 0.0]).unwrap();
        assert!(matches!(render_frame(&pose, &scene), Err(Error::Geometry(_))));
    }

    #[test]
    fn hemisphere_center_is_brightest() {
        let (i, d) = render_hemisphere(32, [0.0, 0.0, 1.0], 1.0);
        assert!((i.get(&[16, 16]) - 0.998).abs() < 0.01);
        assert!(d.get(&[16, 16]) < d.get(&[16, 24]));
        assert_eq!(i.get(&[0, 0]), 1.0);
    }
}
