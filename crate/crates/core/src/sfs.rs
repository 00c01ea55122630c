//! Shape from shading for single frames under a Lambertian, point-light model,
//! plus the RGB-D pair stacking that feeds the network.
//!
//! Depth is recovered as a height field `Z(x, y)` (pixel units, larger = closer
//! to the camera) under orthographic projection. Gauss-Seidel sweeps in
//! alternating raster orders solve, per pixel, the local reflectance equation
//!
//! ```text
//! E = albedo * max(0, (lz - p lx - q ly) / sqrt(1 + p² + q²))
//! ```
//!
//! for `Z` with a damped, bracketed Newton iteration, where `p`, `q` are
//! backward differences taken toward the upwind neighbour on each axis (the
//! higher of the two). Bright plateaus, where the surface faces the light, are
//! pinned at height 0 and everything else is reached by fronts descending from
//! them, so brightness maxima become height maxima.

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// Relative tolerance under which a pixel counts as facing the light.
const SINGULAR_TOLERANCE: f64 = 1e-2;
/// Intensities below this (after gain normalization) carry no shape information.
const MIN_SHADING: f64 = 1e-3;
const NEWTON_STEPS: usize = 40;

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SfsConfig {
    /// Unit vector toward the light, camera coordinates (z toward the viewer).
    pub light_direction: [f64; 3],
    pub albedo: f64,
    /// Maximum sweeps; stops early once four in a row change nothing.
    pub iterations: usize,
    /// Newton damping added to the slope of the local reflectance equation.
    pub epsilon: f64,
}

impl Default for SfsConfig {
    fn default() -> Self {
        SfsConfig {
            light_direction: [0.0, 0.0, 1.0],
            albedo: 1.0,
            iterations: 50,
            epsilon: 1e-2,
        }
    }
}

impl SfsConfig {
    pub fn validate(&self) -> Result<()> {
        let n = self.light_direction.iter().map(|v| v * v).sum::<f64>().sqrt();
        if (n - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "light direction must be unit length, |L| = {n}"
            )));
        }
        if self.light_direction[2] <= 0.0 {
            return Err(Error::Config(
                "light must be on the camera side of the image plane (lz > 0)".into(),
            ));
        }
        if !(self.albedo > 0.0 && self.albedo.is_finite()) {
            return Err(Error::Config(format!("albedo must be positive, got {}", self.albedo)));
        }
        if self.iterations == 0 {
            return Err(Error::Config("iterations must be at least 1".into()));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::Config(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        Ok(())
    }

    /// Same config with the light normalized; convenience for CLI input.
    pub fn with_light(mut self, light: [f64; 3]) -> Result<Self> {
        let n = light.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(n > 0.0) {
            return Err(Error::Config("light direction must be nonzero".into()));
        }
        self.light_direction = light.map(|v| v / n);
        Ok(self)
    }
}

/// Recovered relative depth.
#[derive(Debug, Clone)]
pub struct DepthMap {
    /// `[H, W]` depth (away from the camera), zero mean and unit standard
    /// deviation over valid pixels, zero elsewhere.
    pub values: Tensor<f64>,
    /// Row-major validity flags, `H * W` entries.
    pub valid_mask: Vec<bool>,
    /// Unnormalized height field the solver converged to, pixel units.
    pub height: Tensor<f64>,
    /// Factor that maps the solver's normalized shading back to input intensity.
    pub shading_gain: f64,
    /// True when the input carries no usable shading (flat or black).
    pub degenerate: bool,
}

impl DepthMap {
    fn flat(h: usize, w: usize) -> Self {
        DepthMap {
            values: Tensor::zeros(&[h, w]),
            valid_mask: vec![false; h * w],
            height: Tensor::zeros(&[h, w]),
            shading_gain: 0.0,
            degenerate: true,
        }
    }

    pub fn valid_count(&self) -> usize {
        self.valid_mask.iter().filter(|&&v| v).count()
    }
}

/// Rec. 601 luma of a `[3, H, W]` image with values in `[0, 1]`.
pub fn rgb_to_intensity<T: Real>(image: &Tensor<T>) -> Result<Tensor<T>> {
    let &[3, h, w] = image.shape() else {
        return Err(Error::Dimension(format!(
            "expected [3, H, W] image, got {:?}",
            image.shape()
        )));
    };
    if let Some(bad) = image
        .data()
        .iter()
        .find(|v| !(**v >= T::zero() && **v <= T::one()))
    {
        return Err(Error::Validation(format!(
            "pixel value {bad} outside [0, 1]"
        )));
    }
    let plane = h * w;
    let d = image.data();
    let (wr, wg, wb) = (
        T::from_f64_lossy(0.299),
        T::from_f64_lossy(0.587),
        T::from_f64_lossy(0.114),
    );
    let out = (0..plane)
        .map(|i| (wr * d[i] + wg * d[plane + i] + wb * d[2 * plane + i]).min(T::one()).max(T::zero()))
        .collect();
    Tensor::new(&[h, w], out)
}

/// Local reflectance model used by both the solver and the re-render oracle.
#[derive(Debug, Clone, Copy)]
struct Reflectance {
    light: [f64; 3],
    albedo: f64,
}

impl Reflectance {
    #[inline]
    fn value(&self, p: f64, q: f64) -> f64 {
        let [lx, ly, lz] = self.light;
        let a = (1.0 + p * p + q * q).sqrt();
        self.albedo * ((lz - p * lx - q * ly) / a).max(0.0)
    }
}

/// Lambertian shading of a height field under the solver's discretization:
/// on each axis the slope is taken toward the higher neighbour and only
/// descents count.
pub fn render_height_field(height: &Tensor<f64>, light: [f64; 3], albedo: f64) -> Result<Tensor<f64>> {
    let &[h, w] = height.shape() else {
        return Err(Error::Dimension(format!(
            "expected [H, W] height field, got {:?}",
            height.shape()
        )));
    };
    let refl = Reflectance { light, albedo };
    let z = height.data();
    Ok(Tensor::from_fn(&[h, w], |i| {
        let (y, x) = (i / w, i % w);
        let slope = |n: Option<(f64, f64)>| n.map_or(0.0, |(a, s)| s * (z[i] - a).min(0.0));
        let p = slope(upwind((x > 0).then(|| z[i - 1]), (x + 1 < w).then(|| z[i + 1])));
        let q = slope(upwind((y > 0).then(|| z[i - w]), (y + 1 < h).then(|| z[i + w])));
        refl.value(p, q)
    }))
}

/// Upwind neighbour on one axis: its height and the sign that turns
/// `Z - neighbour` into the forward derivative.
#[inline]
fn upwind(before: Option<f64>, after: Option<f64>) -> Option<(f64, f64)> {
    match (before, after) {
        (Some(b), Some(a)) if a > b => Some((a, -1.0)),
        (Some(b), _) => Some((b, 1.0)),
        (None, Some(a)) => Some((a, -1.0)),
        (None, None) => None,
    }
}

/// Bright plateaus touching the image border are usually background or a
/// wall seen head-on, so they are only pinned when no interior plateau exists.
/// Interior plateaus are the tops of bumps facing the camera.
fn interior_singular_regions(singular: &[bool], h: usize, w: usize) -> Vec<bool> {
    let mut label = vec![usize::MAX; h * w];
    let mut touches_border = Vec::new();
    let mut stack = Vec::new();
    for start in 0..h * w {
        if !singular[start] || label[start] != usize::MAX {
            continue;
        }
        let id = touches_border.len();
        let mut border = false;
        label[start] = id;
        stack.push(start);
        while let Some(i) = stack.pop() {
            let (y, x) = (i / w, i % w);
            border |= y == 0 || x == 0 || y + 1 == h || x + 1 == w;
            let neighbours = [
                (y > 0).then(|| i - w),
                (y + 1 < h).then(|| i + w),
                (x > 0).then(|| i - 1),
                (x + 1 < w).then(|| i + 1),
            ];
            for j in neighbours.into_iter().flatten() {
                if singular[j] && label[j] == usize::MAX {
                    label[j] = id;
                    stack.push(j);
                }
            }
        }
        touches_border.push(border);
    }
    if touches_border.iter().all(|&b| b) {
        return singular.to_vec();
    }
    label
        .iter()
        .map(|&l| l != usize::MAX && !touches_border[l])
        .collect()
}

/// Solves the local reflectance equation for one pixel's height given its
/// upwind neighbours. Returns `top` (the higher neighbour) when the shading
/// is at least as bright as a flat patch.
fn solve_pixel(
    target: f64,
    xn: Option<(f64, f64)>,
    yn: Option<(f64, f64)>,
    refl: &Reflectance,
    epsilon: f64,
) -> f64 {
    let top = match (xn, yn) {
        (Some((a, _)), Some((b, _))) => a.max(b),
        (Some((a, _)), None) | (None, Some((a, _))) => a,
        (None, None) => return 0.0,
    };
    // Only descending differences count (Godunov upwinding).
    let slopes = |z: f64| {
        let p = xn.map_or(0.0, |(a, s)| s * (z - a).min(0.0));
        let q = yn.map_or(0.0, |(b, s)| s * (z - b).min(0.0));
        (p, q)
    };
    let f = |z: f64| {
        let (p, q) = slopes(z);
        refl.value(p, q) - target
    };
    let df = |z: f64| {
        let (p, q) = slopes(z);
        let [lx, ly, lz] = refl.light;
        let a2 = 1.0 + p * p + q * q;
        let a = a2.sqrt();
        let n = lz - p * lx - q * ly;
        if n <= 0.0 {
            return 0.0;
        }
        // dp/dz, dq/dz are the signs of active axes
        let dp = xn.map_or(0.0, |(a0, s)| if z < a0 { s } else { 0.0 });
        let dq = yn.map_or(0.0, |(b0, s)| if z < b0 { s } else { 0.0 });
        let dn = -(dp * lx + dq * ly);
        let da = (p * dp + q * dq) / a;
        refl.albedo * (dn * a - n * da) / a2
    };

    let f_top = f(top);
    if f_top <= 0.0 {
        return top;
    }
    // Expand downward until the shading drops below the target.
    let mut span = 1.0;
    let mut lo = top - span;
    let mut f_lo = f(lo);
    while f_lo > 0.0 && span < 1e6 {
        span *= 2.0;
        lo = top - span;
        f_lo = f(lo);
    }
    if f_lo > 0.0 {
        return lo;
    }
    let mut hi = top;
    // Newton from the flat end; damping keeps the first step finite where the
    // reflectance is stationary.
    let mut z = top;
    for _ in 0..NEWTON_STEPS {
        let fz = f(z);
        if fz.abs() < 1e-12 {
            break;
        }
        if fz > 0.0 {
            hi = z;
        } else {
            lo = z;
        }
        let slope = df(z);
        let denom = if slope >= 0.0 { slope + epsilon } else { slope - epsilon };
        let mut next = z - fz / denom;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - z).abs() < 1e-12 * (1.0 + z.abs()) {
            z = next;
            break;
        }
        z = next;
    }
    z
}

/// Recovers relative depth from an intensity image in `[0, 1]`.
pub fn tsai_shah_depth<T: Real>(intensity: &Tensor<T>, cfg: &SfsConfig) -> Result<DepthMap> {
    tsai_shah_depth_from(intensity, cfg, None)
}

/// As [`tsai_shah_depth`], starting from `initial` heights instead of zero.
pub fn tsai_shah_depth_from<T: Real>(
    intensity: &Tensor<T>,
    cfg: &SfsConfig,
    initial: Option<&Tensor<f64>>,
) -> Result<DepthMap> {
    cfg.validate()?;
    let &[h, w] = intensity.shape() else {
        return Err(Error::Dimension(format!(
            "expected [H, W] intensity, got {:?}",
            intensity.shape()
        )));
    };
    let e: Vec<f64> = intensity.data().iter().map(|v| v.as_f64()).collect();
    if let Some(bad) = e.iter().find(|v| !(**v >= 0.0 && **v <= 1.0)) {
        return Err(Error::Validation(format!("intensity {bad} outside [0, 1]")));
    }
    if let Some(init) = initial {
        if init.shape() != [h, w] {
            return Err(Error::Dimension(format!(
                "initial height {:?} vs intensity {:?}",
                init.shape(),
                [h, w]
            )));
        }
    }
    let peak = e.iter().copied().fold(0.0, f64::max);
    if peak <= 0.0 {
        return Ok(DepthMap::flat(h, w));
    }
    // The brightest pixel is taken to face the light, which fixes the unknown
    // gain between intensity and albedo.
    let gain = peak / cfg.albedo;
    let target: Vec<f64> = e.iter().map(|v| (v / gain).max(MIN_SHADING * cfg.albedo)).collect();
    let lit: Vec<bool> = e.iter().map(|&v| v / gain >= MIN_SHADING * cfg.albedo).collect();
    let singular: Vec<bool> = target
        .iter()
        .map(|&v| v >= cfg.albedo * (1.0 - SINGULAR_TOLERANCE))
        .collect();
    let pinned = interior_singular_regions(&singular, h, w);
    let refl = Reflectance {
        light: cfg.light_direction,
        albedo: cfg.albedo,
    };

    // Unpinned pixels start unreached and take their height from the fronts
    // leaving the pinned plateaus.
    let mut z: Vec<f64> = match initial {
        Some(init) => init.data().to_vec(),
        None => vec![f64::NEG_INFINITY; h * w],
    };
    for (zi, &p) in z.iter_mut().zip(&pinned) {
        if p {
            *zi = 0.0;
        }
    }
    let reached = |v: f64| v.is_finite().then_some(v);
    let mut quiet = 0;
    for sweep in 0..cfg.iterations {
        // Gauss-Seidel in the four raster orders in turn
        let (flip_x, flip_y) = (sweep % 2 == 1, sweep % 4 >= 2);
        let mut change: f64 = 0.0;
        for yy in 0..h {
            let y = if flip_y { h - 1 - yy } else { yy };
            for xx in 0..w {
                let x = if flip_x { w - 1 - xx } else { xx };
                let i = y * w + x;
                if pinned[i] {
                    continue;
                }
                let xn = upwind(
                    (x > 0).then(|| z[i - 1]).and_then(reached),
                    (x + 1 < w).then(|| z[i + 1]).and_then(reached),
                );
                let yn = upwind(
                    (y > 0).then(|| z[i - w]).and_then(reached),
                    (y + 1 < h).then(|| z[i + w]).and_then(reached),
                );
                if xn.is_none() && yn.is_none() {
                    continue;
                }
                let v = solve_pixel(target[i], xn, yn, &refl, cfg.epsilon);
                change = change.max(if z[i].is_finite() { (v - z[i]).abs() } else { f64::INFINITY });
                z[i] = v;
            }
        }
        quiet = if change < 1e-10 { quiet + 1 } else { 0 };
        if quiet == 4 {
            break;
        }
    }

    let valid: Vec<bool> = lit.iter().zip(&z).map(|(&l, v)| l && v.is_finite()).collect();
    let n_valid = valid.iter().filter(|&&v| v).count();
    let height = Tensor::new(&[h, w], z.clone())?;
    if n_valid < 2 {
        return Ok(DepthMap {
            height,
            ..DepthMap::flat(h, w)
        });
    }
    let mean = z.iter().zip(&valid).filter(|(_, &v)| v).map(|(z, _)| *z).sum::<f64>() / n_valid as f64;
    let var = z
        .iter()
        .zip(&valid)
        .filter(|(_, &v)| v)
        .map(|(z, _)| (z - mean).powi(2))
        .sum::<f64>()
        / n_valid as f64;
    let std = var.sqrt();
    if !(std > 1e-12 * (1.0 + mean.abs())) {
        return Ok(DepthMap {
            height,
            shading_gain: gain,
            ..DepthMap::flat(h, w)
        });
    }
    // depth grows away from the camera, height toward it
    let values = z
        .iter()
        .zip(&valid)
        .map(|(&zi, &v)| if v { (mean - zi) / std } else { 0.0 })
        .collect();
    Ok(DepthMap {
        values: Tensor::new(&[h, w], values)?,
        valid_mask: valid,
        height,
        shading_gain: gain,
        degenerate: false,
    })
}

/// Stacks two RGB-D frames into the 8-channel network input
/// `[R, G, B, D]_a ‖ [R, G, B, D]_b`, subtracting per-channel means.
pub fn stack_rgbd_pair<T: Real>(
    rgb_a: &Tensor<T>,
    depth_a: &Tensor<T>,
    rgb_b: &Tensor<T>,
    depth_b: &Tensor<T>,
    channel_means: &[f64; 8],
) -> Result<Tensor<T>> {
    let &[3, h, w] = rgb_a.shape() else {
        return Err(Error::Dimension(format!(
            "expected [3, H, W] rgb, got {:?}",
            rgb_a.shape()
        )));
    };
    if rgb_b.shape() != rgb_a.shape() || depth_a.shape() != [h, w] || depth_b.shape() != [h, w] {
        return Err(Error::Dimension(format!(
            "pair shapes differ: rgb {:?}/{:?}, depth {:?}/{:?}",
            rgb_a.shape(),
            rgb_b.shape(),
            depth_a.shape(),
            depth_b.shape()
        )));
    }
    let plane = h * w;
    let mut data = Vec::with_capacity(8 * plane);
    for (frame, (rgb, depth)) in [(rgb_a, depth_a), (rgb_b, depth_b)].into_iter().enumerate() {
        for c in 0..4 {
            let mean = T::from_f64_lossy(channel_means[frame * 4 + c]);
            let src = if c < 3 {
                &rgb.data()[c * plane..(c + 1) * plane]
            } else {
                depth.data()
            };
            data.extend(src.iter().map(|&v| v - mean));
        }
    }
    Tensor::new(&[8, h, w], data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::render_hemisphere;

    fn disk_correlation(size: usize, recovered: &Tensor<f64>, truth: &Tensor<f64>) -> f64 {
        let (r, c) = (0.4 * size as f64 - 1.0, (size as f64 - 1.0) / 2.0);
        let (mut a, mut b) = (Vec::new(), Vec::new());
        for y in 0..size {
            for x in 0..size {
                if (x as f64 - c).hypot(y as f64 - c) < r {
                    a.push(recovered.get(&[y, x]));
                    b.push(truth.get(&[y, x]));
                }
            }
        }
        let n = a.len() as f64;
        let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
        let cov: f64 = a.iter().zip(&b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    }

    #[test]
    fn hemisphere_comes_out_convex() {
        let (i, depth) = render_hemisphere(32, [0.0, 0.0, 1.0], 1.0);
        let d = tsai_shah_depth(&i, &SfsConfig::default()).unwrap();
        assert!(!d.degenerate);
        assert!(disk_correlation(32, &d.values, &depth) > 0.99);
        let rerender = render_height_field(&d.height, [0.0, 0.0, 1.0], 1.0).unwrap();
        let rmse = (rerender.zip_map(&i, |a, b| (a - b).powi(2)).unwrap().mean()).sqrt();
        assert!(rmse < 0.01, "{rmse}");
    }

    #[test]
    fn intensity_gain_is_absorbed() {
        let (i, _) = render_hemisphere(24, [0.0, 0.0, 1.0], 1.0);
        let base = tsai_shah_depth(&i, &SfsConfig::default()).unwrap().values;
        for k in [0.9, 0.5, 0.2] {
            let scaled = tsai_shah_depth(&i.map(|v| v * k), &SfsConfig::default()).unwrap().values;
            let rms = (base.zip_map(&scaled, |a, b| (a - b).powi(2)).unwrap().mean()).sqrt();
            assert!(rms < 0.05 * (base.map(|v| v * v).mean()).sqrt(), "k={k} rms={rms}");
        }
    }

    #[test]
    fn border_plateaus_pinned_only_without_interior_ones() {
        // 5x5: plateau on the left border plus one interior peak
        let mut s = vec![false; 25];
        for y in 0..5 {
            s[y * 5] = true;
        }
        s[12] = true;
        let pinned = interior_singular_regions(&s, 5, 5);
        assert_eq!(pinned.iter().filter(|&&p| p).count(), 1);
        assert!(pinned[12]);
        s[12] = false;
        assert_eq!(interior_singular_regions(&s, 5, 5), s);
    }

    #[test]
    fn luma_coefficients() {
        let white = Tensor::<f64>::full(&[3, 2, 2], 1.0);
        assert!(rgb_to_intensity(&white).unwrap().data().iter().all(|&v| (v - 1.0).abs() < 1e-15));
        let mut green = Tensor::<f64>::zeros(&[3, 1, 1]);
        green.set(&[1, 0, 0], 1.0);
        assert_eq!(rgb_to_intensity(&green).unwrap().data(), &[0.587]);
        let gray = Tensor::<f64>::full(&[3, 1, 1], 0.37);
        assert!((rgb_to_intensity(&gray).unwrap().data()[0] - 0.37).abs() < 1e-15);
        let bad = Tensor::<f64>::full(&[3, 1, 1], 1.5);
        assert!(matches!(rgb_to_intensity(&bad), Err(Error::Validation(_))));
    }

    #[test]
    fn black_and_uniform_images_are_degenerate() {
        let cfg = SfsConfig::default();
        for v in [0.0, 0.3, 1.0] {
            let d = tsai_shah_depth(&Tensor::<f64>::full(&[8, 8], v), &cfg).unwrap();
            assert!(d.degenerate, "value {v}");
            assert_eq!(d.valid_count(), 0);
            assert!(d.values.data().iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn config_validation() {
        let mut cfg = SfsConfig::default();
        cfg.light_direction = [0.0, 0.0, 2.0];
        assert!(cfg.validate().is_err());
        let cfg = SfsConfig {
            iterations: 0,
            ..SfsConfig::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = SfsConfig::default().with_light([0.0, 0.0, 2.0]).unwrap();
        assert_eq!(cfg.light_direction, [0.0, 0.0, 1.0]);
    }

    #[test]
    fn stack_zero_means_preserves_values() {
        let rgb_a = Tensor::<f64>::from_fn(&[3, 2, 2], |i| i as f64);
        let rgb_b = Tensor::<f64>::from_fn(&[3, 2, 2], |i| 100.0 + i as f64);
        let da = Tensor::<f64>::full(&[2, 2], -1.0);
        let db = Tensor::<f64>::full(&[2, 2], -2.0);
        let s = stack_rgbd_pair(&rgb_a, &da, &rgb_b, &db, &[0.0; 8]).unwrap();
        assert_eq!(s.shape(), &[8, 2, 2]);
        assert_eq!(&s.data()[..12], rgb_a.data());
        assert_eq!(&s.data()[12..16], da.data());
        assert_eq!(&s.data()[16..28], rgb_b.data());
        assert_eq!(&s.data()[28..], db.data());
    }

    #[test]
    fn stack_channel_order_audit() {
        let plane = |c: f64| Tensor::<f64>::full(&[2, 3], c);
        let rgb = |a: f64| {
            Tensor::new(
                &[3, 2, 3],
                [a, a + 1.0, a + 2.0]
                    .iter()
                    .flat_map(|&c| std::iter::repeat_n(c, 6))
                    .collect(),
            )
            .unwrap()
        };
        let s = stack_rgbd_pair(&rgb(1.0), &plane(4.0), &rgb(5.0), &plane(8.0), &[0.0; 8]).unwrap();
        for c in 0..8 {
            let ch = s.channel(c).unwrap();
            assert!(ch.data().iter().all(|&v| v == (c + 1) as f64), "channel {c}");
        }
        let means = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0];
        let zero = stack_rgbd_pair(&rgb(1.0), &plane(4.0), &rgb(5.0), &plane(8.0), &means).unwrap();
        assert!(zero.data().iter().all(|&v| v == 0.0));
        assert!(stack_rgbd_pair(&rgb(1.0), &Tensor::<f64>::zeros(&[3, 2]), &rgb(5.0), &plane(8.0), &means).is_err());
    }
}
