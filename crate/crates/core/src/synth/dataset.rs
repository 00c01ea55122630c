//! On-disk dataset: `manifest.json` at the root and one directory per
//! trajectory holding `frames/NNNNNN.png`, `depth/NNNNNN.f32` (raw
//! little-endian camera-frame depth, meters) and `poses.csv`.

use std::fs;
use std::path::{Path, PathBuf};

use image::{ImageEncoder, RgbImage};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::render::{render_frame, SceneConfig};
use super::trajectory::{generate_trajectory, TrajectorySpec};
use crate::error::{Error, Result};
use crate::net::mix_seed;
use crate::pose::{Pose, Trajectory};
use crate::sfs::{rgb_to_intensity, stack_rgbd_pair, tsai_shah_depth, SfsConfig};
use crate::tensor::{Real, Tensor};
use crate::train::Sequence;

pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::Config(format!("unknown split `{other}`"))),
        }
    }
}

/// What fills the depth channel of the network input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum DepthSource {
    /// Shape from shading on the frame itself.
    #[default]
    Sfs,
    /// The renderer's depth sidecar, standardized per frame.
    True,
}

impl std::str::FromStr for DepthSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sfs" => Ok(DepthSource::Sfs),
            "true" => Ok(DepthSource::True),
            other => Err(Error::Config(format!("unknown depth source `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryEntry {
    pub name: String,
    pub split: Split,
    pub spec: TrajectorySpec,
    /// Added to every generated position along the tube axis, so trajectories
    /// see disjoint stretches of wall.
    pub axial_offset: f64,
    /// Paths relative to the dataset root.
    pub frames: Vec<String>,
    pub depth: Vec<String>,
    pub poses: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: u32,
    pub height: usize,
    pub width: usize,
    /// Seconds between frames.
    pub frame_interval: f64,
    /// `[R, G, B, D]` of the first then second frame of each pair, over the
    /// training split.
    pub channel_means: [f64; 8],
    pub depth_source: DepthSource,
    pub sfs: SfsConfig,
    pub scene: SceneConfig,
    pub trajectories: Vec<TrajectoryEntry>,
}

impl DatasetManifest {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Validation(format!("manifest encoding: {e}")))?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: DatasetManifest = serde_json::from_str(text)
            .map_err(|e| Error::Validation(format!("manifest: {e}")))?;
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != MANIFEST_VERSION {
            return Err(Error::Validation(format!(
                "manifest version {} (expected {MANIFEST_VERSION})",
                self.version
            )));
        }
        if !self.channel_means.iter().all(|v| v.is_finite()) {
            return Err(Error::Validation("channel means must be finite".into()));
        }
        for t in &self.trajectories {
            if t.frames.len() != t.depth.len() || t.frames.len() != t.spec.frames {
                return Err(Error::Validation(format!(
                    "trajectory {} lists {} frames and {} depth maps for a {}-frame spec",
                    t.name,
                    t.frames.len(),
                    t.depth.len(),
                    t.spec.frames
                )));
            }
        }
        Ok(())
    }

    pub fn load(root: &Path) -> Result<Self> {
        let path = root.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Validation(msg) => Error::format(&path, msg),
            other => other,
        })
    }

    pub fn save(&self, root: &Path) -> Result<()> {
        let path = root.join(MANIFEST_FILE);
        fs::write(&path, self.to_json()?).map_err(|e| Error::io(&path, e))
    }

    pub fn frame_count(&self) -> usize {
        self.trajectories.iter().map(|t| t.frames.len()).sum()
    }

    pub fn split(&self, split: Split) -> Vec<&TrajectoryEntry> {
        self.trajectories.iter().filter(|t| t.split == split).collect()
    }
}

/// Splits `n` trajectories by `ratios` (train, val, test). With three or more
/// trajectories val and test each get at least one.
pub fn assign_splits(n: usize, ratios: [f64; 3]) -> Result<Vec<Split>> {
    let total: f64 = ratios.iter().sum();
    if !(total > 0.0) || ratios.iter().any(|r| !(*r >= 0.0)) {
        return Err(Error::Config(format!("bad split ratios {ratios:?}")));
    }
    let share = |r: f64| ((n as f64) * r / total).round() as usize;
    let floor = usize::from(n >= 3);
    let val = if ratios[1] > 0.0 { share(ratios[1]).max(floor) } else { 0 };
    let test = if ratios[2] > 0.0 { share(ratios[2]).max(floor) } else { 0 };
    let train = n.saturating_sub(val + test);
    Ok(std::iter::repeat_n(Split::Train, train)
        .chain(std::iter::repeat_n(Split::Val, val))
        .chain(std::iter::repeat_n(Split::Test, test))
        .take(n)
        .collect())
}

pub fn write_png_rgb(path: &Path, rgb: &Tensor<f64>) -> Result<()> {
    let &[3, h, w] = rgb.shape() else {
        return Err(Error::Dimension(format!("expected [3, H, W], got {:?}", rgb.shape())));
    };
    let plane = h * w;
    let mut bytes = Vec::with_capacity(3 * plane);
    for i in 0..plane {
        for c in 0..3 {
            bytes.push((rgb.data()[c * plane + i].clamp(0.0, 1.0) * 255.0).round() as u8);
        }
    }
    let mut out = Vec::new();
    image::codecs::png::PngEncoder::new(&mut out)
        .write_image(&bytes, w as u32, h as u32, image::ExtendedColorType::Rgb8)
        .map_err(|e| Error::format(path, e.to_string()))?;
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// `[3, H, W]` in `[0, 1]`.
pub fn read_png_rgb(path: &Path) -> Result<Tensor<f64>> {
    let img = image::open(path)
        .map_err(|e| Error::format(path, e.to_string()))?
        .to_rgb8();
    Ok(rgb_from_image(&img))
}

pub fn rgb_from_image(img: &RgbImage) -> Tensor<f64> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let plane = h * w;
    let mut data = vec![0.0; 3 * plane];
    for (i, px) in img.pixels().enumerate() {
        for c in 0..3 {
            data[c * plane + i] = px.0[c] as f64 / 255.0;
        }
    }
    Tensor::new(&[3, h, w], data).expect("image dimensions")
}

pub fn write_depth_f32(path: &Path, depth: &Tensor<f64>) -> Result<()> {
    let bytes: Vec<u8> = depth
        .data()
        .iter()
        .flat_map(|&v| (v as f32).to_le_bytes())
        .collect();
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_depth_f32(path: &Path, height: usize, width: usize) -> Result<Tensor<f64>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() != 4 * height * width {
        return Err(Error::format(
            path,
            format!("{} bytes for a {height}x{width} depth map", bytes.len()),
        ));
    }
    let data = bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
        .collect();
    Tensor::new(&[height, width], data)
}

/// Zero mean, unit standard deviation; constant maps become zero.
fn standardize(t: &Tensor<f64>) -> Tensor<f64> {
    let mean = t.mean();
    let std = (t.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / t.len() as f64).sqrt();
    if std > 1e-12 {
        t.map(|v| (v - mean) / std)
    } else {
        Tensor::zeros(t.shape())
    }
}

/// The depth channel the network sees for one frame.
pub fn depth_channel(
    rgb: &Tensor<f64>,
    true_depth: Option<&Tensor<f64>>,
    source: DepthSource,
    sfs: &SfsConfig,
) -> Result<Tensor<f64>> {
    match source {
        DepthSource::Sfs => Ok(tsai_shah_depth(&rgb_to_intensity(rgb)?, sfs)?.values),
        DepthSource::True => {
            let d = true_depth.ok_or_else(|| {
                Error::Config("depth source `true` needs the depth sidecar".into())
            })?;
            Ok(standardize(d))
        }
    }
}

/// RGB plus depth channel, ready for stacking.
#[derive(Debug, Clone)]
pub struct PreparedFrame {
    pub rgb: Tensor<f64>,
    pub depth: Tensor<f64>,
}

fn entry_path(root: &Path, rel: &str) -> PathBuf {
    root.join(rel)
}

pub fn load_trajectory(root: &Path, entry: &TrajectoryEntry) -> Result<Trajectory> {
    let path = entry_path(root, &entry.poses);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let traj = Trajectory::from_csv(&text).map_err(|e| match e {
        Error::Validation(msg) => Error::format(&path, msg),
        other => other,
    })?;
    if traj.len() != entry.frames.len() {
        return Err(Error::format(
            &path,
            format!("{} poses for {} frames", traj.len(), entry.frames.len()),
        ));
    }
    Ok(traj)
}

/// Reads and preprocesses every frame of a trajectory.
pub fn prepare_frames(
    root: &Path,
    manifest: &DatasetManifest,
    entry: &TrajectoryEntry,
    source: DepthSource,
) -> Result<Vec<PreparedFrame>> {
    entry
        .frames
        .par_iter()
        .zip(&entry.depth)
        .map(|(f, d)| {
            let rgb = read_png_rgb(&entry_path(root, f))?;
            if rgb.shape() != [3, manifest.height, manifest.width] {
                return Err(Error::format(
                    entry_path(root, f),
                    format!("frame is {:?}, manifest says {}x{}", rgb.shape(), manifest.height, manifest.width),
                ));
            }
            let true_depth = match source {
                DepthSource::True => Some(read_depth_f32(
                    &entry_path(root, d),
                    manifest.height,
                    manifest.width,
                )?),
                DepthSource::Sfs => None,
            };
            let depth = depth_channel(&rgb, true_depth.as_ref(), source, &manifest.sfs)?;
            Ok(PreparedFrame { rgb, depth })
        })
        .collect()
}

/// Means over all pairs of all given trajectories, per stacked channel.
pub fn channel_means(trajectories: &[Vec<PreparedFrame>]) -> [f64; 8] {
    let mut sums = [0.0; 8];
    let mut counts = [0usize; 8];
    for frames in trajectories {
        if frames.len() < 2 {
            continue;
        }
        for (slot, range) in [(0, 0..frames.len() - 1), (4, 1..frames.len())] {
            for f in &frames[range] {
                let plane = f.depth.len();
                for c in 0..3 {
                    sums[slot + c] += f.rgb.data()[c * plane..(c + 1) * plane].iter().sum::<f64>();
                    counts[slot + c] += plane;
                }
                sums[slot + 3] += f.depth.sum();
                counts[slot + 3] += plane;
            }
        }
    }
    std::array::from_fn(|k| if counts[k] > 0 { sums[k] / counts[k] as f64 } else { 0.0 })
}

/// Stacked, mean-subtracted pairs and ground-truth relative poses.
pub fn make_sequence<T: Real>(
    frames: &[PreparedFrame],
    poses: &[Pose],
    means: &[f64; 8],
) -> Result<Sequence<T>> {
    if frames.len() != poses.len() || frames.len() < 2 {
        return Err(Error::Validation(format!(
            "{} frames and {} poses; need equal counts of at least 2",
            frames.len(),
            poses.len()
        )));
    }
    let pairs = frames
        .par_windows(2)
        .map(|w| {
            stack_rgbd_pair(&w[0].rgb, &w[0].depth, &w[1].rgb, &w[1].depth, means)
                .map(|t| t.cast::<T>())
        })
        .collect::<Result<Vec<_>>>()?;
    Sequence::new(pairs, crate::pose::relatives_from_absolute(poses))
}

/// Loads one trajectory as a training sequence.
pub fn load_sequence<T: Real>(
    root: &Path,
    manifest: &DatasetManifest,
    entry: &TrajectoryEntry,
) -> Result<Sequence<T>> {
    let frames = prepare_frames(root, manifest, entry, manifest.depth_source)?;
    let traj = load_trajectory(root, entry)?;
    make_sequence(&frames, &traj.poses, &manifest.channel_means)
}

pub fn load_split<T: Real>(root: &Path, manifest: &DatasetManifest, split: Split) -> Result<Vec<Sequence<T>>> {
    manifest
        .split(split)
        .into_iter()
        .map(|e| load_sequence(root, manifest, e))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetOptions {
    pub sfs: SfsConfig,
    pub depth_source: DepthSource,
    pub frame_interval: f64,
    /// Axial spacing between trajectory start points, meters.
    pub axial_spacing: f64,
}

impl Default for DatasetOptions {
    fn default() -> Self {
        DatasetOptions {
            sfs: SfsConfig::default(),
            depth_source: DepthSource::Sfs,
            frame_interval: 0.1,
            axial_spacing: 100.0,
        }
    }
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Renders every trajectory, writes all files and returns the manifest, with
/// channel means taken from the written (8-bit) training frames.
pub fn build_dataset(
    scene: &SceneConfig,
    trajectories: &[(TrajectorySpec, Split)],
    out: &Path,
    opts: &DatasetOptions,
) -> Result<DatasetManifest> {
    scene.validate()?;
    opts.sfs.validate()?;
    if !(opts.frame_interval > 0.0) {
        return Err(Error::Config("frame interval must be positive".into()));
    }
    create_dir(out)?;
    let mut entries = Vec::with_capacity(trajectories.len());
    for (idx, (spec, split)) in trajectories.iter().enumerate() {
        let name = format!("traj_{idx:03}");
        let axial_offset = idx as f64 * opts.axial_spacing;
        let poses: Vec<Pose> = generate_trajectory(spec)?
            .into_iter()
            .map(|mut p| {
                p.translation[2] += axial_offset;
                p
            })
            .collect();
        let dir = out.join(&name);
        create_dir(&dir.join("frames"))?;
        create_dir(&dir.join("depth"))?;
        let frames: Vec<String> = (0..poses.len()).map(|k| format!("{name}/frames/{k:06}.png")).collect();
        let depth: Vec<String> = (0..poses.len()).map(|k| format!("{name}/depth/{k:06}.f32")).collect();
        poses
            .par_iter()
            .enumerate()
            .try_for_each(|(k, pose)| -> Result<()> {
                let (rgb, d) = render_frame(pose, scene).map_err(|e| {
                    Error::Geometry(format!("{name} frame {k}: {e}"))
                })?;
                write_png_rgb(&out.join(&frames[k]), &rgb)?;
                write_depth_f32(&out.join(&depth[k]), &d)
            })?;
        let traj = Trajectory::uniform(poses, opts.frame_interval)?;
        let pose_file = format!("{name}/poses.csv");
        let path = out.join(&pose_file);
        fs::write(&path, traj.to_csv()).map_err(|e| Error::io(&path, e))?;
        log::info!("stage=generate trajectory={name} split={split:?} frames={}", frames.len());
        entries.push(TrajectoryEntry {
            name,
            split: *split,
            spec: spec.clone(),
            axial_offset,
            frames,
            depth,
            poses: pose_file,
        });
    }
    let mut manifest = DatasetManifest {
        version: MANIFEST_VERSION,
        height: scene.height,
        width: scene.width,
        frame_interval: opts.frame_interval,
        channel_means: [0.0; 8],
        depth_source: opts.depth_source,
        sfs: opts.sfs.clone(),
        scene: scene.clone(),
        trajectories: entries,
    };
    manifest.channel_means = compute_train_means(out, &manifest)?;
    manifest.save(out)?;
    Ok(manifest)
}

/// Channel means recomputed from the files of the training split.
pub fn compute_train_means(root: &Path, manifest: &DatasetManifest) -> Result<[f64; 8]> {
    let prepared = manifest
        .split(Split::Train)
        .into_iter()
        .map(|e| prepare_frames(root, manifest, e, manifest.depth_source))
        .collect::<Result<Vec<_>>>()?;
    Ok(channel_means(&prepared))
}

/// Seeds for `count` trajectories derived from one dataset seed.
pub fn trajectory_seeds(seed: u64, count: usize) -> Vec<u64> {
    (0..count as u64).map(|k| mix_seed(seed, 0x7EA7 + k)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_assignment() {
        let s = assign_splits(7, [0.7, 0.15, 0.15]).unwrap();
        assert_eq!(s.iter().filter(|&&x| x == Split::Train).count(), 5);
        assert_eq!(s.iter().filter(|&&x| x == Split::Val).count(), 1);
        assert_eq!(s.iter().filter(|&&x| x == Split::Test).count(), 1);
        assert_eq!(assign_splits(1, [0.7, 0.15, 0.15]).unwrap(), vec![Split::Train]);
        assert!(assign_splits(3, [0.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn means_cover_both_pair_slots() {
        let frame = |v: f64| PreparedFrame {
            rgb: Tensor::full(&[3, 2, 2], v),
            depth: Tensor::full(&[2, 2], -v),
        };
        let means = channel_means(&[vec![frame(0.0), frame(0.5), frame(1.0)]]);
        assert_eq!(means, [0.25, 0.25, 0.25, -0.25, 0.75, 0.75, 0.75, -0.75]);
    }
}
