//! Trajectory reconstruction from relative poses, relative pose error as a
//! function of travelled distance, naive baselines and report files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::pose::{Pose, RelativePose, Trajectory};

/// Tolerance on relative quaternion norms accepted by [`integrate_relative`].
const UNIT_TOLERANCE: f64 = 1e-6;

/// `T_i = T_{i-1} ∘ Δ_i`, renormalizing the rotation after every step.
pub fn integrate_relative(initial: &Pose, relatives: &[RelativePose]) -> Result<Vec<Pose>> {
    if !initial.is_unit(UNIT_TOLERANCE) {
        return Err(Error::Validation("initial pose rotation is not unit".into()));
    }
    let mut poses = Vec::with_capacity(relatives.len() + 1);
    poses.push(*initial);
    let mut current = *initial;
    for (k, d) in relatives.iter().enumerate() {
        if !d.is_unit(UNIT_TOLERANCE) || !d.translation.iter().all(|v| v.is_finite()) {
            return Err(Error::Validation(format!(
                "relative pose {k} is not a unit-quaternion rigid motion: {d:?}"
            )));
        }
        let next = current.compose(d);
        current = Pose::new(next.translation, next.rotation)?;
        poses.push(current);
    }
    Ok(poses)
}

/// [`integrate_relative`] with timestamps attached.
pub fn integrate_trajectory(timestamps: Vec<f64>, initial: &Pose, relatives: &[RelativePose]) -> Result<Trajectory> {
    Trajectory::new(timestamps, integrate_relative(initial, relatives)?)
}

/// Cumulative ground-truth distance travelled up to each frame.
pub fn path_lengths(poses: &[Pose]) -> Vec<f64> {
    let mut acc = 0.0;
    let mut out = Vec::with_capacity(poses.len());
    out.push(0.0);
    for w in poses.windows(2) {
        let d: f64 = (0..3)
            .map(|k| (w[1].translation[k] - w[0].translation[k]).powi(2))
            .sum::<f64>()
            .sqrt();
        acc += d;
        out.push(acc);
    }
    if poses.is_empty() {
        out.clear();
    }
    out
}

/// Per-bin RMSE of relative pose error over spans of a given path length.
/// Bins with no span have `count == 0` and no error values.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorCurve {
    /// Span lengths, meters, ascending.
    pub bins: Vec<f64>,
    /// Meters.
    pub trans_rmse: Vec<Option<f64>>,
    /// Degrees.
    pub rot_rmse_deg: Vec<Option<f64>>,
    pub counts: Vec<usize>,
}

pub const CURVE_HEADER: &str = "length_m,count,trans_rmse_m,rot_rmse_deg";

impl ErrorCurve {
    /// Index of the bin whose edge equals `length` to within 1e-9.
    pub fn bin_index(&self, length: f64) -> Option<usize> {
        self.bins.iter().position(|b| (b - length).abs() <= 1e-9)
    }

    /// `(translation m, rotation deg)` at the bin `length`, if it has spans.
    pub fn at(&self, length: f64) -> Option<(f64, f64)> {
        let i = self.bin_index(length)?;
        Some((self.trans_rmse[i]?, self.rot_rmse_deg[i]?))
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("{CURVE_HEADER}\n");
        for i in 0..self.bins.len() {
            let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
            let _ = writeln!(
                s,
                "{},{},{},{}",
                self.bins[i],
                self.counts[i],
                opt(self.trans_rmse[i]),
                opt(self.rot_rmse_deg[i])
            );
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some(CURVE_HEADER) {
            return Err(Error::Validation(format!("error curve must start with `{CURVE_HEADER}`")));
        }
        let mut curve = ErrorCurve {
            bins: Vec::new(),
            trans_rmse: Vec::new(),
            rot_rmse_deg: Vec::new(),
            counts: Vec::new(),
        };
        for line in lines.filter(|l| !l.trim().is_empty()) {
            let bad = || Error::Validation(format!("bad error curve row `{line}`"));
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            if f.len() != 4 {
                return Err(bad());
            }
            let opt = |s: &str| -> Result<Option<f64>> {
                if s.is_empty() {
                    Ok(None)
                } else {
                    s.parse().map(Some).map_err(|_| bad())
                }
            };
            let count: usize = f[1].parse().map_err(|_| bad())?;
            let (t, r) = (opt(f[2])?, opt(f[3])?);
            if (count == 0) != t.is_none() || t.is_none() != r.is_none() {
                return Err(bad());
            }
            curve.bins.push(f[0].parse().map_err(|_| bad())?);
            curve.counts.push(count);
            curve.trans_rmse.push(t);
            curve.rot_rmse_deg.push(r);
        }
        if curve.bins.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Validation("error curve bins must increase".into()));
        }
        Ok(curve)
    }
}

/// Rigid error of the estimated motion over `[i, j]` relative to ground truth:
/// `(translation norm, rotation angle in radians)`.
fn span_error(est: &[Pose], gt: &[Pose], i: usize, j: usize) -> (f64, f64) {
    let e = est[i].between(&est[j]);
    let g = gt[i].between(&gt[j]);
    let d = g.between(&e);
    (d.translation_norm(), d.rotation_angle())
}

fn check_pair(est: &Trajectory, gt: &Trajectory) -> Result<()> {
    if est.len() != gt.len() {
        return Err(Error::Validation(format!(
            "estimate has {} poses, ground truth {}",
            est.len(),
            gt.len()
        )));
    }
    if let Some(k) = (0..est.len())
        .find(|&k| (est.timestamps[k] - gt.timestamps[k]).abs() > 1e-9 * (1.0 + gt.timestamps[k].abs()))
    {
        return Err(Error::Validation(format!(
            "timestamps differ at row {k}: {} vs {}",
            est.timestamps[k], gt.timestamps[k]
        )));
    }
    Ok(())
}

fn check_bins(bins: &[f64]) -> Result<()> {
    if bins.iter().any(|b| !(b.is_finite() && *b > 0.0)) || bins.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Validation(format!(
            "bins must be positive and strictly increasing, got {bins:?}"
        )));
    }
    Ok(())
}

/// Relative pose error against span length, pooled over several
/// `(estimate, ground truth)` pairs. Every start frame contributes the span
/// ending at the first frame whose ground-truth path length from the start
/// reaches the bin length.
pub fn rmse_vs_length_pooled(pairs: &[(&Trajectory, &Trajectory)], bins: &[f64]) -> Result<ErrorCurve> {
    check_bins(bins)?;
    for (est, gt) in pairs {
        check_pair(est, gt)?;
    }
    let lengths: Vec<Vec<f64>> = pairs.iter().map(|(_, gt)| path_lengths(&gt.poses)).collect();
    let per_bin: Vec<(f64, f64, usize)> = bins
        .par_iter()
        .map(|&len| {
            let (mut st, mut sr, mut n) = (0.0, 0.0, 0usize);
            for ((est, gt), s) in pairs.iter().zip(&lengths) {
                for i in 0..s.len() {
                    // tolerance absorbs rounding in the cumulative sums
                    let j = s.partition_point(|&v| v - s[i] < len - 1e-9);
                    if j == s.len() {
                        break;
                    }
                    let (t, r) = span_error(&est.poses, &gt.poses, i, j);
                    st += t * t;
                    sr += r * r;
                    n += 1;
                }
            }
            (st, sr, n)
        })
        .collect();
    let rms = |sum: f64, n: usize| (n > 0).then(|| (sum / n as f64).sqrt());
    Ok(ErrorCurve {
        bins: bins.to_vec(),
        trans_rmse: per_bin.iter().map(|&(st, _, n)| rms(st, n)).collect(),
        rot_rmse_deg: per_bin.iter().map(|&(_, sr, n)| rms(sr, n).map(f64::to_degrees)).collect(),
        counts: per_bin.iter().map(|&(_, _, n)| n).collect(),
    })
}

pub fn rmse_vs_length(est: &Trajectory, gt: &Trajectory, bins: &[f64]) -> Result<ErrorCurve> {
    rmse_vs_length_pooled(&[(est, gt)], bins)
}

/// `step, 2 step, ...` up to the 90th percentile (nearest rank) of the total
/// path lengths.
pub fn default_bins(ground_truth: &[&Trajectory], step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) {
        return Err(Error::Config(format!("bin step {step} must be positive")));
    }
    let mut totals: Vec<f64> = ground_truth
        .iter()
        .map(|t| path_lengths(&t.poses).last().copied().unwrap_or(0.0))
        .collect();
    if totals.is_empty() {
        return Err(Error::Validation("no trajectories to derive bins from".into()));
    }
    totals.sort_by(f64::total_cmp);
    let rank = ((0.9 * totals.len() as f64).ceil() as usize).clamp(1, totals.len());
    let top = totals[rank - 1];
    let n = (top / step + 1e-9).floor() as usize;
    Ok((1..=n).map(|k| round_bin(k as f64 * step)).collect())
}

fn round_bin(v: f64) -> f64 {
    (v * 1e9).round() / 1e9
}

/// Parses `a,b,c` or `start:stop:step` (inclusive of `stop`).
pub fn parse_bins(text: &str) -> Result<Vec<f64>> {
    let bad = || Error::Config(format!("cannot parse bins `{text}`"));
    let bins = if text.contains(':') {
        let v: Vec<f64> = text
            .split(':')
            .map(|s| s.trim().parse::<f64>().map_err(|_| bad()))
            .collect::<Result<_>>()?;
        let &[start, stop, step] = v.as_slice() else {
            return Err(bad());
        };
        if !(step > 0.0) || stop < start {
            return Err(bad());
        }
        let n = ((stop - start) / step + 1e-9).floor() as usize;
        (0..=n).map(|k| round_bin(start + k as f64 * step)).collect()
    } else {
        text.split(',')
            .map(|s| s.trim().parse::<f64>().map_err(|_| bad()))
            .collect::<Result<Vec<_>>>()?
    };
    check_bins(&bins).map_err(|e| Error::Config(e.to_string()))?;
    Ok(bins)
}

/// Predicts no motion: every pose equals the first ground-truth pose.
pub fn zero_motion_baseline(gt: &Trajectory) -> Result<Trajectory> {
    if gt.len() < 2 {
        return Err(Error::Validation("zero-motion baseline needs at least 2 frames".into()));
    }
    Trajectory::new(gt.timestamps.clone(), vec![gt.poses[0]; gt.len()])
}

/// Repeats the previous ground-truth relative motion; the first step is the
/// identity since nothing precedes it.
pub fn constant_velocity_baseline(gt: &Trajectory) -> Result<Trajectory> {
    if gt.len() < 3 {
        return Err(Error::Validation(
            "constant-velocity baseline needs at least 3 frames".into(),
        ));
    }
    let rel = gt.relatives();
    let mut pred = Vec::with_capacity(rel.len());
    pred.push(Pose::identity());
    pred.extend_from_slice(&rel[..rel.len() - 1]);
    integrate_trajectory(gt.timestamps.clone(), &gt.poses[0], &pred)
}

/// Diagnostic alignment applied to an estimate before scoring.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Alignment {
    #[default]
    None,
    /// Least-squares scale on the relative translations.
    Scale,
}

impl std::str::FromStr for Alignment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Alignment::None),
            "scale" => Ok(Alignment::Scale),
            other => Err(Error::Config(format!("unknown alignment `{other}`"))),
        }
    }
}

/// `s` minimizing `Σ |s t_est - t_gt|²` over consecutive relative motions.
pub fn fit_scale(est: &Trajectory, gt: &Trajectory) -> Result<f64> {
    check_pair(est, gt)?;
    let (mut num, mut den) = (0.0, 0.0);
    for (e, g) in est.relatives().iter().zip(gt.relatives()) {
        for k in 0..3 {
            num += e.translation[k] * g.translation[k];
            den += e.translation[k] * e.translation[k];
        }
    }
    if !(den > 0.0) {
        return Err(Error::Validation("estimate does not move; scale is undefined".into()));
    }
    Ok(num / den)
}

pub fn align(est: &Trajectory, gt: &Trajectory, alignment: Alignment) -> Result<Trajectory> {
    match alignment {
        Alignment::None => Ok(est.clone()),
        Alignment::Scale => {
            let s = fit_scale(est, gt)?;
            let rel: Vec<Pose> = est
                .relatives()
                .into_iter()
                .map(|mut p| {
                    p.translation = p.translation.map(|v| v * s);
                    p
                })
                .collect();
            integrate_trajectory(est.timestamps.clone(), &est.poses[0], &rel)
        }
    }
}

/// Trajectories drawn together in one pair of overlay plots.
#[derive(Debug, Clone)]
pub struct Overlay {
    pub name: String,
    pub series: Vec<(String, Trajectory)>,
}

const COLORS: [&str; 6] = ["#1b1b1b", "#d62728", "#1f77b4", "#2ca02c", "#9467bd", "#ff7f0e"];

fn svg_plot(title: &str, series: &[(String, Vec<[f64; 2]>)]) -> String {
    let (size, margin) = (480.0, 40.0);
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for (_, pts) in series {
        for p in pts {
            for k in 0..2 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
    }
    let span = (0..2).map(|k| hi[k] - lo[k]).fold(1e-9, f64::max);
    let map = |p: &[f64; 2]| {
        let x = margin + (p[0] - lo[0]) / span * (size - 2.0 * margin);
        let y = size - margin - (p[1] - lo[1]) / span * (size - 2.0 * margin);
        (x, y)
    };
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{size}\" height=\"{size}\" viewBox=\"0 0 {size} {size}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{margin}\" y=\"20\" font-family=\"sans-serif\" font-size=\"13\">{}</text>\n",
        xml_escape(title)
    );
    for (k, (label, pts)) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let points: Vec<String> = pts
            .iter()
            .map(|p| {
                let (x, y) = map(p);
                format!("{x:.2},{y:.2}")
            })
            .collect();
        let _ = writeln!(
            s,
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"><title>{}</title></polyline>",
            points.join(" "),
            xml_escape(label)
        );
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" fill=\"{color}\">{}</text>",
            size - 150.0,
            36.0 + 14.0 * k as f64,
            xml_escape(label)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Top view on the two axes with the largest extent.
fn plane_projection(series: &[(String, Trajectory)]) -> (Vec<(String, Vec<[f64; 2]>)>, [usize; 2]) {
    let mut extent = [0.0f64; 3];
    for k in 0..3 {
        let vals = series.iter().flat_map(|(_, t)| t.poses.iter().map(move |p| p.translation[k]));
        let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
        extent[k] = if hi >= lo { hi - lo } else { 0.0 };
    }
    let mut axes = [0usize, 1, 2];
    axes.sort_by(|&a, &b| extent[b].total_cmp(&extent[a]).then(a.cmp(&b)));
    let (a, b) = (axes[0].min(axes[1]), axes[0].max(axes[1]));
    let pts = series
        .iter()
        .map(|(l, t)| (l.clone(), t.poses.iter().map(|p| [p.translation[a], p.translation[b]]).collect()))
        .collect();
    (pts, [a, b])
}

fn isometric_projection(series: &[(String, Trajectory)]) -> Vec<(String, Vec<[f64; 2]>)> {
    let (c, s) = (30f64.to_radians().cos(), 30f64.to_radians().sin());
    series
        .iter()
        .map(|(l, t)| {
            let pts = t
                .poses
                .iter()
                .map(|p| {
                    let [x, y, z] = p.translation;
                    [(x - z) * c, y + (x + z) * s]
                })
                .collect();
            (l.clone(), pts)
        })
        .collect()
}

pub fn summary_table(curves: &[(String, ErrorCurve)]) -> String {
    let mut s = format!(
        "{:<24} {:>9} {:>8} {:>14} {:>14}\n",
        "curve", "length_m", "count", "trans_rmse_m", "rot_rmse_deg"
    );
    for (name, c) in curves {
        for i in 0..c.bins.len() {
            let f = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.6}"));
            let _ = writeln!(
                s,
                "{:<24} {:>9.3} {:>8} {:>14} {:>14}",
                name,
                c.bins[i],
                c.counts[i],
                f(c.trans_rmse[i]),
                f(c.rot_rmse_deg[i])
            );
        }
    }
    s
}

fn file_stem(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

fn write(path: PathBuf, text: &str, written: &mut Vec<PathBuf>) -> Result<()> {
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    written.push(path);
    Ok(())
}

/// Writes `curve_<name>.csv` per curve, `<overlay>_top.svg` and
/// `<overlay>_3d.svg` per overlay, and `summary.txt`. Returns the paths.
pub fn emit_reports(curves: &[(String, ErrorCurve)], overlays: &[Overlay], out: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut written = Vec::new();
    for (name, curve) in curves {
        write(out.join(format!("curve_{}.csv", file_stem(name))), &curve.to_csv(), &mut written)?;
    }
    for ov in overlays {
        let (top, [a, b]) = plane_projection(&ov.series);
        let axis = ["x", "y", "z"];
        let title = format!("{} ({} vs {}, m)", ov.name, axis[b], axis[a]);
        write(out.join(format!("{}_top.svg", file_stem(&ov.name))), &svg_plot(&title, &top), &mut written)?;
        let title = format!("{} (isometric, m)", ov.name);
        let iso = isometric_projection(&ov.series);
        write(out.join(format!("{}_3d.svg", file_stem(&ov.name))), &svg_plot(&title, &iso), &mut written)?;
    }
    write(out.join("summary.txt"), &summary_table(curves), &mut written)?;
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn straight(n: usize, step: f64) -> Trajectory {
        let poses = (0..n).map(|k| Pose::new([k as f64 * step, 0.0, 0.0], [1.0, 0.0, 0.0, 0.0]).unwrap()).collect();
        Trajectory::uniform(poses, 0.1).unwrap()
    }

    #[test]
    fn identity_relatives_keep_pose() {
        let start = Pose::from_axis_angle([1.0, 2.0, 3.0], [0.1, 0.2, 0.3]);
        let poses = integrate_relative(&start, &[Pose::identity(); 5]).unwrap();
        assert_eq!(poses.len(), 6);
        for p in &poses {
            for k in 0..3 {
                assert!((p.translation[k] - start.translation[k]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn two_translations_compose() {
        let rel = [
            Pose::new([1.0, 0.0, 0.0], [1.0, 0.0, 0.0, 0.0]).unwrap(),
            Pose::new([0.0, 1.0, 0.0], [1.0, 0.0, 0.0, 0.0]).unwrap(),
        ];
        let poses = integrate_relative(&Pose::identity(), &rel).unwrap();
        assert_eq!(poses[2].translation, [1.0, 1.0, 0.0]);
    }

    #[test]
    fn non_unit_relative_rejected() {
        let bad = Pose {
            translation: [0.0; 3],
            rotation: [2.0, 0.0, 0.0, 0.0],
        };
        assert!(matches!(integrate_relative(&Pose::identity(), &[bad]), Err(Error::Validation(_))));
    }

    #[test]
    fn scaled_straight_line_error() {
        // 10 m in 0.1 m steps, estimate scaled by 1.1
        let gt = straight(101, 0.1);
        let est = Trajectory::uniform(
            gt.poses
                .iter()
                .map(|p| Pose::new(p.translation.map(|v| v * 1.1), p.rotation).unwrap())
                .collect(),
            0.1,
        )
        .unwrap();
        let c = rmse_vs_length(&est, &gt, &[1.0]).unwrap();
        let (t, r) = c.at(1.0).unwrap();
        assert!((t - 0.1).abs() < 1e-9, "{t}");
        assert_eq!(r, 0.0);
        assert!(c.counts[0] > 0);
    }

    #[test]
    fn bins_beyond_path_are_empty() {
        let gt = straight(11, 0.1);
        let c = rmse_vs_length(&gt, &gt, &[0.5, 5.0]).unwrap();
        assert_eq!(c.counts[1], 0);
        assert_eq!(c.trans_rmse[1], None);
        assert_eq!(c.at(0.5), Some((0.0, 0.0)));
        let csv = c.to_csv();
        assert!(csv.lines().nth(2).unwrap().ends_with(",0,,"));
        assert_eq!(ErrorCurve::from_csv(&csv).unwrap(), c);
    }

    #[test]
    fn baselines() {
        let gt = straight(20, 0.05);
        let cv = constant_velocity_baseline(&gt).unwrap();
        let rel_cv = cv.relatives();
        let rel_gt = gt.relatives();
        for k in 1..rel_gt.len() {
            assert!((rel_cv[k].translation[0] - rel_gt[k].translation[0]).abs() < 1e-12);
        }
        let static_gt = Trajectory::uniform(vec![Pose::identity(); 5], 0.1).unwrap();
        let zm = zero_motion_baseline(&static_gt).unwrap();
        assert_eq!(zm, static_gt);
        assert!(constant_velocity_baseline(&straight(2, 0.1)).is_err());
        assert!(zero_motion_baseline(&straight(1, 0.1)).is_err());
    }

    #[test]
    fn bin_parsing() {
        assert_eq!(parse_bins("0.1:0.5:0.1").unwrap(), vec![0.1, 0.2, 0.3, 0.4, 0.5]);
        assert_eq!(parse_bins("0.5, 1").unwrap(), vec![0.5, 1.0]);
        assert!(parse_bins("1,0.5").is_err());
        assert!(parse_bins("0,1").is_err());
        let gts = [straight(11, 0.1), straight(31, 0.1)];
        let refs: Vec<&Trajectory> = gts.iter().collect();
        assert_eq!(default_bins(&refs, 0.5).unwrap(), vec![0.5, 1.0, 1.5, 2.0, 2.5, 3.0]);
    }

    #[test]
    fn scale_alignment_recovers_factor() {
        let gt = straight(11, 0.1);
        let est = straight(11, 0.05);
        assert!((fit_scale(&est, &gt).unwrap() - 2.0).abs() < 1e-12);
        let aligned = align(&est, &gt, Alignment::Scale).unwrap();
        assert!(rmse_vs_length(&aligned, &gt, &[0.5]).unwrap().at(0.5).unwrap().0 < 1e-12);
    }

    #[test]
    fn reports_have_one_polyline_per_series() {
        let dir = tempfile::tempdir().unwrap();
        let gt = straight(11, 0.1);
        let curve = rmse_vs_length(&gt, &gt, &[0.5]).unwrap();
        let ov = Overlay {
            name: "traj 0".into(),
            series: vec![("ground truth".into(), gt.clone()), ("estimate".into(), zero_motion_baseline(&gt).unwrap())],
        };
        let files = emit_reports(&[("test".into(), curve.clone())], &[ov], dir.path()).unwrap();
        assert_eq!(files.len(), 4);
        for f in files.iter().filter(|f| f.extension().unwrap() == "svg") {
            let svg = fs::read_to_string(f).unwrap();
            assert_eq!(svg.matches("<polyline").count(), 2);
        }
        let csv = fs::read_to_string(dir.path().join("curve_test.csv")).unwrap();
        assert_eq!(ErrorCurve::from_csv(&csv).unwrap(), curve);
    }
}
