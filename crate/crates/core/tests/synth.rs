use endovo::pose::{relatives_from_absolute, Pose};
use endovo::sfs::{rgb_to_intensity, tsai_shah_depth, SfsConfig};
use endovo::synth::dataset::{self, DatasetOptions, MANIFEST_FILE};
use endovo::synth::{build_dataset, generate_trajectory, render_frame, DatasetManifest, SceneConfig, Split, TrajectoryClass, TrajectorySpec};

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

fn p95_rotation(class: TrajectoryClass, seed: u64) -> f64 {
    let poses = generate_trajectory(&TrajectorySpec::new(class, 200, seed)).unwrap();
    let mut r: Vec<f64> = relatives_from_absolute(&poses).iter().map(Pose::rotation_angle).collect();
    r.sort_by(f64::total_cmp);
    r[(0.95 * (r.len() - 1) as f64).round() as usize]
}

#[test]
fn sharp_rotates_harder_than_incremental() {
    for seed in 0..10 {
        let sharp = p95_rotation(TrajectoryClass::Sharp, seed);
        let slow = p95_rotation(TrajectoryClass::Incremental, seed);
        assert!(sharp > slow, "seed {seed}: sharp {sharp} vs incremental {slow}");
    }
}

#[test]
fn three_trajectories_of_200_frames_make_600_records() {
    let dir = tempfile::tempdir().unwrap();
    let specs: Vec<(TrajectorySpec, Split)> = dataset::trajectory_seeds(1, 3)
        .into_iter()
        .zip([Split::Train, Split::Val, Split::Test])
        .map(|(s, split)| (TrajectorySpec::new(TrajectoryClass::Incremental, 200, s), split))
        .collect();
    let m = build_dataset(&SceneConfig::new(8, 8, 1), &specs, dir.path(), &DatasetOptions::default()).unwrap();
    assert_eq!(m.frame_count(), 600);
    let on_disk = DatasetManifest::load(dir.path()).unwrap();
    assert_eq!(on_disk, m);
    assert!(dir.path().join(MANIFEST_FILE).is_file());
    let files: usize = m.trajectories.iter().map(|t| t.frames.len() + t.depth.len()).sum();
    assert_eq!(files, 1200);
    assert!(m.trajectories.iter().flat_map(|t| &t.frames).all(|f| dir.path().join(f).is_file()));
}

#[test]
fn splits_are_disjoint() {
    let dir = tempfile::tempdir().unwrap();
    let shares = dataset::assign_splits(7, [0.7, 0.15, 0.15]).unwrap();
    let specs: Vec<(TrajectorySpec, Split)> = dataset::trajectory_seeds(3, 7)
        .into_iter()
        .zip(shares)
        .map(|(s, split)| (TrajectorySpec::new(TrajectoryClass::Sharp, 4, s), split))
        .collect();
    let m = build_dataset(&SceneConfig::new(8, 8, 2), &specs, dir.path(), &DatasetOptions::default()).unwrap();
    let parts = [Split::Train, Split::Val, Split::Test].map(|s| m.split(s));
    assert!(parts.iter().all(|p| !p.is_empty()));
    assert_eq!(parts.iter().map(Vec::len).sum::<usize>(), 7);
    let mut names: Vec<&str> = parts.iter().flatten().map(|e| e.name.as_str()).collect();
    names.sort();
    names.dedup();
    assert_eq!(names.len(), 7);
    // each trajectory films its own stretch of tube
    let mut offsets: Vec<f64> = m.trajectories.iter().map(|t| t.axial_offset).collect();
    offsets.sort_by(f64::total_cmp);
    assert!(offsets.windows(2).all(|w| w[1] - w[0] > 10.0));
}

#[test]
fn shape_from_shading_tracks_true_depth_on_a_plain_wall() {
    let scene = SceneConfig {
        texture_amplitude: 0.0,
        ..SceneConfig::new(64, 64, 0)
    };
    let (rgb, depth) = render_frame(&Pose::identity(), &scene).unwrap();
    let d = tsai_shah_depth(&rgb_to_intensity(&rgb).unwrap(), &SfsConfig::default()).unwrap();
    assert!(!d.degenerate);
    let idx: Vec<usize> = (0..d.valid_mask.len()).filter(|&i| d.valid_mask[i]).collect();
    assert!(idx.len() > 64 * 64 / 2);
    let a: Vec<f64> = idx.iter().map(|&i| d.values.data()[i]).collect();
    let b: Vec<f64> = idx.iter().map(|&i| depth.data()[i]).collect();
    let r = pearson(&a, &b);
    assert!(r > 0.9, "correlation {r}");
}
