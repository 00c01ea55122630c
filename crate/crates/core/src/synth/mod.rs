//! Synthetic tube scenes, capsule trajectories and the on-disk dataset.

pub mod dataset;
pub mod noise;
pub mod render;
pub mod trajectory;

pub use dataset::{
    build_dataset, load_sequence, load_split, DatasetManifest, DatasetOptions, DepthSource, Split,
};
pub use render::{render_frame, render_hemisphere, SceneConfig};
pub use trajectory::{generate_trajectory, TrajectoryClass, TrajectorySpec};
