//! Monocular visual odometry for endoscopic capsule frames: shape-from-shading
//! depth, an inception + two-layer LSTM pose regressor trained with a
//! translation/rotation balanced loss, a synthetic tube-scene generator and a
//! relative-pose-error evaluation harness.

pub mod error;
pub mod eval;
pub mod layers;
pub mod net;
pub mod pipeline;
pub mod pose;
pub mod sfs;
pub mod synth;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use net::{Model, NetConfig, NetworkParams};
pub use pose::{Pose, RelativePose};
pub use tensor::{Precision, Real, Tensor};
