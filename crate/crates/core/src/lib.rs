pub mod compensation;
pub mod denseflow;
pub mod error;
pub mod flowcodec;
pub mod geometry;
pub mod imaging;
pub mod selection;
pub mod sequenceids;
pub mod storage;
pub mod synth;
pub mod trace;

pub use denseflow::{lucas_kanade_dense, motion_magnitudes, FlowField, LkConfig};
pub use error::{Error, Result};
pub use imaging::{gradients, resize_bilinear, to_grayscale, Frame, Gradients};
pub use compensation::{compensate_batch, compensate_flow, CompensationConfig, CompensationReport};
pub use flowcodec::{decode_flow, encode_flow, CodecConfig};
pub use geometry::{camera_flow, dlt_homography, ransac_homography, Correspondences, Homography, RansacConfig, RansacOutcome};
pub use selection::{select_pairs, MotionManifest, Segment, SelectionConfig};
pub use sequenceids::{assign_position_ids, PositionId, SequenceLayout};
pub use storage::{read_flo, read_image, read_manifest, write_flo, write_image, write_manifest, ManifestDocument};
pub use trace::{grid_seeds, trace_points, Trajectory};
