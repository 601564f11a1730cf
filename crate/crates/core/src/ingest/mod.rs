//! Frame sequences, stacked detector inputs, detection files, and the
//! classical fallback detector.

mod blob;
mod detections_csv;
mod sequence;
mod stack;

pub use blob::{detect_blobs, otsu_threshold, BlobDetectorParams, DetectorInput, ThresholdMode};
pub use detections_csv::{
    group_by_frame, parse_detections, read_detections, write_detections, write_detections_to,
    DetectionsByFrame, DETECTIONS_HEADER,
};
pub use sequence::{load_frame, load_sequence, write_sequence};
pub use stack::{clamped_index, stack_file_name, stack_frames, write_stack_tiff, StackedInput};
