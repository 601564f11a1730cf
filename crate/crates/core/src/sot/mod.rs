//! Single-object trackers used to propagate each live track by one frame.
//!
//! The multi-object engine only sees the [`TrackerFactory`] /
//! [`SingleObjectTracker`] pair, so any tracker honouring the contract can be
//! swapped in.

mod correlation;
mod fft2d;

pub use correlation::{CorrelationFilterParams, CorrelationTracker};

use crate::error::{Error, Result};
use crate::model::{BoundingBox, Frame, FrameSize};

pub trait SingleObjectTracker: Send {
    /// Current box estimate.
    fn bbox(&self) -> BoundingBox;

    /// Locates the target in `frame` and adapts to it.
    fn update(&mut self, frame: &Frame) -> Result<BoundingBox>;

    /// Confidence of the most recent localisation, if the tracker has one.
    fn confidence(&self) -> Option<f64> {
        None
    }
}

/// Builds a tracker on a target box.
pub trait TrackerFactory: Sync {
    type Tracker: SingleObjectTracker;

    fn init(&self, frame: &Frame, bbox: BoundingBox) -> Result<Self::Tracker>;
}

/// Zero-motion predictor: the target is assumed to stay where it was last seen.
#[derive(Debug, Clone, Copy, Default)]
pub struct HoldPosition;

#[derive(Debug, Clone)]
pub struct HoldPositionTracker {
    bbox: BoundingBox,
    frame_size: FrameSize,
}

impl SingleObjectTracker for HoldPositionTracker {
    fn bbox(&self) -> BoundingBox {
        self.bbox
    }

    fn update(&mut self, frame: &Frame) -> Result<BoundingBox> {
        if frame.size() != self.frame_size {
            return Err(Error::DimensionMismatch {
                expected: (self.frame_size.width, self.frame_size.height),
                found: (frame.width(), frame.height()),
                context: "hold-position update".into(),
            });
        }
        Ok(self.bbox)
    }
}

impl TrackerFactory for HoldPosition {
    type Tracker = HoldPositionTracker;

    fn init(&self, frame: &Frame, bbox: BoundingBox) -> Result<HoldPositionTracker> {
        Ok(HoldPositionTracker {
            bbox,
            frame_size: frame.size(),
        })
    }
}
