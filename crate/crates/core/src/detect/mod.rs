//! Detection head, box geometry, evaluation, loss and optimisation.

pub mod boxes;
pub mod head;
pub mod loss;
pub mod metrics;
pub mod optim;

pub use boxes::{iou, nms, BBox, Detection, GroundTruth};
pub use head::{decode, DetectionHead, Detector, HeadConfig, HEAD_STRIDES};
pub use loss::{assign, best_scale, detection_loss, LossTerms};
pub use metrics::{evaluate, map_50_95, MapReport};
pub use optim::{clip_grad_norm, lr_at, Adam, ScheduleConfig};
