//! Small training engine with explicit per-layer backward passes, and the
//! two-stream detector built on it.

pub mod checkpoint;
pub mod layers;
pub mod loss;
pub mod model;
pub mod optim;
pub mod tensor;
pub mod train;

pub use checkpoint::{load_tensors, save_tensors, CheckpointMeta, ModelCheckpoint};
pub use layers::{param_count, Ctx, Layer, Mode, ParamKind};
pub use loss::{cross_entropy, cross_entropy_with_grad};
pub use model::{Detector, ModelConfig, StreamMode};
pub use optim::{cosine_lr, Adam, AdamConfig};
pub use tensor::Tensor;
pub use train::{history_csv, predict, train, EpochRecord, Example, TrainConfig, TrainOutcome, LABEL_FAKE, LABEL_REAL};
