//! Stacked-GRU sequence surrogate trained with hand-written BPTT and Adam.

pub mod checkpoint;
mod model;
mod predict;
mod train;

pub use model::{pack, unpack, Architecture, ForwardCache, GruLayer, LayerCache, SurrogateModel};
pub use predict::{design_inputs, predict, predict_many, Prediction};
pub use train::{
    batch_gradient, evaluate, mae, mae_with_grad, mse, train, train_with, write_history, Adam,
    EpochStats, TrainConfig, TrainOutcome,
};
