//! Stage 2: per-row distance classification and per-event aggregation.

mod aggregate;
mod net;

pub use aggregate::{aggregate_event, select_look, LookMode};
pub use net::{
    finite_difference_gradients, max_relative_error, predict_rows, to_matrix, train_distance,
    train_distance_with, DenseNet, DistanceModel, Gradients, Layer, NetConfig, RowPrediction,
    N_OUTPUTS,
};
