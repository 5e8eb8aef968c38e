//! Distance-based collaborative filtering: ratings ingest, filtering,
//! embedding training and export of trained populations to the simulator.

mod ratings;
mod train;

pub use ratings::{
    filter_matrix, filter_matrix_fixpoint, ingest_movielens, ingest_ratings_csv, parse_movielens,
    parse_ratings_csv, IngestReport, Rating, RatingsMatrix,
};
pub use train::{
    export_embeddings, export_population, gradient, objective, predict_rating, rmse, train, train_test_split, EmbeddingModel,
    ExportedPopulation, Gradient, TrainConfig, TrainMode, TrainedModel,
};
