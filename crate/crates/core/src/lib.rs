pub mod analytics;
pub mod digest;
pub mod graph;
pub mod ingest;
pub mod needs;
pub mod pipeline;
pub mod topics;
pub mod wave;
