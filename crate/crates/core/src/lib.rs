//! Instance segmentation by pixel embeddings: a discriminative clustering
//! loss, clustering of embeddings into instances, a small convolutional
//! network trained with it, synthetic scenes and evaluation metrics.

pub mod cli;
pub mod clustering;
pub mod config;
pub mod error;
pub mod io;
pub mod loss;
pub mod maps;
pub mod metrics;
pub mod synthdata;
pub mod toynet;

pub use error::{Error, Result};
