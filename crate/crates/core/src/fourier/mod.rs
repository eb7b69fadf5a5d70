//! Truncated Fourier series on the torus, grid samples, and torus embeddings.

mod fft;
mod grid;
mod series;
mod torus;

pub use grid::GridField;
pub use series::{grid_product, FourierSeries, Truncation};
pub use torus::TorusEmbedding;

pub(crate) use series::phase_factor;
