//! Dataset loaders.

pub mod mnist;

pub use mnist::{load_mnist, onehot, Dataset, Split, NUM_CLASSES};
