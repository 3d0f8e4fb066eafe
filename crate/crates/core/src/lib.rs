//! Transposed convolution, sub-pixel convolution and periodic shuffle, with
//! the machinery to check that a deconvolution layer is a low-resolution
//! convolution with `r^2` output channels per HR channel followed by a
//! periodic shuffle.

pub mod cli;
pub mod conv1d;
pub mod conv2d;
pub mod cost;
pub mod error;
pub mod formats;
pub mod random;
pub mod shuffle;
pub mod tensor;

pub use conv1d::{Crop1d, Filter1d};
pub use conv2d::{Crop2d, KernelStack, Padding2d, Space};
pub use error::{Error, Result};
pub use shuffle::{LrGeometry, ShuffleSpec, SplitFilterBank};
pub use tensor::{max_abs_diff, Shape, Tensor};
