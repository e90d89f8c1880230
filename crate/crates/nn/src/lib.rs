//! Reverse-mode automatic differentiation over dense `f64` matrices.
//!
//! Every value on a [`Tape`] is a row-major 2-D matrix. Higher-rank data
//! (images, videos, token batches) is flattened by the caller into
//! `positions × channels` rows, and the spatial geometry travels alongside as
//! plain integers. The op set is deliberately coarse: attention, layer norm and
//! depthwise convolution are single fused nodes with hand-written backward
//! passes, which keeps tapes short and the arithmetic inside matrix kernels.

mod gemm;
pub mod gradcheck;
pub mod index;
pub mod init;
pub mod layers;
pub mod optim;
mod params;
mod tape;
mod tensor;

pub use params::{Gradients, ParamId, ParamStore};
pub use tape::{Tape, Var};
pub use tensor::Tensor;
