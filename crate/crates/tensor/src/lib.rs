// SPDX-License-Identifier: MIT OR Apache-2.0

//! Dense tensors with a define-by-run reverse-mode tape.
//!
//! Values are generic over [`Real`] (`f32` for training, `f64` for gradient
//! checks). Sequence ops take `[..., T, d]` inputs and are causal in `T`.

pub mod error;
pub mod gradcheck;
pub mod ops;
pub mod real;
pub mod rng;
pub mod tape;
pub mod tensor;

pub use error::{Result, TensorError};
pub use ops::elementwise::{BinaryKind, UnaryKind};
pub use real::{Precision, Real};
pub use rng::Rng;
pub use tape::{Grads, Tape, Var};
pub use tensor::Tensor;
