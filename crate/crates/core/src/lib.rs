// SPDX-License-Identifier: MIT OR Apache-2.0

//! Retrieval tasks, a zoo of sequence mixers on a shared backbone, a trainer,
//! and interchange interventions for reading out retrieval mechanisms.

pub mod error;
pub mod interventions;
pub mod model_zoo;
pub mod tasks;
pub mod trainer;

pub use error::{Error, Result};
