// SPDX-License-Identifier: MIT OR Apache-2.0

#![allow(dead_code)]

pub mod mixers;
#[path = "../../../tensor/tests/support/op_cases.rs"]
pub mod op_cases;
pub mod pcfg;
