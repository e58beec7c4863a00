//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

pub mod grad;
pub mod oracles;
pub mod toy;
