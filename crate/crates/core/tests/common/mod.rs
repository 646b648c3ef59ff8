//! Independent reference implementations and fixtures shared by the
//! integration tests.
#![allow(dead_code)]

pub mod fixtures;
pub mod oracles;
