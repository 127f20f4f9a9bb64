//! Test-only oracles shared by the integration suites.
#![allow(dead_code)]

pub mod gradcheck;
pub mod oracles;
pub mod samples;
pub mod scripts;
