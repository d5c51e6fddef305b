#![allow(dead_code)]

pub mod camcheck;
pub mod fixtures;
pub mod gradcheck;
pub mod kernels;
pub mod oracles;
pub mod training;
