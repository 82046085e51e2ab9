pub mod error;
pub mod geometry;
pub mod imaging;
pub mod config;
pub mod dictionary;
pub mod fft2;
pub mod sparse;
pub mod registration;
pub mod analysis;
pub mod baselines;
pub mod harness;
