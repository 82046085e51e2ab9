//! Dictionary properties that govern registration accuracy, and a brute-force distance oracle.

pub mod fixtures;
pub mod oracle;
pub mod rho;
pub mod rli;

pub use oracle::{oracle_distance, OracleGrid};
pub use rho::{estimate_rho, gaussian_distance, gaussian_inner_product, RhoEstimate, RhoGrid};
pub use rli::{box_rli_constants, pair_measure, rli_check_direction, rli_falsify, rli_falsify_vectors, RliReport};
