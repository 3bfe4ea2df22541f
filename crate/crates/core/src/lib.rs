//! Exact solvers for the cost-weighted generalized multiple strip packing
//! problem: items are assigned to strips of different widths and packed
//! without overlap or rotation, minimizing `sum_i C_i W_i H_i`.

pub mod cuts;
pub mod formulations;
pub mod instance;
pub mod mip;
pub mod bench;
pub mod bendm;
pub mod normal_positions;
pub mod oracle;
pub mod ycheck;

/// Exact rational used for costs and objective values.
pub type Rational = num_rational::Ratio<i64>;
