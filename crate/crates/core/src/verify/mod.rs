//! Brute-force Markov chain over ordered token sequences.
//!
//! The state `(c, t)` keeps the order of the jobs in service and of the
//! available tokens. For small models the chain is built explicitly, solved,
//! and compared with the product form and with the aggregate engine.

mod certify;
mod generator;
mod solve;

pub use certify::{
    check_rate_identities, compare_product_form, ordering_overtakes, overtake_rate,
    random_separable_model, sequence_ln_weights, ProductFormCheck, RateResiduals,
};
pub use generator::{
    build_generator, build_generator_with_cap, detailed_state_count, enumerate_detailed_states,
    enumerate_detailed_states_with_cap, Generator, DEFAULT_STATE_CAP,
};
pub use solve::{check_irreducible, residual, solve_ctmc, Irreducibility, DENSE_LIMIT, RESIDUAL_TOLERANCE};
