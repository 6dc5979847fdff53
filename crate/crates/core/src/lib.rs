//! Token-based dynamic load balancing in server pools.
//!
//! Jobs of several types arrive at a pool of servers. A job is assigned to
//! a compatible class by seizing the longest-available compatible token in a
//! single bucket, and is blocked when none is left; servers are shared
//! between assigned jobs by balanced fairness or first-come-first-served.
//!
//! * [`model`]: the type / class / server compatibility graph and its set functions.
//! * [`exact`]: balance tables, stationary law, blocking and occupancy, static and ideal baselines.
//! * [`simulate`]: discrete-event simulation of the token bucket and the baselines.
//! * [`verify`]: brute-force Markov chain over ordered token sequences.
//! * [`experiment`]: config files, load sweeps and CSV output.

pub mod error;
pub mod exact;
pub mod experiment;
pub mod model;
pub mod numeric;
pub mod simulate;
pub mod verify;

pub use error::{Error, Result};
pub use model::{ClassSubset, CompatModel, JobClass, JobType, SizeDistribution};
