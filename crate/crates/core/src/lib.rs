//! A desk-scale Bell-test laboratory.
//!
//! * [`qcore`]: small complex matrices, two-qubit states, Lüders measurement.
//! * [`observables`]: analyzer observables, the Bell operator and the
//!   `S² = 4I − [A,A′]⊗[B,B′]` identity.
//! * [`hvt`]: static and dynamic local hidden-variable models, cloned ensembles.
//! * [`harness`]: four-bin and random-order CHSH runs, the time-order term and
//!   the inequality verdicts.
//! * [`oumandel`]: the two-photon beam-splitter state and post-selected
//!   coincidence statistics.
//! * [`cli`]: configuration, report documents and the run driver behind the
//!   `bell-lab` binary.

pub mod cli;
pub mod error;
pub mod harness;
pub mod hvt;
pub mod observables;
pub mod oumandel;
pub mod qcore;
pub mod rng;
pub mod stats;

pub use error::{LabError, Result};
