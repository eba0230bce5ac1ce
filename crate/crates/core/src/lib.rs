//! Narrative speech features, topic dynamics and classifiers for
//! cognitive-decline screening. `no_std` with `alloc`.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod acoustic;
pub mod corpus;
pub mod dtm;
pub mod eval;
pub mod explain;
pub mod linguistic;
pub mod math;
pub mod refmetrics;
pub mod shallow;
pub mod synth;
pub mod titan;
