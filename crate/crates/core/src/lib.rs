//! Reactive mission landscapes.
//!
//! A small probabilistic rule program over typed signal channels is compiled
//! into an exact weighted-model-counting circuit ([`compiler`]), partitioned
//! by how often each input changes ([`circuit`]), and kept up to date per
//! grid cell as spatial signals stream in ([`signals`], [`starmap`], [`sim`]).
//! [`pipeline`] wires the pieces into the `rml` command-line tool.

// `!(x > 0.0)` is how NaN gets rejected along with the rest.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod circuit;
pub mod compiler;
pub mod lang;
pub mod pipeline;
pub mod signals;
pub mod sim;
pub mod starmap;
