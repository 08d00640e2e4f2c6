//! Random loop model with crosses and double bars on rooted trees.
//!
//! The crate samples Poisson link configurations on the time circles of a
//! tree's edges, traces the induced loops, and compares loop percolation
//! with link percolation through pruning couplings, Galton-Watson criteria
//! and electrical-network estimates of the branching number.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod estimators;
pub mod explore;
pub mod gwt;
pub mod links;
pub mod loops;
pub mod mc;
pub mod multilink;
pub mod offspring;
pub mod percolation;
pub mod potential;
pub mod quadrature;
pub mod rng;
pub mod tree;

pub use error::{Error, Result};
pub use links::{sample_links, sample_links_keyed, Link, LinkConfiguration, LinkKind};
pub use loops::{
    all_loops, loop_reaches_depth, root_loop, trace_loop, Direction, LoopPoint, LoopTrace, Segment,
};
pub use offspring::{OffspringLaw, OffspringSampler};
pub use tree::{generate_galton_watson, generate_kary, generate_regular, Edge, RootedTree, Vertex};
