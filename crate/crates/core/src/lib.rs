//! Class-aware sampling and relational-graph smoothing over precomputed
//! embeddings.
//!
//! The offline stage clusters training features with an ART-style
//! clusterer ([`crm`]) and derives a class / pattern / instance relation
//! graph. Training ([`cags`], [`rgrl`]) draws class-aware positives and
//! negatives from that graph, smooths each anchor with a two-layer graph
//! convolution over its positives, aligns the result with cluster and class
//! prototypes, and optimises cross-entropy plus two dispersion losses under
//! a difficulty curriculum. [`pipeline`] wires the stages together.

pub mod cags;
pub mod crm;
pub mod data_io;
pub mod error;
pub mod numerics;
pub mod pipeline;
pub mod rgrl;

pub use error::{CsrmsError, Result};
