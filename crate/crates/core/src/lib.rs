//! Supervised binary-code hashing: CGHash and StructHash.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cghash;
pub mod data;
pub mod error;
pub mod eval;
pub mod hashcore;
pub mod hashlearn;
pub mod linalg;
pub mod optim;
pub mod rankloss;
pub mod scalar;
pub mod simplex;
pub mod structhash;

pub use data::{Dataset, QueryNeighborhood, Triplet, TripletSet};
pub use error::{Error, Result};
pub use hashcore::{BinaryCode, HashFunction, HashModel};
pub use scalar::Scalar;

pub type DatasetF64 = Dataset<f64>;
pub type DatasetF32 = Dataset<f32>;
pub type HashModelF64 = HashModel<f64>;
pub type HashModelF32 = HashModel<f32>;
