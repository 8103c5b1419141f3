//! Semi-supervised co-embedding of partially labelled attributed networks.
//!
//! Nodes and attributes are embedded as diagonal Gaussians in one latent
//! space. A GCN encodes nodes, an MLP encodes attributes, and a softmax
//! discriminator infers missing labels; all three are trained jointly on a
//! five-part variational bound using Gaussian reparameterization and
//! Gumbel-Softmax label sampling.

pub mod distributions;
pub mod elbo;
pub mod error;
pub mod eval;
pub mod graphdata;
pub mod model;
pub mod numkernel;
pub mod par;
pub mod trainer;

pub use error::{Error, Result};
