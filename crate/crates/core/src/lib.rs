pub mod expr;
pub mod quadrature;
pub mod rng;
pub mod graphex;
pub mod theory;
pub mod sampler;
pub mod graphstats;
pub mod harness;
