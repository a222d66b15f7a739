//! Cluster-based motion prediction for multi-agent systems.
//!
//! Agents are grouped by a cost distance built from minimum-effort optimal
//! control problems together with Euclidean and Hausdorff gates. Each cluster
//! is propagated with an unscented Kalman filter through social-force
//! closed-loop dynamics, and the cluster estimates are assembled into a
//! Gaussian-mixture occupancy density.
//!
//! The numerical core is generic over the scalar type ([`Real`], implemented
//! for `f32` and `f64`). The aliases at the crate root fix the scalar to
//! `f64`, which is what the file formats and the evaluation harness use.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod clustering;
pub mod dynamics;
pub mod eval;
pub mod filter;
pub mod io;
pub mod linalg;
pub mod model;
pub mod optcost;
pub mod pipeline;
pub mod scalar;

#[cfg(test)]
mod testutil;

pub use scalar::{lit, to_f64, Real};

pub type AgentState = model::AgentState<f64>;
pub type Goal = model::Goal<f64>;
pub type Cluster = model::Cluster<f64>;
pub type ClusterSet = model::ClusterSet<f64>;
pub type Config = model::Config<f64>;
pub type GaussianComponent = pipeline::GaussianComponent<f64>;
pub type MixtureDensity = pipeline::MixtureDensity<f64>;
pub type Tracker = pipeline::Tracker<f64>;

pub use model::{AgentId, ClusterId};
