//! Clustered multitask diffusion LMS over adaptive networks.
//!
//! Nodes are grouped into clusters that each estimate their own parameter
//! vector. Within a cluster nodes run adapt-then-combine diffusion LMS;
//! across clusters a squared-distance regularizer pulls neighbouring
//! estimates together.
//!
//! - [`network`]: topology, clusters and the combination/regularization matrices.
//! - [`data`]: seeded streams for the linear Gaussian and localization models.
//! - [`engine`]: the adapt-then-combine recursion.
//! - [`theory`]: mean and mean-square performance models.
//! - [`harness`]: Monte-Carlo ensembles with theory overlays.
//! - [`config`] and [`output`]: TOML configuration and result files.

pub mod cli;
pub mod config;
pub mod data;
pub mod engine;
pub mod harness;
pub mod network;
pub mod output;
pub mod theory;
