//! Nonlinear system identification with truncated Volterra series and
//! regularization networks built on polynomial kernels.
//!
//! The crate covers the full pipeline: monomial bookkeeping and ground-truth
//! simulation ([`volterra`]), the PK and multiplicative polynomial kernels with their
//! parameter gradients ([`kernels`]), per-monomial penalty expansion ([`penalty`]),
//! kernel ridge regression ([`regnet`]), marginal-likelihood and cross-validation
//! tuning ([`hyperopt`]) and the benchmark harness ([`experiments`]).

pub mod data;
pub mod error;
pub mod experiments;
pub mod hyperopt;
pub mod kernels;
pub mod linalg;
pub mod metrics;
pub mod penalty;
pub mod regnet;
pub mod volterra;

pub use data::{Dataset, Normalization, Signals};
pub use error::{Error, ErrorClass, Result};
pub use hyperopt::{HyperLayout, HyperParamVector, KernelKind, OptimizerConfig, OptimizerReport};
pub use kernels::{KernelConfig, MpkParams, PkParams};
pub use penalty::{expand_penalties, PenaltyTable};
pub use regnet::FittedNetwork;
pub use volterra::{MonomialIndex, VolterraSeries};
