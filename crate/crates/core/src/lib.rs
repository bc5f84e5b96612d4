//! Valuation of share-based payments with performance conditions.
//!
//! The crate covers the market model and its measure change, the award
//! contract and its path functionals, the exact Gaussian law of the
//! log-functionals, Monte Carlo pricing with a geometric-mean control variate,
//! parameter estimation from accounting-period data, and the accounting
//! comparison between grant-date fair value and the theoretical price.

pub mod accounting;
pub mod config;
pub mod contract;
pub mod curve;
pub mod error;
pub mod estimation;
pub mod fixtures;
pub mod grid;
pub mod linalg;
pub mod mc_engine;
pub mod model;
pub mod paths;
pub mod quasi_analytic;
pub mod rng;
pub mod stats;

pub use contract::{AwardContract, ConditionKind, PayoffKind, PerformanceCondition, StrikeRule, Variant};
pub use curve::ParamCurve;
pub use error::{Result, SppcError};
pub use grid::TimeGrid;
pub use mc_engine::{CvMode, PricingMethod, PricingResult, SimConfig};
pub use model::{MarketModel, Measure, OptimalPortfolio, PerfVariable, Stock};
pub use nalgebra::{DMatrix, DVector};
pub use paths::{PathBatch, PathView};
pub use quasi_analytic::{GaussianLaw, QuasiMethod};
pub use stats::Estimate;
