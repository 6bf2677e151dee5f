//! Stormwater pipe design under nonstationary extreme rainfall.
//!
//! The pipeline runs from annual-maximum rainfall through Bayesian GEV fits
//! ([`bayes_fit`]), covariate selection ([`model_selection`]) and lifetime
//! hydraulic reliability ([`hydraulics`]) to stage-wise uncertainty
//! attribution ([`uncertainty`]) and safety-factor search ([`design`]).

pub mod bayes_fit;
pub mod design;
pub mod error;
pub mod gev;
pub mod hydraulics;
pub mod model_selection;
pub mod plot;
pub mod rng;
pub mod stats;
pub mod timeseries_io;
pub mod uncertainty;

pub use error::{Error, Result};
