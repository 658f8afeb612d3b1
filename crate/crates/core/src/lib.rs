//! Model-based clustering of panels of count time series.
//!
//! Each individual's series is modelled as an INAR(s*) process (binomial
//! thinning of the count `s` steps back plus a Poisson or negative-binomial
//! innovation). A finite mixture of such processes is fitted by EM, the
//! mixture structure is chosen by BIC, and clusterings are scored with the
//! adjusted Rand index. A DTW / fuzzy C-medoids baseline and a simulation
//! study harness are included for comparison.

pub mod baseline;
pub mod error;
pub mod eval;
pub mod inar;
pub mod init;
pub mod mixture;
pub mod optim;
pub mod panel;
pub mod rng;
pub mod selection;
pub mod simstudy;

pub use error::{Error, Result};
pub use inar::{ComponentParams, ComponentSpec, InnovationFamily, InnovationModel};
pub use mixture::{EmConfig, FitResult, MixtureComponent, MixtureModel, Responsibilities};
pub use panel::{CountSeries, PanelData};
