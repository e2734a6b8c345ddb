//! Statistical verification harness.

pub mod clt;
pub mod collision;
pub mod ergodic;
pub mod fit;
pub mod ks;
pub mod mg;
pub mod scaling;

pub use clt::{clt_quenched, CltConfig, CltReport, CltThresholds};
pub use collision::collision_identity_test;
pub use ergodic::{ergodic_average, ErgodicSeries, Observable};
pub use fit::{fit_exponent, ExponentFit, FitPoint};
pub use ks::{ks_normal_test, KsResult};
pub use mg::{mg_hypotheses, MgHypothesesReport};
pub use scaling::{centering_decay, variance_scaling, CenteringDecay, VarianceScaling};
