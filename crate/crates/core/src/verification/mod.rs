//! Statistical tests of the solution properties on solver ensembles.

pub mod attainment;
pub mod contraction;
pub mod entropy;
pub mod fracreg;
pub mod moments;
pub mod stability;
pub mod stats;

pub use attainment::initial_attainment_probe;
pub use contraction::contraction_test;
pub use entropy::{entropy_residual, EntropyTerms, TestFunction};
pub use fracreg::frac_regularity_probe;
pub use moments::{moment_report, moment_uniformity};
pub use stability::{stability_probe, Perturbation};
pub use stats::{DiscSlack, ProbeOutput, Table, TestVerdict};
