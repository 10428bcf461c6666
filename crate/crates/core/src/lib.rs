//! Joint ("distributed") evaluation of two key comparisons that share some
//! participants.
//!
//! Both reference values are estimated together from every reported result,
//! with no comparison treated as primary. The crate provides:
//!
//! * [`model`]: laboratory results, validation and the index-set partition;
//! * [`engine`]: reference values, their covariance, degrees of equivalence
//!   and the `q² <= N - 2` conformity test;
//! * [`inflation`]: the smallest uncertainty increase of one laboratory that
//!   lets a failing dataset pass;
//! * [`synth`]: seeded synthetic comparisons;
//! * [`io`]: CSV/JSON datasets, reports and plot data.

pub mod engine;
pub mod error;
pub mod golden;
pub mod inflation;
pub mod io;
pub mod model;
pub mod sum;
pub mod synth;

pub use engine::{
    chi_square, compute_aux, compute_doe, compute_kcrv, compute_q2, link, posterior_density,
    q2_contributions, AuxQuantities, ConformityReport, DegreeOfEquivalence, KcrvEstimate,
    LinkingResult,
};
pub use error::{Error, Result};
pub use inflation::{minimal_inflation, InflationOptions, InflationResult, Resolution};
pub use model::{
    to_correlation, validate_dataset, ComparisonDataset, CorrelationView, DatasetWarning,
    LabResult, Membership, Standard,
};
pub use synth::{
    draw_observations, generate_scenario, sample_lab, Layout, Observations, SampledLab,
    SyntheticScenario,
};
