//! Empirical measures on sampled points and the verdicts computed from them:
//! entropy accounting, measure diameters and uniform uncorrelation.

mod entropy;
mod measure;
mod spread;
mod uncorrelation;

pub use entropy::{entropy_report, EntropyLevel, EntropyReport};
pub use measure::{closeness_bound, empirical_measure, measure_distance, Distance, EmpiricalMeasure, MeasureSource};
pub use spread::{
    diameter_report, freq_spread, sample_point, sample_point_with_offset, DiameterReport, FreqSpread, POINT_BLOCKS,
};
pub use uncorrelation::{
    self_image, uncorrelation_check, uniform_sweep, BoundAt, Hierarchy, SweepEntry, SweepReport, UncorrelationEntry,
    UncorrelationReport,
};
