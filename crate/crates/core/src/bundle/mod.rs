//! Hermitian metrics on trivial vector bundles: curvature, extension
//! indices, flatness and flat frames.

pub mod curvature;
pub mod extension;
pub mod frame;
pub mod metric;

pub use curvature::{chern_curvature, chern_curvature_fd, griffiths_form, griffiths_lower_bound, CurvatureTensor};
pub use extension::{curvature_from_extension, flatness_test, vector_extension_index, CurvatureEstimate};
pub use frame::{flat_frame, FrameTransform};
pub use metric::{metric_from_spec, metric_get, HermitianMetricField, MetricLabel};
