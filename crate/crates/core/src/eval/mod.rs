//! Chamfer evaluation against meshes, error histograms and colors, and the
//! mean-shift mode oracle.

pub mod metrics;
pub mod modes;
pub mod surface;

pub use metrics::{
    chamfer, chamfer_sampled, chamfer_with, error_color, error_colorize, error_histogram, nearest_distances, EvalReport,
    Histogram,
};
pub use modes::{circle_mode_radius, mode_manifold, sphere_mode_radius, ModeResult};
pub use surface::{point_to_mesh_distance, point_to_mesh_distance_brute, point_triangle_distance, TriangleGrid};
