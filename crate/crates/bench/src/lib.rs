//! Benchmark fixtures shared by the criterion targets in `benches/`.

use tdnoise_core::cloud::{min_dist_for_count, poisson_disk_sample, shapes};
use tdnoise_core::noise::corrupt_gaussian;
use tdnoise_core::{PointCloud, TriangleMesh};

/// Icosphere surface sampled to about `n` points.
pub fn sphere_cloud(n: usize) -> (TriangleMesh, PointCloud) {
    let mesh = shapes::icosphere(3);
    let d = min_dist_for_count(&mesh, n, 0).expect("sphere sampling");
    let cloud = poisson_disk_sample(&mesh, d, 0).expect("sphere sampling");
    (mesh, cloud)
}

/// `sphere_cloud` with Gaussian noise of 1% of the diagonal.
pub fn noisy_sphere(n: usize) -> (TriangleMesh, PointCloud, PointCloud) {
    let (mesh, clean) = sphere_cloud(n);
    let noisy = corrupt_gaussian(&clean, 0.01, 1).expect("noise");
    (mesh, clean, noisy)
}
