use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cloud::{PointCloud, Rgb, Vec3};
use crate::error::{Error, Result};
use crate::linalg;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DirectionalLight {
    /// Unit vector pointing towards the light.
    pub direction: Vec3,
    pub albedo: Rgb,
}

/// Colors every point with three seeded random directional lights.
///
/// Light directions are uniform on the hemisphere around the cloud's
/// principal axis; per-light albedos are uniform in `[0.3, 1.0]` per channel.
pub fn shade_lambertian(cloud: &PointCloud, normals: &[Vec3], seed: u64) -> Result<PointCloud> {
    let axis = linalg::covariance(cloud.positions())
        .map(|(_, cov)| linalg::sorted_eigen(cov)[2].1)
        .unwrap_or_else(Vec3::z);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lights: Vec<DirectionalLight> = (0..3)
        .map(|_| {
            // uniform on the sphere, folded onto the hemisphere of `axis`
            let z: f64 = rng.random_range(-1.0..1.0);
            let phi: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            let s = (1.0 - z * z).sqrt();
            let mut d = Vec3::new(s * phi.cos(), s * phi.sin(), z);
            if d.dot(&axis) < 0.0 {
                d = -d;
            }
            DirectionalLight {
                direction: d,
                albedo: [0, 1, 2].map(|_| rng.random_range(0.3..=1.0)),
            }
        })
        .collect();
    shade_with_lights(cloud, normals, &lights)
}

/// `color_c = clamp(sum_k albedo_kc * max(0, <n, l_k>), 0, 1)`.
pub fn shade_with_lights(
    cloud: &PointCloud,
    normals: &[Vec3],
    lights: &[DirectionalLight],
) -> Result<PointCloud> {
    if normals.len() != cloud.len() {
        return Err(Error::InvalidData(format!(
            "{} normals for {} points",
            normals.len(),
            cloud.len()
        )));
    }
    if let Some(i) = normals.iter().position(|n| (n.norm() - 1.0).abs() > 1e-6) {
        return Err(Error::InvalidData(format!(
            "normal {i} has length {}, expected unit",
            normals[i].norm()
        )));
    }
    let colors = normals
        .iter()
        .map(|n| {
            let mut c = [0.0; 3];
            for l in lights {
                let cos = n.dot(&l.direction).max(0.0);
                for k in 0..3 {
                    c[k] += l.albedo[k] * cos;
                }
            }
            c.map(|v| v.clamp(0.0, 1.0))
        })
        .collect();
    let mut out = cloud.clone();
    out.set_colors(Some(colors))?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::{shapes, Point};

    fn one_point() -> PointCloud {
        PointCloud::new(vec![Point::origin()]).unwrap()
    }

    #[test]
    fn cosine_one_gives_white() {
        let light = DirectionalLight {
            direction: Vec3::z(),
            albedo: [1.0; 3],
        };
        let c = shade_with_lights(&one_point(), &[Vec3::z()], &[light]).unwrap();
        assert_eq!(c.colors().unwrap()[0], [1.0, 1.0, 1.0]);
    }

    #[test]
    fn orthogonal_normal_is_black() {
        let lights = [Vec3::x(), Vec3::y()].map(|d| DirectionalLight {
            direction: d,
            albedo: [0.8; 3],
        });
        let c = shade_with_lights(&one_point(), &[Vec3::z()], &lights).unwrap();
        assert_eq!(c.colors().unwrap()[0], [0.0, 0.0, 0.0]);
    }

    #[test]
    fn non_unit_normals_rejected() {
        assert!(shade_lambertian(&one_point(), &[Vec3::new(0.0, 0.0, 2.0)], 1).is_err());
    }

    #[test]
    fn deterministic_and_in_range() {
        let (cloud, normals) = crate::cloud::sample_surface(&shapes::icosphere(2), 0.2, 1).unwrap();
        let a = shade_lambertian(&cloud, &normals, 9).unwrap();
        let b = shade_lambertian(&cloud, &normals, 9).unwrap();
        assert_eq!(a, b);
        let c = shade_lambertian(&cloud, &normals, 10).unwrap();
        assert_ne!(a.colors(), c.colors());
        assert!(a.colors().unwrap().iter().flatten().all(|v| (0.0..=1.0).contains(v)));
    }
}
