use nalgebra::{Matrix3, SymmetricEigen};

use crate::cloud::{Point, Vec3};

/// Centroid and (biased) covariance of a non-empty set of points.
pub fn covariance<'a>(points: impl IntoIterator<Item = &'a Point>) -> Option<(Point, Matrix3<f64>)> {
    let pts: Vec<&Point> = points.into_iter().collect();
    if pts.is_empty() {
        return None;
    }
    let n = pts.len() as f64;
    let centroid = Point::from(pts.iter().fold(Vec3::zeros(), |a, p| a + p.coords) / n);
    let mut cov = Matrix3::zeros();
    for p in &pts {
        let d = *p - centroid;
        cov += d * d.transpose();
    }
    Some((centroid, cov / n))
}

/// Eigenvectors sorted by ascending eigenvalue, paired with their eigenvalues.
pub fn sorted_eigen(m: Matrix3<f64>) -> [(f64, Vec3); 3] {
    let eig = SymmetricEigen::new(m);
    let mut pairs: [(f64, Vec3); 3] =
        [0, 1, 2].map(|i| (eig.eigenvalues[i], eig.eigenvectors.column(i).into_owned()));
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs
}
