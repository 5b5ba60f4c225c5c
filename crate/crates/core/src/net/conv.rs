//! Monte Carlo point convolution: a density-normalized neighborhood average
//! of input features, each weighted per channel by a small MLP of the
//! normalized offset.

use rayon::prelude::*;

use super::tensor::Tensor;
use crate::cloud::{NeighborIndex, Point};
use crate::error::{Error, Result};

pub const LEAKY_SLOPE: f64 = 0.2;

/// Smooth leaky unit `((1 + s) z + (1 - s) (sqrt(1 + z^2) - 1)) / 2`: slope 1
/// for large positive inputs, `s` for large negative ones, zero at zero and
/// infinitely differentiable.
#[inline]
pub fn lrelu(z: f64) -> f64 {
    let q = (1.0 + z * z).sqrt();
    0.5 * ((1.0 + LEAKY_SLOPE) * z + (1.0 - LEAKY_SLOPE) * z * z / (q + 1.0))
}

#[inline]
pub fn lrelu_grad(z: f64) -> f64 {
    0.5 * ((1.0 + LEAKY_SLOPE) + (1.0 - LEAKY_SLOPE) * z / (1.0 + z * z).sqrt())
}

/// Parameter ids of one kernel MLP: `3 -> hidden (leaky ReLU) -> channels`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KernelIds {
    pub w1: usize,
    pub b1: usize,
    pub w2: usize,
    pub b2: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct KernelMlp<'a> {
    pub w1: &'a Tensor,
    pub b1: &'a Tensor,
    pub w2: &'a Tensor,
    pub b2: &'a Tensor,
}

impl<'a> KernelMlp<'a> {
    pub fn from_params(params: &'a super::ModelParams, ids: KernelIds) -> Self {
        KernelMlp {
            w1: params.get(ids.w1),
            b1: params.get(ids.b1),
            w2: params.get(ids.w2),
            b2: params.get(ids.b2),
        }
    }

    pub fn hidden(&self) -> usize {
        self.w1.cols
    }

    pub fn channels(&self) -> usize {
        self.w2.cols
    }

    fn check(&self) -> Result<()> {
        let h = self.hidden();
        if self.w1.rows != 3 || self.b1.len() != h || self.w2.rows != h || self.b2.len() != self.channels() {
            return Err(Error::Shape(format!(
                "kernel MLP shapes w1 {:?} b1 {:?} w2 {:?} b2 {:?}",
                self.w1.shape(),
                self.b1.shape(),
                self.w2.shape(),
                self.b2.shape()
            )));
        }
        Ok(())
    }

    #[inline]
    fn preact(&self, u: &[f64; 3], z: &mut [f64]) {
        let w = &self.w1.data;
        let h = z.len();
        for (k, zk) in z.iter_mut().enumerate() {
            *zk = self.b1.data[k] + u[0] * w[k] + u[1] * w[h + k] + u[2] * w[2 * h + k];
        }
    }

    #[inline]
    fn weights_from_preact(&self, z: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.b2.data);
        for (k, &zk) in z.iter().enumerate() {
            let a = lrelu(zk);
            for (o, w) in out.iter_mut().zip(self.w2.row(k)) {
                *o += a * w;
            }
        }
    }

    /// Per-channel kernel weights at normalized offset `u`.
    pub fn eval(&self, u: &[f64; 3]) -> Vec<f64> {
        let mut z = vec![0.0; self.hidden()];
        let mut out = vec![0.0; self.channels()];
        self.preact(u, &mut z);
        self.weights_from_preact(&z, &mut out);
        out
    }
}

/// Neighbor count within `radius` (self included) divided by the mean count,
/// so a uniform cloud has density close to 1.
pub fn densities(index: &NeighborIndex, radius: f64) -> Vec<f64> {
    let pts = index.points();
    let counts: Vec<f64> = pts
        .par_iter()
        .map(|p| {
            let mut n = 0usize;
            index.for_each_within(p, radius, |_, _| n += 1);
            n as f64
        })
        .collect();
    let mean = counts.iter().sum::<f64>() / counts.len().max(1) as f64;
    counts.into_iter().map(|c| c / mean).collect()
}

/// Neighbors of `center` within `radius`, minus those for which `skip`
/// holds. With `canonical` they are ordered by position (then id) so the
/// summation order does not depend on how the input is indexed; otherwise
/// they come in index order, which is deterministic for a fixed input.
fn sorted_neighbors(
    index: &NeighborIndex,
    center: &Point,
    radius: f64,
    canonical: bool,
    skip: impl Fn(usize) -> bool,
    out: &mut Vec<usize>,
) {
    out.clear();
    index.for_each_within(center, radius, |id, _| {
        if !skip(id) {
            out.push(id);
        }
    });
    if !canonical {
        return;
    }
    let pts = index.points();
    out.sort_unstable_by(|&a, &b| {
        let (p, q) = (&pts[a], &pts[b]);
        p.x.total_cmp(&q.x)
            .then(p.y.total_cmp(&q.y))
            .then(p.z.total_cmp(&q.z))
            .then(a.cmp(&b))
    });
}

#[inline]
fn offset(p: &Point, x: &Point, radius: f64) -> [f64; 3] {
    let d = (p - x) / radius;
    [d.x, d.y, d.z]
}

/// Precomputed edges of one convolution, used when a backward pass is needed.
#[derive(Debug, Clone)]
pub struct ConvGeometry {
    pub n_in: usize,
    pub n_out: usize,
    row_ptr: Vec<usize>,
    src: Vec<u32>,
    offsets: Vec<[f64; 3]>,
    scale: Vec<f64>,
}

impl ConvGeometry {
    /// `exclude(out, in)` removes individual edges (the blind spot).
    pub fn build(
        index_in: &NeighborIndex,
        out_pts: &[Point],
        radius: f64,
        dens: &[f64],
        exclude: impl Fn(usize, usize) -> bool + Sync,
    ) -> Self {
        let rows: Vec<Vec<usize>> = out_pts
            .par_iter()
            .enumerate()
            .map_init(Vec::new, |buf, (i, x)| {
                sorted_neighbors(index_in, x, radius, false, |j| exclude(i, j), buf);
                buf.clone()
            })
            .collect();
        let in_pts = index_in.points();
        let mut row_ptr = Vec::with_capacity(out_pts.len() + 1);
        row_ptr.push(0);
        let total: usize = rows.iter().map(Vec::len).sum();
        let mut src = Vec::with_capacity(total);
        let mut offsets = Vec::with_capacity(total);
        let mut scale = Vec::with_capacity(total);
        for (i, nb) in rows.iter().enumerate() {
            let inv_n = 1.0 / nb.len() as f64;
            for &j in nb {
                src.push(j as u32);
                offsets.push(offset(&in_pts[j], &out_pts[i], radius));
                scale.push(inv_n / dens[j]);
            }
            row_ptr.push(src.len());
        }
        ConvGeometry {
            n_in: in_pts.len(),
            n_out: out_pts.len(),
            row_ptr,
            src,
            offsets,
            scale,
        }
    }

    pub fn edge_count(&self) -> usize {
        self.src.len()
    }

    pub fn empty_rows(&self) -> usize {
        self.row_ptr.windows(2).filter(|w| w[0] == w[1]).count()
    }

    /// Aggregated features and the cached kernel pre-activations (one row of
    /// `hidden` values per edge).
    pub fn forward(&self, x: &Tensor, k: &KernelMlp) -> (Tensor, Vec<f64>) {
        let h = k.hidden();
        let c = k.channels();
        assert_eq!(x.cols, c, "conv input width");
        assert_eq!(x.rows, self.n_in, "conv input rows");
        let mut z = vec![0.0; self.edge_count() * h];
        z.par_chunks_mut(h)
            .zip(self.offsets.par_iter())
            .for_each(|(zr, u)| k.preact(u, zr));
        let mut out = Tensor::zeros(self.n_out, c);
        out.data.par_chunks_mut(c.max(1)).enumerate().for_each_init(
            || vec![0.0; c],
            |kv, (i, acc)| {
                for e in self.row_ptr[i]..self.row_ptr[i + 1] {
                    k.weights_from_preact(&z[e * h..(e + 1) * h], kv);
                    let f = x.row(self.src[e] as usize);
                    let s = self.scale[e];
                    for ch in 0..c {
                        acc[ch] += s * kv[ch] * f[ch];
                    }
                }
            },
        );
        (out, z)
    }

    /// Accumulates parameter gradients into `gk` (`[w1, b1, w2, b2]`) and the
    /// input-feature gradient into `gx`.
    pub fn backward(&self, x: &Tensor, k: &KernelMlp, z: &[f64], g: &Tensor, gk: [&mut Tensor; 4], gx: &mut Tensor) {
        let h = k.hidden();
        let c = k.channels();
        let [gw1, gb1, gw2, gb2] = gk;
        let mut kv = vec![0.0; c];
        let mut dk = vec![0.0; c];
        let mut dz = vec![0.0; h];
        for i in 0..self.n_out {
            let gi = g.row(i);
            if gi.iter().all(|&v| v == 0.0) {
                continue;
            }
            for e in self.row_ptr[i]..self.row_ptr[i + 1] {
                let ze = &z[e * h..(e + 1) * h];
                k.weights_from_preact(ze, &mut kv);
                let j = self.src[e] as usize;
                let s = self.scale[e];
                {
                    let f = x.row(j);
                    for ch in 0..c {
                        dk[ch] = s * f[ch] * gi[ch];
                    }
                }
                let gxj = gx.row_mut(j);
                for ch in 0..c {
                    gxj[ch] += s * kv[ch] * gi[ch];
                }
                for (hh, &zh) in ze.iter().enumerate() {
                    let a = lrelu(zh);
                    let w2r = k.w2.row(hh);
                    let gw2r = gw2.row_mut(hh);
                    let mut dh = 0.0;
                    for ch in 0..c {
                        gw2r[ch] += a * dk[ch];
                        dh += dk[ch] * w2r[ch];
                    }
                    dz[hh] = dh * lrelu_grad(zh);
                }
                for ch in 0..c {
                    gb2.data[ch] += dk[ch];
                }
                let u = &self.offsets[e];
                for hh in 0..h {
                    gb1.data[hh] += dz[hh];
                    for a in 0..3 {
                        gw1.data[a * h + hh] += u[a] * dz[hh];
                    }
                }
            }
        }
    }
}

/// Same result as building a [`ConvGeometry`] and running its forward pass,
/// without materializing edges (memory stays proportional to the point
/// counts). Returns the aggregated features and the number of empty
/// neighborhoods.
pub fn conv_stream(
    x: &Tensor,
    index_in: &NeighborIndex,
    out_pts: &[Point],
    radius: f64,
    dens: &[f64],
    exclude: impl Fn(usize, usize) -> bool + Sync,
    k: &KernelMlp,
) -> (Tensor, usize) {
    conv_stream_ordered(x, index_in, out_pts, radius, dens, false, exclude, k)
}

#[allow(clippy::too_many_arguments)]
fn conv_stream_ordered(
    x: &Tensor,
    index_in: &NeighborIndex,
    out_pts: &[Point],
    radius: f64,
    dens: &[f64],
    canonical: bool,
    exclude: impl Fn(usize, usize) -> bool + Sync,
    k: &KernelMlp,
) -> (Tensor, usize) {
    let h = k.hidden();
    let c = k.channels();
    let in_pts = index_in.points();
    let mut out = Tensor::zeros(out_pts.len(), c);
    let empty = out
        .data
        .par_chunks_mut(c.max(1))
        .enumerate()
        .map_init(
            || (Vec::new(), vec![0.0; h], vec![0.0; c]),
            |(nb, z, kv), (i, acc)| {
                let x0 = &out_pts[i];
                sorted_neighbors(index_in, x0, radius, canonical, |j| exclude(i, j), nb);
                let inv_n = 1.0 / nb.len() as f64;
                for &j in nb.iter() {
                    k.preact(&offset(&in_pts[j], x0, radius), z);
                    k.weights_from_preact(z, kv);
                    let f = x.row(j);
                    let s = inv_n / dens[j];
                    for ch in 0..c {
                        acc[ch] += s * kv[ch] * f[ch];
                    }
                }
                usize::from(nb.is_empty())
            },
        )
        .sum();
    (out, empty)
}

/// Monte Carlo convolution of `features` (one row per input point) onto
/// `out_points`, before channel mixing:
/// `out(x) = 1/|N(x)| * sum_j kappa((p_j - x) / radius) * f_j / rho_j`.
/// Points with no neighbor get a zero row.
pub fn mc_conv(
    features: &Tensor,
    in_points: &[Point],
    out_points: &[Point],
    radius: f64,
    densities: &[f64],
    kernel: &KernelMlp,
) -> Result<Tensor> {
    kernel.check()?;
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::param("radius", format!("must be > 0, got {radius}")));
    }
    if features.rows != in_points.len() || densities.len() != in_points.len() || features.cols != kernel.channels() {
        return Err(Error::Shape(format!(
            "{} feature rows of width {}, {} points, {} densities, kernel width {}",
            features.rows,
            features.cols,
            in_points.len(),
            densities.len(),
            kernel.channels()
        )));
    }
    if let Some(i) = densities.iter().position(|d| !(*d > 0.0 && d.is_finite())) {
        return Err(Error::InvalidData(format!("density {i} is {}, must be > 0", densities[i])));
    }
    let index = NeighborIndex::build(in_points, radius)?;
    let (out, empty) = conv_stream_ordered(features, &index, out_points, radius, densities, true, |_, _| false, kernel);
    if empty > 0 {
        log::debug!("mc_conv: {empty} output points with empty neighborhoods");
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn activation_is_smooth_leaky() {
        assert_eq!(lrelu(0.0), 0.0);
        assert!((lrelu(1e6) - (1e6 - 0.4)).abs() < 1e-6);
        assert!((lrelu(-1e6) - (-2e5 - 0.4)).abs() < 1e-6);
        for z in [-3.0, -0.5, -1e-3, 0.0, 0.7, 4.0] {
            let fd = (lrelu(z + 1e-6) - lrelu(z - 1e-6)) / 2e-6;
            assert!((fd - lrelu_grad(z)).abs() < 1e-8);
            let direct = 0.6 * z + 0.4 * ((1.0 + z * z).sqrt() - 1.0);
            assert!((lrelu(z) - direct).abs() < 1e-12);
        }
        assert!(lrelu_grad(-50.0) > LEAKY_SLOPE && lrelu_grad(50.0) < 1.0);
    }
    use rand_chacha::ChaCha8Rng;

    struct Owned {
        w1: Tensor,
        b1: Tensor,
        w2: Tensor,
        b2: Tensor,
    }

    impl Owned {
        fn random(h: usize, c: usize, seed: u64) -> Self {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut t = |r: usize, cc: usize| {
                Tensor::from_vec(r, cc, (0..r * cc).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
            };
            Owned {
                w1: t(3, h),
                b1: t(1, h),
                w2: t(h, c),
                b2: t(1, c),
            }
        }
        fn view(&self) -> KernelMlp<'_> {
            KernelMlp {
                w1: &self.w1,
                b1: &self.b1,
                w2: &self.w2,
                b2: &self.b2,
            }
        }
    }

    fn slot(k: &mut Owned, t: usize) -> &mut Tensor {
        match t {
            0 => &mut k.w1,
            1 => &mut k.b1,
            2 => &mut k.w2,
            _ => &mut k.b2,
        }
    }

    fn cloud(n: usize, seed: u64) -> Vec<Point> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| Point::new(rng.random_range(0.0..1.0), rng.random_range(0.0..1.0), rng.random_range(0.0..0.2)))
            .collect()
    }

    fn feats(n: usize, c: usize, seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::from_vec(n, c, (0..n * c).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn single_point_density_normalization() {
        let k = Owned::random(8, 4, 1);
        let p = [Point::new(0.3, 0.2, 0.1)];
        let f = feats(1, 4, 2);
        let out = mc_conv(&f, &p, &p, 0.5, &[1.0], &k.view()).unwrap();
        let kap = k.view().eval(&[0.0; 3]);
        for c in 0..4 {
            assert_eq!(out.data[c], kap[c] * f.data[c]);
        }
        let half = mc_conv(&f, &p, &p, 0.5, &[2.0], &k.view()).unwrap();
        for c in 0..4 {
            assert!((half.data[c] - out.data[c] / 2.0).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_outside_radius_and_empty_rows() {
        let k = Owned::random(8, 2, 3);
        let pin = [Point::new(0.0, 0.0, 0.0)];
        let pout = [Point::new(1.0, 0.0, 0.0), Point::new(0.5, 0.0, 0.0)];
        let out = mc_conv(&feats(1, 2, 1), &pin, &pout, 0.5, &[1.0], &k.view()).unwrap();
        assert_eq!(out.row(0), &[0.0, 0.0]);
        assert_ne!(out.row(1), &[0.0, 0.0]);
    }

    #[test]
    fn brute_force_formula() {
        let k = Owned::random(8, 3, 4);
        let pin = cloud(300, 5);
        let pout = cloud(40, 6);
        let f = feats(300, 3, 7);
        let dens: Vec<f64> = (0..300).map(|i| 0.5 + (i % 5) as f64 * 0.25).collect();
        let r = 0.2;
        let out = mc_conv(&f, &pin, &pout, r, &dens, &k.view()).unwrap();
        for (i, x) in pout.iter().enumerate() {
            let nb: Vec<usize> = (0..300).filter(|&j| (pin[j] - x).norm() <= r).collect();
            let mut acc = [0.0; 3];
            for &j in &nb {
                let d = (pin[j] - x) / r;
                let kap = k.view().eval(&[d.x, d.y, d.z]);
                for c in 0..3 {
                    acc[c] += kap[c] * f.row(j)[c] / dens[j] / nb.len() as f64;
                }
            }
            for c in 0..3 {
                assert!((acc[c] - out.row(i)[c]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn permutation_invariant_bitwise() {
        let k = Owned::random(8, 3, 8);
        let pin = cloud(400, 9);
        let f = feats(400, 3, 10);
        let dens: Vec<f64> = (0..400).map(|i| 1.0 + (i % 3) as f64).collect();
        let pout = cloud(50, 11);
        let a = mc_conv(&f, &pin, &pout, 0.15, &dens, &k.view()).unwrap();
        let mut perm: Vec<usize> = (0..400).collect();
        perm.reverse();
        perm.swap(3, 200);
        let pin2: Vec<Point> = perm.iter().map(|&i| pin[i]).collect();
        let dens2: Vec<f64> = perm.iter().map(|&i| dens[i]).collect();
        let mut f2 = Tensor::zeros(400, 3);
        for (n, &i) in perm.iter().enumerate() {
            f2.row_mut(n).copy_from_slice(f.row(i));
        }
        let b = mc_conv(&f2, &pin2, &pout, 0.15, &dens2, &k.view()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn geometry_matches_stream_bitwise() {
        let k = Owned::random(8, 5, 12);
        let pin = cloud(500, 13);
        let pout = cloud(120, 14);
        let f = feats(500, 5, 15);
        let index = NeighborIndex::build(&pin, 0.1).unwrap();
        let dens = densities(&index, 0.1);
        let ex = |i: usize, j: usize| (i + j) % 7 == 0;
        let geom = ConvGeometry::build(&index, &pout, 0.1, &dens, ex);
        let (a, _) = geom.forward(&f, &k.view());
        let (b, empty) = conv_stream(&f, &index, &pout, 0.1, &dens, ex, &k.view());
        assert_eq!(a, b);
        assert_eq!(empty, geom.empty_rows());
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut k = Owned::random(8, 3, 16);
        let pin = cloud(150, 17);
        let pout = cloud(30, 18);
        let mut f = feats(150, 3, 19);
        let index = NeighborIndex::build(&pin, 0.25).unwrap();
        let dens = densities(&index, 0.25);
        let geom = ConvGeometry::build(&index, &pout, 0.25, &dens, |_, _| false);
        let g = feats(30, 3, 20);
        let loss = |k: &Owned, f: &Tensor| -> f64 {
            let (o, _) = geom.forward(f, &k.view());
            o.data.iter().zip(&g.data).map(|(a, b)| a * b).sum()
        };
        let (_, z) = geom.forward(&f, &k.view());
        let mut gk = [Tensor::zeros(3, 8), Tensor::zeros(1, 8), Tensor::zeros(8, 3), Tensor::zeros(1, 3)];
        let mut gx = Tensor::zeros(150, 3);
        {
            let [a, b, c, d] = &mut gk;
            geom.backward(&f, &k.view(), &z, &g, [a, b, c, d], &mut gx);
        }
        let h = 1e-6;
        for (t, grad) in [0usize, 1, 2, 3].into_iter().zip(gk.iter()) {
            for idx in 0..grad.len() {
                let orig = slot(&mut k, t).data[idx];
                slot(&mut k, t).data[idx] = orig + h;
                let lp = loss(&k, &f);
                slot(&mut k, t).data[idx] = orig - h;
                let lm = loss(&k, &f);
                slot(&mut k, t).data[idx] = orig;
                let fd = (lp - lm) / (2.0 * h);
                assert!((fd - grad.data[idx]).abs() < 1e-6 * (1.0 + fd.abs()), "tensor {t} idx {idx}: {fd} vs {}", grad.data[idx]);
            }
        }
        for idx in (0..gx.len()).step_by(7) {
            let orig = f.data[idx];
            f.data[idx] = orig + h;
            let lp = loss(&k, &f);
            f.data[idx] = orig - h;
            let lm = loss(&k, &f);
            f.data[idx] = orig;
            assert!(((lp - lm) / (2.0 * h) - gx.data[idx]).abs() < 1e-7);
        }
    }
}
