#![allow(dead_code)]

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tdnoise_core::cloud::shapes;
use tdnoise_core::meshio::{encode_pointcloud, read_geometry, write_mesh_off, Format};
use tdnoise_core::{Error, Point, PointCloud};

/// Valid files the mutations start from.
pub fn seed_corpus(dir: &Path) -> Vec<Vec<u8>> {
    let pts: Vec<Point> = (0..12).map(|i| Point::new(i as f64 * 0.1, (i * i) as f64 * 0.01, -0.5 + i as f64)).collect();
    let colors = (0..12).map(|i| [i as f64 / 11.0, 0.5, 1.0 - i as f64 / 11.0]).collect();
    let plain = PointCloud::new(pts.clone()).unwrap();
    let colored = PointCloud::with_colors(pts, colors).unwrap();
    let mut out = Vec::new();
    for c in [&plain, &colored] {
        for f in [Format::PlyAscii, Format::PlyBinaryLittleEndian, Format::Xyz] {
            out.push(encode_pointcloud(c, f, &["fuzz seed".to_string()]).unwrap());
        }
    }
    let off = dir.join("seed.off");
    write_mesh_off(&shapes::cube(), &off).unwrap();
    out.push(std::fs::read(&off).unwrap());
    out.push(b"OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n".to_vec());
    out.push(b"ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\nproperty float y\nproperty float z\nelement face 1\nproperty list uchar int vertex_indices\nend_header\n0 0 0\n1 1 1\n3 0 1 1\n".to_vec());
    out
}

const TOKENS: &[&[u8]] = &[
    b"ply\n", b"format binary_little_endian 1.0\n", b"format ascii 1.0\n", b"format binary_big_endian 1.0\n",
    b"element vertex 4294967295\n", b"element vertex -3\n", b"element face 99999999999999999999\n",
    b"property list uchar int vertex_indices\n", b"property double x\n", b"property uchar red\n",
    b"end_header\n", b"OFF\n", b"COFF\n", b"nan ", b"inf ", b"-1e308 ", b"1e309 ", b"255 ", b"\0\0\0\0", b"\xff\xff\xff\xff",
    b"\n", b" ", b"#", b"comment ",
];

/// One random mutation of `base`: byte flips, token splices, deletions,
/// truncation or duplication.
pub fn mutate(base: &[u8], rng: &mut impl Rng) -> Vec<u8> {
    let mut v = base.to_vec();
    for _ in 0..rng.random_range(1..=4) {
        let n = v.len();
        match rng.random_range(0..6) {
            0 if n > 0 => {
                let i = rng.random_range(0..n);
                v[i] ^= 1 << rng.random_range(0..8);
            }
            1 if n > 0 => {
                let i = rng.random_range(0..n);
                v[i] = rng.random();
            }
            2 => {
                let i = rng.random_range(0..=n);
                let t = TOKENS[rng.random_range(0..TOKENS.len())];
                v.splice(i..i, t.iter().copied());
            }
            3 if n > 0 => {
                let a = rng.random_range(0..n);
                let b = (a + rng.random_range(1..=16)).min(n);
                v.drain(a..b);
            }
            4 => v.truncate(rng.random_range(0..=n)),
            _ if n > 0 => {
                let a = rng.random_range(0..n);
                let b = (a + rng.random_range(1..=32)).min(n);
                let chunk = v[a..b].to_vec();
                let i = rng.random_range(0..=v.len());
                v.splice(i..i, chunk);
            }
            _ => {}
        }
    }
    v
}

#[derive(Debug, Default, Clone, Copy)]
pub struct FuzzStats {
    pub files: usize,
    pub parsed: usize,
    pub structured_errors: usize,
    pub other_errors: usize,
    pub panics: usize,
}

/// Writes `count` mutated files into `dir` and reads each one back.
pub fn fuzz_corpus(dir: &Path, count: usize, seed: u64) -> FuzzStats {
    let corpus = seed_corpus(dir);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stats = FuzzStats::default();
    let path = dir.join("case.bin");
    for _ in 0..count {
        let base = &corpus[rng.random_range(0..corpus.len())];
        std::fs::write(&path, mutate(base, &mut rng)).unwrap();
        stats.files += 1;
        match catch_unwind(AssertUnwindSafe(|| read_geometry(&path))) {
            Ok(Ok(_)) => stats.parsed += 1,
            Ok(Err(Error::Parse { .. } | Error::InvalidData(_) | Error::Shape(_))) => stats.structured_errors += 1,
            Ok(Err(_)) => stats.other_errors += 1,
            Err(_) => stats.panics += 1,
        }
    }
    stats
}
