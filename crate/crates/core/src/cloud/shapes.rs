//! Procedural meshes used by the toy experiments, tests and benchmarks.

use std::collections::HashMap;
use std::f64::consts::TAU;

use super::{Point, TriangleMesh, Vec3};

fn build(vertices: Vec<Point>, triangles: Vec<[u32; 3]>) -> TriangleMesh {
    TriangleMesh::new(vertices, triangles).expect("procedural mesh is valid")
}

/// Two triangles covering `[0,1]^2` in the `z = 0` plane.
pub fn unit_square() -> TriangleMesh {
    grid_plane(1, 1.0).map_vertices(|p| Point::new(p.x + 0.5, p.y + 0.5, 0.0))
}

/// Square `[-size/2, size/2]^2` in `z = 0`, split into `n x n` quads.
pub fn grid_plane(n: usize, size: f64) -> TriangleMesh {
    let n = n.max(1);
    let mut v = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        for i in 0..=n {
            v.push(Point::new(
                size * (i as f64 / n as f64 - 0.5),
                size * (j as f64 / n as f64 - 0.5),
                0.0,
            ));
        }
    }
    let mut t = Vec::new();
    let at = |i: usize, j: usize| (j * (n + 1) + i) as u32;
    for j in 0..n {
        for i in 0..n {
            t.push([at(i, j), at(i + 1, j), at(i + 1, j + 1)]);
            t.push([at(i, j), at(i + 1, j + 1), at(i, j + 1)]);
        }
    }
    let normals = vec![Vec3::z(); v.len()];
    build(v, t).with_normals(normals).expect("unit normals")
}

/// Axis-aligned cube with unit edge centred at the origin. Faces do not share
/// vertices so vertex normals equal face normals.
pub fn cube() -> TriangleMesh {
    let mut v = Vec::new();
    let mut n = Vec::new();
    let mut t = Vec::new();
    for axis in 0..3 {
        for sign in [-1.0, 1.0] {
            let mut normal = Vec3::zeros();
            normal[axis] = sign;
            let (u_ax, v_ax) = ((axis + 1) % 3, (axis + 2) % 3);
            let base = v.len() as u32;
            for (a, b) in [(-0.5, -0.5), (0.5, -0.5), (0.5, 0.5), (-0.5, 0.5)] {
                let mut p = Point::origin();
                p[axis] = 0.5 * sign;
                p[u_ax] = a;
                p[v_ax] = b;
                v.push(p);
                n.push(normal);
            }
            if sign > 0.0 {
                t.push([base, base + 1, base + 2]);
                t.push([base, base + 2, base + 3]);
            } else {
                t.push([base, base + 2, base + 1]);
                t.push([base, base + 3, base + 2]);
            }
        }
    }
    build(v, t).with_normals(n).expect("unit normals")
}

/// Unit sphere from a subdivided icosahedron, with radial vertex normals.
pub fn icosphere(subdivisions: usize) -> TriangleMesh {
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    let mut v: Vec<Point> = [
        (-1.0, phi, 0.0),
        (1.0, phi, 0.0),
        (-1.0, -phi, 0.0),
        (1.0, -phi, 0.0),
        (0.0, -1.0, phi),
        (0.0, 1.0, phi),
        (0.0, -1.0, -phi),
        (0.0, 1.0, -phi),
        (phi, 0.0, -1.0),
        (phi, 0.0, 1.0),
        (-phi, 0.0, -1.0),
        (-phi, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Point::from(Vec3::new(x, y, z).normalize()))
    .collect();
    let mut t: Vec<[u32; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut mid: HashMap<(u32, u32), u32> = HashMap::new();
        let mut midpoint = |a: u32, b: u32, v: &mut Vec<Point>| -> u32 {
            let key = (a.min(b), a.max(b));
            *mid.entry(key).or_insert_with(|| {
                let m = ((v[a as usize].coords + v[b as usize].coords) * 0.5).normalize();
                v.push(Point::from(m));
                (v.len() - 1) as u32
            })
        };
        let mut next = Vec::with_capacity(t.len() * 4);
        for [a, b, c] in t {
            let ab = midpoint(a, b, &mut v);
            let bc = midpoint(b, c, &mut v);
            let ca = midpoint(c, a, &mut v);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        t = next;
    }
    let normals = v.iter().map(|p| p.coords.normalize()).collect();
    build(v, t).with_normals(normals).expect("unit normals")
}

/// Closed cylinder of radius `r` and height `h` along z, centred at origin.
pub fn cylinder(r: f64, h: f64, segments: usize) -> TriangleMesh {
    let s = segments.max(3);
    let mut v = Vec::new();
    let mut n = Vec::new();
    let mut t = Vec::new();
    // side: separate ring vertices with radial normals
    for k in 0..s {
        let a = TAU * k as f64 / s as f64;
        let (c, si) = (a.cos(), a.sin());
        v.push(Point::new(r * c, r * si, -h / 2.0));
        v.push(Point::new(r * c, r * si, h / 2.0));
        n.push(Vec3::new(c, si, 0.0));
        n.push(Vec3::new(c, si, 0.0));
    }
    for k in 0..s {
        let (a0, a1) = (2 * k as u32, 2 * k as u32 + 1);
        let (b0, b1) = (2 * ((k + 1) % s) as u32, 2 * ((k + 1) % s) as u32 + 1);
        t.push([a0, b0, b1]);
        t.push([a0, b1, a1]);
    }
    // caps with their own vertices
    for (z, nz) in [(-h / 2.0, -1.0), (h / 2.0, 1.0)] {
        let centre = v.len() as u32;
        v.push(Point::new(0.0, 0.0, z));
        n.push(Vec3::new(0.0, 0.0, nz));
        for k in 0..s {
            let a = TAU * k as f64 / s as f64;
            v.push(Point::new(r * a.cos(), r * a.sin(), z));
            n.push(Vec3::new(0.0, 0.0, nz));
        }
        for k in 0..s as u32 {
            let (p, q) = (centre + 1 + k, centre + 1 + (k + 1) % s as u32);
            t.push(if nz > 0.0 { [centre, p, q] } else { [centre, q, p] });
        }
    }
    build(v, t).with_normals(n).expect("unit normals")
}

/// Torus around the z axis.
pub fn torus(major: f64, minor: f64, segments: usize, rings: usize) -> TriangleMesh {
    let (s, q) = (segments.max(3), rings.max(3));
    let mut v = Vec::new();
    let mut n = Vec::new();
    for i in 0..s {
        let a = TAU * i as f64 / s as f64;
        for j in 0..q {
            let b = TAU * j as f64 / q as f64;
            let dir = Vec3::new(a.cos() * b.cos(), a.sin() * b.cos(), b.sin());
            v.push(Point::new(a.cos() * major, a.sin() * major, 0.0) + dir * minor);
            n.push(dir);
        }
    }
    let at = |i: usize, j: usize| ((i % s) * q + (j % q)) as u32;
    let mut t = Vec::new();
    for i in 0..s {
        for j in 0..q {
            t.push([at(i, j), at(i + 1, j), at(i + 1, j + 1)]);
            t.push([at(i, j), at(i + 1, j + 1), at(i, j + 1)]);
        }
    }
    build(v, t).with_normals(n).expect("unit normals")
}

/// Closed cone with apex on +z. Face normals (no smoothing across the apex).
pub fn cone(r: f64, h: f64, segments: usize) -> TriangleMesh {
    let s = segments.max(3);
    let mut v = vec![Point::new(0.0, 0.0, h / 2.0), Point::new(0.0, 0.0, -h / 2.0)];
    for k in 0..s {
        let a = TAU * k as f64 / s as f64;
        v.push(Point::new(r * a.cos(), r * a.sin(), -h / 2.0));
    }
    let mut t = Vec::new();
    for k in 0..s as u32 {
        let (p, q) = (2 + k, 2 + (k + 1) % s as u32);
        t.push([0, p, q]);
        t.push([1, q, p]);
    }
    build(v, t)
}

/// Two `size x size` squares meeting at a right angle along the y axis: the
/// floor `z = 0, x in [-size, 0]` and the wall `x = 0, z in [0, size]`.
/// Normals point into the inside of the corner.
pub fn fold(size: f64) -> TriangleMesh {
    let h = size / 2.0;
    let v = vec![
        Point::new(-size, -h, 0.0),
        Point::new(0.0, -h, 0.0),
        Point::new(0.0, h, 0.0),
        Point::new(-size, h, 0.0),
        Point::new(0.0, -h, 0.0),
        Point::new(0.0, -h, size),
        Point::new(0.0, h, size),
        Point::new(0.0, h, 0.0),
    ];
    let t = vec![[0, 1, 2], [0, 2, 3], [4, 5, 6], [4, 6, 7]];
    let mut normals = vec![Vec3::z(); 4];
    normals.extend([-Vec3::x(); 4]);
    build(v, t).with_normals(normals).expect("unit normals")
}
