//! Procedural primitive meshes (box, icosphere, torus, cylinder, grids).
//!
//! All generators are deterministic and wind faces counter-clockwise seen
//! from outside.

use std::collections::HashMap;

use crate::geom::{self, Vec3};
use crate::mesh::TriangleMesh;

/// Axis-aligned unit box centered at the origin: 8 vertices, 12 faces.
pub fn unit_box() -> TriangleMesh {
    let h = 0.5;
    let vertices = vec![
        [-h, -h, -h],
        [h, -h, -h],
        [h, h, -h],
        [-h, h, -h],
        [-h, -h, h],
        [h, -h, h],
        [h, h, h],
        [-h, h, h],
    ];
    let faces = vec![
        // bottom (z = -h), normal -z
        [0, 2, 1],
        [0, 3, 2],
        // top (z = +h), normal +z
        [4, 5, 6],
        [4, 6, 7],
        // front (y = -h), normal -y
        [0, 1, 5],
        [0, 5, 4],
        // right (x = +h), normal +x
        [1, 2, 6],
        [1, 6, 5],
        // back (y = +h), normal +y
        [2, 3, 7],
        [2, 7, 6],
        // left (x = -h), normal -x
        [3, 0, 4],
        [3, 4, 7],
    ];
    TriangleMesh::new(vertices, faces)
}

/// Regular octahedron with vertices on the coordinate axes at distance 1.
pub fn octahedron() -> TriangleMesh {
    let vertices = vec![
        [1.0, 0.0, 0.0],
        [-1.0, 0.0, 0.0],
        [0.0, 1.0, 0.0],
        [0.0, -1.0, 0.0],
        [0.0, 0.0, 1.0],
        [0.0, 0.0, -1.0],
    ];
    let faces = vec![
        [0, 2, 4],
        [2, 1, 4],
        [1, 3, 4],
        [3, 0, 4],
        [2, 0, 5],
        [1, 2, 5],
        [3, 1, 5],
        [0, 3, 5],
    ];
    TriangleMesh::new(vertices, faces)
}

/// Flat triangulated n x n quad grid in the z = 0 plane, cell size `cell`,
/// wound so every face normal is +z. 2 * n^2 faces.
pub fn flat_grid(n: usize, cell: f64) -> TriangleMesh {
    let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        for i in 0..=n {
            vertices.push([i as f64 * cell, j as f64 * cell, 0.0]);
        }
    }
    let idx = |i: usize, j: usize| j * (n + 1) + i;
    let mut faces = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            faces.push([idx(i, j), idx(i + 1, j), idx(i + 1, j + 1)]);
            faces.push([idx(i, j), idx(i + 1, j + 1), idx(i, j + 1)]);
        }
    }
    TriangleMesh::new(vertices, faces)
}

/// Unit icosphere: icosahedron subdivided `subdivisions` times, vertices
/// projected onto the unit sphere. Face counts: 20, 80, 320, 1280, ...
pub fn icosphere(subdivisions: usize) -> TriangleMesh {
    let phi = (1.0 + 5.0_f64.sqrt()) / 2.0;
    let mut vertices: Vec<Vec3> = vec![
        [-1.0, phi, 0.0],
        [1.0, phi, 0.0],
        [-1.0, -phi, 0.0],
        [1.0, -phi, 0.0],
        [0.0, -1.0, phi],
        [0.0, 1.0, phi],
        [0.0, -1.0, -phi],
        [0.0, 1.0, -phi],
        [phi, 0.0, -1.0],
        [phi, 0.0, 1.0],
        [-phi, 0.0, -1.0],
        [-phi, 0.0, 1.0],
    ];
    for v in &mut vertices {
        *v = geom::normalize(*v).unwrap();
    }
    let mut faces: Vec<[usize; 3]> = vec![
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
        let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
        let mut new_faces = Vec::with_capacity(faces.len() * 4);
        for f in &faces {
            let mut mid = [0usize; 3];
            for e in 0..3 {
                let (a, b) = (f[e], f[(e + 1) % 3]);
                let key = if a < b { (a, b) } else { (b, a) };
                mid[e] = *midpoint.entry(key).or_insert_with(|| {
                    let p = geom::normalize(geom::scale(
                        geom::add(vertices[a], vertices[b]),
                        0.5,
                    ))
                    .unwrap();
                    vertices.push(p);
                    vertices.len() - 1
                });
            }
            new_faces.push([f[0], mid[0], mid[2]]);
            new_faces.push([f[1], mid[1], mid[0]]);
            new_faces.push([f[2], mid[2], mid[1]]);
            new_faces.push([mid[0], mid[1], mid[2]]);
        }
        faces = new_faces;
    }
    TriangleMesh::new(vertices, faces)
}

/// Torus with major radius `major`, minor radius `minor`, sampled on a
/// `segments` x `rings` grid. 2 * segments * rings faces.
pub fn torus(major: f64, minor: f64, segments: usize, rings: usize) -> TriangleMesh {
    let mut vertices = Vec::with_capacity(segments * rings);
    for s in 0..segments {
        let u = 2.0 * std::f64::consts::PI * s as f64 / segments as f64;
        for r in 0..rings {
            let v = 2.0 * std::f64::consts::PI * r as f64 / rings as f64;
            let w = major + minor * v.cos();
            vertices.push([w * u.cos(), w * u.sin(), minor * v.sin()]);
        }
    }
    let idx = |s: usize, r: usize| (s % segments) * rings + (r % rings);
    let mut faces = Vec::with_capacity(2 * segments * rings);
    for s in 0..segments {
        for r in 0..rings {
            let a = idx(s, r);
            let b = idx(s + 1, r);
            let c = idx(s + 1, r + 1);
            let d = idx(s, r + 1);
            faces.push([a, b, c]);
            faces.push([a, c, d]);
        }
    }
    TriangleMesh::new(vertices, faces)
}

/// Closed cylinder of radius `radius` and height `height` centered at the
/// origin with `segments` sides, capped by triangle fans.
pub fn cylinder(radius: f64, height: f64, segments: usize) -> TriangleMesh {
    let h = height / 2.0;
    let mut vertices = Vec::with_capacity(2 * segments + 2);
    for s in 0..segments {
        let u = 2.0 * std::f64::consts::PI * s as f64 / segments as f64;
        vertices.push([radius * u.cos(), radius * u.sin(), -h]);
    }
    for s in 0..segments {
        let u = 2.0 * std::f64::consts::PI * s as f64 / segments as f64;
        vertices.push([radius * u.cos(), radius * u.sin(), h]);
    }
    let bottom_center = vertices.len();
    vertices.push([0.0, 0.0, -h]);
    let top_center = vertices.len();
    vertices.push([0.0, 0.0, h]);

    let mut faces = Vec::new();
    for s in 0..segments {
        let s1 = (s + 1) % segments;
        let (b0, b1) = (s, s1);
        let (t0, t1) = (segments + s, segments + s1);
        faces.push([b0, b1, t1]);
        faces.push([b0, t1, t0]);
        faces.push([bottom_center, b1, b0]);
        faces.push([top_center, t0, t1]);
    }
    TriangleMesh::new(vertices, faces)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::validate;

    #[test]
    fn primitives_are_clean() {
        for (mesh, faces) in [
            (unit_box(), 12),
            (octahedron(), 8),
            (icosphere(0), 20),
            (icosphere(3), 1280),
            (torus(1.0, 0.3, 24, 12), 576),
            (cylinder(0.5, 1.0, 16), 64),
        ] {
            assert_eq!(mesh.face_count(), faces);
            mesh.check_structure().unwrap();
            let r = validate(&mesh);
            assert_eq!(r.degenerate_face_count, 0);
            assert_eq!(r.non_manifold_edge_count, 0);
            assert_eq!(r.duplicate_face_count, 0);
        }
    }

    #[test]
    fn closed_primitives_have_euler_two() {
        for mesh in [unit_box(), octahedron(), icosphere(2), cylinder(0.5, 1.0, 16)] {
            assert_eq!(validate(&mesh).euler_characteristic, 2);
        }
    }

    #[test]
    fn icosphere_vertices_on_unit_sphere() {
        let m = icosphere(2);
        for v in &m.vertices {
            assert!((crate::geom::norm(*v) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn torus_euler_zero() {
        assert_eq!(validate(&torus(1.0, 0.3, 16, 8)).euler_characteristic, 0);
    }

    #[test]
    fn outward_normals() {
        // for convex closed shapes centered at origin, normal . centroid > 0
        for mesh in [unit_box(), octahedron(), icosphere(1)] {
            for f in 0..mesh.face_count() {
                let n = mesh.face_normal(f).unwrap();
                let c = mesh.face_centroid(f);
                assert!(crate::geom::dot(n, c) > 0.0);
            }
        }
    }
}
