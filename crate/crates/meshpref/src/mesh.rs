//! Triangle mesh representation, validation, normals, and adjacency.
//!
//! Faces are index triples into the vertex list, 0-based everywhere inside
//! the crate (1-based indices exist only at the OBJ file boundary).
//! Winding convention: counter-clockwise seen from outside, so face normals
//! computed by the right-hand rule point outward.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{self, Vec3};

/// Default absolute area threshold below which a face counts as degenerate.
pub const DEGENERACY_AREA_THRESHOLD: f64 = 1e-12;

/// Patch-grid face capacity: 256 patches x 64 slots.
pub const FACE_CAPACITY: usize = 256 * 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriangleMesh {
    pub vertices: Vec<Vec3>,
    pub faces: Vec<[usize; 3]>,
}

impl TriangleMesh {
    pub fn new(vertices: Vec<Vec3>, faces: Vec<[usize; 3]>) -> Self {
        Self { vertices, faces }
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    pub fn face_vertices(&self, f: usize) -> [Vec3; 3] {
        let [i, j, k] = self.faces[f];
        [self.vertices[i], self.vertices[j], self.vertices[k]]
    }

    pub fn face_area(&self, f: usize) -> f64 {
        let [a, b, c] = self.face_vertices(f);
        geom::triangle_area(a, b, c)
    }

    /// Unnormalized face normal (twice the area vector), oriented by winding.
    pub fn face_area_vector(&self, f: usize) -> Vec3 {
        let [a, b, c] = self.face_vertices(f);
        geom::area_vector(a, b, c)
    }

    /// Unit face normal, or `None` for a degenerate face.
    pub fn face_normal(&self, f: usize) -> Option<Vec3> {
        geom::normalize(self.face_area_vector(f))
    }

    pub fn face_centroid(&self, f: usize) -> Vec3 {
        let [a, b, c] = self.face_vertices(f);
        geom::scale(geom::add(geom::add(a, b), c), 1.0 / 3.0)
    }

    /// Checks structural invariants: indices in range, no repeated index
    /// within a face, at least one face.
    pub fn check_structure(&self) -> Result<()> {
        if self.faces.is_empty() {
            return Err(Error::NoUsableFaces);
        }
        for (fi, f) in self.faces.iter().enumerate() {
            for &v in f {
                if v >= self.vertices.len() {
                    return Err(Error::ShapeMismatch(format!(
                        "face {fi} references vertex {v} but mesh has {} vertices",
                        self.vertices.len()
                    )));
                }
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(Error::ShapeMismatch(format!(
                    "face {fi} repeats a vertex index"
                )));
            }
        }
        Ok(())
    }

    /// Drops vertices not referenced by any face, remapping face indices.
    /// Surviving vertices keep their relative order.
    pub fn compact_vertices(&mut self) {
        let mut used = vec![false; self.vertices.len()];
        for f in &self.faces {
            for &v in f {
                used[v] = true;
            }
        }
        let mut remap = vec![usize::MAX; self.vertices.len()];
        let mut kept = Vec::with_capacity(self.vertices.len());
        for (i, &u) in used.iter().enumerate() {
            if u {
                remap[i] = kept.len();
                kept.push(self.vertices[i]);
            }
        }
        for f in &mut self.faces {
            for v in f.iter_mut() {
                *v = remap[*v];
            }
        }
        self.vertices = kept;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub degenerate_face_count: usize,
    pub non_manifold_edge_count: usize,
    pub duplicate_face_count: usize,
    pub euler_characteristic: i64,
    pub bounding_box: BoundingBox,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub min: Vec3,
    pub max: Vec3,
}

impl ValidationReport {
    pub fn defect_count(&self) -> usize {
        self.degenerate_face_count + self.non_manifold_edge_count + self.duplicate_face_count
    }
}

fn undirected_edge(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Reports mesh quality: degenerate faces (area below `area_threshold`),
/// non-manifold edges (shared by more than two faces), duplicate faces
/// (same vertex set regardless of winding), Euler characteristic over
/// unique undirected edges, and the bounding box.
pub fn validate_with_threshold(mesh: &TriangleMesh, area_threshold: f64) -> ValidationReport {
    let mut degenerate = 0usize;
    for f in 0..mesh.face_count() {
        if mesh.face_area(f) < area_threshold {
            degenerate += 1;
        }
    }

    let mut edge_faces: HashMap<(usize, usize), usize> = HashMap::new();
    for f in &mesh.faces {
        for (a, b) in [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])] {
            *edge_faces.entry(undirected_edge(a, b)).or_insert(0) += 1;
        }
    }
    let non_manifold = edge_faces.values().filter(|&&c| c > 2).count();

    let mut face_sets: HashMap<[usize; 3], usize> = HashMap::new();
    for f in &mesh.faces {
        let mut key = *f;
        key.sort_unstable();
        *face_sets.entry(key).or_insert(0) += 1;
    }
    let duplicates: usize = face_sets.values().map(|&c| c - 1).sum();

    let v = mesh.vertex_count() as i64;
    let e = edge_faces.len() as i64;
    let fc = mesh.face_count() as i64;

    let mut min = [f64::INFINITY; 3];
    let mut max = [f64::NEG_INFINITY; 3];
    for p in &mesh.vertices {
        for k in 0..3 {
            min[k] = min[k].min(p[k]);
            max[k] = max[k].max(p[k]);
        }
    }

    ValidationReport {
        degenerate_face_count: degenerate,
        non_manifold_edge_count: non_manifold,
        duplicate_face_count: duplicates,
        euler_characteristic: v - e + fc,
        bounding_box: BoundingBox { min, max },
    }
}

pub fn validate(mesh: &TriangleMesh) -> ValidationReport {
    validate_with_threshold(mesh, DEGENERACY_AREA_THRESHOLD)
}

/// Per-vertex unit normals: normalized area-weighted sum of incident face
/// normals. Errors on any vertex with no incident non-degenerate face.
pub fn vertex_normals(mesh: &TriangleMesh) -> Result<Vec<Vec3>> {
    let mut acc = vec![[0.0; 3]; mesh.vertex_count()];
    for f in 0..mesh.face_count() {
        // area_vector = 2 * area * unit normal, i.e. already area-weighted
        let av = mesh.face_area_vector(f);
        for &v in &mesh.faces[f] {
            acc[v] = geom::add(acc[v], av);
        }
    }
    acc.iter()
        .enumerate()
        .map(|(v, &a)| geom::normalize(a).ok_or(Error::IsolatedVertex { vertex: v }))
        .collect()
}

/// Dual graph of a mesh: per-face neighbor sets.
#[derive(Debug, Clone)]
pub struct FaceAdjacency {
    /// Faces sharing a full edge, sorted ascending.
    pub edge_adjacent: Vec<Vec<usize>>,
    /// Faces sharing at least one vertex, sorted ascending.
    pub vertex_adjacent: Vec<Vec<usize>>,
}

/// Builds the face dual graph. Edge-adjacent neighbor sets are always a
/// subset of vertex-adjacent neighbor sets.
pub fn face_adjacency(mesh: &TriangleMesh) -> FaceAdjacency {
    let nf = mesh.face_count();
    let mut vertex_faces: Vec<Vec<usize>> = vec![Vec::new(); mesh.vertex_count()];
    for (fi, f) in mesh.faces.iter().enumerate() {
        for &v in f {
            vertex_faces[v].push(fi);
        }
    }

    let mut vertex_adjacent: Vec<Vec<usize>> = vec![Vec::new(); nf];
    for faces in &vertex_faces {
        for &a in faces {
            for &b in faces {
                if a != b {
                    vertex_adjacent[a].push(b);
                }
            }
        }
    }
    for adj in &mut vertex_adjacent {
        adj.sort_unstable();
        adj.dedup();
    }

    let mut edge_faces: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
    for (fi, f) in mesh.faces.iter().enumerate() {
        for (a, b) in [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])] {
            edge_faces.entry(undirected_edge(a, b)).or_default().push(fi);
        }
    }
    let mut edge_adjacent: Vec<Vec<usize>> = vec![Vec::new(); nf];
    for faces in edge_faces.values() {
        for &a in faces {
            for &b in faces {
                if a != b {
                    edge_adjacent[a].push(b);
                }
            }
        }
    }
    for adj in &mut edge_adjacent {
        adj.sort_unstable();
        adj.dedup();
    }

    FaceAdjacency {
        edge_adjacent,
        vertex_adjacent,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shapes;

    #[test]
    fn box_euler_characteristic_is_two() {
        let m = shapes::unit_box();
        let r = validate(&m);
        // V - E + F = 8 - 18 + 12 = 2
        assert_eq!(r.euler_characteristic, 2);
        assert_eq!(r.non_manifold_edge_count, 0);
        assert_eq!(r.degenerate_face_count, 0);
        assert_eq!(r.duplicate_face_count, 0);
    }

    #[test]
    fn collinear_face_is_degenerate() {
        let m = TriangleMesh::new(
            vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]],
            vec![[0, 1, 2]],
        );
        assert_eq!(validate(&m).degenerate_face_count, 1);
    }

    #[test]
    fn three_faces_sharing_one_edge_are_non_manifold() {
        let m = TriangleMesh::new(
            vec![
                [0.0, 0.0, 0.0],
                [1.0, 0.0, 0.0],
                [0.0, 1.0, 0.0],
                [0.0, 0.0, 1.0],
                [0.0, -1.0, 0.0],
            ],
            vec![[0, 1, 2], [0, 1, 3], [0, 1, 4]],
        );
        assert_eq!(validate(&m).non_manifold_edge_count, 1);
    }

    #[test]
    fn flat_grid_vertex_normals_point_up() {
        let m = shapes::flat_grid(4, 1.0);
        let normals = vertex_normals(&m).unwrap();
        for n in normals {
            assert!((n[0]).abs() < 1e-12 && (n[1]).abs() < 1e-12);
            assert!((n[2] - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn octahedron_vertex_normals_are_radial() {
        let m = shapes::octahedron();
        let normals = vertex_normals(&m).unwrap();
        for (v, n) in m.vertices.iter().zip(normals.iter()) {
            let dir = crate::geom::normalize(*v).unwrap();
            for k in 0..3 {
                assert!((dir[k] - n[k]).abs() < 1e-9, "vertex normal not radial");
            }
        }
    }

    #[test]
    fn vertex_normal_unit_length() {
        let m = shapes::icosphere(2);
        for n in vertex_normals(&m).unwrap() {
            assert!((geom::norm(n) - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn isolated_vertex_errors() {
        let mut m = shapes::unit_box();
        m.vertices.push([10.0, 10.0, 10.0]);
        let err = vertex_normals(&m).unwrap_err();
        assert!(matches!(err, Error::IsolatedVertex { vertex: 8 }));
    }

    #[test]
    fn adjacency_edge_and_vertex_sharing() {
        // two triangles sharing an edge
        let m = TriangleMesh::new(
            vec![
                [0.0, 0.0, 0.0],
                [1.0, 0.0, 0.0],
                [0.0, 1.0, 0.0],
                [1.0, 1.0, 0.0],
            ],
            vec![[0, 1, 2], [1, 3, 2]],
        );
        let adj = face_adjacency(&m);
        assert_eq!(adj.edge_adjacent[0], vec![1]);
        assert_eq!(adj.edge_adjacent[1], vec![0]);

        // two triangles sharing only one vertex
        let m2 = TriangleMesh::new(
            vec![
                [0.0, 0.0, 0.0],
                [1.0, 0.0, 0.0],
                [0.0, 1.0, 0.0],
                [-1.0, 0.0, 0.0],
                [0.0, -1.0, 0.0],
            ],
            vec![[0, 1, 2], [0, 3, 4]],
        );
        let adj2 = face_adjacency(&m2);
        assert!(adj2.edge_adjacent[0].is_empty());
        assert_eq!(adj2.vertex_adjacent[0], vec![1]);
    }

    #[test]
    fn closed_box_faces_have_three_edge_neighbors() {
        let m = shapes::unit_box();
        let adj = face_adjacency(&m);
        for n in &adj.edge_adjacent {
            assert_eq!(n.len(), 3);
        }
    }

    #[test]
    fn edge_adjacent_subset_of_vertex_adjacent() {
        let m = shapes::icosphere(1);
        let adj = face_adjacency(&m);
        for f in 0..m.face_count() {
            for e in &adj.edge_adjacent[f] {
                assert!(adj.vertex_adjacent[f].contains(e));
            }
        }
    }

    #[test]
    fn edge_adjacency_degree_sum_is_even() {
        for mesh in [shapes::unit_box(), shapes::icosphere(1), shapes::flat_grid(3, 1.0)] {
            let adj = face_adjacency(&mesh);
            let total: usize = adj.edge_adjacent.iter().map(|n| n.len()).sum();
            assert_eq!(total % 2, 0);
        }
    }
}
