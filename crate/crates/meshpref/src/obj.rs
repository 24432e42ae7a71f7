//! Wavefront OBJ parsing and serialization.
//!
//! Only `v` and `f` records are interpreted; everything else (comments,
//! normals, texture coordinates, groups, materials) is skipped. Face
//! records may use `v`, `v/vt`, `v//vn`, or `v/vt/vn` syntax; only the
//! vertex index is used. Polygons with more than three vertices are
//! fan-triangulated from the first vertex. Negative indices are resolved
//! relative to the vertices parsed so far, per the OBJ convention.

use crate::error::{Error, Result};
use crate::mesh::TriangleMesh;

pub fn parse_obj(bytes: &[u8]) -> Result<TriangleMesh> {
    let text = std::str::from_utf8(bytes).map_err(|_| Error::Parse {
        line: 0,
        msg: "input is not valid ASCII/UTF-8".into(),
    })?;

    let mut vertices = Vec::new();
    let mut faces = Vec::new();

    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut tokens = content.split_whitespace();
        match tokens.next() {
            Some("v") => {
                let mut coord = [0.0f64; 3];
                for c in &mut coord {
                    let tok = tokens.next().ok_or_else(|| Error::Parse {
                        line,
                        msg: "vertex line has fewer than 3 coordinates".into(),
                    })?;
                    *c = tok.parse::<f64>().map_err(|_| Error::Parse {
                        line,
                        msg: format!("non-numeric coordinate '{tok}'"),
                    })?;
                }
                // a 4th (w) coordinate, if present, is ignored
                vertices.push(coord);
            }
            Some("f") => {
                let mut idx: Vec<usize> = Vec::new();
                for tok in tokens {
                    let vtok = tok.split('/').next().unwrap_or("");
                    let i: isize = vtok.parse().map_err(|_| Error::Parse {
                        line,
                        msg: format!("non-numeric face index '{tok}'"),
                    })?;
                    let resolved: usize = if i > 0 {
                        (i - 1) as usize
                    } else if i < 0 {
                        let from_end = (-i) as usize;
                        if from_end > vertices.len() {
                            return Err(Error::FaceIndexOutOfRange {
                                line,
                                index: i,
                                vertex_count: vertices.len(),
                            });
                        }
                        vertices.len() - from_end
                    } else {
                        return Err(Error::FaceIndexOutOfRange {
                            line,
                            index: 0,
                            vertex_count: vertices.len(),
                        });
                    };
                    if resolved >= vertices.len() {
                        return Err(Error::FaceIndexOutOfRange {
                            line,
                            index: i,
                            vertex_count: vertices.len(),
                        });
                    }
                    idx.push(resolved);
                }
                if idx.len() < 3 {
                    return Err(Error::Parse {
                        line,
                        msg: format!("face has {} vertices, need at least 3", idx.len()),
                    });
                }
                for k in 1..idx.len() - 1 {
                    faces.push([idx[0], idx[k], idx[k + 1]]);
                }
            }
            _ => {}
        }
    }

    Ok(TriangleMesh::new(vertices, faces))
}

/// Serializes a mesh as OBJ text. Coordinates use Rust's shortest exact
/// float formatting, so `parse_obj(write_obj(m))` reproduces the vertex
/// and face arrays bit for bit.
pub fn write_obj(mesh: &TriangleMesh) -> Vec<u8> {
    let mut out = String::with_capacity(mesh.vertex_count() * 24 + mesh.face_count() * 12);
    for v in &mesh.vertices {
        out.push_str(&format!("v {} {} {}\n", v[0], v[1], v[2]));
    }
    for f in &mesh.faces {
        out.push_str(&format!("f {} {} {}\n", f[0] + 1, f[1] + 1, f[2] + 1));
    }
    out.into_bytes()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shapes;

    #[test]
    fn minimal_file() {
        let m = parse_obj(b"v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3").unwrap();
        assert_eq!(m.vertex_count(), 3);
        assert_eq!(m.faces, vec![[0, 1, 2]]);
    }

    #[test]
    fn quad_fan_triangulation() {
        let m = parse_obj(b"v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4").unwrap();
        assert_eq!(m.faces, vec![[0, 1, 2], [0, 2, 3]]);
    }

    #[test]
    fn out_of_range_index() {
        let err = parse_obj(b"v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 9").unwrap_err();
        assert!(matches!(
            err,
            crate::error::Error::FaceIndexOutOfRange { line: 4, index: 9, .. }
        ));
    }

    #[test]
    fn malformed_coordinate() {
        let err = parse_obj(b"v 0 zero 0\n").unwrap_err();
        assert!(matches!(err, crate::error::Error::Parse { line: 1, .. }));
    }

    #[test]
    fn negative_relative_indices() {
        let m = parse_obj(b"v 0 0 0\nv 1 0 0\nv 0 1 0\nf -3 -2 -1").unwrap();
        assert_eq!(m.faces, vec![[0, 1, 2]]);
    }

    #[test]
    fn slash_syntax_uses_vertex_index_only() {
        let m = parse_obj(b"v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1/1 2/2/2 3//3").unwrap();
        assert_eq!(m.faces, vec![[0, 1, 2]]);
    }

    #[test]
    fn single_triangle_serialization_shape() {
        let m = parse_obj(b"v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3").unwrap();
        let text = String::from_utf8(write_obj(&m)).unwrap();
        assert_eq!(text.lines().filter(|l| l.starts_with("v ")).count(), 3);
        assert_eq!(text.lines().filter(|l| l.starts_with("f ")).count(), 1);
    }

    #[test]
    fn round_trip_identity_on_primitives() {
        for mesh in [shapes::unit_box(), shapes::icosphere(2), shapes::torus(1.0, 0.3, 12, 6)] {
            let back = parse_obj(&write_obj(&mesh)).unwrap();
            assert_eq!(back.vertices, mesh.vertices);
            assert_eq!(back.faces, mesh.faces);
        }
    }
}
