//! Per-face 10-dimensional geometric features, their binary/CSV formats,
//! and the analytic chain rule back to vertex positions.
//!
//! Feature layout per face (10 columns):
//!   0     area
//!   1..4  interior angles, sorted ascending
//!   4..7  unit face normal
//!   7..10 dot(face normal, vertex normal), ordered by the sorted-angle
//!         vertex order, clamped to [-1, 1]
//!
//! Angle sorting plus angle-aligned dot ordering makes the row invariant
//! to cyclic rotation of the face's vertex triple.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::geom::{self, Vec3};
use crate::mesh::{self, TriangleMesh};

pub const FEATURE_DIM: usize = 10;
pub const MPF1_MAGIC: &[u8; 4] = b"MPF1";

#[derive(Debug, Clone, PartialEq)]
pub struct FaceFeature {
    pub area: f64,
    pub interior_angles: [f64; 3],
    pub face_normal: Vec3,
    pub normal_dots: [f64; 3],
}

impl FaceFeature {
    pub fn to_row(&self) -> [f64; FEATURE_DIM] {
        [
            self.area,
            self.interior_angles[0],
            self.interior_angles[1],
            self.interior_angles[2],
            self.face_normal[0],
            self.face_normal[1],
            self.face_normal[2],
            self.normal_dots[0],
            self.normal_dots[1],
            self.normal_dots[2],
        ]
    }
}

/// Interior angle at corner `k` of triangle (p0, p1, p2) via the law of
/// cosines, clamped for numeric safety.
fn corner_angle(p: &[Vec3; 3], k: usize) -> f64 {
    let a = p[k];
    let u = geom::sub(p[(k + 1) % 3], a);
    let t = geom::sub(p[(k + 2) % 3], a);
    let cosv = geom::dot(u, t) / (geom::norm(u) * geom::norm(t));
    cosv.clamp(-1.0, 1.0).acos()
}

/// Sorted-corner permutation: corner indices ordered by ascending angle,
/// ties broken by corner index (stable sort).
fn angle_order(angles: [f64; 3]) -> [usize; 3] {
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| angles[a].partial_cmp(&angles[b]).unwrap());
    order
}

pub fn face_feature(
    mesh: &TriangleMesh,
    vertex_normals: &[Vec3],
    face_index: usize,
) -> Result<FaceFeature> {
    let p = mesh.face_vertices(face_index);
    let w = geom::area_vector(p[0], p[1], p[2]);
    let wn = geom::norm(w);
    if 0.5 * wn < mesh::DEGENERACY_AREA_THRESHOLD {
        return Err(Error::DegenerateFace { face: face_index });
    }
    let n = geom::scale(w, 1.0 / wn);
    let angles = [
        corner_angle(&p, 0),
        corner_angle(&p, 1),
        corner_angle(&p, 2),
    ];
    let order = angle_order(angles);
    let dots = order.map(|k| {
        let v = mesh.faces[face_index][k];
        geom::dot(n, vertex_normals[v]).clamp(-1.0, 1.0)
    });
    Ok(FaceFeature {
        area: 0.5 * wn,
        interior_angles: order.map(|k| angles[k]),
        face_normal: n,
        normal_dots: dots,
    })
}

/// F x 10 feature matrix, row i = features of face i.
pub fn featurize(mesh: &TriangleMesh) -> Result<Vec<[f64; FEATURE_DIM]>> {
    mesh.check_structure()?;
    let normals = mesh::vertex_normals(mesh)?;
    (0..mesh.face_count())
        .map(|f| Ok(face_feature(mesh, &normals, f)?.to_row()))
        .collect()
}

// ---------------------------------------------------------------------------
// Analytic gradients: d(features)/d(vertex positions)
// ---------------------------------------------------------------------------

/// Backpropagates per-face contributions through w = cross(b - a, c - a).
/// `dw` is the upstream gradient on w; returns gradients on (a, b, c).
fn cross_backward(a: Vec3, b: Vec3, c: Vec3, dw: Vec3) -> (Vec3, Vec3, Vec3) {
    let e1 = geom::sub(b, a);
    let e2 = geom::sub(c, a);
    // d/db: cross(db, e2) . dw = db . (e2 x dw)
    let gb = geom::cross(e2, dw);
    // d/dc: cross(e1, dc) . dw = dc . (dw x e1)
    let gc = geom::cross(dw, e1);
    let ga = geom::scale(geom::add(gb, gc), -1.0);
    (ga, gb, gc)
}

/// Gradient of the interior angle at corner `k` with respect to the three
/// corner positions, accumulated into `grad`.
fn accumulate_angle_grad(p: &[Vec3; 3], f: &[usize; 3], k: usize, upstream: f64, grad: &mut [Vec3]) {
    let j = (k + 1) % 3;
    let l = (k + 2) % 3;
    let u = geom::sub(p[j], p[k]);
    let t = geom::sub(p[l], p[k]);
    let c = geom::dot(u, t);
    let m = geom::cross(u, t);
    let s = geom::norm(m);
    if s <= f64::EPSILON {
        return;
    }
    let mh = geom::scale(m, 1.0 / s);
    let denom = s * s + c * c;
    // theta = atan2(s, c); same value as the law-of-cosines form
    let du = geom::scale(
        geom::sub(geom::scale(geom::cross(t, mh), c), geom::scale(t, s)),
        upstream / denom,
    );
    let dt = geom::scale(
        geom::sub(geom::scale(geom::cross(mh, u), c), geom::scale(u, s)),
        upstream / denom,
    );
    grad[f[j]] = geom::add(grad[f[j]], du);
    grad[f[l]] = geom::add(grad[f[l]], dt);
    grad[f[k]] = geom::sub(grad[f[k]], geom::add(du, dt));
}

/// Pulls a gradient on the F x 10 feature matrix back to vertex positions.
///
/// The chain runs through face areas, interior angles, unit face normals,
/// and the vertex-normal dots (including the dependence of each vertex
/// normal on every incident face). Clamped dots pass gradient through only
/// while the pre-clamp value lies in [-1, 1].
pub fn featurize_backward(
    mesh: &TriangleMesh,
    d_features: &[[f64; FEATURE_DIM]],
) -> Result<Vec<Vec3>> {
    if d_features.len() != mesh.face_count() {
        return Err(Error::ShapeMismatch(format!(
            "feature gradient rows {} != face count {}",
            d_features.len(),
            mesh.face_count()
        )));
    }
    let nv = mesh.vertex_count();
    let nf = mesh.face_count();

    // unnormalized vertex-normal accumulators g_v and unit normals N_v
    let mut g = vec![[0.0; 3]; nv];
    for fi in 0..nf {
        let w = mesh.face_area_vector(fi);
        for &v in &mesh.faces[fi] {
            g[v] = geom::add(g[v], w);
        }
    }
    let big_n: Vec<Vec3> = g
        .iter()
        .enumerate()
        .map(|(v, &gv)| geom::normalize(gv).ok_or(Error::IsolatedVertex { vertex: v }))
        .collect::<Result<_>>()?;

    let mut grad = vec![[0.0; 3]; nv];
    let mut dw_face = vec![[0.0; 3]; nf];
    let mut d_big_n = vec![[0.0; 3]; nv];

    for fi in 0..nf {
        let f = &mesh.faces[fi];
        let p = mesh.face_vertices(fi);
        let w = geom::area_vector(p[0], p[1], p[2]);
        let wn = geom::norm(w);
        if 0.5 * wn < mesh::DEGENERACY_AREA_THRESHOLD {
            return Err(Error::DegenerateFace { face: fi });
        }
        let n = geom::scale(w, 1.0 / wn);
        let row = &d_features[fi];

        // area = |w| / 2
        let mut dw = geom::scale(n, 0.5 * row[0]);

        // angles (through the sorted permutation)
        let angles = [
            corner_angle(&p, 0),
            corner_angle(&p, 1),
            corner_angle(&p, 2),
        ];
        let order = angle_order(angles);
        for (slot, &k) in order.iter().enumerate() {
            accumulate_angle_grad(&p, f, k, row[1 + slot], &mut grad);
        }

        // face normal and dots: both feed dn; dots also feed dN_v
        let mut dn = [row[4], row[5], row[6]];
        for (slot, &k) in order.iter().enumerate() {
            let v = f[k];
            let raw = geom::dot(n, big_n[v]);
            if raw.abs() <= 1.0 {
                let u = row[7 + slot];
                dn = geom::add(dn, geom::scale(big_n[v], u));
                d_big_n[v] = geom::add(d_big_n[v], geom::scale(n, u));
            }
        }

        // n = w / |w|  =>  dw += (dn - (n . dn) n) / |w|
        let proj = geom::dot(n, dn);
        dw = geom::add(
            dw,
            geom::scale(geom::sub(dn, geom::scale(n, proj)), 1.0 / wn),
        );
        dw_face[fi] = dw;
    }

    // N_v = g_v / |g_v|  =>  dg_v = (dN - (N . dN) N) / |g_v|
    let mut dg = vec![[0.0; 3]; nv];
    for v in 0..nv {
        let gn = geom::norm(g[v]);
        let proj = geom::dot(big_n[v], d_big_n[v]);
        dg[v] = geom::scale(
            geom::sub(d_big_n[v], geom::scale(big_n[v], proj)),
            1.0 / gn,
        );
    }

    // g_v sums w_f over incident faces, so each face collects the dg of
    // its three vertices before the final cross-product pullback
    for fi in 0..nf {
        let f = &mesh.faces[fi];
        let p = mesh.face_vertices(fi);
        let dw_total = geom::add(
            dw_face[fi],
            geom::add(geom::add(dg[f[0]], dg[f[1]]), dg[f[2]]),
        );
        let (ga, gb, gc) = cross_backward(p[0], p[1], p[2], dw_total);
        grad[f[0]] = geom::add(grad[f[0]], ga);
        grad[f[1]] = geom::add(grad[f[1]], gb);
        grad[f[2]] = geom::add(grad[f[2]], gc);
    }

    Ok(grad)
}

// ---------------------------------------------------------------------------
// File formats
// ---------------------------------------------------------------------------

/// Writes the "MPF1" binary feature format: magic, little-endian u32 row
/// count, u32 feature dim, then row-major little-endian f64 values.
pub fn write_mpf1<W: Write>(mut w: W, rows: &[Vec<f64>], dim: usize) -> Result<()> {
    w.write_all(MPF1_MAGIC)?;
    w.write_all(&(rows.len() as u32).to_le_bytes())?;
    w.write_all(&(dim as u32).to_le_bytes())?;
    for row in rows {
        if row.len() != dim {
            return Err(Error::ShapeMismatch(format!(
                "row has {} values, expected {}",
                row.len(),
                dim
            )));
        }
        for &v in row {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_mpf1<R: Read>(mut r: R) -> Result<Vec<Vec<f64>>> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MPF1_MAGIC {
        return Err(Error::Format("bad magic, expected MPF1".into()));
    }
    let mut buf4 = [0u8; 4];
    r.read_exact(&mut buf4)?;
    let count = u32::from_le_bytes(buf4) as usize;
    r.read_exact(&mut buf4)?;
    let dim = u32::from_le_bytes(buf4) as usize;
    let mut rows = Vec::with_capacity(count);
    let mut buf8 = [0u8; 8];
    for _ in 0..count {
        let mut row = Vec::with_capacity(dim);
        for _ in 0..dim {
            r.read_exact(&mut buf8)?;
            row.push(f64::from_le_bytes(buf8));
        }
        rows.push(row);
    }
    Ok(rows)
}

pub const CSV_HEADER: &str =
    "area,angle0,angle1,angle2,normal_x,normal_y,normal_z,dot0,dot1,dot2";

/// CSV export with the same column order as the binary format.
pub fn write_csv<W: Write>(mut w: W, rows: &[Vec<f64>]) -> Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for row in rows {
        let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    Ok(())
}

/// Reads a numeric CSV (any width); a non-numeric first line is treated as
/// a header and skipped.
pub fn read_csv(text: &str) -> Result<Vec<Vec<f64>>> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> =
            line.split(',').map(|t| t.trim().parse::<f64>()).collect();
        match parsed {
            Ok(row) => rows.push(row),
            Err(_) if i == 0 => continue, // header
            Err(_) => {
                return Err(Error::Parse {
                    line: i + 1,
                    msg: "non-numeric CSV value".into(),
                })
            }
        }
    }
    Ok(rows)
}
