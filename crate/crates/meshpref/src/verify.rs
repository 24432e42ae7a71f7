//! Independent checking oracles used by the test suites.
//!
//! Nothing here shares code with the implementation paths it checks:
//! Hausdorff distance comes from dense surface sampling against exact
//! point-to-triangle distances, and population divergence targets come
//! from direct numerical quadrature.

use crate::geom::{self, Vec3};
use crate::mesh::TriangleMesh;

/// Exact distance from a point to a triangle (Ericson's region method).
pub fn point_triangle_distance(p: Vec3, a: Vec3, b: Vec3, c: Vec3) -> f64 {
    let ab = geom::sub(b, a);
    let ac = geom::sub(c, a);
    let ap = geom::sub(p, a);
    let d1 = geom::dot(ab, ap);
    let d2 = geom::dot(ac, ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return geom::dist(p, a);
    }
    let bp = geom::sub(p, b);
    let d3 = geom::dot(ab, bp);
    let d4 = geom::dot(ac, bp);
    if d3 >= 0.0 && d4 <= d3 {
        return geom::dist(p, b);
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return geom::dist(p, geom::add(a, geom::scale(ab, v)));
    }
    let cp = geom::sub(p, c);
    let d5 = geom::dot(ab, cp);
    let d6 = geom::dot(ac, cp);
    if d6 >= 0.0 && d5 <= d6 {
        return geom::dist(p, c);
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return geom::dist(p, geom::add(a, geom::scale(ac, w)));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        let bc = geom::sub(c, b);
        return geom::dist(p, geom::add(b, geom::scale(bc, w)));
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    geom::dist(p, geom::add(a, geom::add(geom::scale(ab, v), geom::scale(ac, w))))
}

/// Uniform barycentric grid samples over every face; `res` subdivisions
/// per edge give (res + 1)(res + 2) / 2 samples per face.
pub fn sample_surface(mesh: &TriangleMesh, res: usize) -> Vec<Vec3> {
    let mut out = Vec::new();
    for f in 0..mesh.face_count() {
        let [a, b, c] = mesh.face_vertices(f);
        let ab = geom::sub(b, a);
        let ac = geom::sub(c, a);
        for i in 0..=res {
            for j in 0..=(res - i) {
                let u = i as f64 / res as f64;
                let v = j as f64 / res as f64;
                out.push(geom::add(a, geom::add(geom::scale(ab, u), geom::scale(ac, v))));
            }
        }
    }
    out
}

fn distance_to_mesh(p: Vec3, mesh: &TriangleMesh) -> f64 {
    let mut best = f64::INFINITY;
    for f in 0..mesh.face_count() {
        let [a, b, c] = mesh.face_vertices(f);
        let d = point_triangle_distance(p, a, b, c);
        if d < best {
            best = d;
        }
    }
    best
}

pub fn directed_hausdorff(from: &TriangleMesh, to: &TriangleMesh, res: usize) -> f64 {
    sample_surface(from, res)
        .into_iter()
        .map(|p| distance_to_mesh(p, to))
        .fold(0.0, f64::max)
}

/// Sampled symmetric Hausdorff distance between two surfaces. Exact
/// point-to-triangle distances on the target side mean the only
/// approximation is the sampling density on the source side, which only
/// underestimates; a pass at tolerance t is therefore trustworthy once
/// sample spacing is well under t.
pub fn symmetric_hausdorff(a: &TriangleMesh, b: &TriangleMesh, res: usize) -> f64 {
    directed_hausdorff(a, b, res).max(directed_hausdorff(b, a, res))
}

fn normal_pdf(x: f64, mu: f64) -> f64 {
    (-0.5 * (x - mu) * (x - mu)).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// E[k(U, V)] for U ~ N(mu_a, 1), V ~ N(mu_b, 1) independent and k the
/// Gaussian kernel with bandwidth `kernel_sigma`, by 2D Simpson quadrature.
fn kernel_expectation_quadrature(mu_a: f64, mu_b: f64, kernel_sigma: f64, n: usize) -> f64 {
    let lo = mu_a.min(mu_b) - 8.0;
    let hi = mu_a.max(mu_b) + 8.0;
    let n = if n % 2 == 0 { n } else { n + 1 };
    let h = (hi - lo) / n as f64;
    let w1 = |i: usize| -> f64 {
        if i == 0 || i == n {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        }
    };
    let mut total = 0.0;
    for i in 0..=n {
        let x = lo + i as f64 * h;
        let px = normal_pdf(x, mu_a);
        let mut inner = 0.0;
        for j in 0..=n {
            let y = lo + j as f64 * h;
            let diff = x - y;
            inner += w1(j)
                * normal_pdf(y, mu_b)
                * (-diff * diff / (2.0 * kernel_sigma * kernel_sigma)).exp();
        }
        total += w1(i) * px * inner;
    }
    total * h * h / 9.0
}

/// Population Cauchy-Schwarz divergence target for two unit-variance 1D
/// Gaussians under a Gaussian kernel, computed by quadrature alone:
/// log E[k(X,X')] + log E[k(Y,Y')] - 2 log E[k(X,Y)].
pub fn population_cs_1d_gaussians(mu_x: f64, mu_y: f64, kernel_sigma: f64) -> f64 {
    let sxx = kernel_expectation_quadrature(mu_x, mu_x, kernel_sigma, 400);
    let syy = kernel_expectation_quadrature(mu_y, mu_y, kernel_sigma, 400);
    let sxy = kernel_expectation_quadrature(mu_x, mu_y, kernel_sigma, 400);
    sxx.ln() + syy.ln() - 2.0 * sxy.ln()
}
