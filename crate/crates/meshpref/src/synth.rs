//! Procedural preference dataset: seeded primitives degraded by a scalar
//! quality knob, scored on a 0-5 scale, and partitioned by the 3.5 / 4.0
//! thresholds into preferred, dispreferred, and excluded items.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom;
use crate::mesh::TriangleMesh;
use crate::obj;
use crate::shapes;

pub const PREFERRED_THRESHOLD: f64 = 4.0;
pub const DISPREFERRED_THRESHOLD: f64 = 3.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeshKind {
    Sphere,
    Box,
    Torus,
    Cylinder,
}

impl MeshKind {
    pub const ALL: [MeshKind; 4] = [
        MeshKind::Sphere,
        MeshKind::Box,
        MeshKind::Torus,
        MeshKind::Cylinder,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MeshKind::Sphere => "sphere",
            MeshKind::Box => "box",
            MeshKind::Torus => "torus",
            MeshKind::Cylinder => "cylinder",
        }
    }

    fn base_mesh(self) -> TriangleMesh {
        match self {
            MeshKind::Sphere => shapes::icosphere(2),
            MeshKind::Box => shapes::unit_box(),
            MeshKind::Torus => shapes::torus(1.0, 0.35, 12, 6),
            MeshKind::Cylinder => shapes::cylinder(0.7, 1.6, 16),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Preferred,
    Dispreferred,
    Excluded,
}

/// preferred iff score >= 4.0; dispreferred iff score <= 3.5; the margin
/// in between is excluded.
pub fn label_for(score: f64) -> Label {
    if score >= PREFERRED_THRESHOLD {
        Label::Preferred
    } else if score <= DISPREFERRED_THRESHOLD {
        Label::Dispreferred
    } else {
        Label::Excluded
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrefItem {
    pub mesh: TriangleMesh,
    pub prompt: String,
    pub score: f64,
    pub label: Label,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemRecord {
    pub id: usize,
    pub kind: MeshKind,
    pub quality: f64,
    pub seed: u64,
    pub prompt: String,
    pub score: f64,
    pub label: Label,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub n: usize,
    pub seed: u64,
    pub items: Vec<ItemRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrefDataset {
    pub items: Vec<PrefItem>,
    pub manifest: DatasetManifest,
}

fn kind_salt(kind: MeshKind) -> u64 {
    match kind {
        MeshKind::Sphere => 0x5348_4552,
        MeshKind::Box => 0x424f_5800,
        MeshKind::Torus => 0x544f_5255,
        MeshKind::Cylinder => 0x4359_4c00,
    }
}

/// Seeded primitive with quality-controlled degradation.
///
/// Quality 1 yields the clean primitive. Below 1, three corruptions apply
/// in order: per-vertex jitter with amplitude (1-q) * 5% of the bounding
/// radius, deletion of round((1-q) * 20%) of the faces, and duplication
/// of round((1-q) * 10%) of the surviving faces (creating non-manifold
/// edges and duplicate faces, so defects are visible to `validate`). The
/// score
/// 0.5 + 4.5 q + noise(+-0.25) is clamped to [0, 5]; the noise stream
/// depends only on (kind, seed), so the score is nondecreasing in quality.
pub fn gen_mesh(kind: MeshKind, quality: f64, seed: u64) -> (TriangleMesh, f64) {
    let q = quality.clamp(0.0, 1.0);
    let mut mesh = kind.base_mesh();

    let mut noise_rng = ChaCha8Rng::seed_from_u64(seed ^ kind_salt(kind));
    let noise = 0.5 * (2.0 * noise_rng.gen::<f64>() - 1.0) * 0.5; // uniform +-0.25
    let score = (0.5 + 4.5 * q + noise).clamp(0.0, 5.0);

    if q < 1.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ kind_salt(kind));
        let centroid = {
            let mut c = [0.0; 3];
            for v in &mesh.vertices {
                c = geom::add(c, *v);
            }
            geom::scale(c, 1.0 / mesh.vertex_count() as f64)
        };
        let radius = mesh
            .vertices
            .iter()
            .map(|v| geom::dist(*v, centroid))
            .fold(0.0, f64::max);

        let amp = (1.0 - q) * 0.05 * radius;
        for v in mesh.vertices.iter_mut() {
            for c in v.iter_mut() {
                *c += amp * (2.0 * rng.gen::<f64>() - 1.0);
            }
        }

        let nf = mesh.face_count();
        let n_delete = ((1.0 - q) * 0.2 * nf as f64).round() as usize;
        let mut order: Vec<usize> = (0..nf).collect();
        for i in (1..order.len()).rev() {
            let j = rng.gen_range(0..=i);
            order.swap(i, j);
        }
        let mut keep = vec![true; nf];
        for &f in order.iter().take(n_delete.min(nf.saturating_sub(1))) {
            keep[f] = false;
        }
        let faces: Vec<[usize; 3]> = mesh
            .faces
            .iter()
            .enumerate()
            .filter_map(|(f, tri)| keep[f].then_some(*tri))
            .collect();
        mesh = TriangleMesh::new(mesh.vertices, faces);

        let nf = mesh.face_count();
        let n_flip = ((1.0 - q) * 0.1 * nf as f64).round() as usize;
        for i in 0..n_flip.min(nf) {
            let f = mesh.faces[(i * 7919) % nf];
            mesh.faces.push(f);
        }
        mesh.compact_vertices();
    }

    (mesh, score)
}

fn quality_bucket(q: f64) -> &'static str {
    if q >= 0.75 {
        "clean"
    } else if q >= 0.45 {
        "slightly damaged"
    } else {
        "heavily damaged"
    }
}

pub fn prompt_for(kind: MeshKind, quality: f64) -> String {
    match quality_bucket(quality) {
        "clean" => format!("a clean {} with smooth surfaces", kind.name()),
        "slightly damaged" => format!("a slightly damaged {}", kind.name()),
        _ => format!("a heavily damaged {} with holes and noise", kind.name()),
    }
}

/// Quality mixture shaped to land roughly 45% preferred, 45% dispreferred,
/// and a thin excluded margin: U(0.87, 1) with weight 0.45, U(0, 0.6) with
/// weight 0.45, U(0.62, 0.85) with weight 0.10.
fn draw_quality(rng: &mut ChaCha8Rng) -> f64 {
    let u: f64 = rng.gen();
    let v: f64 = rng.gen();
    if u < 0.45 {
        0.87 + 0.13 * v
    } else if u < 0.90 {
        0.6 * v
    } else {
        0.62 + 0.23 * v
    }
}

/// Generates `n` items with per-item seeds derived from the master seed.
pub fn gen_dataset(n: usize, seed: u64) -> Result<PrefDataset> {
    if n < 4 {
        return Err(Error::InvalidHarnessConfig(format!(
            "dataset size {n} too small; need at least 4"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut items = Vec::with_capacity(n);
    let mut records = Vec::with_capacity(n);
    for id in 0..n {
        let kind = MeshKind::ALL[rng.gen_range(0..MeshKind::ALL.len())];
        let quality = draw_quality(&mut rng);
        let item_seed: u64 = rng.gen();
        let (mesh, score) = gen_mesh(kind, quality, item_seed);
        let prompt = prompt_for(kind, quality);
        let label = label_for(score);
        records.push(ItemRecord {
            id,
            kind,
            quality,
            seed: item_seed,
            prompt: prompt.clone(),
            score,
            label,
        });
        items.push(PrefItem {
            mesh,
            prompt,
            score,
            label,
        });
    }
    let dataset = PrefDataset {
        items,
        manifest: DatasetManifest {
            n,
            seed,
            items: records,
        },
    };
    if !dataset.items.iter().any(|i| i.label == Label::Preferred) {
        return Err(Error::SinglePopulation("preferred"));
    }
    if !dataset.items.iter().any(|i| i.label == Label::Dispreferred) {
        return Err(Error::SinglePopulation("dispreferred"));
    }
    Ok(dataset)
}

/// Rebuilds a dataset bitwise from its manifest.
pub fn regenerate(manifest: &DatasetManifest) -> PrefDataset {
    let items = manifest
        .items
        .iter()
        .map(|rec| {
            let (mesh, score) = gen_mesh(rec.kind, rec.quality, rec.seed);
            debug_assert_eq!(score, rec.score);
            PrefItem {
                mesh,
                prompt: rec.prompt.clone(),
                score,
                label: rec.label,
            }
        })
        .collect();
    PrefDataset {
        items,
        manifest: manifest.clone(),
    }
}

/// Writes `items/<id>.obj` plus `manifest.json` under `dir`.
pub fn save_dataset(dataset: &PrefDataset, dir: &std::path::Path) -> Result<()> {
    let items_dir = dir.join("items");
    std::fs::create_dir_all(&items_dir)?;
    for (rec, item) in dataset.manifest.items.iter().zip(&dataset.items) {
        std::fs::write(items_dir.join(format!("{}.obj", rec.id)), obj::write_obj(&item.mesh))?;
    }
    std::fs::write(
        dir.join("manifest.json"),
        serde_json::to_vec_pretty(&dataset.manifest)?,
    )?;
    Ok(())
}

/// Loads a dataset directory written by `save_dataset`.
pub fn load_dataset(dir: &std::path::Path) -> Result<PrefDataset> {
    let manifest: DatasetManifest =
        serde_json::from_slice(&std::fs::read(dir.join("manifest.json"))?)?;
    let mut items = Vec::with_capacity(manifest.items.len());
    for rec in &manifest.items {
        let bytes = std::fs::read(dir.join("items").join(format!("{}.obj", rec.id)))?;
        items.push(PrefItem {
            mesh: obj::parse_obj(&bytes)?,
            prompt: rec.prompt.clone(),
            score: rec.score,
            label: rec.label,
        });
    }
    Ok(PrefDataset { items, manifest })
}
