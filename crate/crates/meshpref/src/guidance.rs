//! Reward-guided vertex deformation: gradient descent on per-vertex
//! offsets of a combined objective, base loss minus alpha times the reward
//! score, with alpha increasing linearly over the run.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{featurize, featurize_backward, FEATURE_DIM};
use crate::geom::Vec3;
use crate::mesh::{TriangleMesh, DEGENERACY_AREA_THRESHOLD};
use crate::prep::patchify;
use crate::reward::{backward, forward, RewardParams, TextTokens, Upstream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GuidanceSchedule {
    pub alpha_start: f64,
    pub alpha_end: f64,
    pub total_steps: usize,
}

impl Default for GuidanceSchedule {
    fn default() -> Self {
        GuidanceSchedule {
            alpha_start: 10.0,
            alpha_end: 20.0,
            total_steps: 300,
        }
    }
}

/// Linear interpolation from alpha_start (step 0) to alpha_end (final step).
pub fn alpha_at(schedule: &GuidanceSchedule, step: usize) -> Result<f64> {
    if step > schedule.total_steps {
        return Err(Error::StepOutOfRange {
            step,
            total: schedule.total_steps,
        });
    }
    let t = step as f64 / schedule.total_steps as f64;
    Ok(schedule.alpha_start + (schedule.alpha_end - schedule.alpha_start) * t)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuidanceState {
    pub step: usize,
    pub reward_trajectory: Vec<f64>,
    pub loss_trajectory: Vec<f64>,
}

/// Differentiable base objective over the vertex offsets.
pub trait BaseLoss {
    fn eval(&self, psi: &[Vec3]) -> (f64, Vec<Vec3>);
}

/// Default base objective: (weight/2) * sum of squared offsets, anchoring
/// the deformation to the initial shape.
#[derive(Debug, Clone, Copy)]
pub struct QuadraticAnchor {
    pub weight: f64,
}

impl Default for QuadraticAnchor {
    fn default() -> Self {
        QuadraticAnchor { weight: 1.0 }
    }
}

impl BaseLoss for QuadraticAnchor {
    fn eval(&self, psi: &[Vec3]) -> (f64, Vec<Vec3>) {
        let mut value = 0.0;
        let grad = psi
            .iter()
            .map(|v| {
                value += 0.5 * self.weight * (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
                [self.weight * v[0], self.weight * v[1], self.weight * v[2]]
            })
            .collect();
        (value, grad)
    }
}

fn deformed(base: &TriangleMesh, psi: &[Vec3]) -> TriangleMesh {
    let vertices = base
        .vertices
        .iter()
        .zip(psi)
        .map(|(v, o)| [v[0] + o[0], v[1] + o[1], v[2] + o[2]])
        .collect();
    TriangleMesh::new(vertices, base.faces.clone())
}

fn check_non_degenerate(mesh: &TriangleMesh, step: usize) -> Result<()> {
    for f in 0..mesh.face_count() {
        if mesh.face_area(f) < DEGENERACY_AREA_THRESHOLD {
            return Err(Error::DegenerateDeformation { step, face: f });
        }
    }
    Ok(())
}

/// Combined objective at the current offsets.
///
/// loss = base_loss(psi) - alpha * reward(deform(base, psi)); the reward
/// gradient chains through the model's patch-tensor gradient, the frozen
/// patch assignment (recomputed here, treated as constant), and the
/// analytic feature-to-vertex Jacobians. `step` only labels degeneracy
/// errors.
pub fn combined_loss(
    base_mesh: &TriangleMesh,
    psi: &[Vec3],
    base_loss: &dyn BaseLoss,
    params: &RewardParams,
    text: &TextTokens,
    alpha: f64,
    step: usize,
) -> Result<(f64, Vec<Vec3>, f64)> {
    if psi.len() != base_mesh.vertex_count() {
        return Err(Error::ShapeMismatch(format!(
            "offsets for {} vertices, mesh has {}",
            psi.len(),
            base_mesh.vertex_count()
        )));
    }
    if psi.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("vertex offsets".into()));
    }
    let (base_value, base_grad) = base_loss.eval(psi);
    if alpha == 0.0 {
        return Ok((base_value, base_grad, 0.0));
    }

    let mesh = deformed(base_mesh, psi);
    check_non_degenerate(&mesh, step)?;
    let features = featurize(&mesh)?;
    let (patch, assign) = patchify(&mesh, &features)?;
    let (reward, _, cache) = forward(params, &patch, text)?;
    let (_, input_grads) = backward(
        params,
        &cache,
        &Upstream {
            d_reward: 1.0,
            d_class_embedding: None,
        },
    )?;

    // pull the patch-tensor cotangent back onto per-face features
    let mut d_features = vec![[0.0; FEATURE_DIM]; mesh.face_count()];
    for f in 0..mesh.face_count() {
        let slot = assign.patch_of_face[f] * crate::prep::SLOTS_PER_PATCH + assign.slot_of_face[f];
        let base = slot * FEATURE_DIM;
        for c in 0..FEATURE_DIM {
            d_features[f][c] = input_grads[base + c];
        }
    }
    let d_vertices = featurize_backward(&mesh, &d_features)?;

    let loss = base_value - alpha * reward;
    let grad = base_grad
        .iter()
        .zip(&d_vertices)
        .map(|(b, r)| [b[0] - alpha * r[0], b[1] - alpha * r[1], b[2] - alpha * r[2]])
        .collect();
    Ok((loss, grad, reward))
}

/// Gradient descent on the vertex offsets with the scheduled alpha.
/// Trajectories record the loss and reward at the evaluation point of each
/// step, before the update. Deterministic given inputs.
pub fn guide_optimize(
    base_mesh: &TriangleMesh,
    text: &TextTokens,
    params: &RewardParams,
    schedule: &GuidanceSchedule,
    base_loss: &dyn BaseLoss,
    lr: f64,
) -> Result<(TriangleMesh, GuidanceState)> {
    base_mesh.check_structure()?;
    let mut psi: Vec<Vec3> = vec![[0.0; 3]; base_mesh.vertex_count()];
    let mut state = GuidanceState {
        step: 0,
        reward_trajectory: Vec::with_capacity(schedule.total_steps),
        loss_trajectory: Vec::with_capacity(schedule.total_steps),
    };
    for step in 0..schedule.total_steps {
        let alpha = alpha_at(schedule, step)?;
        let (loss, grad, reward) =
            combined_loss(base_mesh, &psi, base_loss, params, text, alpha, step)?;
        state.loss_trajectory.push(loss);
        state.reward_trajectory.push(reward);
        for (o, g) in psi.iter_mut().zip(&grad) {
            o[0] -= lr * g[0];
            o[1] -= lr * g[1];
            o[2] -= lr * g[2];
        }
        state.step = step + 1;
    }
    Ok((deformed(base_mesh, &psi), state))
}
