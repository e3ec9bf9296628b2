//! Per-instance pose/shape fitting by adaptive-moment gradient descent.

use serde::{Deserialize, Serialize};

use super::grad::{apply_tangent, grad, param_dim};
use super::loss::{loss_weighted, LossKind};
use super::{KeypointObservation, NormFrame, PoseParams, ShapeMode};
use crate::error::{CoreError, Result};
use crate::geometry::TemplateModel;

/// Fitting schedule. The defaults (500 iterations, step 1e-2, relative
/// tolerance 1e-8) are tuned for bbox-normalized coordinates.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub max_iters: usize,
    pub step_size: f64,
    /// Relative loss-change threshold that stops the optimization.
    pub convergence_tol: f64,
    pub mode: ShapeMode,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            max_iters: 500,
            step_size: 1e-2,
            convergence_tol: 1e-8,
            mode: ShapeMode::Articulation,
            seed: 0,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters < 1 {
            return Err(CoreError::InvalidValue("max_iters must be >= 1".into()));
        }
        if !self.step_size.is_finite() || self.step_size <= 0.0 {
            return Err(CoreError::InvalidValue(format!(
                "step_size must be positive, got {}",
                self.step_size
            )));
        }
        if !self.convergence_tol.is_finite() || self.convergence_tol < 0.0 {
            return Err(CoreError::InvalidValue(format!(
                "convergence_tol must be nonnegative, got {}",
                self.convergence_tol
            )));
        }
        Ok(())
    }
}

/// A normalized loss below this is an exact fit up to floating-point
/// noise; iterating further would only chase rounding error.
const ABS_LOSS_FLOOR: f64 = 1e-13;

/// Step-halving attempts per iteration before a step is rejected.
const BACKTRACK_STEPS: usize = 5;
/// Consecutive rejected iterations treated as convergence.
const MAX_REJECTIONS: usize = 8;

/// Loss history of a fit, in bbox-normalized units. `losses[i]` is the
/// loss at the start of iteration `i`; the last entry is the final loss.
#[derive(Debug, Clone)]
pub struct FitTrace {
    pub losses: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl FitTrace {
    pub fn final_loss(&self) -> f64 {
        *self.losses.last().expect("trace is never empty")
    }
}

/// Minimizes the confidence-weighted reprojection loss from `init`.
///
/// Adaptive-moment descent with a monotone acceptance rule: the Adam
/// step is halved up to a few times until it lowers the loss, and an
/// iteration whose step cannot be made to help is rejected outright, so
/// the recorded loss trace never increases. Repeated rejections mean no
/// productive direction remains and count as convergence.
///
/// In articulation mode the root part's transform is held fixed: the
/// camera already carries the global pose, and optimizing both would
/// leave the split between them unconstrained.
///
/// Coordinates are normalized to bbox-relative units internally; the
/// returned parameters are mapped back to the observation's image frame
/// with the rotation renormalized and the scale kept positive by
/// construction (the optimizer walks `log s`).
pub fn fit_instance(
    obs: &KeypointObservation,
    model: &TemplateModel,
    init: &PoseParams,
    cfg: &FitConfig,
) -> Result<(PoseParams, FitTrace)> {
    cfg.validate()?;
    if init.mode() != cfg.mode {
        return Err(CoreError::InvalidValue(format!(
            "initial shape parameterization {:?} does not match configured mode {:?}",
            init.mode(),
            cfg.mode
        )));
    }

    let frame = NormFrame::from_bbox(&obs.bbox);
    let obs_n = frame.normalize_obs(obs)?;
    let mut params = PoseParams {
        camera: frame.normalize_camera(&init.camera)?,
        shape: init.shape.clone(),
    };

    let dim = param_dim(model, cfg.mode);
    // The frozen root block in articulation mode (gauge fixing).
    let frozen = match cfg.mode {
        ShapeMode::Articulation => Some(6..12),
        ShapeMode::Displacement => None,
    };
    let mut m = vec![0.0; dim];
    let mut v = vec![0.0; dim];
    let (beta1, beta2, eps): (f64, f64, f64) = (0.9, 0.999, 1e-8);

    let mut losses = Vec::with_capacity(cfg.max_iters + 1);
    let mut iterations = 0;
    let mut rejections = 0;

    let mut loss = loss_weighted(&obs_n, model, &params, LossKind::Pseudo)?;
    if !loss.is_finite() {
        return Err(CoreError::NonFiniteLoss { iteration: 0 });
    }
    losses.push(loss);
    let mut converged = loss < ABS_LOSS_FLOOR;

    for iter in 0..cfg.max_iters {
        if converged {
            break;
        }
        iterations = iter + 1;
        let g = grad(LossKind::Pseudo, &obs_n, model, &params)?.flatten();

        let mut delta = vec![0.0; dim];
        let t = (iter + 1) as i32;
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);
        for i in 0..dim {
            m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
            v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
            delta[i] = -cfg.step_size * (m[i] / bc1) / ((v[i] / bc2).sqrt() + eps);
        }
        if let Some(range) = frozen.clone() {
            for d in &mut delta[range] {
                *d = 0.0;
            }
        }

        let mut accepted = None;
        let mut factor = 1.0;
        for _ in 0..BACKTRACK_STEPS {
            let scaled: Vec<f64> = delta.iter().map(|d| d * factor).collect();
            let candidate = apply_tangent(&params, &scaled)?;
            let cand_loss = loss_weighted(&obs_n, model, &candidate, LossKind::Pseudo)?;
            if !cand_loss.is_finite() {
                return Err(CoreError::NonFiniteLoss { iteration: iterations });
            }
            if cand_loss < loss {
                accepted = Some((candidate, cand_loss));
                break;
            }
            factor *= 0.5;
        }

        match accepted {
            Some((next_params, next_loss)) => {
                rejections = 0;
                params = next_params;
                let rel_change = (loss - next_loss).abs() / loss.max(1e-12);
                loss = next_loss;
                losses.push(loss);
                if rel_change < cfg.convergence_tol || loss < ABS_LOSS_FLOOR {
                    converged = true;
                }
            }
            None => {
                rejections += 1;
                losses.push(loss);
                if rejections >= MAX_REJECTIONS {
                    converged = true;
                }
            }
        }
    }

    let fitted = PoseParams {
        camera: frame.denormalize_camera(&params.camera)?,
        shape: params.shape,
    };
    Ok((
        fitted,
        FitTrace {
            losses,
            iterations,
            converged,
        },
    ))
}
