//! Unscented Kalman filter for cluster states.
//!
//! Multi-member clusters use their member states as sigma points around the
//! cluster mean (`W₀ = 0.5`, the rest shared equally). Singletons use the
//! standard scaled unscented transform of their covariance. Points are pushed
//! through the closed-loop dynamics and corrected with a position
//! measurement.

use std::collections::BTreeMap;

use nalgebra::{Matrix2, Matrix4, Matrix4x2, Vector2, Vector4};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{step, ForceField};
use crate::linalg::{cholesky_with_jitter, symmetrize};
use crate::model::{AgentId, AgentState, Cluster, ClusterId, Config, Goal};
use crate::scalar::{lit, Real};

/// State dimension.
pub const STATE_DIM: usize = 4;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FilterError {
    #[error("cluster {id} has {len} member(s); member sigma points need at least two")]
    TooFewMembers { id: ClusterId, len: usize },
    #[error("no state for member agent {0}")]
    UnknownAgent(AgentId),
    #[error("covariance could not be factorized")]
    Factorization,
    #[error("measurement is not finite")]
    NonFiniteMeasurement,
    #[error("expected 1 or {points} goals, got {goals}")]
    GoalCount { points: usize, goals: usize },
    #[error("expected 1 or {points} force fields, got {fields}")]
    FieldCount { points: usize, fields: usize },
    #[error("prediction needs at least one step")]
    ZeroSteps,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaScheme {
    MemberBased,
    ScaledSingleton,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SigmaSet<T: Real> {
    pub points: Vec<Vector4<T>>,
    pub mean_weights: Vec<T>,
    pub cov_weights: Vec<T>,
    pub scheme: SigmaScheme,
    /// Agent behind each of `points[1..]` for the member-based scheme.
    pub members: Vec<AgentId>,
}

impl<T: Real> SigmaSet<T> {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn weighted_mean(&self) -> Vector4<T> {
        weighted_mean(&self.points, &self.mean_weights)
    }
}

fn weighted_mean<T: Real, const D: usize>(
    pts: &[nalgebra::SVector<T, D>],
    w: &[T],
) -> nalgebra::SVector<T, D> {
    pts.iter()
        .zip(w)
        .fold(nalgebra::SVector::zeros(), |acc, (p, wi)| acc + p * *wi)
}

/// Member-state sigma points of a cluster with at least two members.
pub fn sigma_points_cluster<T: Real>(
    c: &Cluster<T>,
    states: &BTreeMap<AgentId, AgentState<T>>,
) -> Result<SigmaSet<T>, FilterError> {
    let m = c.members.len();
    if m < 2 {
        return Err(FilterError::TooFewMembers { id: c.id, len: m });
    }
    let mut members = c.members.clone();
    members.sort_unstable();
    let xs = members
        .iter()
        .map(|id| {
            states
                .get(id)
                .map(|s| s.to_vector())
                .ok_or(FilterError::UnknownAgent(*id))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mean = crate::model::member_mean(&xs);
    let half = lit::<T>(0.5);
    let wi = half / lit(m as f64);
    let mut points = Vec::with_capacity(m + 1);
    points.push(mean);
    points.extend(xs);
    let mut weights = vec![wi; m + 1];
    weights[0] = half;
    Ok(SigmaSet {
        points,
        mean_weights: weights.clone(),
        cov_weights: weights,
        scheme: SigmaScheme::MemberBased,
        members,
    })
}

/// Scaled `2n + 1` sigma points of a single agent's estimate.
pub fn sigma_points_singleton<T: Real>(
    x: &AgentState<T>,
    p: &Matrix4<T>,
    cfg: &Config<T>,
) -> Result<SigmaSet<T>, FilterError> {
    let n = lit::<T>(STATE_DIM as f64);
    let (alpha, beta, kappa) = (cfg.ukf_alpha, cfg.ukf_beta, cfg.ukf_kappa);
    let lambda = alpha * alpha * (n + kappa) - n;
    let scale = n + lambda;
    let (l, _) = cholesky_with_jitter(&(p * scale)).ok_or(FilterError::Factorization)?;
    let x0 = x.to_vector();
    let mut points = Vec::with_capacity(2 * STATE_DIM + 1);
    points.push(x0);
    for i in 0..STATE_DIM {
        points.push(x0 + l.column(i));
    }
    for i in 0..STATE_DIM {
        points.push(x0 - l.column(i));
    }
    let wi = T::one() / (lit::<T>(2.0) * scale);
    let w0m = lambda / scale;
    let w0c = w0m + T::one() - alpha * alpha + beta;
    let mut mean_weights = vec![wi; 2 * STATE_DIM + 1];
    let mut cov_weights = mean_weights.clone();
    mean_weights[0] = w0m;
    cov_weights[0] = w0c;
    Ok(SigmaSet {
        points,
        mean_weights,
        cov_weights,
        scheme: SigmaScheme::ScaledSingleton,
        members: Vec::new(),
    })
}

/// Sigma points propagated through the dynamics.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction<T: Real> {
    pub mean: Vector4<T>,
    /// Weighted spread of the propagated points plus process noise.
    pub cov: Matrix4<T>,
    pub points: Vec<Vector4<T>>,
    pub mean_weights: Vec<T>,
    pub cov_weights: Vec<T>,
    pub scheme: SigmaScheme,
    pub members: Vec<AgentId>,
    /// Unscented-transform parameters `(α, β, κ)` for the update.
    pub ut_params: [T; 3],
}

/// Advances every sigma point `steps` RK4 steps of length `dt` and forms the
/// predicted mean and covariance, adding `cfg.process_noise()` once.
///
/// `goals` and `fields` each hold either one entry shared by all points or
/// one entry per point.
pub fn predict<T: Real>(
    sig: &SigmaSet<T>,
    goals: &[Goal<T>],
    fields: &[ForceField<T>],
    cfg: &Config<T>,
    dt: T,
    steps: usize,
) -> Result<Prediction<T>, FilterError> {
    if steps == 0 {
        return Err(FilterError::ZeroSteps);
    }
    if goals.len() != 1 && goals.len() != sig.points.len() {
        return Err(FilterError::GoalCount {
            points: sig.points.len(),
            goals: goals.len(),
        });
    }
    if fields.len() != 1 && fields.len() != sig.points.len() {
        return Err(FilterError::FieldCount {
            points: sig.points.len(),
            fields: fields.len(),
        });
    }
    let points: Vec<Vector4<T>> = sig
        .points
        .iter()
        .enumerate()
        .map(|(k, x)| {
            let g = if goals.len() == 1 {
                &goals[0]
            } else {
                &goals[k]
            };
            let field = if fields.len() == 1 {
                &fields[0]
            } else {
                &fields[k]
            };
            let mut s = AgentState::from_vector(x);
            for _ in 0..steps {
                s = step(&s, g, field, cfg, dt);
            }
            s.to_vector()
        })
        .collect();
    let mean = weighted_mean(&points, &sig.mean_weights);
    let mut cov = cfg.process_noise();
    for (p, w) in points.iter().zip(&sig.cov_weights) {
        let d = p - mean;
        cov += d * d.transpose() * *w;
    }
    Ok(Prediction {
        mean,
        cov: symmetrize(&cov),
        points,
        mean_weights: sig.mean_weights.clone(),
        cov_weights: sig.cov_weights.clone(),
        scheme: sig.scheme,
        members: sig.members.clone(),
        ut_params: [cfg.ukf_alpha, cfg.ukf_beta, cfg.ukf_kappa],
    })
}

/// Position-only measurement with additive Gaussian noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasurementModel<T: Real> {
    pub noise_cov: Matrix2<T>,
}

impl<T: Real> MeasurementModel<T> {
    pub fn new(std: T) -> Self {
        Self {
            noise_cov: Matrix2::identity() * (std * std),
        }
    }

    /// Noise model for a measurement averaged over `observed` members.
    pub fn for_cluster(cfg: &Config<T>, observed: usize) -> Self {
        let mut mm = Self::new(cfg.meas_noise_std);
        if cfg.scale_meas_noise_by_members && observed > 1 {
            mm.noise_cov /= lit::<T>(observed as f64);
        }
        mm
    }

    pub fn observe(x: &Vector4<T>) -> Vector2<T> {
        Vector2::new(x[0], x[1])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Posterior<T: Real> {
    pub mean: Vector4<T>,
    pub cov: Matrix4<T>,
    pub innovation: Vector2<T>,
    pub gain: Matrix4x2<T>,
    /// Set when the innovation covariance had to be regularized.
    pub regularized: bool,
}

/// Measurement update `K = P_xz P_zz⁻¹`, `x = ȳ + K (z - z̄)`,
/// `P = P_y - K P_zz Kᵀ`.
///
/// The measurement sigma points are drawn from the predicted moments
/// `(ȳ, P_y)` so that the process noise enters `P_zz` and `P_xz`.
pub fn update<T: Real>(
    pred: &Prediction<T>,
    z: &Vector2<T>,
    mm: &MeasurementModel<T>,
) -> Result<Posterior<T>, FilterError> {
    if !z.iter().all(|v| v.is_finite()) {
        return Err(FilterError::NonFiniteMeasurement);
    }
    let [alpha, beta, kappa] = pred.ut_params;
    let draw_cfg = Config {
        ukf_alpha: alpha,
        ukf_beta: beta,
        ukf_kappa: kappa,
        ..Config::default()
    };
    let sig = sigma_points_singleton(&AgentState::from_vector(&pred.mean), &pred.cov, &draw_cfg)?;
    let zs: Vec<Vector2<T>> = sig.points.iter().map(MeasurementModel::observe).collect();
    let z_bar = weighted_mean(&zs, &sig.mean_weights);
    let mut pzz = mm.noise_cov;
    let mut pxz = Matrix4x2::zeros();
    for ((x, zi), w) in sig.points.iter().zip(&zs).zip(&sig.cov_weights) {
        let dz = zi - z_bar;
        pzz += dz * dz.transpose() * *w;
        pxz += (x - pred.mean) * dz.transpose() * *w;
    }
    let pzz = symmetrize(&pzz);
    let well_posed = nalgebra::SymmetricEigen::new(pzz).eigenvalues.min() > lit(1e-12);
    let inverse = pzz
        .try_inverse()
        .filter(|m| well_posed && m.iter().all(|v| v.is_finite()));
    let (pzz, inv, regularized) = match inverse {
        Some(inv) => (pzz, inv, false),
        None => {
            let reg = pzz + Matrix2::identity() * lit::<T>(1e-9);
            let inv = reg.try_inverse().ok_or(FilterError::Factorization)?;
            (reg, inv, true)
        }
    };
    let gain = pxz * inv;
    let innovation = z - z_bar;
    let mean = pred.mean + gain * innovation;
    let cov = symmetrize(&(pred.cov - gain * pzz * gain.transpose()));
    Ok(Posterior {
        mean,
        cov,
        innovation,
        gain,
        regularized,
    })
}

/// Member states after a cluster update: each propagated member point moved
/// by the same correction that took the predicted mean to `posterior_mean`.
pub fn redistribute_members<T: Real>(
    pred: &Prediction<T>,
    posterior_mean: &Vector4<T>,
) -> BTreeMap<AgentId, AgentState<T>> {
    let shift = posterior_mean - pred.mean;
    pred.members
        .iter()
        .zip(pred.points.iter().skip(1))
        .map(|(id, x)| (*id, AgentState::from_vector(&(x + shift))))
        .collect()
}
