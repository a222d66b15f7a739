//! Minimum-effort transfers of a planar double integrator and the cost
//! distance built from them.
//!
//! For `p̈ = u` with `u(t) = a + t b` on `[0, T]`, the unique minimum-energy
//! control between two boundary states is
//!
//! ```text
//! b = 12 (p0 - pf) / T³ + 6 (v0 + vf) / T²
//! a = (vf - v0) / T - b T / 2
//! ```
//!
//! and its cost `½ ∫ ‖u‖² dt` is `½ (T ‖a‖² + T² aᵀb + T³/3 ‖b‖²)`.

use nalgebra::Vector2;
use thiserror::Error;

use crate::model::{AgentState, Config, Goal};
use crate::scalar::{lit, Real};

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum CostError {
    #[error("horizon must be positive")]
    NonPositiveHorizon,
}

/// Affine-in-time control `u(t) = a + t b` on `[0, horizon]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearControlLaw<T: Real> {
    pub a: Vector2<T>,
    pub b: Vector2<T>,
    pub horizon: T,
}

impl<T: Real> LinearControlLaw<T> {
    pub fn eval(&self, t: T) -> Vector2<T> {
        self.a + self.b * t
    }

    /// State reached by applying the law from `x0` for the full horizon.
    pub fn terminal_state(&self, x0: &AgentState<T>) -> AgentState<T> {
        let t = self.horizon;
        let t2 = t * t;
        let half = lit::<T>(0.5);
        let sixth = lit::<T>(1.0 / 6.0);
        AgentState {
            p: x0.p + x0.v * t + self.a * (half * t2) + self.b * (sixth * t2 * t),
            v: x0.v + self.a * t + self.b * (half * t2),
        }
    }
}

/// Minimum-effort law steering `x0` to `xf` in time `horizon`.
pub fn solve_transfer<T: Real>(
    x0: &AgentState<T>,
    xf: &AgentState<T>,
    horizon: T,
) -> Result<LinearControlLaw<T>, CostError> {
    if !(horizon > T::zero()) {
        return Err(CostError::NonPositiveHorizon);
    }
    let t = horizon;
    let t2 = t * t;
    let t3 = t2 * t;
    let b = (x0.p - xf.p) * (lit::<T>(12.0) / t3) + (x0.v + xf.v) * (lit::<T>(6.0) / t2);
    let a = (xf.v - x0.v) / t - b * (t * lit(0.5));
    Ok(LinearControlLaw { a, b, horizon })
}

/// Closed-form `½ ∫₀ᵀ ‖a + t b‖² dt`.
pub fn cost_of_law<T: Real>(law: &LinearControlLaw<T>) -> T {
    let t = law.horizon;
    let t2 = t * t;
    let t3 = t2 * t;
    let raw =
        t * law.a.norm_squared() + t2 * law.a.dot(&law.b) + t3 / lit(3.0) * law.b.norm_squared();
    // the integrand is a square; clamp round-off below zero
    (raw * lit(0.5)).max(T::zero())
}

/// Effort for agent `i` to take over the state of agent `j` within `horizon`.
pub fn transfer_cost<T: Real>(
    x_i: &AgentState<T>,
    x_j: &AgentState<T>,
    horizon: T,
) -> Result<T, CostError> {
    solve_transfer(x_i, x_j, horizon).map(|l| cost_of_law(&l))
}

/// Effort for an agent to reach its goal state within `horizon`.
pub fn goal_cost<T: Real>(x: &AgentState<T>, g: &Goal<T>, horizon: T) -> Result<T, CostError> {
    solve_transfer(x, &g.as_state(), horizon).map(|l| cost_of_law(&l))
}

/// Weighted cost distance `λ1 V1(x_i, x_j) + λ2 V2(x_i, g_i)`.
///
/// Not symmetric in `(i, j)`: the goal term belongs to `i`.
pub fn cost_distance<T: Real>(
    x_i: &AgentState<T>,
    x_j: &AgentState<T>,
    g_i: &Goal<T>,
    cfg: &Config<T>,
) -> Result<T, CostError> {
    let mut total = T::zero();
    // skip zero-weighted terms so that λ = 0 is an exact degenerate case
    if cfg.lambda1 != T::zero() {
        total += cfg.lambda1 * transfer_cost(x_i, x_j, cfg.t_f_cost)?;
    }
    if cfg.lambda2 != T::zero() {
        total += cfg.lambda2 * goal_cost(x_i, g_i, cfg.t_f_cost)?;
    }
    Ok(total)
}
