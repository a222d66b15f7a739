//! Closed-loop agent dynamics: PD goal seeking plus exponential social-force
//! repulsion, and a fixed-step RK4 discretization.
//!
//! Clusters use the same equations with the representative state and the
//! cluster goal substituted.

use nalgebra::{Vector2, Vector4};

use crate::model::{AgentState, Config, Goal};
use crate::scalar::{lit, Real};

/// Below this separation two agents are treated as coincident (m).
pub const COINCIDENT_EPS: f64 = 1e-9;

/// Neighbors acting on one agent, frozen for the duration of a step.
#[derive(Debug, Clone, PartialEq)]
pub struct ForceField<T: Real> {
    /// Neighbor states with their radii.
    pub neighbors: Vec<(AgentState<T>, T)>,
    pub self_radius: T,
    pub a_int: T,
    pub b_int: T,
    pub d_int_tol: T,
}

impl<T: Real> ForceField<T> {
    pub fn new(neighbors: Vec<(AgentState<T>, T)>, self_radius: T, cfg: &Config<T>) -> Self {
        Self {
            neighbors,
            self_radius,
            a_int: cfg.a_int,
            b_int: cfg.b_int,
            d_int_tol: cfg.d_int_tol,
        }
    }

    /// A field with no neighbors.
    pub fn empty(cfg: &Config<T>) -> Self {
        Self::new(Vec::new(), cfg.radius_default, cfg)
    }
}

/// Result of a single pairwise interaction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairForce<T: Real> {
    pub force: Vector2<T>,
    /// Set when the agents coincide and the +x axis was used as direction.
    pub coincident: bool,
}

/// PD goal-seeking acceleration `K_p (p - p_g) + K_v v`.
pub fn pd_control<T: Real>(x: &AgentState<T>, g: &Goal<T>, cfg: &Config<T>) -> Vector2<T> {
    (x.p - g.p_g) * cfg.k_p + x.v * cfg.k_v
}

/// Repulsion on agent `i` from agent `j`: magnitude
/// `A_int exp((r_i + r_j - d) / B_int)` along the unit vector from `j` to `i`.
pub fn pair_interaction<T: Real>(
    x_i: &AgentState<T>,
    x_j: &AgentState<T>,
    r_i: T,
    r_j: T,
    a_int: T,
    b_int: T,
) -> PairForce<T> {
    let diff = x_i.p - x_j.p;
    let d = diff.norm();
    let r = r_i + r_j;
    if d < lit(COINCIDENT_EPS) {
        let mag = a_int * (r / b_int).exp();
        return PairForce {
            force: Vector2::new(mag, T::zero()),
            coincident: true,
        };
    }
    let mag = a_int * ((r - d) / b_int).exp();
    PairForce {
        force: diff * (mag / d),
        coincident: false,
    }
}

/// Sum of pairwise repulsions from neighbors within the interaction zone.
pub fn total_interaction<T: Real>(x_i: &AgentState<T>, field: &ForceField<T>) -> Vector2<T> {
    field
        .neighbors
        .iter()
        .filter(|(x_j, _)| (x_i.p - x_j.p).norm() <= field.d_int_tol)
        .fold(Vector2::zeros(), |acc, (x_j, r_j)| {
            acc + pair_interaction(x_i, x_j, field.self_radius, *r_j, field.a_int, field.b_int)
                .force
        })
}

/// Number of coincident-neighbor fallbacks that evaluating `x_i` in `field`
/// triggers.
pub fn coincident_count<T: Real>(x_i: &AgentState<T>, field: &ForceField<T>) -> usize {
    field
        .neighbors
        .iter()
        .filter(|(x_j, _)| (x_i.p - x_j.p).norm() < lit(COINCIDENT_EPS))
        .count()
}

/// State derivative `[v; K_p (p - p_g) + K_v v + F_int]`.
pub fn closed_loop_deriv<T: Real>(
    x: &AgentState<T>,
    g: &Goal<T>,
    field: &ForceField<T>,
    cfg: &Config<T>,
) -> Vector4<T> {
    let acc = pd_control(x, g, cfg) + total_interaction(x, field);
    Vector4::new(x.v[0], x.v[1], acc[0], acc[1])
}

/// One classical RK4 step of the closed-loop dynamics over `dt`, neighbors
/// held at their step-start states.
pub fn step<T: Real>(
    x: &AgentState<T>,
    g: &Goal<T>,
    field: &ForceField<T>,
    cfg: &Config<T>,
    dt: T,
) -> AgentState<T> {
    let f = |s: &Vector4<T>| closed_loop_deriv(&AgentState::from_vector(s), g, field, cfg);
    let half = lit::<T>(0.5);
    let x0 = x.to_vector();
    let k1 = f(&x0);
    let k2 = f(&(x0 + k1 * (dt * half)));
    let k3 = f(&(x0 + k2 * (dt * half)));
    let k4 = f(&(x0 + k3 * dt));
    let sixth: T = dt / lit(6.0);
    let two: T = lit(2.0);
    let incr: Vector4<T> = k1 + k2 * two + k3 * two + k4;
    AgentState::from_vector(&(x0 + incr * sixth))
}

/// Advances `x` over `duration` using `n` equal RK4 substeps.
pub fn advance<T: Real>(
    x: &AgentState<T>,
    g: &Goal<T>,
    field: &ForceField<T>,
    cfg: &Config<T>,
    duration: T,
    n: usize,
) -> AgentState<T> {
    let h = duration / lit(n.max(1) as f64);
    (0..n.max(1)).fold(*x, |s, _| step(&s, g, field, cfg, h))
}

/// Number of integration substeps of at most `cfg.dt` covering `duration`.
pub fn substeps<T: Real>(duration: T, cfg: &Config<T>) -> usize {
    let ratio = crate::scalar::to_f64(duration / cfg.dt);
    // tolerate round-off so that 0.4 / 0.1 gives 4, not 5
    ((ratio - 1e-9).ceil() as usize).max(1)
}
