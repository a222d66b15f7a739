//! Core domain types: agent states, goals, clusters, the cluster partition and
//! the run configuration.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{Matrix4, Vector2, Vector4};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg;
use crate::scalar::{lit, Real};

/// Stable integer id assigned to an agent at ingestion.
pub type AgentId = u64;
/// Cluster id. Monotonically increasing within a run and never reused.
pub type ClusterId = u64;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("invalid config: {message}")]
    InvalidConfig {
        field: &'static str,
        message: String,
    },
    #[error("non-finite state for agent {0}")]
    NonFiniteState(AgentId),
    #[error("cluster {id}: {reason}")]
    InvalidCluster { id: ClusterId, reason: String },
    #[error("partition violated: {0}")]
    Partition(String),
    #[error("unknown agent {0}")]
    UnknownAgent(AgentId),
}

/// Planar position and velocity of one agent, `[px, py, vx, vy]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct AgentState<T: Real> {
    pub p: Vector2<T>,
    pub v: Vector2<T>,
}

impl<T: Real> AgentState<T> {
    pub fn new(px: T, py: T, vx: T, vy: T) -> Self {
        Self {
            p: Vector2::new(px, py),
            v: Vector2::new(vx, vy),
        }
    }

    pub fn at_rest(px: T, py: T) -> Self {
        Self::new(px, py, T::zero(), T::zero())
    }

    pub fn from_vector(x: &Vector4<T>) -> Self {
        Self::new(x[0], x[1], x[2], x[3])
    }

    pub fn to_vector(&self) -> Vector4<T> {
        Vector4::new(self.p[0], self.p[1], self.v[0], self.v[1])
    }

    pub fn is_finite(&self) -> bool {
        self.p.iter().chain(self.v.iter()).all(|c| c.is_finite())
    }

    pub fn cast<U: Real>(&self) -> AgentState<U> {
        AgentState {
            p: self.p.map(|c| lit(crate::scalar::to_f64(c))),
            v: self.v.map(|c| lit(crate::scalar::to_f64(c))),
        }
    }
}

/// Intended terminal state of an agent. The velocity defaults to zero
/// (soft landing).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Goal<T: Real> {
    pub p_g: Vector2<T>,
    pub v_g: Vector2<T>,
}

impl<T: Real> Goal<T> {
    pub fn at(gx: T, gy: T) -> Self {
        Self {
            p_g: Vector2::new(gx, gy),
            v_g: Vector2::zeros(),
        }
    }

    pub fn with_velocity(p_g: Vector2<T>, v_g: Vector2<T>) -> Self {
        Self { p_g, v_g }
    }

    /// Goal reached by holding the current velocity for `horizon` seconds.
    pub fn constant_velocity(x: &AgentState<T>, horizon: T) -> Self {
        Self {
            p_g: x.p + x.v * horizon,
            v_g: Vector2::zeros(),
        }
    }

    pub fn as_state(&self) -> AgentState<T> {
        AgentState {
            p: self.p_g,
            v: self.v_g,
        }
    }

    /// Centroid of several goals.
    pub fn centroid<'a, I>(goals: I) -> Option<Self>
    where
        I: IntoIterator<Item = &'a Goal<T>>,
    {
        let mut n = 0usize;
        let mut p = Vector2::zeros();
        let mut v = Vector2::zeros();
        for g in goals {
            p += g.p_g;
            v += g.v_g;
            n += 1;
        }
        (n > 0).then(|| {
            let k = lit::<T>(n as f64);
            Self {
                p_g: p / k,
                v_g: v / k,
            }
        })
    }
}

/// Goal lookup with the constant-velocity fallback for agents that have no
/// provisioned goal.
pub fn goal_or_extrapolate<T: Real>(
    id: AgentId,
    state: &AgentState<T>,
    goals: &BTreeMap<AgentId, Goal<T>>,
    horizon: T,
) -> Goal<T> {
    goals
        .get(&id)
        .copied()
        .unwrap_or_else(|| Goal::constant_velocity(state, horizon))
}

/// A group of agents treated as one representative agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Cluster<T: Real> {
    pub id: ClusterId,
    /// Member agent ids in ascending order.
    pub members: Vec<AgentId>,
    pub mean: AgentState<T>,
    pub cov: Matrix4<T>,
    pub goal: Goal<T>,
}

impl<T: Real> Cluster<T> {
    /// Builds a cluster from its members' current states: arithmetic mean for
    /// the representative state, sample covariance for multi-member clusters
    /// and `diag(sigma_p, sigma_p, sigma_v, sigma_v)` for singletons.
    pub fn from_members(
        id: ClusterId,
        members: impl IntoIterator<Item = AgentId>,
        states: &BTreeMap<AgentId, AgentState<T>>,
        goals: &BTreeMap<AgentId, Goal<T>>,
        cfg: &Config<T>,
    ) -> Result<Self, ModelError> {
        let members: Vec<AgentId> = members
            .into_iter()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        if members.is_empty() {
            return Err(ModelError::InvalidCluster {
                id,
                reason: "no members".into(),
            });
        }
        let mut xs = Vec::with_capacity(members.len());
        for m in &members {
            let s = states.get(m).ok_or(ModelError::UnknownAgent(*m))?;
            if !s.is_finite() {
                return Err(ModelError::NonFiniteState(*m));
            }
            xs.push(s.to_vector());
        }
        let mean = member_mean(&xs);
        let cov = if xs.len() == 1 {
            cfg.singleton_cov()
        } else {
            sample_covariance(&xs, &mean)
        };
        let member_goals: Vec<Goal<T>> = members
            .iter()
            .zip(&xs)
            .map(|(m, x)| goal_or_extrapolate(*m, &AgentState::from_vector(x), goals, cfg.t_f_cost))
            .collect();
        let goal = Goal::centroid(&member_goals).expect("non-empty members");
        Self::with_estimate(id, members, AgentState::from_vector(&mean), cov, goal)
    }

    /// Builds a cluster with an externally supplied estimate, validating the
    /// covariance.
    pub fn with_estimate(
        id: ClusterId,
        members: Vec<AgentId>,
        mean: AgentState<T>,
        cov: Matrix4<T>,
        goal: Goal<T>,
    ) -> Result<Self, ModelError> {
        if members.is_empty() {
            return Err(ModelError::InvalidCluster {
                id,
                reason: "no members".into(),
            });
        }
        if members.windows(2).any(|w| w[0] >= w[1]) {
            return Err(ModelError::InvalidCluster {
                id,
                reason: "members must be strictly ascending".into(),
            });
        }
        if !mean.is_finite() {
            return Err(ModelError::InvalidCluster {
                id,
                reason: "non-finite mean".into(),
            });
        }
        if !linalg::is_symmetric_psd(&cov) {
            return Err(ModelError::InvalidCluster {
                id,
                reason: "covariance is not symmetric positive semi-definite".into(),
            });
        }
        Ok(Self {
            id,
            members,
            mean,
            cov: linalg::symmetrize(&cov),
            goal,
        })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn is_singleton(&self) -> bool {
        self.members.len() == 1
    }

    pub fn contains(&self, id: AgentId) -> bool {
        self.members.binary_search(&id).is_ok()
    }
}

pub(crate) fn member_mean<T: Real>(xs: &[Vector4<T>]) -> Vector4<T> {
    let sum = xs.iter().fold(Vector4::zeros(), |acc, x| acc + x);
    sum / lit::<T>(xs.len() as f64)
}

/// Unbiased sample covariance `1/(m-1) Σ (x - x̄)(x - x̄)ᵀ`.
pub(crate) fn sample_covariance<T: Real>(xs: &[Vector4<T>], mean: &Vector4<T>) -> Matrix4<T> {
    let mut acc = Matrix4::zeros();
    for x in xs {
        let d = x - mean;
        acc += d * d.transpose();
    }
    acc / lit::<T>((xs.len() - 1) as f64)
}

/// Partition of all live agents into clusters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct ClusterSet<T: Real> {
    pub clusters: Vec<Cluster<T>>,
    pub agent_states: BTreeMap<AgentId, AgentState<T>>,
    /// Next cluster id to hand out.
    pub next_cluster_id: ClusterId,
}

impl<T: Real> ClusterSet<T> {
    pub fn empty() -> Self {
        Self {
            clusters: Vec::new(),
            agent_states: BTreeMap::new(),
            next_cluster_id: 1,
        }
    }

    pub fn allocate_id(&mut self) -> ClusterId {
        let id = self.next_cluster_id;
        self.next_cluster_id += 1;
        id
    }

    pub fn num_clusters(&self) -> usize {
        self.clusters.len()
    }

    pub fn num_agents(&self) -> usize {
        self.agent_states.len()
    }

    pub fn cluster_of(&self, agent: AgentId) -> Option<&Cluster<T>> {
        self.clusters.iter().find(|c| c.contains(agent))
    }

    /// Member sets of all clusters, sorted, for partition comparisons.
    pub fn membership(&self) -> Vec<Vec<AgentId>> {
        let mut m: Vec<Vec<AgentId>> = self.clusters.iter().map(|c| c.members.clone()).collect();
        m.sort();
        m
    }

    /// Checks that every live agent is in exactly one cluster and no cluster
    /// references an unknown agent.
    pub fn check_partition(&self) -> Result<(), ModelError> {
        let mut seen = BTreeSet::new();
        for c in &self.clusters {
            if c.members.is_empty() {
                return Err(ModelError::Partition(format!("cluster {} is empty", c.id)));
            }
            for m in &c.members {
                if !self.agent_states.contains_key(m) {
                    return Err(ModelError::Partition(format!(
                        "cluster {} references unknown agent {m}",
                        c.id
                    )));
                }
                if !seen.insert(*m) {
                    return Err(ModelError::Partition(format!(
                        "agent {m} appears in more than one cluster"
                    )));
                }
            }
        }
        if seen.len() != self.agent_states.len() {
            let missing: Vec<_> = self
                .agent_states
                .keys()
                .filter(|k| !seen.contains(k))
                .collect();
            return Err(ModelError::Partition(format!(
                "agents without a cluster: {missing:?}"
            )));
        }
        let mut ids = BTreeSet::new();
        for c in &self.clusters {
            if !ids.insert(c.id) || c.id >= self.next_cluster_id {
                return Err(ModelError::Partition(format!("bad cluster id {}", c.id)));
            }
        }
        Ok(())
    }
}

/// Model, clustering and filter parameters.
///
/// Serialized as a flat JSON object using the symbol-style field names
/// (`K_p`, `c_tol`, ...). Unknown keys are rejected; missing keys take their
/// defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real", deny_unknown_fields, default)]
pub struct Config<T: Real> {
    /// Position gain (1/s²). Negative.
    #[serde(rename = "K_p")]
    pub k_p: T,
    /// Velocity gain (1/s). Negative.
    #[serde(rename = "K_v")]
    pub k_v: T,
    /// Interaction strength (m/s²).
    #[serde(rename = "A_int")]
    pub a_int: T,
    /// Interaction length (m).
    #[serde(rename = "B_int")]
    pub b_int: T,
    /// Clustering distance threshold (m).
    pub d_tol: T,
    /// Clustering cost threshold.
    pub c_tol: T,
    /// Radius of the social-force interaction zone (m).
    pub d_int_tol: T,
    pub lambda1: T,
    pub lambda2: T,
    /// Horizon of both optimal-control cost problems (s).
    #[serde(rename = "T_f_cost")]
    pub t_f_cost: T,
    /// Integration step (s).
    pub dt: T,
    /// Singleton position variance (m²).
    pub sigma_p: T,
    /// Singleton velocity variance ((m/s)²).
    pub sigma_v: T,
    pub ukf_alpha: T,
    pub ukf_beta: T,
    pub ukf_kappa: T,
    /// Position measurement noise standard deviation (m).
    pub meas_noise_std: T,
    /// Per-step process noise standard deviations `[position (m), velocity (m/s)]`.
    pub proc_noise_std: [T; 2],
    /// Agent radius (m).
    pub radius_default: T,
    /// Consecutive missed observation steps tolerated before deletion.
    pub deletion_grace: usize,
    /// Seed for synthetic measurement noise.
    pub seed: u64,
    /// Use positions only (instead of full states) for the complete-linkage
    /// farthest pair.
    pub farthest_pair_positions_only: bool,
    /// Scale the cluster measurement noise by 1/m for an m-member averaged
    /// measurement.
    pub scale_meas_noise_by_members: bool,
}

impl<T: Real> Default for Config<T> {
    fn default() -> Self {
        Self {
            k_p: lit(-1.0),
            k_v: lit(-2.0),
            a_int: lit(5.0),
            b_int: lit(0.5),
            d_tol: lit(2.0),
            c_tol: lit(10.0),
            d_int_tol: lit(3.0),
            lambda1: lit(0.5),
            lambda2: lit(0.5),
            t_f_cost: lit(2.0),
            dt: lit(0.1),
            sigma_p: lit(0.01),
            sigma_v: lit(0.01),
            ukf_alpha: lit(1.0),
            ukf_beta: lit(2.0),
            ukf_kappa: lit(0.0),
            meas_noise_std: lit(0.1),
            proc_noise_std: [lit(0.05), lit(0.1)],
            radius_default: lit(0.25),
            deletion_grace: 2,
            seed: 0,
            farthest_pair_positions_only: false,
            scale_meas_noise_by_members: false,
        }
    }
}

impl<T: Real> Config<T> {
    pub fn singleton_cov(&self) -> Matrix4<T> {
        Matrix4::from_diagonal(&Vector4::new(
            self.sigma_p,
            self.sigma_p,
            self.sigma_v,
            self.sigma_v,
        ))
    }

    /// Per-step process noise `diag(q_p, q_p, q_v, q_v)`.
    pub fn process_noise(&self) -> Matrix4<T> {
        let qp = self.proc_noise_std[0] * self.proc_noise_std[0];
        let qv = self.proc_noise_std[1] * self.proc_noise_std[1];
        Matrix4::from_diagonal(&Vector4::new(qp, qp, qv, qv))
    }

    /// Closed-loop system matrix of the PD goal-seeking dynamics.
    pub fn closed_loop_matrix(&self) -> Matrix4<T> {
        let (z, o) = (T::zero(), T::one());
        Matrix4::new(
            z, z, o, z, //
            z, z, z, o, //
            self.k_p, z, self.k_v, z, //
            z, self.k_p, z, self.k_v,
        )
    }
}

fn invalid<T>(field: &'static str, message: &str) -> Result<T, ModelError> {
    Err(ModelError::InvalidConfig {
        field,
        message: message.to_string(),
    })
}

/// Returns the config unchanged if every invariant holds, otherwise an error
/// naming the first offending field.
pub fn validate_config<T: Real>(cfg: Config<T>) -> Result<Config<T>, ModelError> {
    let zero = T::zero();
    let scalars: [(&'static str, T); 19] = [
        ("K_p", cfg.k_p),
        ("K_v", cfg.k_v),
        ("A_int", cfg.a_int),
        ("B_int", cfg.b_int),
        ("d_tol", cfg.d_tol),
        ("c_tol", cfg.c_tol),
        ("d_int_tol", cfg.d_int_tol),
        ("lambda1", cfg.lambda1),
        ("lambda2", cfg.lambda2),
        ("T_f_cost", cfg.t_f_cost),
        ("dt", cfg.dt),
        ("sigma_p", cfg.sigma_p),
        ("sigma_v", cfg.sigma_v),
        ("ukf_alpha", cfg.ukf_alpha),
        ("ukf_beta", cfg.ukf_beta),
        ("ukf_kappa", cfg.ukf_kappa),
        ("meas_noise_std", cfg.meas_noise_std),
        ("proc_noise_std", cfg.proc_noise_std[0]),
        ("proc_noise_std", cfg.proc_noise_std[1]),
    ];
    for (name, value) in scalars {
        // thresholds may be +inf to disable a gate
        let inf_ok = matches!(name, "d_tol" | "c_tol");
        if crate::scalar::to_f64(value).is_nan() || (!inf_ok && !value.is_finite()) {
            return invalid(name, &format!("{name} must be finite"));
        }
    }
    if !(cfg.dt > zero) {
        return invalid("dt", "dt must be positive");
    }
    if !(cfg.t_f_cost > zero) {
        return invalid("T_f_cost", "T_f_cost must be positive");
    }
    // d_tol = 0 is accepted so that the all-singletons degenerate case is
    // expressible; negative values are not.
    if cfg.d_tol < zero {
        return invalid("d_tol", "d_tol must be non-negative");
    }
    if !(cfg.c_tol > zero) {
        return invalid("c_tol", "c_tol must be positive");
    }
    if !(cfg.sigma_p > zero) {
        return invalid("sigma_p", "sigma_p must be positive");
    }
    if !(cfg.sigma_v > zero) {
        return invalid("sigma_v", "sigma_v must be positive");
    }
    if cfg.lambda1 < zero {
        return invalid("lambda1", "lambda1 must be non-negative");
    }
    if cfg.lambda2 < zero {
        return invalid("lambda2", "lambda2 must be non-negative");
    }
    if !(cfg.lambda1 + cfg.lambda2 > zero) {
        return invalid("lambda1", "lambda1 + lambda2 must be positive");
    }
    if !(cfg.k_p < zero) {
        return invalid("K_p", "K_p must be negative for stable goal seeking");
    }
    if !(cfg.k_v < zero) {
        return invalid("K_v", "K_v must be negative for stable goal seeking");
    }
    if cfg.a_int < zero {
        return invalid("A_int", "A_int must be non-negative");
    }
    if !(cfg.b_int > zero) {
        return invalid("B_int", "B_int must be positive");
    }
    if cfg.d_int_tol < zero {
        return invalid("d_int_tol", "d_int_tol must be non-negative");
    }
    if !(cfg.meas_noise_std > zero) {
        return invalid("meas_noise_std", "meas_noise_std must be positive");
    }
    if cfg.proc_noise_std[0] < zero || cfg.proc_noise_std[1] < zero {
        return invalid("proc_noise_std", "proc_noise_std must be non-negative");
    }
    if !(cfg.radius_default > zero) || !cfg.radius_default.is_finite() {
        return invalid("radius_default", "radius_default must be positive");
    }
    if !(cfg.ukf_alpha > zero) {
        return invalid("ukf_alpha", "ukf_alpha must be positive");
    }
    let n = lit::<T>(4.0);
    let lambda = cfg.ukf_alpha * cfg.ukf_alpha * (n + cfg.ukf_kappa) - n;
    if !(n + lambda > zero) {
        return invalid("ukf_kappa", "ukf scaling must give n + lambda > 0");
    }
    Ok(cfg)
}
