//! Cluster motion prediction over a scene.
//!
//! A run clusters the agents at the first frame, then at every later frame
//! filters each cluster through the closed-loop dynamics (other clusters act
//! as repelling neighbours), applies position measurements when the frame is
//! an observation frame, handles agents that appear or go missing, and
//! regroups. The occupancy density at each frame is a Gaussian mixture with
//! one component per cluster, weighted by member count.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;
use std::path::Path;

use nalgebra::{Matrix2, Matrix4, Vector2, Vector4};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clustering::{
    assemble, delete_agents, group_agents, ClusterEvent, ClusteringDecisionLog, ClusteringError,
    Grouping, MissTracker,
};
use crate::dynamics::{substeps, ForceField};
use crate::filter::{
    predict, redistribute_members, sigma_points_cluster, sigma_points_singleton, update,
    FilterError, MeasurementModel,
};
use crate::io::{write_lines, Scene, SceneError};
use crate::linalg::{is_symmetric_psd, mahalanobis_det, psd_repair};
use crate::model::{AgentId, AgentState, Cluster, ClusterId, ClusterSet, Config, Goal, ModelError};
use crate::scalar::{lit, to_f64, Real};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("scene has no agents in its first frame")]
    EmptyScene,
    #[error("component covariance is singular")]
    SingularCovariance,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Clustering(#[from] ClusteringError),
    #[error(transparent)]
    Filter(#[from] FilterError),
    #[error(transparent)]
    Scene(#[from] SceneError),
}

/// Which grouping rule forms the clusters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClusteringMode {
    /// Cost-distance pairing with complete-linkage merging.
    #[default]
    CostDistance,
    /// Density-based Euclidean baseline.
    EuclideanDensity,
}

impl ClusteringMode {
    pub fn label(self) -> &'static str {
        match self {
            ClusteringMode::CostDistance => "CD",
            ClusteringMode::EuclideanDensity => "ED",
        }
    }

    pub fn group<T: Real>(
        self,
        states: &BTreeMap<AgentId, AgentState<T>>,
        goals: &BTreeMap<AgentId, Goal<T>>,
        cfg: &Config<T>,
    ) -> Result<Grouping, ClusteringError> {
        match self {
            ClusteringMode::CostDistance => group_agents(states, goals, cfg),
            ClusteringMode::EuclideanDensity => Ok(crate::eval::ed_grouping(states, cfg)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct GaussianComponent<T: Real> {
    pub cluster_id: ClusterId,
    pub weight: T,
    pub mean: Vector4<T>,
    pub cov: Matrix4<T>,
}

/// Weighted sum of Gaussian components over the 4-D state space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct MixtureDensity<T: Real> {
    pub t: T,
    pub components: Vec<GaussianComponent<T>>,
}

impl<T: Real> MixtureDensity<T> {
    pub fn weight_sum(&self) -> T {
        self.components.iter().fold(T::zero(), |a, c| a + c.weight)
    }

    /// Density of the position marginal at `p`.
    pub fn eval_position(&self, p: &Vector2<T>) -> Result<T, PipelineError> {
        let two_pi = lit::<T>(2.0 * PI);
        let mut total = T::zero();
        for c in &self.components {
            let block: Matrix2<T> = c.cov.fixed_view::<2, 2>(0, 0).into_owned();
            let d = p - Vector2::new(c.mean[0], c.mean[1]);
            let (q, det) = mahalanobis_det(&block, &d).ok_or(PipelineError::SingularCovariance)?;
            total += c.weight * (-q * lit(0.5)).exp() / (two_pi * det.sqrt());
        }
        Ok(total)
    }
}

/// One component per cluster with weight `|C| / N`, the cluster mean and the
/// cluster covariance.
pub fn density_of<T: Real>(cs: &ClusterSet<T>, t: T) -> MixtureDensity<T> {
    let n: usize = cs.clusters.iter().map(Cluster::len).sum();
    let n = lit::<T>(n.max(1) as f64);
    MixtureDensity {
        t,
        components: cs
            .clusters
            .iter()
            .map(|c| GaussianComponent {
                cluster_id: c.id,
                weight: lit::<T>(c.len() as f64) / n,
                mean: c.mean.to_vector(),
                cov: c.cov,
            })
            .collect(),
    }
}

/// Mixture density at a full state `x`, with the 4-D normal normalizer
/// `(2π)^-2 |P|^-1/2`.
pub fn eval_density<T: Real>(d: &MixtureDensity<T>, x: &Vector4<T>) -> Result<T, PipelineError> {
    let norm = lit::<T>(1.0 / (4.0 * PI * PI));
    let mut total = T::zero();
    for c in &d.components {
        let (q, det) =
            mahalanobis_det(&c.cov, &(x - c.mean)).ok_or(PipelineError::SingularCovariance)?;
        total += c.weight * norm * (-q * lit(0.5)).exp() / det.sqrt();
    }
    Ok(total)
}

/// An observation of one agent: a measured position and, for agents seen
/// for the first time, a velocity to start from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measurement<T: Real> {
    pub p: Vector2<T>,
    pub v: Vector2<T>,
}

/// Work done by [`step_run`]; both clustering modes go through the same
/// counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunStats {
    pub steps: usize,
    pub cluster_predictions: usize,
    pub cluster_updates: usize,
    pub regroupings: usize,
    pub regularized_updates: usize,
}

/// Mutable state carried between steps.
#[derive(Debug, Clone)]
pub struct Tracker<T: Real> {
    pub clusters: ClusterSet<T>,
    pub misses: MissTracker,
    pub mode: ClusteringMode,
    pub step: usize,
    pub stats: RunStats,
}

/// Groups the initial states.
pub fn init_run<T: Real>(
    states: &BTreeMap<AgentId, AgentState<T>>,
    goals: &BTreeMap<AgentId, Goal<T>>,
    cfg: &Config<T>,
    mode: ClusteringMode,
) -> Result<(Tracker<T>, ClusteringDecisionLog), PipelineError> {
    if states.is_empty() {
        return Err(PipelineError::EmptyScene);
    }
    if let Some((id, _)) = states.iter().find(|(_, s)| !s.is_finite()) {
        return Err(ModelError::NonFiniteState(*id).into());
    }
    let grouping = mode.group(states, goals, cfg)?;
    let (cs, log) = assemble(&ClusterSet::empty(), states, goals, cfg, grouping)?;
    let tracker = Tracker {
        clusters: cs,
        misses: MissTracker::new(),
        mode,
        step: 0,
        stats: RunStats::default(),
    };
    Ok((tracker, log))
}

struct Filtered<T: Real> {
    cluster: Cluster<T>,
    members: BTreeMap<AgentId, AgentState<T>>,
    updated: bool,
    regularized: bool,
}

fn filter_cluster<T: Real>(
    c: &Cluster<T>,
    cs: &ClusterSet<T>,
    observations: Option<&BTreeMap<AgentId, Measurement<T>>>,
    goals: &BTreeMap<AgentId, Goal<T>>,
    cfg: &Config<T>,
    dt: T,
) -> Result<Filtered<T>, PipelineError> {
    let n_sub = substeps(dt, cfg);
    let h = dt / lit(n_sub as f64);
    // every agent point is repelled by all other live agents; the cluster
    // mean only by agents outside the cluster
    let field_without = |skip: &dyn Fn(AgentId) -> bool| {
        let neighbors = cs
            .agent_states
            .iter()
            .filter(|(id, _)| !skip(**id))
            .map(|(_, x)| (*x, cfg.radius_default))
            .collect();
        ForceField::new(neighbors, cfg.radius_default, cfg)
    };
    let outside = field_without(&|id| c.contains(id));
    let (sig, point_goals, fields) = if c.is_singleton() {
        (
            sigma_points_singleton(&c.mean, &c.cov, cfg)?,
            vec![c.goal],
            vec![outside],
        )
    } else {
        let sig = sigma_points_cluster(c, &cs.agent_states)?;
        let mut g = vec![c.goal];
        g.extend(sig.members.iter().map(|m| {
            crate::model::goal_or_extrapolate(*m, &cs.agent_states[m], goals, cfg.t_f_cost)
        }));
        let mut f = vec![outside];
        f.extend(sig.members.iter().map(|m| field_without(&|id| id == *m)));
        (sig, g, f)
    };
    let pred = predict(&sig, &point_goals, &fields, cfg, h, n_sub)?;

    let seen: Vec<Vector2<T>> = observations
        .map(|obs| {
            c.members
                .iter()
                .filter_map(|m| obs.get(m).map(|o| o.p))
                .collect()
        })
        .unwrap_or_default();
    let (mean, cov, updated, regularized) = if seen.is_empty() {
        (pred.mean, pred.cov, false, false)
    } else {
        let z = seen.iter().fold(Vector2::zeros(), |a, p| a + p) / lit::<T>(seen.len() as f64);
        let post = update(&pred, &z, &MeasurementModel::for_cluster(cfg, seen.len()))?;
        (post.mean, post.cov, true, post.regularized)
    };
    let cov = if is_symmetric_psd(&cov) {
        cov
    } else {
        psd_repair(&cov)
    };
    let mean_state = AgentState::from_vector(&mean);
    let members = if c.is_singleton() {
        BTreeMap::from([(c.members[0], mean_state)])
    } else {
        redistribute_members(&pred, &mean)
    };
    let cluster = Cluster::with_estimate(c.id, c.members.clone(), mean_state, cov, c.goal)?;
    Ok(Filtered {
        cluster,
        members,
        updated,
        regularized,
    })
}

/// Advances the tracker by one frame of length `dt`.
///
/// `observations` is `None` on frames without measurements. On measurement
/// frames, live agents missing from the map accrue a miss and are dropped
/// after `cfg.deletion_grace` consecutive misses; unknown ids are inserted
/// with the measured position and supplied velocity.
pub fn step_run<T: Real>(
    tracker: &mut Tracker<T>,
    observations: Option<&BTreeMap<AgentId, Measurement<T>>>,
    goals: &BTreeMap<AgentId, Goal<T>>,
    cfg: &Config<T>,
    dt: T,
) -> Result<(MixtureDensity<T>, ClusteringDecisionLog), PipelineError> {
    let cs = &tracker.clusters;
    let filtered: Vec<Filtered<T>> = cs
        .clusters
        .par_iter()
        .map(|c| filter_cluster(c, cs, observations, goals, cfg, dt))
        .collect::<Result<_, _>>()?;

    let mut next = ClusterSet {
        clusters: Vec::with_capacity(filtered.len()),
        agent_states: BTreeMap::new(),
        next_cluster_id: cs.next_cluster_id,
    };
    for f in filtered {
        tracker.stats.cluster_predictions += 1;
        tracker.stats.cluster_updates += usize::from(f.updated);
        tracker.stats.regularized_updates += usize::from(f.regularized);
        next.agent_states.extend(f.members);
        next.clusters.push(f.cluster);
    }

    let mut log = ClusteringDecisionLog::new(tracker.step + 1);
    if let Some(obs) = observations {
        let observed: BTreeSet<AgentId> = obs.keys().copied().collect();
        let expired = tracker.misses.record(
            next.agent_states.keys().copied(),
            &observed,
            cfg.deletion_grace,
        );
        if !expired.is_empty() {
            let (after, del_log) = delete_agents(&next, &expired, goals, cfg)?;
            next = after;
            log.extend(del_log);
        }
        for (id, m) in obs {
            if next.agent_states.contains_key(id) {
                continue;
            }
            let s = AgentState { p: m.p, v: m.v };
            if !s.is_finite() {
                return Err(ModelError::NonFiniteState(*id).into());
            }
            next.agent_states.insert(*id, s);
            let cid = next.allocate_id();
            next.clusters.push(Cluster::from_members(
                cid,
                [*id],
                &next.agent_states,
                goals,
                cfg,
            )?);
            log.events.push(ClusterEvent::Insert { agent: *id });
        }
    }

    let states = next.agent_states.clone();
    let grouping = tracker.mode.group(&states, goals, cfg)?;
    let (regrouped, re_log) = assemble(&next, &states, goals, cfg, grouping)?;
    tracker.stats.regroupings += 1;
    tracker.stats.steps += 1;
    log.extend(re_log);
    tracker.clusters = regrouped;
    tracker.step += 1;
    let t = lit::<T>(tracker.step as f64) * dt;
    Ok((density_of(&tracker.clusters, t), log))
}

/// Where agent goals come from.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GoalSource {
    /// Goals given with the scene (goal file or synthetic generator), falling
    /// back to the final truth position for agents without one.
    #[default]
    Provided,
    /// The last position of each agent in the scene (uses future truth).
    FinalTruth,
    /// Constant-velocity extrapolation of the current state.
    Extrapolated,
}

impl GoalSource {
    pub fn resolve(self, scene: &Scene) -> (BTreeMap<AgentId, Goal<f64>>, GoalSource) {
        match self {
            GoalSource::Extrapolated => (BTreeMap::new(), GoalSource::Extrapolated),
            GoalSource::FinalTruth => (scene.final_positions(), GoalSource::FinalTruth),
            GoalSource::Provided => match &scene.goals {
                Some(g) => {
                    let mut all = scene.final_positions();
                    all.extend(g.iter().map(|(k, v)| (*k, *v)));
                    (all, GoalSource::Provided)
                }
                None => (scene.final_positions(), GoalSource::FinalTruth),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunOptions {
    /// Every `stride`-th frame supplies measurements; `None` never does.
    pub stride: Option<usize>,
    pub mode: ClusteringMode,
    pub goal_source: GoalSource,
    /// Add Gaussian noise with `cfg.meas_noise_std` to measured positions.
    pub measurement_noise: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            stride: Some(1),
            mode: ClusteringMode::CostDistance,
            goal_source: GoalSource::Provided,
            measurement_noise: true,
        }
    }
}

/// Serialized form of one step's cluster set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub step: usize,
    pub t: f64,
    pub clusters: ClusterSet<f64>,
}

/// Complete output of [`run`].
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRun {
    pub scene_id: String,
    pub dt: f64,
    pub options: RunOptions,
    /// Goal source actually used (falls back when the scene has no goals).
    pub goal_source: GoalSource,
    pub snapshots: Vec<Snapshot>,
    pub densities: Vec<MixtureDensity<f64>>,
    pub logs: Vec<ClusteringDecisionLog>,
    pub stats: RunStats,
}

impl PredictionRun {
    /// Predicted states of one agent, indexed by step, for the steps it is
    /// live.
    pub fn trajectory(&self, id: AgentId) -> BTreeMap<usize, AgentState<f64>> {
        self.snapshots
            .iter()
            .filter_map(|s| s.clusters.agent_states.get(&id).map(|x| (s.step, *x)))
            .collect()
    }

    /// Membership partition at every step.
    pub fn membership_timeline(&self) -> Vec<Vec<Vec<AgentId>>> {
        self.snapshots
            .iter()
            .map(|s| s.clusters.membership())
            .collect()
    }

    /// Writes `snapshots.jsonl`, `trajectories.csv`, `events.jsonl`,
    /// `run.json` and, when a grid is given, `density_grid.csv`.
    pub fn write_dir(&self, dir: &Path, grid: Option<&DensityGrid>) -> Result<(), PipelineError> {
        let io = |source| SceneError::Io {
            path: dir.to_path_buf(),
            source,
        };
        std::fs::create_dir_all(dir).map_err(io)?;
        write_lines(
            &dir.join("snapshots.jsonl"),
            self.snapshots
                .iter()
                .map(|s| serde_json::to_string(s).expect("snapshot serializes")),
        )?;

        let mut rows = vec!["step,agent_id,px,py,vx,vy,cluster_id".to_string()];
        for s in &self.snapshots {
            for c in &s.clusters.clusters {
                for m in &c.members {
                    let x = s.clusters.agent_states[m];
                    rows.push(format!(
                        "{},{},{},{},{},{},{}",
                        s.step, m, x.p.x, x.p.y, x.v.x, x.v.y, c.id
                    ));
                }
            }
        }
        rows[1..].sort_by_key(|r| {
            let mut it = r.split(',');
            let step: usize = it.next().unwrap().parse().unwrap();
            let id: AgentId = it.next().unwrap().parse().unwrap();
            (step, id)
        });
        write_lines(&dir.join("trajectories.csv"), rows)?;

        let mut events = Vec::new();
        for log in &self.logs {
            log.write_jsonl(&mut events).map_err(io)?;
        }
        std::fs::write(dir.join("events.jsonl"), events).map_err(io)?;

        let meta = serde_json::json!({
            "scene_id": self.scene_id,
            "dt": self.dt,
            "stride": self.options.stride,
            "clustering": self.options.mode,
            "goal_source": self.goal_source,
            "oracle_goals": self.goal_source == GoalSource::FinalTruth,
            "measurement_noise": self.options.measurement_noise,
            "steps": self.snapshots.len(),
            "stats": self.stats,
        });
        write_lines(
            &dir.join("run.json"),
            [serde_json::to_string_pretty(&meta).expect("json")],
        )?;

        if let Some(g) = grid {
            let mut rows = vec!["step,x,y,density".to_string()];
            for (k, d) in self.densities.iter().enumerate() {
                for (x, y) in g.points() {
                    let v = d.eval_position(&Vector2::new(x, y))?;
                    rows.push(format!("{k},{x},{y},{v}"));
                }
            }
            write_lines(&dir.join("density_grid.csv"), rows)?;
        }
        Ok(())
    }
}

/// Rectangular raster for the positional density export.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityGrid {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub nx: usize,
    pub ny: usize,
}

impl DensityGrid {
    pub fn points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        let step = |lo: f64, hi: f64, n: usize, k: usize| {
            if n <= 1 {
                lo
            } else {
                lo + (hi - lo) * k as f64 / (n - 1) as f64
            }
        };
        (0..self.ny).flat_map(move |j| {
            (0..self.nx).map(move |i| {
                (
                    step(self.x_min, self.x_max, self.nx, i),
                    step(self.y_min, self.y_max, self.ny, j),
                )
            })
        })
    }

    /// Bounding box of all truth positions in `scene`, padded by `margin`.
    pub fn around(scene: &Scene, margin: f64, nx: usize, ny: usize) -> Self {
        let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
        for f in &scene.frames {
            for o in f.agents.values() {
                x0 = x0.min(o.p.x);
                x1 = x1.max(o.p.x);
                y0 = y0.min(o.p.y);
                y1 = y1.max(o.p.y);
            }
        }
        Self {
            x_min: x0 - margin,
            x_max: x1 + margin,
            y_min: y0 - margin,
            y_max: y1 + margin,
            nx,
            ny,
        }
    }
}

/// Runs the full prediction over a scene: grouping at frame 0 from the truth
/// states there, then one [`step_run`] per later frame. Measurements are the
/// truth positions plus seeded Gaussian noise (`cfg.seed`).
pub fn run(
    scene: &Scene,
    cfg: &Config<f64>,
    opts: &RunOptions,
) -> Result<PredictionRun, PipelineError> {
    scene.validate()?;
    let first = scene.frames.first().ok_or(PipelineError::EmptyScene)?;
    let initial: BTreeMap<AgentId, AgentState<f64>> = first
        .agents
        .iter()
        .map(|(id, o)| (*id, o.state()))
        .collect();
    let (goals, goal_source) = opts.goal_source.resolve(scene);
    let (mut tracker, init_log) = init_run(&initial, &goals, cfg, opts.mode)?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let noise = Normal::new(0.0, cfg.meas_noise_std).expect("validated noise std");
    let mut snapshots = vec![Snapshot {
        step: 0,
        t: 0.0,
        clusters: tracker.clusters.clone(),
    }];
    let mut densities = vec![density_of(&tracker.clusters, 0.0)];
    let mut logs = vec![init_log];

    for (k, frame) in scene.frames.iter().enumerate().skip(1) {
        let observe = opts.stride.is_some_and(|s| s > 0 && k % s == 0);
        let obs: Option<BTreeMap<AgentId, Measurement<f64>>> = observe.then(|| {
            frame
                .agents
                .iter()
                .map(|(id, o)| {
                    let mut p = o.p;
                    if opts.measurement_noise {
                        p += Vector2::new(noise.sample(&mut rng), noise.sample(&mut rng));
                    }
                    (*id, Measurement { p, v: o.state().v })
                })
                .collect()
        });
        let (density, log) = step_run(&mut tracker, obs.as_ref(), &goals, cfg, scene.dt)?;
        snapshots.push(Snapshot {
            step: k,
            t: density.t,
            clusters: tracker.clusters.clone(),
        });
        densities.push(density);
        logs.push(log);
    }
    Ok(PredictionRun {
        scene_id: scene.scene_id.clone(),
        dt: scene.dt,
        options: *opts,
        goal_source,
        snapshots,
        densities,
        logs,
        stats: tracker.stats,
    })
}

/// Largest deviation of the mixture weights from summing to one, plus a
/// check that every component covariance is symmetric PSD.
pub fn mixture_is_valid<T: Real>(d: &MixtureDensity<T>) -> bool {
    (to_f64(d.weight_sum()) - 1.0).abs() <= 1e-12
        && !d.components.is_empty()
        && d.components
            .iter()
            .all(|c| c.weight >= T::zero() && is_symmetric_psd(&c.cov))
}
