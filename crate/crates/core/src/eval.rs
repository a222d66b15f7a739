//! Error metrics, the Euclidean density baseline and the experiment
//! harnesses.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt::Write as _;
use std::time::Instant;

use nalgebra::Vector2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clustering::{assemble, euclidean, ClusterEvent, ClusteringDecisionLog, Grouping};
use crate::io::Scene;
use crate::model::{AgentId, AgentState, ClusterSet, Config, Goal};
use crate::pipeline::{run, ClusteringMode, PipelineError, PredictionRun, RunOptions};
use crate::scalar::{to_f64, Real};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("trajectory lengths differ: {pred} predicted vs {truth} truth")]
    LengthMismatch { pred: usize, truth: usize },
    #[error("trajectories must have at least one step")]
    EmptyTrajectory,
    #[error("lambda {0} is outside [0, 1]")]
    LambdaOutOfRange(f64),
    #[error("no scenes given")]
    NoScenes,
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

/// Average and final displacement errors of aligned position sequences.
pub fn ade_fde(pred: &[Vector2<f64>], truth: &[Vector2<f64>]) -> Result<(f64, f64), EvalError> {
    if pred.len() != truth.len() {
        return Err(EvalError::LengthMismatch {
            pred: pred.len(),
            truth: truth.len(),
        });
    }
    if pred.is_empty() {
        return Err(EvalError::EmptyTrajectory);
    }
    let errs: Vec<f64> = pred
        .iter()
        .zip(truth)
        .map(|(p, t)| (p - t).norm())
        .collect();
    let ade = errs.iter().sum::<f64>() / errs.len() as f64;
    Ok((ade, *errs.last().unwrap()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentError {
    pub ade: f64,
    pub fde: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub scene_id: String,
    pub per_agent: BTreeMap<AgentId, AgentError>,
    /// Sums over agents.
    pub ade_sum: f64,
    pub fde_sum: f64,
    pub ade_mean: f64,
    pub fde_mean: f64,
    pub wall_clock_s: f64,
    /// Number of clusters at every step.
    pub cluster_counts: Vec<usize>,
}

/// Scores a run against the scene truth over the frames after the first,
/// for each agent using the steps where it is both predicted and present in
/// the truth.
pub fn score_run(run: &PredictionRun, scene: &Scene, wall_clock_s: f64) -> MetricsReport {
    let mut per_agent = BTreeMap::new();
    for id in scene.agent_ids() {
        let (mut pred, mut truth) = (Vec::new(), Vec::new());
        for s in run.snapshots.iter().skip(1) {
            let (Some(x), Some(t)) = (
                s.clusters.agent_states.get(&id),
                scene.frames.get(s.step).and_then(|f| f.agents.get(&id)),
            ) else {
                continue;
            };
            pred.push(x.p);
            truth.push(t.p);
        }
        if let Ok((ade, fde)) = ade_fde(&pred, &truth) {
            per_agent.insert(
                id,
                AgentError {
                    ade,
                    fde,
                    steps: pred.len(),
                },
            );
        }
    }
    let n = per_agent.len().max(1) as f64;
    let ade_sum: f64 = per_agent.values().map(|e| e.ade).sum();
    let fde_sum: f64 = per_agent.values().map(|e| e.fde).sum();
    MetricsReport {
        scene_id: run.scene_id.clone(),
        ade_mean: ade_sum / n,
        fde_mean: fde_sum / n,
        ade_sum,
        fde_sum,
        per_agent,
        wall_clock_s,
        cluster_counts: run
            .snapshots
            .iter()
            .map(|s| s.clusters.num_clusters())
            .collect(),
    }
}

/// DBSCAN over positions with `ε = d_tol` and `minPts = 2` (a point counts
/// itself). Noise points become singletons. Each density-reachability link
/// is logged as a pair event so the grouping can be replayed.
pub fn ed_grouping<T: Real>(
    states: &BTreeMap<AgentId, AgentState<T>>,
    cfg: &Config<T>,
) -> Grouping {
    const MIN_PTS: usize = 2;
    let ids: Vec<AgentId> = states.keys().copied().collect();
    let pos: Vec<Vector2<T>> = states.values().map(|s| s.p).collect();
    let n = ids.len();
    let neighbours = |i: usize| -> Vec<usize> {
        (0..n)
            .filter(|&j| euclidean(&pos[i], &pos[j]) <= cfg.d_tol)
            .collect()
    };
    let mut label: Vec<Option<usize>> = vec![None; n];
    let mut blocks: Vec<Vec<AgentId>> = Vec::new();
    let mut trace = Vec::new();
    for i in 0..n {
        if label[i].is_some() {
            continue;
        }
        let seeds = neighbours(i);
        if seeds.len() < MIN_PTS {
            continue;
        }
        let c = blocks.len();
        blocks.push(vec![ids[i]]);
        label[i] = Some(c);
        let mut queue: VecDeque<(usize, usize)> = seeds.into_iter().map(|j| (i, j)).collect();
        while let Some((from, j)) = queue.pop_front() {
            if label[j].is_some() {
                continue;
            }
            label[j] = Some(c);
            blocks[c].push(ids[j]);
            trace.push(ClusterEvent::Pair {
                a: ids[from],
                b: ids[j],
                cost: None,
                distance: to_f64(euclidean(&pos[from], &pos[j])),
            });
            let nb = neighbours(j);
            if nb.len() >= MIN_PTS {
                queue.extend(
                    nb.into_iter()
                        .filter(|k| label[*k].is_none())
                        .map(|k| (j, k)),
                );
            }
        }
    }
    for i in 0..n {
        if label[i].is_none() {
            blocks.push(vec![ids[i]]);
        }
    }
    for b in &mut blocks {
        b.sort_unstable();
    }
    blocks.sort();
    Grouping { blocks, trace }
}

/// Cluster set of the Euclidean density baseline, with the same mean and
/// covariance rules as the main grouping.
pub fn ed_baseline_cluster(
    states: &BTreeMap<AgentId, AgentState<f64>>,
    goals: &BTreeMap<AgentId, Goal<f64>>,
    cfg: &Config<f64>,
) -> Result<(ClusterSet<f64>, ClusteringDecisionLog), EvalError> {
    let grouping = ed_grouping(states, cfg);
    assemble(&ClusterSet::empty(), states, goals, cfg, grouping)
        .map_err(|e| EvalError::Pipeline(e.into()))
}

/// One row of the CD/ED comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub scene: String,
    #[serde(rename = "type")]
    pub kind: String,
    pub time_s: f64,
    pub fde: f64,
    pub ade: f64,
}

fn timed_run(
    scene: &Scene,
    cfg: &Config<f64>,
    opts: &RunOptions,
    repeats: usize,
) -> Result<(PredictionRun, f64), EvalError> {
    let mut times = Vec::with_capacity(repeats.max(1));
    let mut out = None;
    for _ in 0..repeats.max(1) {
        let t0 = Instant::now();
        let r = run(scene, cfg, opts)?;
        times.push(t0.elapsed().as_secs_f64());
        out = Some(r);
    }
    times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok((out.unwrap(), times[times.len() / 2]))
}

/// Runs every scene once per clustering mode with everything else held
/// fixed. Scene-level ADE/FDE are sums over agents; time is the median wall
/// clock over `repeats` runs. Scenes are processed in parallel and the two
/// arms of a scene sequentially.
pub fn compare_cd_ed(
    scenes: &[Scene],
    cfg: &Config<f64>,
    opts: &RunOptions,
    repeats: usize,
) -> Result<Vec<ComparisonRow>, EvalError> {
    if scenes.is_empty() {
        return Err(EvalError::NoScenes);
    }
    let per_scene: Vec<Result<Vec<ComparisonRow>, EvalError>> = scenes
        .par_iter()
        .map(|scene| {
            let mut rows = Vec::with_capacity(2);
            for mode in [
                ClusteringMode::CostDistance,
                ClusteringMode::EuclideanDensity,
            ] {
                let o = RunOptions { mode, ..*opts };
                let (r, time_s) = timed_run(scene, cfg, &o, repeats)?;
                let m = score_run(&r, scene, time_s);
                rows.push(ComparisonRow {
                    scene: scene.scene_id.clone(),
                    kind: mode.label().to_string(),
                    time_s,
                    fde: m.fde_sum,
                    ade: m.ade_sum,
                });
            }
            Ok(rows)
        })
        .collect();
    let mut out = Vec::with_capacity(scenes.len() * 2);
    for rows in per_scene {
        out.extend(rows?);
    }
    Ok(out)
}

pub fn comparison_csv(rows: &[ComparisonRow]) -> String {
    let mut s = String::from("scene,type,time_s,fde,ade\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{},{},{}", r.scene, r.kind, r.time_s, r.fde, r.ade);
    }
    s
}

/// Aligned plain-text rendering of the comparison table.
pub fn comparison_table(rows: &[ComparisonRow]) -> String {
    let w = rows.iter().map(|r| r.scene.len()).max().unwrap_or(0).max(5);
    let mut s = format!(
        "{:<w$}  {:<4}  {:>10}  {:>12}  {:>12}\n",
        "Scene", "Type", "Time (s)", "FDE (m)", "ADE (m)"
    );
    for r in rows {
        let _ = writeln!(
            s,
            "{:<w$}  {:<4}  {:>10.4}  {:>12.4}  {:>12.4}",
            r.scene, r.kind, r.time_s, r.fde, r.ade
        );
    }
    s
}

/// Membership timeline of one λ value.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub lambda1: f64,
    pub timeline: Vec<Vec<Vec<AgentId>>>,
    pub run: PredictionRun,
}

impl SweepResult {
    /// Plot-ready rows `step,t,agent_id,cluster_id,cluster_size`.
    pub fn timeline_csv(&self) -> String {
        let mut s = String::from("step,t,agent_id,cluster_id,cluster_size\n");
        for snap in &self.run.snapshots {
            let mut rows: Vec<(AgentId, u64, usize)> = snap
                .clusters
                .clusters
                .iter()
                .flat_map(|c| c.members.iter().map(move |m| (*m, c.id, c.len())))
                .collect();
            rows.sort();
            for (m, cid, len) in rows {
                let _ = writeln!(s, "{},{},{},{},{}", snap.step, snap.t, m, cid, len);
            }
        }
        s
    }
}

/// One run per `λ1` in the grid with `λ2 = 1 - λ1`.
pub fn lambda_sweep(
    scene: &Scene,
    grid: &[f64],
    cfg: &Config<f64>,
    opts: &RunOptions,
) -> Result<Vec<SweepResult>, EvalError> {
    if let Some(bad) = grid.iter().find(|l| !(0.0..=1.0).contains(*l)) {
        return Err(EvalError::LambdaOutOfRange(*bad));
    }
    grid.par_iter()
        .map(|&l| {
            let c = Config {
                lambda1: l,
                lambda2: 1.0 - l,
                ..*cfg
            };
            let r = run(scene, &c, opts)?;
            Ok(SweepResult {
                lambda1: l,
                timeline: r.membership_timeline(),
                run: r,
            })
        })
        .collect()
}

/// Agents that ever appear in a partition timeline.
pub fn timeline_agents(timeline: &[Vec<Vec<AgentId>>]) -> BTreeSet<AgentId> {
    timeline.iter().flatten().flatten().copied().collect()
}
