//! Multi-view agglomerative grouping of agents.
//!
//! Two agents are paired when their cost distance is the smallest among all
//! unassigned candidates and both the cost gate (`< c_tol`) and the
//! Euclidean gate (`< d_tol`) agree. Clusters grow by complete linkage: the
//! farthest cross pair must pass the cost gate and the Hausdorff distance
//! between the member position sets must be within `d_tol`.
//!
//! Re-clustering discards prior groupings and regroups the current states.
//! Clusters whose member set survives keep their id and filtered estimate.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, Vector2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    goal_or_extrapolate, AgentId, AgentState, Cluster, ClusterId, ClusterSet, Config, Goal,
    ModelError,
};
use crate::optcost::{goal_cost, transfer_cost, CostError};
use crate::scalar::{to_f64, Real};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ClusteringError {
    #[error("hausdorff distance of an empty point set")]
    EmptySet,
    #[error("agent {0} is already live")]
    DuplicateAgent(AgentId),
    #[error("agent {0} is not live")]
    UnknownAgent(AgentId),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Cost(#[from] CostError),
}

/// Euclidean distance between two positions.
pub fn euclidean<T: Real>(p_i: &Vector2<T>, p_j: &Vector2<T>) -> T {
    (p_i - p_j).norm()
}

/// Hausdorff distance between two finite, non-empty point sets, by
/// exhaustive search.
pub fn hausdorff<T: Real>(xs: &[Vector2<T>], ys: &[Vector2<T>]) -> Result<T, ClusteringError> {
    if xs.is_empty() || ys.is_empty() {
        return Err(ClusteringError::EmptySet);
    }
    let directed = |a: &[Vector2<T>], b: &[Vector2<T>]| {
        a.iter()
            .map(|x| {
                b.iter()
                    .map(|y| euclidean(x, y))
                    .fold(T::max_value().unwrap(), |m, d| m.min(d))
            })
            .fold(T::zero(), |m, d| m.max(d))
    };
    Ok(directed(xs, ys).max(directed(ys, xs)))
}

/// One auditable clustering decision.
///
/// Replaying a log on the prior partition (see
/// [`ClusteringDecisionLog::replay`]) reproduces the posterior partition:
/// `split` dissolves a cluster into singletons, `pair` and `merge` join the
/// groups containing the named agents, `insert` adds a singleton and `delete`
/// removes an agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClusterEvent {
    Pair {
        a: AgentId,
        b: AgentId,
        #[serde(skip_serializing_if = "Option::is_none", default)]
        cost: Option<f64>,
        distance: f64,
    },
    Merge {
        left: Vec<AgentId>,
        right: Vec<AgentId>,
        #[serde(skip_serializing_if = "Option::is_none", default)]
        cost: Option<f64>,
        distance: f64,
    },
    Split {
        cluster_id: ClusterId,
        members: Vec<AgentId>,
    },
    Insert {
        agent: AgentId,
    },
    Delete {
        agent: AgentId,
    },
}

/// Decisions taken at one time step.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ClusteringDecisionLog {
    pub step: usize,
    pub events: Vec<ClusterEvent>,
}

impl ClusteringDecisionLog {
    pub fn new(step: usize) -> Self {
        Self {
            step,
            events: Vec::new(),
        }
    }

    pub fn extend(&mut self, other: ClusteringDecisionLog) {
        self.events.extend(other.events);
    }

    /// Writes one JSON object per event, each tagged with the step index.
    pub fn write_jsonl<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        #[derive(Serialize)]
        struct Line<'a> {
            step: usize,
            #[serde(flatten)]
            event: &'a ClusterEvent,
        }
        for event in &self.events {
            serde_json::to_writer(
                &mut w,
                &Line {
                    step: self.step,
                    event,
                },
            )?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Applies the events to a partition given as member lists.
    pub fn replay(&self, prior: &[Vec<AgentId>]) -> Vec<Vec<AgentId>> {
        let mut blocks: Vec<BTreeSet<AgentId>> =
            prior.iter().map(|b| b.iter().copied().collect()).collect();
        let find = |blocks: &Vec<BTreeSet<AgentId>>, a: AgentId| {
            blocks.iter().position(|b| b.contains(&a))
        };
        let union = |blocks: &mut Vec<BTreeSet<AgentId>>, a: AgentId, b: AgentId| {
            if let (Some(i), Some(j)) = (find(blocks, a), find(blocks, b)) {
                if i != j {
                    let moved = blocks[j].clone();
                    blocks[i].extend(moved);
                    blocks.remove(j);
                }
            }
        };
        for e in &self.events {
            match e {
                ClusterEvent::Pair { a, b, .. } => union(&mut blocks, *a, *b),
                ClusterEvent::Merge { left, right, .. } => {
                    if let (Some(a), Some(b)) = (left.first(), right.first()) {
                        union(&mut blocks, *a, *b);
                    }
                }
                ClusterEvent::Split { members, .. } => {
                    if let Some(first) = members.first() {
                        if let Some(i) = find(&blocks, *first) {
                            let b = blocks.remove(i);
                            blocks.extend(b.into_iter().map(|m| BTreeSet::from([m])));
                        }
                    }
                }
                ClusterEvent::Insert { agent } => {
                    if find(&blocks, *agent).is_none() {
                        blocks.push(BTreeSet::from([*agent]));
                    }
                }
                ClusterEvent::Delete { agent } => {
                    if let Some(i) = find(&blocks, *agent) {
                        blocks[i].remove(agent);
                        if blocks[i].is_empty() {
                            blocks.remove(i);
                        }
                    }
                }
            }
        }
        let mut out: Vec<Vec<AgentId>> = blocks
            .into_iter()
            .map(|b| b.into_iter().collect())
            .collect();
        out.sort();
        out
    }
}

/// A partition of agent ids together with the decisions that built it from
/// all-singletons.
#[derive(Debug, Clone, PartialEq)]
pub struct Grouping {
    /// Member lists, each ascending, ordered by smallest member.
    pub blocks: Vec<Vec<AgentId>>,
    pub trace: Vec<ClusterEvent>,
}

impl Grouping {
    pub fn singletons(ids: impl IntoIterator<Item = AgentId>) -> Self {
        Self {
            blocks: ids.into_iter().map(|i| vec![i]).collect(),
            trace: Vec::new(),
        }
    }

    fn normalize(mut self) -> Self {
        for b in &mut self.blocks {
            b.sort_unstable();
        }
        self.blocks.sort();
        self
    }
}

/// Gate that stopped a cluster merge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MergeRejection {
    Overlapping,
    /// The farthest cross pair failed the cost gate.
    Cost {
        cost: f64,
    },
    /// The Hausdorff distance exceeded `d_tol`.
    Distance {
        cost: f64,
        hausdorff: f64,
    },
}

/// Outcome of a complete-linkage test between two member sets.
#[derive(Debug, Clone, Copy, PartialEq)]
struct LinkageCheck {
    accepted: Result<(f64, f64), MergeRejection>,
}

/// Pairwise cost terms for a fixed set of agents, computed once per
/// grouping pass.
/// Below this many agents the cost rows are filled on the calling thread.
const PARALLEL_MIN_AGENTS: usize = 48;

struct CostTable<T: Real> {
    ids: Vec<AgentId>,
    index: BTreeMap<AgentId, usize>,
    states: Vec<AgentState<T>>,
    /// `λ1 V1(i, j)` (zero column when λ1 = 0).
    transfer: DMatrix<T>,
    /// `λ2 V2(i, g_i)`.
    goal: Vec<T>,
}

impl<T: Real> CostTable<T> {
    fn build(
        states: &BTreeMap<AgentId, AgentState<T>>,
        goals: &BTreeMap<AgentId, Goal<T>>,
        cfg: &Config<T>,
    ) -> Result<Self, ClusteringError> {
        let ids: Vec<AgentId> = states.keys().copied().collect();
        let xs: Vec<AgentState<T>> = states.values().copied().collect();
        let n = ids.len();
        let row = |i: usize| -> Result<Vec<T>, CostError> {
            (0..n)
                .map(|j| {
                    if cfg.lambda1 == T::zero() || i == j {
                        Ok(T::zero())
                    } else {
                        transfer_cost(&xs[i], &xs[j], cfg.t_f_cost).map(|c| c * cfg.lambda1)
                    }
                })
                .collect()
        };
        let rows: Vec<Result<Vec<T>, CostError>> = if n >= PARALLEL_MIN_AGENTS {
            (0..n).into_par_iter().map(row).collect()
        } else {
            (0..n).map(row).collect()
        };
        let mut transfer = DMatrix::zeros(n, n);
        for (i, row) in rows.into_iter().enumerate() {
            for (j, v) in row?.into_iter().enumerate() {
                transfer[(i, j)] = v;
            }
        }
        let goal = ids
            .iter()
            .zip(&xs)
            .map(|(id, x)| {
                if cfg.lambda2 == T::zero() {
                    Ok(T::zero())
                } else {
                    let g = goal_or_extrapolate(*id, x, goals, cfg.t_f_cost);
                    goal_cost(x, &g, cfg.t_f_cost).map(|c| c * cfg.lambda2)
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        let index = ids.iter().enumerate().map(|(k, id)| (*id, k)).collect();
        Ok(Self {
            ids,
            index,
            states: xs,
            transfer,
            goal,
        })
    }

    /// Cost distance `V(x_i, x_j; g_i)` by table index.
    fn cost(&self, i: usize, j: usize) -> T {
        self.transfer[(i, j)] + self.goal[i]
    }

    /// Both directions must pass the cost gate.
    fn mutual_cost(&self, i: usize, j: usize) -> T {
        self.cost(i, j).max(self.cost(j, i))
    }

    fn idx(&self, id: AgentId) -> usize {
        self.index[&id]
    }
}

fn farthest_pair<T: Real>(
    table: &CostTable<T>,
    left: &[AgentId],
    right: &[AgentId],
    positions_only: bool,
) -> (usize, usize) {
    let mut best = (table.idx(left[0]), table.idx(right[0]));
    let mut best_d = -T::one();
    for &a in left {
        for &b in right {
            let (i, j) = (table.idx(a), table.idx(b));
            let d = if positions_only {
                euclidean(&table.states[i].p, &table.states[j].p)
            } else {
                (table.states[i].to_vector() - table.states[j].to_vector()).norm()
            };
            // strict comparison keeps the lowest-id pair on ties
            if d > best_d {
                best_d = d;
                best = (i, j);
            }
        }
    }
    best
}

fn linkage<T: Real>(
    table: &CostTable<T>,
    left: &[AgentId],
    right: &[AgentId],
    cfg: &Config<T>,
) -> LinkageCheck {
    if left.iter().any(|a| right.contains(a)) {
        return LinkageCheck {
            accepted: Err(MergeRejection::Overlapping),
        };
    }
    let (i, j) = farthest_pair(table, left, right, cfg.farthest_pair_positions_only);
    let cost = table.mutual_cost(i, j);
    if !(cost < cfg.c_tol) {
        return LinkageCheck {
            accepted: Err(MergeRejection::Cost { cost: to_f64(cost) }),
        };
    }
    let pos = |ids: &[AgentId]| -> Vec<Vector2<T>> {
        ids.iter().map(|a| table.states[table.idx(*a)].p).collect()
    };
    let hd = hausdorff(&pos(left), &pos(right)).expect("non-empty member sets");
    if hd <= cfg.d_tol {
        LinkageCheck {
            accepted: Ok((to_f64(cost), to_f64(hd))),
        }
    } else {
        LinkageCheck {
            accepted: Err(MergeRejection::Distance {
                cost: to_f64(cost),
                hausdorff: to_f64(hd),
            }),
        }
    }
}

/// Groups agents from all-singletons: greedy min-cost pairing with
/// absorption of further agents, followed by complete-linkage merge passes
/// until no merge is accepted.
pub fn group_agents<T: Real>(
    states: &BTreeMap<AgentId, AgentState<T>>,
    goals: &BTreeMap<AgentId, Goal<T>>,
    cfg: &Config<T>,
) -> Result<Grouping, ClusteringError> {
    let table = CostTable::build(states, goals, cfg)?;
    let n = table.ids.len();
    let mut assigned = vec![false; n];
    let mut clusters: Vec<Vec<AgentId>> = Vec::new();
    let mut trace = Vec::new();

    for i in 0..n {
        if assigned[i] {
            continue;
        }
        // min-cost unassigned partner, ties to the lowest id
        let mut best: Option<(usize, T)> = None;
        for (j, &taken) in assigned.iter().enumerate() {
            if j == i || taken {
                continue;
            }
            let c = table.cost(i, j);
            if best.is_none_or(|(_, bc)| c < bc) {
                best = Some((j, c));
            }
        }
        let Some((m, _)) = best else { continue };
        let dist = euclidean(&table.states[i].p, &table.states[m].p);
        let cost = table.mutual_cost(i, m);
        if !(dist < cfg.d_tol && cost < cfg.c_tol) {
            continue;
        }
        assigned[i] = true;
        assigned[m] = true;
        let mut members = vec![table.ids[i], table.ids[m]];
        members.sort_unstable();
        trace.push(ClusterEvent::Pair {
            a: table.ids[i],
            b: table.ids[m],
            cost: Some(to_f64(cost)),
            distance: to_f64(dist),
        });
        // absorb remaining unassigned agents in ascending id order
        for (j, taken) in assigned.iter_mut().enumerate() {
            if *taken {
                continue;
            }
            let single = [table.ids[j]];
            if let Ok((c, hd)) = linkage(&table, &members, &single, cfg).accepted {
                trace.push(ClusterEvent::Merge {
                    left: members.clone(),
                    right: single.to_vec(),
                    cost: Some(c),
                    distance: hd,
                });
                *taken = true;
                members.push(single[0]);
                members.sort_unstable();
            }
        }
        clusters.push(members);
    }
    let mut blocks = clusters;
    blocks.extend((0..n).filter(|k| !assigned[*k]).map(|k| vec![table.ids[k]]));
    blocks.sort();

    // cluster-cluster and cluster-agent merges until a fixed point
    'outer: loop {
        for a in 0..blocks.len() {
            for b in (a + 1)..blocks.len() {
                if blocks[a].len() == 1 && blocks[b].len() == 1 {
                    continue;
                }
                if let Ok((c, hd)) = linkage(&table, &blocks[a], &blocks[b], cfg).accepted {
                    trace.push(ClusterEvent::Merge {
                        left: blocks[a].clone(),
                        right: blocks[b].clone(),
                        cost: Some(c),
                        distance: hd,
                    });
                    let moved = blocks.remove(b);
                    blocks[a].extend(moved);
                    blocks[a].sort_unstable();
                    blocks.sort();
                    continue 'outer;
                }
            }
        }
        break;
    }
    Ok(Grouping { blocks, trace }.normalize())
}

/// Builds a fresh cluster set for `states` (all-singletons start).
pub fn pair_agents<T: Real>(
    states: &BTreeMap<AgentId, AgentState<T>>,
    goals: &BTreeMap<AgentId, Goal<T>>,
    cfg: &Config<T>,
) -> Result<(ClusterSet<T>, ClusteringDecisionLog), ClusteringError> {
    let grouping = group_agents(states, goals, cfg)?;
    let prior = ClusterSet {
        clusters: Vec::new(),
        agent_states: states.clone(),
        next_cluster_id: 1,
    };
    assemble(&prior, states, goals, cfg, grouping)
}

/// Complete-linkage merge of two disjoint clusters.
///
/// On success the merged cluster carries `new_id`, the arithmetic mean of all
/// member states, their sample covariance and the member-goal centroid.
pub fn merge_clusters<T: Real>(
    c_i: &Cluster<T>,
    c_j: &Cluster<T>,
    states: &BTreeMap<AgentId, AgentState<T>>,
    goals: &BTreeMap<AgentId, Goal<T>>,
    cfg: &Config<T>,
    new_id: ClusterId,
) -> Result<Result<Cluster<T>, MergeRejection>, ClusteringError> {
    let mut sub = BTreeMap::new();
    for m in c_i.members.iter().chain(&c_j.members) {
        let s = states.get(m).ok_or(ClusteringError::UnknownAgent(*m))?;
        sub.insert(*m, *s);
    }
    let table = CostTable::build(&sub, goals, cfg)?;
    match linkage(&table, &c_i.members, &c_j.members, cfg).accepted {
        Ok(_) => {
            let merged = Cluster::from_members(
                new_id,
                c_i.members.iter().chain(&c_j.members).copied(),
                states,
                goals,
                cfg,
            )?;
            Ok(Ok(merged))
        }
        Err(r) => Ok(Err(r)),
    }
}

/// Turns a grouping into a cluster set, reusing ids and estimates of prior
/// clusters whose member set is unchanged, and logs the partition change
/// relative to `prior`.
pub fn assemble<T: Real>(
    prior: &ClusterSet<T>,
    states: &BTreeMap<AgentId, AgentState<T>>,
    goals: &BTreeMap<AgentId, Goal<T>>,
    cfg: &Config<T>,
    grouping: Grouping,
) -> Result<(ClusterSet<T>, ClusteringDecisionLog), ClusteringError> {
    let grouping = grouping.normalize();
    let mut out = ClusterSet {
        clusters: Vec::with_capacity(grouping.blocks.len()),
        agent_states: states.clone(),
        next_cluster_id: prior.next_cluster_id,
    };
    let prior_by_members: BTreeMap<&[AgentId], &Cluster<T>> = prior
        .clusters
        .iter()
        .map(|c| (c.members.as_slice(), c))
        .collect();
    let block_of: BTreeMap<AgentId, usize> = grouping
        .blocks
        .iter()
        .enumerate()
        .flat_map(|(k, b)| b.iter().map(move |a| (*a, k)))
        .collect();

    let mut log = ClusteringDecisionLog::default();
    // prior clusters whose surviving members now sit in different groups
    for c in &prior.clusters {
        let landing: BTreeSet<usize> = c
            .members
            .iter()
            .filter_map(|m| block_of.get(m).copied())
            .collect();
        if c.members.len() > 1 && landing.len() > 1 {
            log.events.push(ClusterEvent::Split {
                cluster_id: c.id,
                members: c.members.clone(),
            });
        }
    }
    let mut changed: BTreeSet<AgentId> = BTreeSet::new();
    for block in &grouping.blocks {
        if let Some(old) = prior_by_members.get(block.as_slice()) {
            let goal = Goal::centroid(
                block
                    .iter()
                    .map(|m| goal_or_extrapolate(*m, &states[m], goals, cfg.t_f_cost))
                    .collect::<Vec<_>>()
                    .iter(),
            )
            .expect("non-empty block");
            out.clusters.push(Cluster {
                goal,
                ..(*old).clone()
            });
        } else {
            let id = out.allocate_id();
            out.clusters.push(Cluster::from_members(
                id,
                block.iter().copied(),
                states,
                goals,
                cfg,
            )?);
            changed.extend(block.iter().copied());
        }
    }
    for e in grouping.trace {
        let touches = match &e {
            ClusterEvent::Pair { a, .. } => changed.contains(a),
            ClusterEvent::Merge { left, .. } => left.first().is_some_and(|a| changed.contains(a)),
            _ => true,
        };
        if touches {
            log.events.push(e);
        }
    }
    Ok((out, log))
}

/// Regroups the current states from scratch.
pub fn recluster<T: Real>(
    prior: &ClusterSet<T>,
    updated_states: &BTreeMap<AgentId, AgentState<T>>,
    goals: &BTreeMap<AgentId, Goal<T>>,
    cfg: &Config<T>,
) -> Result<(ClusterSet<T>, ClusteringDecisionLog), ClusteringError> {
    let grouping = group_agents(updated_states, goals, cfg)?;
    assemble(prior, updated_states, goals, cfg, grouping)
}

/// Adds newly observed agents as singletons and regroups.
pub fn insert_agents<T: Real>(
    cs: &ClusterSet<T>,
    new_obs: &BTreeMap<AgentId, AgentState<T>>,
    goals: &BTreeMap<AgentId, Goal<T>>,
    cfg: &Config<T>,
) -> Result<(ClusterSet<T>, ClusteringDecisionLog), ClusteringError> {
    let mut with_new = cs.clone();
    let mut log = ClusteringDecisionLog::default();
    for (id, s) in new_obs {
        if with_new.agent_states.contains_key(id) {
            return Err(ClusteringError::DuplicateAgent(*id));
        }
        if !s.is_finite() {
            return Err(ModelError::NonFiniteState(*id).into());
        }
        with_new.agent_states.insert(*id, *s);
        let cid = with_new.allocate_id();
        with_new.clusters.push(Cluster::from_members(
            cid,
            [*id],
            &with_new.agent_states,
            goals,
            cfg,
        )?);
        log.events.push(ClusterEvent::Insert { agent: *id });
    }
    let states = with_new.agent_states.clone();
    let (out, relog) = recluster(&with_new, &states, goals, cfg)?;
    log.extend(relog);
    Ok((out, log))
}

/// Removes agents, recomputing the mean and covariance of the clusters they
/// left and dropping clusters that become empty.
pub fn delete_agents<T: Real>(
    cs: &ClusterSet<T>,
    missing: &[AgentId],
    goals: &BTreeMap<AgentId, Goal<T>>,
    cfg: &Config<T>,
) -> Result<(ClusterSet<T>, ClusteringDecisionLog), ClusteringError> {
    let gone: BTreeSet<AgentId> = missing.iter().copied().collect();
    for id in &gone {
        if !cs.agent_states.contains_key(id) {
            return Err(ClusteringError::UnknownAgent(*id));
        }
    }
    let mut out = ClusterSet {
        clusters: Vec::with_capacity(cs.clusters.len()),
        agent_states: cs.agent_states.clone(),
        next_cluster_id: cs.next_cluster_id,
    };
    out.agent_states.retain(|k, _| !gone.contains(k));
    let mut log = ClusteringDecisionLog::default();
    for c in &cs.clusters {
        let remaining: Vec<AgentId> = c
            .members
            .iter()
            .copied()
            .filter(|m| !gone.contains(m))
            .collect();
        for m in c.members.iter().filter(|m| gone.contains(m)) {
            log.events.push(ClusterEvent::Delete { agent: *m });
        }
        if remaining.len() == c.members.len() {
            out.clusters.push(c.clone());
        } else if !remaining.is_empty() {
            out.clusters.push(Cluster::from_members(
                c.id,
                remaining,
                &out.agent_states,
                goals,
                cfg,
            )?);
        }
    }
    Ok((out, log))
}

/// Counts consecutive missed observation steps per agent.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MissTracker {
    misses: BTreeMap<AgentId, usize>,
}

impl MissTracker {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn misses(&self, id: AgentId) -> usize {
        self.misses.get(&id).copied().unwrap_or(0)
    }

    /// Records one observation step and returns the live agents that have
    /// now been missing for more than `grace` consecutive steps.
    pub fn record(
        &mut self,
        live: impl IntoIterator<Item = AgentId>,
        observed: &BTreeSet<AgentId>,
        grace: usize,
    ) -> Vec<AgentId> {
        let mut expired = Vec::new();
        let live: BTreeSet<AgentId> = live.into_iter().collect();
        self.misses.retain(|k, _| live.contains(k));
        for id in live {
            if observed.contains(&id) {
                self.misses.remove(&id);
            } else {
                let n = self.misses.entry(id).or_insert(0);
                *n += 1;
                if *n > grace {
                    expired.push(id);
                }
            }
        }
        for id in &expired {
            self.misses.remove(id);
        }
        expired
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn states(list: &[(AgentId, AgentState<f64>)]) -> BTreeMap<AgentId, AgentState<f64>> {
        list.iter().copied().collect()
    }

    #[test]
    fn euclidean_examples() {
        assert_eq!(
            euclidean(&Vector2::new(0.0, 0.0), &Vector2::new(3.0, 4.0)),
            5.0
        );
        assert_eq!(
            euclidean(&Vector2::new(1.5, -2.0), &Vector2::new(1.5, -2.0)),
            0.0
        );
    }

    #[test]
    fn hausdorff_examples() {
        let x = vec![Vector2::new(0.0, 0.0), Vector2::new(1.0, 0.0)];
        assert_eq!(hausdorff(&x, &x).unwrap(), 0.0);
        assert_eq!(hausdorff(&x, &[Vector2::new(0.0, 0.0)]).unwrap(), 1.0);
        assert_eq!(
            hausdorff(&[Vector2::new(0.0, 0.0)], &[Vector2::new(3.0, 4.0)]).unwrap(),
            5.0
        );
        assert_eq!(hausdorff::<f64>(&[], &x), Err(ClusteringError::EmptySet));
    }

    #[test]
    fn identical_agents_pair() {
        let s = states(&[
            (1, AgentState::new(0.0, 0.0, 1.0, 0.0)),
            (2, AgentState::new(0.0, 0.0, 1.0, 0.0)),
        ]);
        let goals: BTreeMap<_, _> = [(1, Goal::at(2.0, 0.0)), (2, Goal::at(2.0, 0.0))].into();
        let (cs, log) = pair_agents(&s, &goals, &Config::default()).unwrap();
        assert_eq!(cs.membership(), vec![vec![1, 2]]);
        assert!(matches!(
            log.events[0],
            ClusterEvent::Pair { a: 1, b: 2, .. }
        ));
        cs.check_partition().unwrap();
    }

    #[test]
    fn distant_agents_stay_apart() {
        let s = states(&[
            (1, AgentState::at_rest(0.0, 0.0)),
            (2, AgentState::at_rest(100.0, 0.0)),
        ]);
        let goals: BTreeMap<_, _> = [(1, Goal::at(0.0, 0.0)), (2, Goal::at(100.0, 0.0))].into();
        let (cs, log) = pair_agents(&s, &goals, &Config::default()).unwrap();
        assert_eq!(cs.membership(), vec![vec![1], vec![2]]);
        assert!(log.events.is_empty());
    }

    #[test]
    fn merge_adjacent_singletons_gives_midpoint() {
        let cfg = Config::default();
        let s = states(&[
            (1, AgentState::at_rest(0.0, 0.0)),
            (2, AgentState::at_rest(1.0, 0.0)),
        ]);
        let goals: BTreeMap<_, _> = [(1, Goal::at(0.5, 3.0)), (2, Goal::at(0.5, 3.0))].into();
        let c1 = Cluster::from_members(1, [1], &s, &goals, &cfg).unwrap();
        let c2 = Cluster::from_members(2, [2], &s, &goals, &cfg).unwrap();
        let merged = merge_clusters(&c1, &c2, &s, &goals, &cfg, 3)
            .unwrap()
            .unwrap();
        assert_eq!(merged.members, vec![1, 2]);
        assert_eq!(merged.mean.p, Vector2::new(0.5, 0.0));
        assert_eq!(merged.id, 3);
    }

    #[test]
    fn merge_rejects_overlap() {
        let cfg = Config::default();
        let s = states(&[(1, AgentState::at_rest(0.0, 0.0))]);
        let c1 = Cluster::from_members(1, [1], &s, &BTreeMap::new(), &cfg).unwrap();
        let r = merge_clusters(&c1, &c1, &s, &BTreeMap::new(), &cfg, 2).unwrap();
        assert_eq!(r.unwrap_err(), MergeRejection::Overlapping);
    }

    #[test]
    fn merge_rejected_on_hausdorff_gate() {
        let cfg = Config {
            c_tol: f64::INFINITY,
            ..Config::default()
        };
        let s = states(&[
            (1, AgentState::at_rest(0.0, 0.0)),
            (2, AgentState::at_rest(1.0, 0.0)),
            (3, AgentState::at_rest(10.0, 0.0)),
            (4, AgentState::at_rest(11.0, 0.0)),
        ]);
        let g = BTreeMap::new();
        let a = Cluster::from_members(1, [1, 2], &s, &g, &cfg).unwrap();
        let b = Cluster::from_members(2, [3, 4], &s, &g, &cfg).unwrap();
        // brute force: every point's nearest cross neighbour; worst is 10
        let pts = |ids: &[u64]| ids.iter().map(|i| s[i].p).collect::<Vec<_>>();
        let mut worst: f64 = 0.0;
        for p in pts(&[1, 2]) {
            worst = worst.max(
                pts(&[3, 4])
                    .iter()
                    .map(|q| (p - q).norm())
                    .fold(f64::MAX, f64::min),
            );
        }
        for p in pts(&[3, 4]) {
            worst = worst.max(
                pts(&[1, 2])
                    .iter()
                    .map(|q| (p - q).norm())
                    .fold(f64::MAX, f64::min),
            );
        }
        assert_eq!(worst, 10.0);
        match merge_clusters(&a, &b, &s, &g, &cfg, 3).unwrap() {
            Err(MergeRejection::Distance { hausdorff, .. }) => assert_eq!(hausdorff, worst),
            other => panic!("expected distance rejection, got {other:?}"),
        }
    }

    #[test]
    fn delete_and_insert() {
        let cfg = Config::default();
        let s = states(&[
            (1, AgentState::new(0.0, 0.0, 1.0, 0.0)),
            (2, AgentState::new(0.5, 0.0, 1.0, 0.0)),
            (3, AgentState::new(1.0, 0.0, 1.0, 0.0)),
            (4, AgentState::at_rest(50.0, 50.0)),
        ]);
        let goals: BTreeMap<_, _> = [
            (1, Goal::at(2.0, 0.0)),
            (2, Goal::at(2.5, 0.0)),
            (3, Goal::at(3.0, 0.0)),
            (4, Goal::at(50.0, 50.0)),
        ]
        .into();
        let (cs, _) = pair_agents(&s, &goals, &cfg).unwrap();
        assert_eq!(cs.membership(), vec![vec![1, 2, 3], vec![4]]);

        let (after, log) = delete_agents(&cs, &[4], &goals, &cfg).unwrap();
        assert_eq!(after.num_clusters(), 1);
        assert_eq!(log.events, vec![ClusterEvent::Delete { agent: 4 }]);

        let (after, _) = delete_agents(&cs, &[3], &goals, &cfg).unwrap();
        let c = after.cluster_of(1).unwrap();
        assert_eq!(c.members, vec![1, 2]);
        assert_eq!(c.mean.p, Vector2::new(0.25, 0.0));
        after.check_partition().unwrap();

        let far: BTreeMap<_, _> = [(9, AgentState::at_rest(-40.0, 0.0))].into();
        let (ins, _) = insert_agents(&cs, &far, &goals, &cfg).unwrap();
        assert_eq!(ins.membership(), vec![vec![1, 2, 3], vec![4], vec![9]]);
        // unchanged clusters keep their ids
        assert_eq!(ins.cluster_of(1).unwrap().id, cs.cluster_of(1).unwrap().id);

        let near: BTreeMap<_, _> = [(7, AgentState::at_rest(50.2, 50.0))].into();
        let mut g2 = goals.clone();
        g2.insert(7, Goal::at(50.2, 50.0));
        let (ins, _) = insert_agents(&cs, &near, &g2, &cfg).unwrap();
        assert_eq!(ins.cluster_of(7).unwrap().members, vec![4, 7]);

        let dup: BTreeMap<_, _> = [(1, AgentState::at_rest(0.0, 0.0))].into();
        assert_eq!(
            insert_agents(&cs, &dup, &goals, &cfg).unwrap_err(),
            ClusteringError::DuplicateAgent(1)
        );
    }

    #[test]
    fn miss_tracker_grace_boundary() {
        let mut t = MissTracker::new();
        let none = BTreeSet::new();
        let seen: BTreeSet<AgentId> = [5].into();
        // missing exactly `grace` steps then reappearing: never deleted
        assert!(t.record([5], &none, 2).is_empty());
        assert!(t.record([5], &none, 2).is_empty());
        assert!(t.record([5], &seen, 2).is_empty());
        assert_eq!(t.misses(5), 0);
        // one more than the grace period: deleted
        assert!(t.record([5], &none, 2).is_empty());
        assert!(t.record([5], &none, 2).is_empty());
        assert_eq!(t.record([5], &none, 2), vec![5]);
    }

    #[test]
    fn replay_reconstructs_partition() {
        let log = ClusteringDecisionLog {
            step: 0,
            events: vec![
                ClusterEvent::Split {
                    cluster_id: 1,
                    members: vec![1, 2],
                },
                ClusterEvent::Pair {
                    a: 1,
                    b: 3,
                    cost: Some(0.1),
                    distance: 0.5,
                },
                ClusterEvent::Insert { agent: 9 },
                ClusterEvent::Delete { agent: 4 },
            ],
        };
        let out = log.replay(&[vec![1, 2], vec![3], vec![4]]);
        assert_eq!(out, vec![vec![1, 3], vec![2], vec![9]]);
    }

    #[test]
    fn jsonl_has_one_line_per_event() {
        let log = ClusteringDecisionLog {
            step: 3,
            events: vec![
                ClusterEvent::Insert { agent: 4 },
                ClusterEvent::Delete { agent: 5 },
            ],
        };
        let mut buf = Vec::new();
        log.write_jsonl(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(
            lines,
            vec![
                r#"{"step":3,"kind":"insert","agent":4}"#,
                r#"{"step":3,"kind":"delete","agent":5}"#
            ]
        );
    }

    #[test]
    fn events_serialize_as_tagged_json() {
        let e = ClusterEvent::Pair {
            a: 1,
            b: 2,
            cost: Some(0.5),
            distance: 1.25,
        };
        let s = serde_json::to_string(&e).unwrap();
        assert_eq!(
            s,
            r#"{"kind":"pair","a":1,"b":2,"cost":0.5,"distance":1.25}"#
        );
        let back: ClusterEvent = serde_json::from_str(&s).unwrap();
        assert_eq!(back, e);
    }
}

#[cfg(test)]
mod scenarios {
    use super::*;
    use crate::optcost::cost_distance;

    #[test]
    fn two_opposing_pairs_brute_force() {
        let cfg = Config::default();
        let s: BTreeMap<AgentId, AgentState<f64>> = [
            (1, AgentState::new(0.0, 0.0, 1.0, 0.0)),
            (2, AgentState::new(0.0, 1.0, 1.0, 0.0)),
            (3, AgentState::new(50.0, 0.0, -1.0, 0.0)),
            (4, AgentState::new(50.0, 1.0, -1.0, 0.0)),
        ]
        .into();
        let goals: BTreeMap<AgentId, Goal<f64>> = [
            (1, Goal::at(2.0, 0.0)),
            (2, Goal::at(2.0, 1.0)),
            (3, Goal::at(48.0, 0.0)),
            (4, Goal::at(48.0, 1.0)),
        ]
        .into();
        // exhaustive table of costs and distances
        let ids = [1u64, 2, 3, 4];
        let v = |i: u64, j: u64| cost_distance(&s[&i], &s[&j], &goals[&i], &cfg).unwrap();
        let ed = |i: u64, j: u64| (s[&i].p - s[&j].p).norm();
        let mut expected = Vec::new();
        let mut taken = BTreeSet::new();
        for &i in &ids {
            if taken.contains(&i) {
                continue;
            }
            let m = ids
                .iter()
                .copied()
                .filter(|j| *j != i && !taken.contains(j))
                .min_by(|a, b| v(i, *a).partial_cmp(&v(i, *b)).unwrap())
                .unwrap();
            let gate = ed(i, m) < cfg.d_tol && v(i, m).max(v(m, i)) < cfg.c_tol;
            if gate {
                taken.insert(i);
                taken.insert(m);
                expected.push(vec![i.min(m), i.max(m)]);
            }
        }
        assert_eq!(expected, vec![vec![1, 2], vec![3, 4]]);
        let (cs, _) = pair_agents(&s, &goals, &cfg).unwrap();
        assert_eq!(cs.membership(), expected);
    }

    #[test]
    fn flipped_goal_leaves_cluster() {
        let cfg = Config {
            lambda1: 0.1,
            lambda2: 0.9,
            c_tol: 3.0,
            ..Config::default()
        };
        let s: BTreeMap<AgentId, AgentState<f64>> = [
            (1, AgentState::new(0.0, 0.0, 1.0, 0.0)),
            (2, AgentState::new(0.5, 0.0, 1.0, 0.0)),
        ]
        .into();
        let mut goals: BTreeMap<AgentId, Goal<f64>> =
            [(1, Goal::at(2.0, 0.0)), (2, Goal::at(2.5, 0.0))].into();
        // by hand, T = 2: V1 is 27/16 from 1 to 2 and 75/16 from 2 to 1,
        // V2 is 1 toward a goal 2 m ahead and 7 toward a goal 2 m behind
        let v_same = 0.1 * 27.0 / 16.0 + 0.9 * 1.0;
        let v_flip = 0.1 * 75.0 / 16.0 + 0.9 * 7.0;
        let got = cost_distance(&s[&1], &s[&2], &goals[&1], &cfg).unwrap();
        assert!((got - v_same).abs() < 1e-12);
        let (cs, _) = pair_agents(&s, &goals, &cfg).unwrap();
        assert_eq!(cs.membership(), vec![vec![1, 2]]);

        goals.insert(2, Goal::at(-1.5, 0.0));
        let got = cost_distance(&s[&2], &s[&1], &goals[&2], &cfg).unwrap();
        assert!((got - v_flip).abs() < 1e-12);
        let (after, log) = recluster(&cs, &s, &goals, &cfg).unwrap();
        assert_eq!(after.membership(), vec![vec![1], vec![2]]);
        assert_eq!(log.replay(&cs.membership()), after.membership());
    }

    #[test]
    fn overtaking_changes_partner() {
        // agent 1 is faster than agent 2 and catches up with agent 3 ahead
        let cfg = Config::default();
        let at = |t: f64| -> BTreeMap<AgentId, AgentState<f64>> {
            [
                (1, AgentState::new(1.5 * t, 0.0, 1.5, 0.0)),
                (2, AgentState::new(t, 1.0, 1.0, 0.0)),
                (3, AgentState::new(8.0 + t, 1.0, 1.0, 0.0)),
            ]
            .into()
        };
        let goals = BTreeMap::new();
        let (mut cs, _) = pair_agents(&at(0.0), &goals, &cfg).unwrap();
        let mut seen = vec![cs.membership()];
        for k in 1..=32 {
            let (next, log) = recluster(&cs, &at(0.5 * k as f64), &goals, &cfg).unwrap();
            assert_eq!(log.replay(&cs.membership()), next.membership());
            if next.membership() != cs.membership() {
                seen.push(next.membership());
            }
            cs = next;
        }
        assert_eq!(seen.first().unwrap(), &vec![vec![1, 2], vec![3]]);
        assert_eq!(seen.last().unwrap(), &vec![vec![1, 3], vec![2]]);
        let first_13 = seen.iter().position(|m| m.contains(&vec![1, 3])).unwrap();
        let last_12 = seen.iter().rposition(|m| m.contains(&vec![1, 2])).unwrap();
        assert!(last_12 < first_13);
    }

    #[test]
    fn complete_linkage_is_not_monotone_for_multi_member_sides() {
        // moving a member of Y toward the far member of X can worsen the
        // Hausdorff distance, so monotonicity only holds for a single-agent X
        let x = vec![Vector2::new(0.0, 0.0), Vector2::new(10.0, 0.0)];
        let y = vec![Vector2::new(0.5, 0.0), Vector2::new(9.5, 0.0)];
        let moved = vec![Vector2::new(1.0, 0.0), Vector2::new(9.5, 0.0)];
        assert!(hausdorff(&x, &moved).unwrap() > hausdorff(&x, &y).unwrap());
    }
}

#[cfg(test)]
mod properties {
    use super::*;
    use proptest::prelude::*;

    fn scene() -> impl Strategy<
        Value = (
            BTreeMap<AgentId, AgentState<f64>>,
            BTreeMap<AgentId, Goal<f64>>,
        ),
    > {
        prop::collection::vec(
            (
                -4.0..4.0f64,
                -4.0..4.0f64,
                -1.5..1.5f64,
                -1.5..1.5f64,
                prop::option::of((-8.0..8.0f64, -8.0..8.0f64)),
            ),
            1..8,
        )
        .prop_map(|rows| {
            let mut s = BTreeMap::new();
            let mut g = BTreeMap::new();
            for (k, (px, py, vx, vy, goal)) in rows.into_iter().enumerate() {
                let id = (k as u64) * 3 + 1;
                s.insert(id, AgentState::new(px, py, vx, vy));
                if let Some((gx, gy)) = goal {
                    g.insert(id, Goal::at(gx, gy));
                }
            }
            (s, g)
        })
    }

    fn config() -> impl Strategy<Value = Config<f64>> {
        (0.0..4.0f64, 0.5..30.0f64, 0.0..1.0f64, any::<bool>()).prop_map(|(d, c, l1, pos_only)| {
            Config {
                d_tol: d,
                c_tol: c,
                lambda1: l1,
                lambda2: 1.0 - l1,
                farthest_pair_positions_only: pos_only,
                ..Config::default()
            }
        })
    }

    fn brute_hausdorff(xs: &[Vector2<f64>], ys: &[Vector2<f64>]) -> f64 {
        let mut h: f64 = 0.0;
        for x in xs {
            let mut m = f64::INFINITY;
            for y in ys {
                m = m.min(((x.x - y.x).powi(2) + (x.y - y.y).powi(2)).sqrt());
            }
            h = h.max(m);
        }
        for y in ys {
            let mut m = f64::INFINITY;
            for x in xs {
                m = m.min(((x.x - y.x).powi(2) + (x.y - y.y).powi(2)).sqrt());
            }
            h = h.max(m);
        }
        h
    }

    fn points(n: usize) -> impl Strategy<Value = Vec<Vector2<f64>>> {
        prop::collection::vec(
            (-5.0..5.0f64, -5.0..5.0f64).prop_map(|(a, b)| Vector2::new(a, b)),
            1..=n,
        )
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn euclidean_symmetric(a in points(1), b in points(1)) {
            prop_assert_eq!(euclidean(&a[0], &b[0]), euclidean(&b[0], &a[0]));
        }

        #[test]
        fn hausdorff_metric_axioms(x in points(5), y in points(5), z in points(5)) {
            let xy = hausdorff(&x, &y).unwrap();
            prop_assert!((xy - brute_hausdorff(&x, &y)).abs() < 1e-12);
            prop_assert_eq!(hausdorff(&x, &x).unwrap(), 0.0);
            prop_assert_eq!(xy, hausdorff(&y, &x).unwrap());
            let xz = hausdorff(&x, &z).unwrap();
            let zy = hausdorff(&z, &y).unwrap();
            prop_assert!(xy <= xz + zy + 1e-12);
        }

        #[test]
        fn grouping_is_a_partition((s, g) in scene(), cfg in config()) {
            let (cs, log) = pair_agents(&s, &g, &cfg).unwrap();
            cs.check_partition().unwrap();
            prop_assert_eq!(cs.num_agents(), s.len());
            let singles: Vec<Vec<AgentId>> = s.keys().map(|k| vec![*k]).collect();
            prop_assert_eq!(log.replay(&singles), cs.membership());
            for c in &cs.clusters {
                prop_assert!(crate::linalg::is_symmetric_psd(&c.cov));
            }
            for e in &log.events {
                match e {
                    ClusterEvent::Pair { distance, cost, .. } => {
                        prop_assert!(*distance < cfg.d_tol);
                        prop_assert!(cost.unwrap() < cfg.c_tol);
                    }
                    ClusterEvent::Merge { distance, cost, .. } => {
                        prop_assert!(*distance <= cfg.d_tol);
                        prop_assert!(cost.unwrap() < cfg.c_tol);
                    }
                    _ => prop_assert!(false, "unexpected event {:?}", e),
                }
            }
        }

        #[test]
        fn zero_distance_tolerance_gives_singletons((s, g) in scene(), cfg in config()) {
            let cfg = Config { d_tol: 0.0, ..cfg };
            let (cs, log) = pair_agents(&s, &g, &cfg).unwrap();
            prop_assert_eq!(cs.num_clusters(), s.len());
            prop_assert!(log.events.is_empty());
        }

        #[test]
        fn unbounded_gates_follow_greedy_order((s, g) in scene(), cfg in config()) {
            let cfg = Config { d_tol: f64::INFINITY, c_tol: f64::INFINITY, ..cfg };
            let (cs, log) = pair_agents(&s, &g, &cfg).unwrap();
            if s.len() == 1 {
                prop_assert_eq!(cs.num_clusters(), 1);
            } else {
                prop_assert_eq!(cs.membership(), vec![s.keys().copied().collect::<Vec<_>>()]);
                // the first decision pairs the lowest id with its min-cost partner
                let first = *s.keys().next().unwrap();
                let table = CostTable::build(&s, &g, &cfg).unwrap();
                let expect = (1..s.len())
                    .min_by(|a, b| table.cost(0, *a).partial_cmp(&table.cost(0, *b)).unwrap())
                    .map(|k| table.ids[k])
                    .unwrap();
                let is_expected_pair = matches!(
                    &log.events[0],
                    ClusterEvent::Pair { a, b, .. } if *a == first && *b == expect
                );
                prop_assert!(is_expected_pair);
            }
        }

        #[test]
        fn recluster_deterministic_and_replayable(
            (s, g) in scene(),
            cfg in config(),
            drift in prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), 8),
        ) {
            let (cs, _) = pair_agents(&s, &g, &cfg).unwrap();
            let (same, same_log) = recluster(&cs, &s, &g, &cfg).unwrap();
            prop_assert_eq!(&same, &cs);
            prop_assert!(same_log.events.is_empty());

            let moved: BTreeMap<AgentId, AgentState<f64>> = s
                .iter()
                .zip(&drift)
                .map(|((k, x), (dx, dy))| (*k, AgentState::new(x.p.x + dx, x.p.y + dy, x.v.x, x.v.y)))
                .collect();
            let (a, log_a) = recluster(&cs, &moved, &g, &cfg).unwrap();
            let (b, log_b) = recluster(&cs, &moved, &g, &cfg).unwrap();
            prop_assert_eq!(&a, &b);
            prop_assert_eq!(&log_a, &log_b);
            a.check_partition().unwrap();
            prop_assert_eq!(log_a.replay(&cs.membership()), a.membership());
        }

        #[test]
        fn insert_delete_keep_partition(
            (s, g) in scene(),
            cfg in config(),
            extra in prop::collection::vec((-4.0..4.0f64, -4.0..4.0f64), 1..4),
            drop_mask in prop::collection::vec(any::<bool>(), 8),
        ) {
            let (cs, _) = pair_agents(&s, &g, &cfg).unwrap();
            let new: BTreeMap<AgentId, AgentState<f64>> = extra
                .iter()
                .enumerate()
                .map(|(k, (x, y))| (1000 + k as u64, AgentState::at_rest(*x, *y)))
                .collect();
            let (ins, log) = insert_agents(&cs, &new, &g, &cfg).unwrap();
            ins.check_partition().unwrap();
            prop_assert_eq!(ins.num_agents(), s.len() + new.len());
            prop_assert_eq!(log.replay(&cs.membership()), ins.membership());

            let gone: Vec<AgentId> = s.keys().zip(&drop_mask).filter(|(_, d)| **d).map(|(k, _)| *k).collect();
            let (del, log) = delete_agents(&ins, &gone, &g, &cfg).unwrap();
            del.check_partition().unwrap();
            prop_assert_eq!(del.num_agents(), ins.num_agents() - gone.len());
            prop_assert_eq!(log.replay(&ins.membership()), del.membership());
        }

        #[test]
        fn single_agent_linkage_monotone(
            (s, g) in scene(),
            cfg in config(),
            anchor in (-4.0..4.0f64, -4.0..4.0f64),
            which in 0usize..8,
            frac in 0.01..1.0f64,
        ) {
            let cfg = Config { c_tol: f64::INFINITY, ..cfg };
            let mut states = s.clone();
            states.insert(0, AgentState::at_rest(anchor.0, anchor.1));
            let c_i = Cluster::from_members(1, [0], &states, &g, &cfg).unwrap();
            let c_j = Cluster::from_members(2, s.keys().copied(), &states, &g, &cfg).unwrap();
            if merge_clusters(&c_i, &c_j, &states, &g, &cfg, 3).unwrap().is_ok() {
                let target = *s.keys().nth(which % s.len()).unwrap();
                let x = states[&target];
                let p = x.p + (states[&0].p - x.p) * frac;
                states.insert(target, AgentState { p, v: x.v });
                prop_assert!(merge_clusters(&c_i, &c_j, &states, &g, &cfg, 3).unwrap().is_ok());
            }
        }
    }
}
