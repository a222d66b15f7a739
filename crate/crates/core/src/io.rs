//! Scene files, the Trajnet++ converter and the synthetic scene generator.
//!
//! The canonical scene CSV has the header `scene_id,frame,agent_id,x,y,vx,vy`
//! (the velocity columns may be left empty or omitted, in which case they
//! are derived by finite differences). Goals live in a separate
//! `agent_id,gx,gy` file.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use nalgebra::Vector2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{step, substeps, ForceField};
use crate::model::{AgentId, AgentState, Config, Goal};

/// Frame interval of Trajnet++ data in seconds.
pub const TRAJNET_DT: f64 = 0.4;

pub const SCENE_HEADER: [&str; 7] = ["scene_id", "frame", "agent_id", "x", "y", "vx", "vy"];
pub const GOALS_HEADER: [&str; 3] = ["agent_id", "gx", "gy"];

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{path}, line {line}: {message}")]
    Malformed {
        path: PathBuf,
        line: u64,
        message: String,
    },
    #[error("{path}: non-uniform frame spacing ({first} then {other} between frames)")]
    NonUniformFrames {
        path: PathBuf,
        first: i64,
        other: i64,
    },
    #[error("{path}, line {line}: duplicate row for frame {frame}, agent {agent}")]
    Duplicate {
        path: PathBuf,
        line: u64,
        frame: i64,
        agent: AgentId,
    },
    #[error("{0}")]
    Invalid(String),
}

/// One agent sighting in a frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub p: Vector2<f64>,
    pub v: Option<Vector2<f64>>,
}

impl Observation {
    pub fn state(&self) -> AgentState<f64> {
        AgentState {
            p: self.p,
            v: self.v.unwrap_or_else(Vector2::zeros),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    /// Frame number as it appears in the source data.
    pub frame: i64,
    pub agents: BTreeMap<AgentId, Observation>,
}

/// Time-indexed ground truth of one scenario. Frames are uniformly spaced
/// `dt` seconds apart; agents missing from a frame are unobserved there.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub scene_id: String,
    pub dt: f64,
    pub frames: Vec<Frame>,
    pub goals: Option<BTreeMap<AgentId, Goal<f64>>>,
}

impl Scene {
    pub fn num_frames(&self) -> usize {
        self.frames.len()
    }

    pub fn agent_ids(&self) -> BTreeSet<AgentId> {
        self.frames
            .iter()
            .flat_map(|f| f.agents.keys().copied())
            .collect()
    }

    pub fn state(&self, k: usize, id: AgentId) -> Option<AgentState<f64>> {
        self.frames.get(k)?.agents.get(&id).map(Observation::state)
    }

    /// Last observed position of each agent, used as an oracle goal.
    pub fn final_positions(&self) -> BTreeMap<AgentId, Goal<f64>> {
        let mut out = BTreeMap::new();
        for f in &self.frames {
            for (id, o) in &f.agents {
                out.insert(*id, Goal::with_velocity(o.p, Vector2::zeros()));
            }
        }
        out
    }

    /// Checks the scene invariants: positive `dt`, strictly increasing
    /// uniformly spaced frame numbers and finite coordinates.
    pub fn validate(&self) -> Result<(), SceneError> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(SceneError::Invalid(format!(
                "scene {}: dt must be positive",
                self.scene_id
            )));
        }
        let step = self
            .frames
            .windows(2)
            .map(|w| w[1].frame - w[0].frame)
            .next();
        for w in self.frames.windows(2) {
            let d = w[1].frame - w[0].frame;
            if d <= 0 || Some(d) != step {
                return Err(SceneError::Invalid(format!(
                    "scene {}: frames must be strictly increasing and uniformly spaced",
                    self.scene_id
                )));
            }
        }
        for f in &self.frames {
            for (id, o) in &f.agents {
                let finite = o.p.iter().all(|x| x.is_finite())
                    && o.v.is_none_or(|v| v.iter().all(|x| x.is_finite()));
                if !finite {
                    return Err(SceneError::Invalid(format!(
                        "scene {}: non-finite coordinate for agent {id} in frame {}",
                        self.scene_id, f.frame
                    )));
                }
            }
        }
        Ok(())
    }

    /// Fills missing velocities by finite differences over adjacent frames:
    /// central when both neighbours are observed, one-sided at track ends and
    /// zero for isolated sightings.
    pub fn derive_velocities(&mut self) {
        let n = self.frames.len();
        for k in 0..n {
            let ids: Vec<AgentId> = self.frames[k]
                .agents
                .iter()
                .filter(|(_, o)| o.v.is_none())
                .map(|(id, _)| *id)
                .collect();
            for id in ids {
                let here = self.frames[k].agents[&id].p;
                let prev = (k > 0)
                    .then(|| self.frames[k - 1].agents.get(&id))
                    .flatten()
                    .map(|o| o.p);
                let next = self
                    .frames
                    .get(k + 1)
                    .and_then(|f| f.agents.get(&id))
                    .map(|o| o.p);
                let v = match (prev, next) {
                    (Some(a), Some(b)) => (b - a) / (2.0 * self.dt),
                    (None, Some(b)) => (b - here) / self.dt,
                    (Some(a), None) => (here - a) / self.dt,
                    (None, None) => Vector2::zeros(),
                };
                self.frames[k].agents.get_mut(&id).unwrap().v = Some(v);
            }
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> SceneError + '_ {
    move |source| SceneError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> SceneError + '_ {
    move |source| SceneError::Csv {
        path: path.to_path_buf(),
        source,
    }
}

fn parse_field<T: std::str::FromStr>(
    path: &Path,
    line: u64,
    name: &str,
    raw: &str,
) -> Result<T, SceneError> {
    raw.trim().parse().map_err(|_| SceneError::Malformed {
        path: path.to_path_buf(),
        line,
        message: format!("cannot parse {name} from {raw:?}"),
    })
}

fn parse_coord(path: &Path, line: u64, name: &str, raw: &str) -> Result<f64, SceneError> {
    let v: f64 = parse_field(path, line, name, raw)?;
    if !v.is_finite() {
        return Err(SceneError::Malformed {
            path: path.to_path_buf(),
            line,
            message: format!("{name} is not finite"),
        });
    }
    Ok(v)
}

/// Reads a canonical scene CSV. All rows must share one `scene_id`.
pub fn read_scene_csv(path: &Path, dt: f64) -> Result<Scene, SceneError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(file);
    let header = rdr.headers().map_err(csv_err(path))?.clone();
    let cols: Vec<&str> = header.iter().map(str::trim).collect();
    if cols != SCENE_HEADER[..5] && cols != SCENE_HEADER {
        return Err(SceneError::Malformed {
            path: path.to_path_buf(),
            line: 1,
            message: format!("expected header {}", SCENE_HEADER.join(",")),
        });
    }
    let mut scene_id: Option<String> = None;
    let mut frames: BTreeMap<i64, BTreeMap<AgentId, Observation>> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err(path))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() != cols.len() {
            return Err(SceneError::Malformed {
                path: path.to_path_buf(),
                line,
                message: format!("expected {} fields, found {}", cols.len(), rec.len()),
            });
        }
        let sid = rec[0].trim().to_string();
        match &scene_id {
            None => scene_id = Some(sid),
            Some(s) if *s != sid => {
                return Err(SceneError::Malformed {
                    path: path.to_path_buf(),
                    line,
                    message: format!("scene_id {sid:?} differs from {s:?}"),
                })
            }
            _ => {}
        }
        let frame: i64 = parse_field(path, line, "frame", &rec[1])?;
        let agent: AgentId = parse_field(path, line, "agent_id", &rec[2])?;
        let p = Vector2::new(
            parse_coord(path, line, "x", &rec[3])?,
            parse_coord(path, line, "y", &rec[4])?,
        );
        let v = if cols.len() == 7 {
            match (rec[5].trim().is_empty(), rec[6].trim().is_empty()) {
                (true, true) => None,
                (false, false) => Some(Vector2::new(
                    parse_coord(path, line, "vx", &rec[5])?,
                    parse_coord(path, line, "vy", &rec[6])?,
                )),
                _ => {
                    return Err(SceneError::Malformed {
                        path: path.to_path_buf(),
                        line,
                        message: "vx and vy must both be present or both empty".into(),
                    })
                }
            }
        } else {
            None
        };
        if frames
            .entry(frame)
            .or_default()
            .insert(agent, Observation { p, v })
            .is_some()
        {
            return Err(SceneError::Duplicate {
                path: path.to_path_buf(),
                line,
                frame,
                agent,
            });
        }
    }
    let numbers: Vec<i64> = frames.keys().copied().collect();
    if let Some(first) = numbers.windows(2).map(|w| w[1] - w[0]).next() {
        if let Some(other) = numbers
            .windows(2)
            .map(|w| w[1] - w[0])
            .find(|d| *d != first)
        {
            return Err(SceneError::NonUniformFrames {
                path: path.to_path_buf(),
                first,
                other,
            });
        }
    }
    let mut scene = Scene {
        scene_id: scene_id.unwrap_or_default(),
        dt,
        frames: frames
            .into_iter()
            .map(|(frame, agents)| Frame { frame, agents })
            .collect(),
        goals: None,
    };
    scene.validate()?;
    scene.derive_velocities();
    Ok(scene)
}

/// Writes a scene with velocities, deriving any that are missing.
pub fn write_scene_csv(path: &Path, scene: &Scene) -> Result<(), SceneError> {
    let mut filled = scene.clone();
    filled.derive_velocities();
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(SCENE_HEADER).map_err(csv_err(path))?;
    for f in &filled.frames {
        for (id, o) in &f.agents {
            let v = o.v.unwrap_or_else(Vector2::zeros);
            w.write_record([
                filled.scene_id.clone(),
                f.frame.to_string(),
                id.to_string(),
                o.p.x.to_string(),
                o.p.y.to_string(),
                v.x.to_string(),
                v.y.to_string(),
            ])
            .map_err(csv_err(path))?;
        }
    }
    w.flush().map_err(io_err(path))
}

pub fn read_goals_csv(path: &Path) -> Result<BTreeMap<AgentId, Goal<f64>>, SceneError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(file);
    let header = rdr.headers().map_err(csv_err(path))?.clone();
    if header.iter().map(str::trim).ne(GOALS_HEADER) {
        return Err(SceneError::Malformed {
            path: path.to_path_buf(),
            line: 1,
            message: format!("expected header {}", GOALS_HEADER.join(",")),
        });
    }
    let mut out = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err(path))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() != 3 {
            return Err(SceneError::Malformed {
                path: path.to_path_buf(),
                line,
                message: format!("expected 3 fields, found {}", rec.len()),
            });
        }
        let id: AgentId = parse_field(path, line, "agent_id", &rec[0])?;
        let g = Goal::at(
            parse_coord(path, line, "gx", &rec[1])?,
            parse_coord(path, line, "gy", &rec[2])?,
        );
        if out.insert(id, g).is_some() {
            return Err(SceneError::Malformed {
                path: path.to_path_buf(),
                line,
                message: format!("duplicate goal for agent {id}"),
            });
        }
    }
    Ok(out)
}

pub fn write_goals_csv(
    path: &Path,
    goals: &BTreeMap<AgentId, Goal<f64>>,
) -> Result<(), SceneError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(GOALS_HEADER).map_err(csv_err(path))?;
    for (id, g) in goals {
        w.write_record([id.to_string(), g.p_g.x.to_string(), g.p_g.y.to_string()])
            .map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// Counters reported by [`convert_trajnet`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ConvertStats {
    pub scenes: usize,
    pub tracks: usize,
    /// Records of an unknown kind that were skipped.
    pub skipped: usize,
}

#[derive(Deserialize)]
struct TrajnetScene {
    id: i64,
    s: i64,
    e: i64,
}

#[derive(Deserialize)]
struct TrajnetTrack {
    f: i64,
    p: AgentId,
    x: f64,
    y: f64,
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

/// Parses Trajnet++ ndjson (`{"scene": {...}}` and `{"track": {...}}`
/// records) into one scene per scene record, restricted to its frame span.
pub fn convert_trajnet(path: &Path, dt: f64) -> Result<(Vec<Scene>, ConvertStats), SceneError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut stats = ConvertStats::default();
    let mut scenes: Vec<TrajnetScene> = Vec::new();
    let mut tracks: BTreeMap<i64, BTreeMap<AgentId, Vector2<f64>>> = BTreeMap::new();
    for (k, line) in BufReader::new(file).lines().enumerate() {
        let line_no = k as u64 + 1;
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |message: String| SceneError::Malformed {
            path: path.to_path_buf(),
            line: line_no,
            message,
        };
        let value: serde_json::Value =
            serde_json::from_str(&line).map_err(|e| malformed(e.to_string()))?;
        if let Some(s) = value.get("scene") {
            let s: TrajnetScene = serde_json::from_value(s.clone())
                .map_err(|e| malformed(format!("scene record: {e}")))?;
            scenes.push(s);
        } else if let Some(t) = value.get("track") {
            let t: TrajnetTrack = serde_json::from_value(t.clone())
                .map_err(|e| malformed(format!("track record: {e}")))?;
            if !(t.x.is_finite() && t.y.is_finite()) {
                return Err(malformed("non-finite coordinate".into()));
            }
            tracks
                .entry(t.f)
                .or_default()
                .insert(t.p, Vector2::new(t.x, t.y));
            stats.tracks += 1;
        } else {
            stats.skipped += 1;
        }
    }
    let mut out = Vec::with_capacity(scenes.len());
    for s in scenes {
        let numbers: Vec<i64> = tracks.range(s.s..=s.e).map(|(f, _)| *f).collect();
        let Some(&first) = numbers.first() else {
            continue;
        };
        let last = *numbers.last().unwrap();
        let step = numbers
            .windows(2)
            .fold(0, |g, w| gcd(g, w[1] - w[0]))
            .max(1);
        let mut frames = Vec::new();
        let mut f = first;
        while f <= last {
            let agents = tracks
                .get(&f)
                .map(|m| {
                    m.iter()
                        .map(|(id, p)| (*id, Observation { p: *p, v: None }))
                        .collect()
                })
                .unwrap_or_default();
            frames.push(Frame { frame: f, agents });
            f += step;
        }
        let mut scene = Scene {
            scene_id: s.id.to_string(),
            dt,
            frames,
            goals: None,
        };
        scene.derive_velocities();
        out.push(scene);
    }
    stats.scenes = out.len();
    Ok((out, stats))
}

/// One group of agents in a synthetic scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSpec {
    pub count: usize,
    /// Lower-left and upper-right corners of the start box (m).
    pub start_min: [f64; 2],
    pub start_max: [f64; 2],
    /// Goal of the box centre; members keep their offset from it.
    pub goal: [f64; 2],
    /// Initial speed toward the goal (m/s).
    pub speed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    #[serde(default = "default_scene_id")]
    pub scene_id: String,
    pub groups: Vec<GroupSpec>,
    #[serde(default)]
    pub seed: u64,
    /// Simulated time span (s).
    pub duration: f64,
    /// Frame interval (s).
    pub dt: f64,
}

fn default_scene_id() -> String {
    "synthetic".into()
}

/// Simulates the closed-loop dynamics of all agents jointly, every agent
/// repelled by the others, and records the truth at every frame.
pub fn synth_scene(spec: &SynthSpec, cfg: &Config<f64>) -> Result<Scene, SceneError> {
    if spec.groups.iter().any(|g| g.count == 0) {
        return Err(SceneError::Invalid("group count must be at least 1".into()));
    }
    if !(spec.dt > 0.0 && spec.duration >= 0.0) {
        return Err(SceneError::Invalid(
            "dt must be positive and duration non-negative".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut states: BTreeMap<AgentId, AgentState<f64>> = BTreeMap::new();
    let mut goals: BTreeMap<AgentId, Goal<f64>> = BTreeMap::new();
    let mut next: AgentId = 1;
    for g in &spec.groups {
        let lo = Vector2::from(g.start_min);
        let hi = Vector2::from(g.start_max);
        let centre = (lo + hi) * 0.5;
        let goal = Vector2::from(g.goal);
        for _ in 0..g.count {
            let p = Vector2::new(
                if hi.x > lo.x {
                    rng.random_range(lo.x..hi.x)
                } else {
                    lo.x
                },
                if hi.y > lo.y {
                    rng.random_range(lo.y..hi.y)
                } else {
                    lo.y
                },
            );
            let target = goal + (p - centre);
            let dir = target - p;
            let v = if dir.norm() > 0.0 {
                dir.normalize() * g.speed
            } else {
                Vector2::zeros()
            };
            states.insert(next, AgentState { p, v });
            goals.insert(next, Goal::with_velocity(target, Vector2::zeros()));
            next += 1;
        }
    }
    let n_frames = (spec.duration / spec.dt + 1e-9).floor() as usize + 1;
    let n_sub = substeps(spec.dt, cfg);
    let h = spec.dt / n_sub as f64;
    let snapshot = |k: usize, s: &BTreeMap<AgentId, AgentState<f64>>| Frame {
        frame: k as i64,
        agents: s
            .iter()
            .map(|(id, x)| {
                (
                    *id,
                    Observation {
                        p: x.p,
                        v: Some(x.v),
                    },
                )
            })
            .collect(),
    };
    let mut frames = vec![snapshot(0, &states)];
    for k in 1..n_frames {
        for _ in 0..n_sub {
            let frozen = states.clone();
            for (id, x) in states.iter_mut() {
                let neighbors = frozen
                    .iter()
                    .filter(|(j, _)| *j != id)
                    .map(|(_, xj)| (*xj, cfg.radius_default))
                    .collect();
                let field = ForceField::new(neighbors, cfg.radius_default, cfg);
                *x = step(x, &goals[id], &field, cfg, h);
            }
        }
        frames.push(snapshot(k, &states));
    }
    Ok(Scene {
        scene_id: spec.scene_id.clone(),
        dt: spec.dt,
        frames,
        goals: Some(goals),
    })
}

/// Writes `lines` as UTF-8 with LF endings.
pub fn write_lines<I, S>(path: &Path, lines: I) -> Result<(), SceneError>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let mut f = std::io::BufWriter::new(File::create(path).map_err(io_err(path))?);
    for l in lines {
        f.write_all(l.as_ref().as_bytes()).map_err(io_err(path))?;
        f.write_all(b"\n").map_err(io_err(path))?;
    }
    f.flush().map_err(io_err(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &tempfile::TempDir, name: &str, body: &str) -> PathBuf {
        let p = dir.path().join(name);
        std::fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn two_frame_velocity_is_one_sided() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            &dir,
            "s.csv",
            "scene_id,frame,agent_id,x,y\na,0,1,0,0\na,1,1,1,0\n",
        );
        let s = read_scene_csv(&p, 0.1).unwrap();
        assert_eq!(s.num_frames(), 2);
        assert_eq!(s.frames[0].agents[&1].v, Some(Vector2::new(10.0, 0.0)));
        assert_eq!(s.frames[1].agents[&1].v, Some(Vector2::new(10.0, 0.0)));
    }

    #[test]
    fn central_difference_in_the_middle() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            &dir,
            "s.csv",
            "scene_id,frame,agent_id,x,y,vx,vy\na,0,1,0,0,,\na,1,1,1,0,,\na,2,1,3,0,,\na,2,2,5,5,,\n",
        );
        let s = read_scene_csv(&p, 1.0).unwrap();
        assert_eq!(s.frames[1].agents[&1].v, Some(Vector2::new(1.5, 0.0)));
        assert_eq!(s.frames[2].agents[&2].v, Some(Vector2::zeros()));
    }

    #[test]
    fn duplicate_row_names_the_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            &dir,
            "s.csv",
            "scene_id,frame,agent_id,x,y\na,0,1,0,0\na,0,1,1,0\n",
        );
        let err = read_scene_csv(&p, 0.1).unwrap_err();
        assert!(matches!(
            err,
            SceneError::Duplicate {
                line: 3,
                frame: 0,
                agent: 1,
                ..
            }
        ));
        assert!(err.to_string().contains("line 3"));
    }

    #[test]
    fn rejects_bad_rows() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "s.csv", "scene_id,frame,agent_id,x,y\na,0,1,NaN,0\n");
        assert!(read_scene_csv(&p, 0.1)
            .unwrap_err()
            .to_string()
            .contains("line 2"));
        let p = write(
            &dir,
            "s.csv",
            "scene_id,frame,agent_id,x,y\na,0,1,0,0\na,1,1,0,0\na,3,1,0,0\n",
        );
        assert!(matches!(
            read_scene_csv(&p, 0.1),
            Err(SceneError::NonUniformFrames { .. })
        ));
        let p = write(&dir, "s.csv", "frame,agent_id,x,y\n0,1,0,0\n");
        assert!(matches!(
            read_scene_csv(&p, 0.1),
            Err(SceneError::Malformed { line: 1, .. })
        ));
        let p = write(&dir, "s.csv", "scene_id,frame,agent_id,x,y\na,zero,1,0,0\n");
        assert!(read_scene_csv(&p, 0.1)
            .unwrap_err()
            .to_string()
            .contains("frame"));
    }

    #[test]
    fn scene_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let scene = Scene {
            scene_id: "r".into(),
            dt: 0.4,
            frames: vec![
                Frame {
                    frame: 10,
                    agents: [(
                        3,
                        Observation {
                            p: Vector2::new(0.1, 1.0 / 3.0),
                            v: Some(Vector2::new(-1e-17, 2.5)),
                        },
                    )]
                    .into(),
                },
                Frame {
                    frame: 20,
                    agents: [(
                        3,
                        Observation {
                            p: Vector2::new(std::f64::consts::PI, 0.0),
                            v: Some(Vector2::new(7.0, -0.1)),
                        },
                    )]
                    .into(),
                },
            ],
            goals: None,
        };
        let p = dir.path().join("r.csv");
        write_scene_csv(&p, &scene).unwrap();
        assert_eq!(read_scene_csv(&p, 0.4).unwrap(), scene);
    }

    #[test]
    fn goals_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let goals: BTreeMap<_, _> = [(1, Goal::at(0.1, -2.0)), (7, Goal::at(1e-9, 3.25))].into();
        let p = dir.path().join("g.csv");
        write_goals_csv(&p, &goals).unwrap();
        assert_eq!(read_goals_csv(&p).unwrap(), goals);
    }

    #[test]
    fn trajnet_fixture() {
        let dir = tempfile::tempdir().unwrap();
        let mut body = String::from(
            "{\"scene\": {\"id\": 4, \"p\": 1, \"s\": 0, \"e\": 80, \"fps\": 2.5, \"tag\": 1}}\n",
        );
        body.push_str("{\"meta\": {\"note\": \"ignored\"}}\n");
        for f in 0..9 {
            for p in [1u64, 2] {
                if p == 2 && f == 4 {
                    continue;
                }
                body.push_str(&format!(
                    "{{\"track\": {{\"f\": {}, \"p\": {p}, \"x\": {}, \"y\": {}}}}}\n",
                    f * 10,
                    f as f64 * 0.5,
                    p as f64
                ));
            }
        }
        body.push_str("{\"track\": {\"f\": 500, \"p\": 9, \"x\": 0.0, \"y\": 0.0}}\n");
        let p = write(&dir, "t.ndjson", &body);
        let (scenes, stats) = convert_trajnet(&p, TRAJNET_DT).unwrap();
        assert_eq!(
            stats,
            ConvertStats {
                scenes: 1,
                tracks: 18,
                skipped: 1
            }
        );
        let s = &scenes[0];
        assert_eq!(s.scene_id, "4");
        assert_eq!(s.num_frames(), 9);
        assert_eq!(s.agent_ids(), [1, 2].into());
        assert!(!s.frames[4].agents.contains_key(&2));
        assert_eq!(s.frames[3].agents[&1].p, Vector2::new(1.5, 1.0));
        s.validate().unwrap();

        let empty = write(&dir, "e.ndjson", "");
        assert_eq!(convert_trajnet(&empty, TRAJNET_DT).unwrap().0, vec![]);
        let bad = write(&dir, "b.ndjson", "{\"track\": {\"f\": 1}}\n");
        assert!(matches!(
            convert_trajnet(&bad, TRAJNET_DT),
            Err(SceneError::Malformed { line: 1, .. })
        ));
    }

    #[test]
    fn trajnet_numbers_survive_csv() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            &dir,
            "t.ndjson",
            "{\"scene\": {\"id\": 0, \"p\": 5, \"s\": 100, \"e\": 112}}\n\
             {\"track\": {\"f\": 100, \"p\": 5, \"x\": 1.23, \"y\": -4.56}}\n\
             {\"track\": {\"f\": 106, \"p\": 5, \"x\": 1.5, \"y\": -4.0}}\n",
        );
        let (scenes, _) = convert_trajnet(&p, TRAJNET_DT).unwrap();
        let out = dir.path().join("s.csv");
        write_scene_csv(&out, &scenes[0]).unwrap();
        let text = std::fs::read_to_string(&out).unwrap();
        // velocity (0.27, 0.56) / 0.4 by one-sided difference
        let v = (1.5 - 1.23) / 0.4;
        assert_eq!(
            text,
            format!(
                "scene_id,frame,agent_id,x,y,vx,vy\n0,100,5,1.23,-4.56,{v},{}\n0,106,5,1.5,-4,{v},{}\n",
                (-4.0 - -4.56) / 0.4,
                (-4.0 - -4.56) / 0.4
            )
        );
    }

    fn one_group(count: usize, goal: [f64; 2], speed: f64) -> GroupSpec {
        GroupSpec {
            count,
            start_min: [0.0, 0.0],
            start_max: [0.0, 0.0],
            goal,
            speed,
        }
    }

    #[test]
    fn single_agent_reaches_goal() {
        let spec = SynthSpec {
            scene_id: "one".into(),
            groups: vec![one_group(1, [5.0, 0.0], 0.0)],
            seed: 0,
            duration: 10.0,
            dt: 0.1,
        };
        let s = synth_scene(&spec, &Config::default()).unwrap();
        assert_eq!(s.num_frames(), 101);
        let last = s.frames.last().unwrap().agents[&1].p;
        // critically damped: error (1 + t) e^{-t} times the initial 5 m
        let bound = 5.0 * 11.0 * (-10.0f64).exp();
        assert!((last - Vector2::new(5.0, 0.0)).norm() < 0.05);
        assert!((last.x - 5.0).abs() <= bound + 1e-6);
    }

    #[test]
    fn converging_groups_never_overlap() {
        let cfg = Config::default();
        for seed in 0..10 {
            let spec = SynthSpec {
                scene_id: "x".into(),
                groups: vec![
                    GroupSpec {
                        count: 3,
                        start_min: [-6.0, -1.0],
                        start_max: [-4.0, 1.0],
                        goal: [6.0, 0.0],
                        speed: 1.0,
                    },
                    GroupSpec {
                        count: 3,
                        start_min: [4.0, -1.0],
                        start_max: [6.0, 1.0],
                        goal: [-6.0, 0.0],
                        speed: 1.0,
                    },
                ],
                seed,
                duration: 12.0,
                dt: 0.2,
            };
            let s = synth_scene(&spec, &cfg).unwrap();
            let mut min_d = f64::INFINITY;
            for f in &s.frames {
                let pts: Vec<_> = f.agents.values().map(|o| o.p).collect();
                for i in 0..pts.len() {
                    for j in (i + 1)..pts.len() {
                        min_d = min_d.min((pts[i] - pts[j]).norm());
                    }
                }
            }
            assert!(min_d > 0.0, "seed {seed}: agents overlapped");
            assert_eq!(s, synth_scene(&spec, &cfg).unwrap());
        }
    }

    mod fuzz {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn converted_scenes_are_valid(
                rows in prop::collection::vec((0i64..30, 1u64..5, -50.0..50.0f64, -50.0..50.0f64), 0..60),
                span in (0i64..10, 10i64..30),
                step in 1i64..12,
            ) {
                let dir = tempfile::tempdir().unwrap();
                let mut body = format!("{{\"scene\": {{\"id\": 1, \"p\": 1, \"s\": {}, \"e\": {}}}}}\n", span.0 * step, span.1 * step);
                let mut seen = BTreeMap::new();
                for (f, p, x, y) in &rows {
                    body.push_str(&format!("{{\"track\": {{\"f\": {}, \"p\": {p}, \"x\": {x}, \"y\": {y}}}}}\n", f * step));
                    seen.insert((f * step, *p), Vector2::new(*x, *y));
                }
                let path = write(&dir, "f.ndjson", &body);
                let (scenes, _) = convert_trajnet(&path, TRAJNET_DT).unwrap();
                for sc in &scenes {
                    sc.validate().unwrap();
                    for fr in &sc.frames {
                        prop_assert!(fr.frame >= span.0 * step && fr.frame <= span.1 * step);
                        for (id, o) in &fr.agents {
                            prop_assert_eq!(Some(&o.p), seen.get(&(fr.frame, *id)));
                            prop_assert!(o.v.is_some());
                        }
                    }
                    let in_span = seen.keys().filter(|(f, _)| *f >= span.0 * step && *f <= span.1 * step).count();
                    prop_assert_eq!(sc.frames.iter().map(|f| f.agents.len()).sum::<usize>(), in_span);
                }
            }
        }
    }
}
