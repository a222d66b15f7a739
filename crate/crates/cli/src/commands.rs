use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, Context};
use swarm_forecast::eval::{
    compare_cd_ed, comparison_csv, comparison_table, lambda_sweep, score_run,
};
use swarm_forecast::io::{
    convert_trajnet, read_goals_csv, read_scene_csv, synth_scene, write_goals_csv, write_lines,
    write_scene_csv, Scene, SynthSpec,
};
use swarm_forecast::model::validate_config;
use swarm_forecast::pipeline::{run, DensityGrid, RunOptions};
use swarm_forecast::Config;

use crate::options::{
    Command, CompareArgs, ConfigArgs, ConvertArgs, PredictArgs, RunArgs, Stride, SweepArgs,
    SynthArgs,
};

/// Failure classes mapped onto exit codes 2 and 1.
#[derive(Debug)]
pub enum Failure {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

type CmdResult<T = ()> = Result<T, Failure>;

fn usage<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Usage(e.into())
}

fn runtime<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Runtime(e.into())
}

pub fn dispatch(cmd: Command) -> CmdResult {
    match cmd {
        Command::Convert(a) => cmd_convert(&a),
        Command::Synth(a) => cmd_synth(&a),
        Command::Predict(a) => cmd_predict(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Compare(a) => cmd_compare(&a),
        Command::Sweep(a) => cmd_sweep(&a),
    }
}

pub fn load_config(args: &ConfigArgs) -> CmdResult<Config> {
    let mut cfg: Config = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("cannot read config {}", path.display()))
                .map_err(usage)?;
            serde_json::from_str(&text)
                .with_context(|| format!("invalid config {}", path.display()))
                .map_err(usage)?
        }
        None => Config::default(),
    };
    macro_rules! set {
        ($($field:ident),*) => {$(
            if let Some(v) = args.$field {
                cfg.$field = v;
            }
        )*};
    }
    set!(
        k_p,
        k_v,
        a_int,
        b_int,
        d_tol,
        c_tol,
        d_int_tol,
        lambda1,
        lambda2,
        t_f_cost,
        dt,
        sigma_p,
        sigma_v,
        ukf_alpha,
        ukf_beta,
        ukf_kappa,
        meas_noise_std,
        radius_default,
        deletion_grace,
        seed
    );
    if let Some(v) = args.proc_noise_pos {
        cfg.proc_noise_std[0] = v;
    }
    if let Some(v) = args.proc_noise_vel {
        cfg.proc_noise_std[1] = v;
    }
    cfg.farthest_pair_positions_only |= args.farthest_pair_positions_only;
    cfg.scale_meas_noise_by_members |= args.scale_meas_noise_by_members;
    validate_config(cfg).map_err(|e| usage(anyhow!("invalid configuration: {e}")))
}

fn create_out(dir: &Path) -> CmdResult {
    fs::create_dir_all(dir)
        .with_context(|| format!("cannot create output directory {}", dir.display()))
        .map_err(runtime)
}

fn file_stem_safe(id: &str) -> String {
    let s: String = id
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect();
    if s.is_empty() {
        "scene".into()
    } else {
        s
    }
}

/// `dir/name.csv` becomes `dir/name.goals.csv`.
fn sibling_goals(scene: &Path) -> PathBuf {
    let stem = scene
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    scene.with_file_name(format!("{stem}.goals.csv"))
}

fn load_scene(path: &Path, goals: Option<&Path>, frame_interval: f64) -> CmdResult<Scene> {
    if !(frame_interval > 0.0 && frame_interval.is_finite()) {
        return Err(usage(anyhow!("frame interval must be positive")));
    }
    let mut scene = read_scene_csv(path, frame_interval).map_err(usage)?;
    let goals_path = match goals {
        Some(g) => Some(g.to_path_buf()),
        None => Some(sibling_goals(path)).filter(|p| p.is_file()),
    };
    if let Some(g) = goals_path {
        scene.goals = Some(read_goals_csv(&g).map_err(usage)?);
    }
    Ok(scene)
}

fn run_options(r: &RunArgs) -> RunOptions {
    RunOptions {
        stride: match r.stride {
            Stride::Every(n) => Some(n),
            Stride::Never => None,
        },
        mode: r.mode.into(),
        goal_source: r.goal_source.into(),
        measurement_noise: !r.no_measurement_noise,
    }
}

fn cmd_convert(a: &ConvertArgs) -> CmdResult {
    if !(a.frame_interval > 0.0 && a.frame_interval.is_finite()) {
        return Err(usage(anyhow!("frame interval must be positive")));
    }
    let (scenes, stats) = convert_trajnet(&a.input, a.frame_interval).map_err(usage)?;
    create_out(&a.out)?;
    for scene in &scenes {
        let path = a
            .out
            .join(format!("{}.csv", file_stem_safe(&scene.scene_id)));
        write_scene_csv(&path, scene).map_err(runtime)?;
    }
    println!("scenes: {}", stats.scenes);
    if stats.skipped > 0 {
        println!("skipped records: {}", stats.skipped);
    }
    Ok(())
}

fn cmd_synth(a: &SynthArgs) -> CmdResult {
    let cfg = load_config(&a.config)?;
    let text = fs::read_to_string(&a.spec)
        .with_context(|| format!("cannot read {}", a.spec.display()))
        .map_err(usage)?;
    let mut spec: SynthSpec = serde_json::from_str(&text)
        .with_context(|| format!("invalid synthetic specification {}", a.spec.display()))
        .map_err(usage)?;
    if let Some(s) = a.synth_seed {
        spec.seed = s;
    }
    let scene = synth_scene(&spec, &cfg).map_err(usage)?;
    create_out(&a.out)?;
    let stem = file_stem_safe(&scene.scene_id);
    let scene_path = a.out.join(format!("{stem}.csv"));
    write_scene_csv(&scene_path, &scene).map_err(runtime)?;
    if let Some(g) = &scene.goals {
        write_goals_csv(&a.out.join(format!("{stem}.goals.csv")), g).map_err(runtime)?;
    }
    println!(
        "scene {}: {} agents, {} frames -> {}",
        scene.scene_id,
        scene.agent_ids().len(),
        scene.num_frames(),
        scene_path.display()
    );
    Ok(())
}

fn cmd_predict(a: &PredictArgs) -> CmdResult {
    let cfg = load_config(&a.config)?;
    let scene = load_scene(&a.scene, a.goals.as_deref(), a.run.frame_interval)?;
    let opts = run_options(&a.run);
    let result = run(&scene, &cfg, &opts).map_err(runtime)?;
    let grid = (a.grid_cells > 0)
        .then(|| DensityGrid::around(&scene, a.grid_margin, a.grid_cells, a.grid_cells));
    result.write_dir(&a.out, grid.as_ref()).map_err(runtime)?;
    let m = score_run(&result, &scene, 0.0);
    println!(
        "scene {}: {} steps, {} agents scored, ADE sum {:.4} m, FDE sum {:.4} m",
        scene.scene_id,
        result.snapshots.len(),
        m.per_agent.len(),
        m.ade_sum,
        m.fde_sum
    );
    Ok(())
}

fn cmd_eval(a: &PredictArgs) -> CmdResult {
    let cfg = load_config(&a.config)?;
    let scene = load_scene(&a.scene, a.goals.as_deref(), a.run.frame_interval)?;
    let opts = run_options(&a.run);
    let t0 = Instant::now();
    let result = run(&scene, &cfg, &opts).map_err(runtime)?;
    let m = score_run(&result, &scene, t0.elapsed().as_secs_f64());
    create_out(&a.out)?;
    let mut rows = vec!["agent_id,ade,fde,steps".to_string()];
    rows.extend(
        m.per_agent
            .iter()
            .map(|(id, e)| format!("{id},{},{},{}", e.ade, e.fde, e.steps)),
    );
    write_lines(&a.out.join("metrics.csv"), rows).map_err(runtime)?;
    let mut counts = vec!["step,clusters".to_string()];
    counts.extend(
        m.cluster_counts
            .iter()
            .enumerate()
            .map(|(k, c)| format!("{k},{c}")),
    );
    write_lines(&a.out.join("cluster_counts.csv"), counts).map_err(runtime)?;
    let json = serde_json::to_string_pretty(&m).map_err(runtime)?;
    write_lines(&a.out.join("metrics.json"), [json]).map_err(runtime)?;
    println!(
        "scene {}: ADE sum {:.4} m, FDE sum {:.4} m, ADE mean {:.4} m, FDE mean {:.4} m, {:.3} s",
        m.scene_id, m.ade_sum, m.fde_sum, m.ade_mean, m.fde_mean, m.wall_clock_s
    );
    Ok(())
}

fn cmd_compare(a: &CompareArgs) -> CmdResult {
    let cfg = load_config(&a.config)?;
    let scenes = a
        .scenes
        .iter()
        .map(|p| load_scene(p, None, a.frame_interval))
        .collect::<CmdResult<Vec<_>>>()?;
    let opts = run_options(&RunArgs {
        frame_interval: a.frame_interval,
        stride: a.stride,
        mode: crate::options::ModeArg::Cd,
        goal_source: a.goal_source,
        no_measurement_noise: a.no_measurement_noise,
    });
    let rows = compare_cd_ed(&scenes, &cfg, &opts, a.repeats as usize).map_err(runtime)?;
    create_out(&a.out)?;
    let csv = comparison_csv(&rows);
    fs::write(a.out.join("comparison.csv"), &csv).map_err(runtime)?;
    let table = comparison_table(&rows);
    fs::write(a.out.join("comparison.txt"), &table).map_err(runtime)?;
    print!("{table}");
    Ok(())
}

fn cmd_sweep(a: &SweepArgs) -> CmdResult {
    let cfg = load_config(&a.config)?;
    if let Some(bad) = a.lambdas.iter().find(|l| !(0.0..=1.0).contains(*l)) {
        return Err(usage(anyhow!("lambda1 value {bad} is outside [0, 1]")));
    }
    let scene = load_scene(&a.scene, a.goals.as_deref(), a.run.frame_interval)?;
    let opts = run_options(&a.run);
    let results = lambda_sweep(&scene, &a.lambdas, &cfg, &opts).map_err(runtime)?;
    create_out(&a.out)?;
    for r in &results {
        let path = a.out.join(format!("timeline_lambda1_{}.csv", r.lambda1));
        fs::write(&path, r.timeline_csv()).map_err(runtime)?;
        let last = r.timeline.last().map(Vec::len).unwrap_or(0);
        let first = r.timeline.first().map(Vec::len).unwrap_or(0);
        println!(
            "lambda1 {}: clusters at start {}, at end {} -> {}",
            r.lambda1,
            first,
            last,
            path.display()
        );
    }
    Ok(())
}
