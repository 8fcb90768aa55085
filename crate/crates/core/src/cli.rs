//! Command-line front end. Each subcommand reads JSON files, runs one stage
//! and writes its result as JSON (to `--out`, or stdout when absent).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::base_opt::{optimize_base, sample_waypoints, BaseConfig};
use crate::error::{Error, Result};
use crate::geometry::{Pose, Trajectory};
use crate::grasp_transfer::{transfer_trajectory, GraspConfig, GraspTransfer, GripperModel};
use crate::hand_refine::{refine_hand_translation_with, HandObservation};
use crate::harness::pipeline::{require_convergence, run_pipeline, BaseArtifact};
use crate::harness::scenario::MANIFEST;
use crate::harness::{
    generate_scenario, replay, tracking_error, trajectory_csv, ChainKind, OdomNoise, PipelineConfig, PointCloud,
    ScenarioKind, ScenarioSpec,
};
use crate::io;
use crate::joint_opt::{insert_approach, optimize_joint_trajectory, prepend_standoff, JointTrajectory};
use crate::kinematics::KinematicChain;
use crate::traj_align::{apply_delta, blend_dual, to_base, ObjectPoses};

#[derive(Debug, Parser)]
#[command(name = "hrt1", version, about = "Transfer demonstrated gripper trajectories to a mobile manipulator")]
pub struct Cli {
    /// Pipeline configuration (JSON); defaults apply to missing keys.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for scenario generation and replay noise.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output file or directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write synthetic scenario directories with ground truth.
    Generate(GenerateArgs),
    /// Correct a hand translation against its depth observation.
    RefineHand {
        #[arg(long)]
        observation: PathBuf,
    },
    /// Transfer a grasp (or a sequence of grasps) between grippers.
    TransferGrasp(TransferArgs),
    /// Move a demonstration into the execution scene.
    Align(AlignArgs),
    /// Place the mobile base for a base-frame trajectory.
    OptimizeBase {
        #[arg(long)]
        traj: PathBuf,
        #[arg(long)]
        chain: PathBuf,
        /// Environment cloud in the same frame as the trajectory.
        #[arg(long)]
        env: PathBuf,
    },
    /// Solve a joint trajectory for a trajectory in the (moved) base frame.
    OptimizeTraj(OptimizeTrajArgs),
    /// Execute a joint trajectory kinematically from a base placement.
    Replay(ReplayArgs),
    /// Tracking error between two trajectories.
    Metrics {
        #[arg(long)]
        executed: PathBuf,
        #[arg(long)]
        reference: PathBuf,
    },
    /// Run the full pipeline on scenario directories.
    Run(RunArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum KindArg {
    Single,
    Dual,
    /// Alternate single and dual.
    Mixed,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long, value_enum, default_value = "single")]
    pub kind: KindArg,
    #[arg(long, value_enum, default_value = "fetch")]
    pub chain: ChainArg,
    /// Trajectory length; random in 70..=120 when absent.
    #[arg(long)]
    pub frames: Option<usize>,
    /// Include hand-observation and hand-grasp fixtures (single-object only).
    #[arg(long)]
    pub with_hand: bool,
    /// Number of scenarios; several are written to numbered subdirectories.
    #[arg(long, default_value_t = 1)]
    pub count: u64,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ChainArg {
    Fetch,
    Lift3,
}

#[derive(Debug, Args)]
pub struct TransferArgs {
    #[arg(long)]
    pub source_model: PathBuf,
    #[arg(long)]
    pub target_model: PathBuf,
    /// Single source grasp configuration.
    #[arg(long, conflicts_with = "frames", required_unless_present = "frames")]
    pub source_config: Option<PathBuf>,
    /// Initial target configuration; the source pose when absent.
    #[arg(long)]
    pub init: Option<PathBuf>,
    /// Array of source grasp configurations; writes a camera-frame trajectory.
    #[arg(long)]
    pub frames: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AlignArgs {
    #[arg(long)]
    pub demo: PathBuf,
    /// One object entry, or two for a dual-object blend.
    #[arg(long)]
    pub deltas: PathBuf,
    /// Camera pose in the base frame; output stays in the camera frame when absent.
    #[arg(long)]
    pub t_bc: Option<PathBuf>,
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OptimizeTrajArgs {
    #[arg(long)]
    pub traj: PathBuf,
    #[arg(long)]
    pub chain: PathBuf,
    #[arg(long)]
    pub env: Option<PathBuf>,
    /// Start configuration (JSON array); mid-range when absent.
    #[arg(long)]
    pub q_start: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    #[arg(long)]
    pub chain: PathBuf,
    #[arg(long)]
    pub joint_traj: PathBuf,
    /// Base placement JSON (`{"x","y","theta"}` or a base solution file).
    #[arg(long)]
    pub base: PathBuf,
    /// Odometry noise standard deviation (m, rad).
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Scenario directories.
    pub scenarios: Vec<PathBuf>,
    /// Run every scenario directory found directly under this directory.
    #[arg(long)]
    pub all: Option<PathBuf>,
}

fn emit<T: Serialize>(out: Option<&Path>, value: &T) -> Result<()> {
    match out {
        Some(path) => io::write_json(path, value),
        None => {
            let text = serde_json::to_string_pretty(value).map_err(|source| Error::Json {
                path: PathBuf::from("<stdout>"),
                source,
            })?;
            println!("{text}");
            Ok(())
        }
    }
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut config = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    Ok(config)
}

fn load_base(path: &Path) -> Result<BaseConfig> {
    #[derive(serde::Deserialize)]
    #[serde(untagged)]
    enum BaseFile {
        Solution(BaseArtifact),
        Plain(BaseConfig),
    }
    Ok(match io::read_json::<BaseFile>(path)? {
        BaseFile::Solution(s) => s.base,
        BaseFile::Plain(b) => b,
    })
}

#[derive(Serialize)]
struct HandRefineRecord {
    t_init: [f64; 3],
    t: [f64; 3],
    objective: f64,
    initial_objective: f64,
}

#[derive(Serialize)]
struct RunSummary {
    scenario: String,
    e_trans: Option<f64>,
    e_rot: Option<f64>,
    converged: bool,
    constraints_ok: bool,
    tracking_ok: Option<bool>,
    seconds: f64,
}

fn scenario_dirs(args: &RunArgs) -> Result<Vec<PathBuf>> {
    let mut dirs = args.scenarios.clone();
    if let Some(root) = &args.all {
        let entries = std::fs::read_dir(root).map_err(|source| Error::Io {
            path: root.clone(),
            source,
        })?;
        let mut found: Vec<PathBuf> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.join(MANIFEST).is_file())
            .collect();
        found.sort();
        dirs.extend(found);
    }
    if dirs.is_empty() {
        return Err(Error::InvalidInput("no scenario directories given".into()));
    }
    Ok(dirs)
}

pub fn execute(cli: &Cli) -> Result<()> {
    let config = load_config(cli)?;
    let out = cli.out.as_deref();
    match &cli.command {
        Command::Generate(a) => {
            let root = out.unwrap_or(Path::new("scenarios"));
            let seed = cli.seed.unwrap_or(0);
            for k in 0..a.count {
                let kind = match a.kind {
                    KindArg::Single => ScenarioKind::Single,
                    KindArg::Dual => ScenarioKind::Dual,
                    KindArg::Mixed if k % 2 == 0 => ScenarioKind::Single,
                    KindArg::Mixed => ScenarioKind::Dual,
                };
                let spec = ScenarioSpec {
                    kind,
                    chain: match a.chain {
                        ChainArg::Fetch => ChainKind::Fetch,
                        ChainArg::Lift3 => ChainKind::Lift3,
                    },
                    frames: a.frames,
                    with_hand: a.with_hand && kind == ScenarioKind::Single,
                    ..ScenarioSpec::default()
                };
                let name = format!("scenario-{:03}", seed + k);
                let dir = if a.count == 1 { root.to_path_buf() } else { root.join(&name) };
                generate_scenario(&dir, &name, seed + k, &spec)?;
                eprintln!("wrote {}", dir.display());
            }
            Ok(())
        }
        Command::RefineHand { observation } => {
            let obs = HandObservation::load(observation)?;
            let r = refine_hand_translation_with(&obs, &config.hand_options())?;
            emit(
                out,
                &HandRefineRecord {
                    t_init: obs.t_init.into(),
                    t: r.t.into(),
                    objective: r.objective,
                    initial_objective: r.initial_objective,
                },
            )
        }
        Command::TransferGrasp(a) => {
            let source = GripperModel::load(&a.source_model)?;
            let target = GripperModel::load(&a.target_model)?;
            if let Some(frames) = &a.frames {
                let cfgs: Vec<GraspConfig> = io::read_json(frames)?;
                let frames: Vec<_> = cfgs.into_iter().map(|c| (source.clone(), c)).collect();
                let traj = transfer_trajectory(&frames, &target, &config.transfer_options())?;
                return emit(out, &traj);
            }
            let path = a.source_config.as_ref().expect("clap requires one of the inputs");
            let cfg: GraspConfig = io::read_json(path)?;
            let init = match &a.init {
                Some(p) => io::read_json(p)?,
                None => GraspConfig {
                    pose: cfg.pose,
                    joints: target.mid_joints(),
                },
            };
            let mut t = GraspTransfer::new(&source, &target)?;
            t.options = config.transfer_options();
            emit(out, &t.transfer(&cfg, &init)?.config)
        }
        Command::Align(a) => {
            let demo: Trajectory = io::read_json(&a.demo)?;
            let objects = ObjectPoses::load_all(&a.deltas)?;
            let deltas: Vec<_> = objects.iter().map(|o| o.delta()).collect();
            let primary = apply_delta(&demo, &deltas[0]);
            let aligned = match deltas.len() {
                1 => primary,
                2 => blend_dual(&primary, &apply_delta(&demo, &deltas[1]), &config.sigma.params(demo.len())?)?,
                n => return Err(Error::Validation(format!("expected one or two object entries, found {n}"))),
            };
            let aligned = match &a.t_bc {
                Some(p) => to_base(&aligned, &io::read_json::<Pose>(p)?)?,
                None => aligned,
            };
            if let Some(csv) = &a.csv {
                io::write_text(csv, &trajectory_csv(&aligned))?;
            }
            emit(out, &aligned)
        }
        Command::OptimizeBase { traj, chain, env } => {
            let traj: Trajectory = io::read_json(traj)?;
            let chain = KinematicChain::load(chain)?;
            let env = PointCloud::load(env)?;
            let params = config.base_params()?;
            let waypoints = sample_waypoints(&traj, params.n_samples.min(traj.len()))?;
            let sol = optimize_base(&waypoints, &chain, &env.points, &params)?;
            let converged = sol.report.converged;
            emit(
                out,
                &BaseArtifact {
                    base: sol.base,
                    joints: sol.joints,
                    initial_objective: sol.initial_objective,
                    report: sol.report,
                },
            )?;
            converged_or(converged, "base placement")
        }
        Command::OptimizeTraj(a) => {
            let traj: Trajectory = io::read_json(&a.traj)?;
            let chain = KinematicChain::load(&a.chain)?;
            let env = a.env.as_deref().map(PointCloud::load).transpose()?.map(|c| c.points).unwrap_or_default();
            let q_start: Vec<f64> = match &a.q_start {
                Some(p) => io::read_json(p)?,
                None => chain.mid_config(),
            };
            let dt = config.dt.or_else(|| traj.mean_time_step()).unwrap_or(0.1);
            let with_standoff = prepend_standoff(&traj, config.standoff)?;
            let (reference, _) = insert_approach(&with_standoff, config.approach_steps)?;
            let sol = optimize_joint_trajectory(&chain, &reference, &env, &config.joint_params(dt)?, &q_start)?;
            emit(out, &sol.trajectory)?;
            converged_or(sol.report.converged, "joint trajectory")
        }
        Command::Replay(a) => {
            let chain = KinematicChain::load(&a.chain)?;
            let jt = JointTrajectory::load(&a.joint_traj)?;
            let base = load_base(&a.base)?;
            let noise = a.noise.map(|std| OdomNoise { std, seed: config.seed });
            let executed = replay(&chain, &jt, &base, noise)?;
            if let Some(csv) = &a.csv {
                io::write_text(csv, &trajectory_csv(&executed))?;
            }
            emit(out, &executed)
        }
        Command::Metrics { executed, reference } => {
            let e = tracking_error(&io::read_json(executed)?, &io::read_json(reference)?)?;
            emit(out, &e)
        }
        Command::Run(a) => {
            let root = out.unwrap_or(Path::new("runs"));
            let dirs = scenario_dirs(a)?;
            let mut summaries = Vec::new();
            let mut all_converged = true;
            for dir in &dirs {
                let name = dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| "scenario".into());
                let target = if dirs.len() == 1 { root.to_path_buf() } else { root.join(&name) };
                let report = run_pipeline(dir, &config, Some(&target))?;
                all_converged &= report.converged();
                let e = report.tracking;
                eprintln!(
                    "{name}: e_trans {} e_rot {} converged {} constraints {}",
                    e.map_or("-".into(), |e| format!("{:.5}", e.e_trans)),
                    e.map_or("-".into(), |e| format!("{:.5}", e.e_rot)),
                    report.converged(),
                    report.constraints_ok
                );
                summaries.push(RunSummary {
                    scenario: report.scenario.clone(),
                    e_trans: e.map(|e| e.e_trans),
                    e_rot: e.map(|e| e.e_rot),
                    converged: report.converged(),
                    constraints_ok: report.constraints_ok,
                    tracking_ok: report.tracking_ok,
                    seconds: report.total_seconds(),
                });
                if dirs.len() == 1 {
                    require_convergence(&report)?;
                }
            }
            if dirs.len() > 1 {
                io::write_json(&root.join("summary.json"), &summaries)?;
            }
            converged_or(all_converged, "pipeline")
        }
    }
}

fn converged_or(converged: bool, what: &str) -> Result<()> {
    if converged {
        Ok(())
    } else {
        Err(Error::NotConverged(format!("{what} solver stopped before meeting its tolerances; best iterate written")))
    }
}

/// Parses arguments, runs the command and maps errors to exit codes
/// (2 validation, 3 non-convergence, 4 I/O).
pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
