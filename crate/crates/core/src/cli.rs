//! Command-line front end: config ingestion, run orchestration and artifacts.
//!
//! Every file written here is a deterministic function of the config file,
//! the seed and the mode. Wall-clock time is printed, never written.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::geometry::LidarPose;
use crate::lattice::{assign_shells, build_cylinders, build_lattice, CubeLattice, Interval, Roi, ShellAssignment};
use crate::milp::{build_model, export_model, MilpParams};
use crate::objective::{evaluate, ObjectiveReport};
use crate::search::{optimize, AnnealSchedule, SearchConfig, StartTrace};
use crate::segmentation::{enumerate_patterns, monotone_level, subspace_index, FleetSpec, SideMode, SideTester};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Parser)]
#[command(name = "lidar-layout", version, about = "Place LiDARs to minimize the largest undetectable void")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Overrides `search.seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,
    /// Overrides the config's `mode`.
    #[arg(long, global = true, value_parser = parse_mode)]
    pub mode: Option<SideMode>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Score the configured poses; writes report.json and cubes.csv.
    Evaluate { config: PathBuf },
    /// Search for better poses; writes best.json, trace.csv and report.json.
    Optimize { config: PathBuf },
    /// Write the fixed-angle MILP as model.lp and print its size.
    ExportMilp { config: PathBuf },
}

fn parse_mode(s: &str) -> Result<SideMode, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{path}: {message}")]
    Config { path: PathBuf, message: String },

    #[error(
        "export-milp needs fixed mount angles: the MILP is linear in position only, because \
         pitch and roll enter the face normals through sines and cosines. Set \
         search.optimize_angles to false, or use `optimize` to search angles."
    )]
    AngleSearch,

    #[error(transparent)]
    Lib(#[from] Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Lib(Error::Io { .. }) => 1,
            CliError::AngleSearch => 3,
            _ => 2,
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    pub fleet: FleetConfig,
    pub roi: RoiConfig,
    pub cylinders: CylinderConfig,
    #[serde(default = "default_mode")]
    pub mode: SideMode,
    pub poses: Vec<PoseConfig>,
    #[serde(default)]
    pub search: SearchSection,
    #[serde(default)]
    pub milp: MilpParams,
}

fn default_mode() -> SideMode {
    SideMode::Exact
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FleetConfig {
    pub lidars: Vec<LidarConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LidarConfig {
    pub beam_angles_deg: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoiConfig {
    pub x: [f64; 2],
    pub y: [f64; 2],
    pub z: [f64; 2],
    pub cube_edge: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CylinderConfig {
    pub radius_gap: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseConfig {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    #[serde(default)]
    pub pitch_deg: f64,
    #[serde(default)]
    pub roll_deg: f64,
}

impl PoseConfig {
    pub fn to_pose(self) -> LidarPose {
        LidarPose::new(self.x, self.y, self.z, self.pitch_deg.to_radians(), self.roll_deg.to_radians())
    }

    pub fn from_pose(p: &LidarPose) -> Self {
        Self { x: p.x, y: p.y, z: p.z, pitch_deg: p.pitch.to_degrees(), roll_deg: p.roll.to_degrees() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PositionBounds {
    pub x: [f64; 2],
    pub y: [f64; 2],
    pub z: [f64; 2],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchSection {
    /// When false, pitch and roll stay at the configured pose angles.
    pub optimize_angles: bool,
    /// Defaults to the ROI box.
    pub position_bounds: Option<PositionBounds>,
    pub angle_bounds_deg: [f64; 2],
    pub multistarts: usize,
    pub iterations: usize,
    pub initial_temperature: f64,
    pub initial_step: f64,
    pub decay: f64,
    pub refine_levels: usize,
    pub seed: u64,
}

impl Default for SearchSection {
    fn default() -> Self {
        let s = AnnealSchedule::default();
        Self {
            optimize_angles: false,
            position_bounds: None,
            angle_bounds_deg: [-20.0, 20.0],
            multistarts: 8,
            iterations: s.iterations,
            initial_temperature: s.initial_temperature,
            initial_step: s.initial_step,
            decay: s.decay,
            refine_levels: 3,
            seed: 0,
        }
    }
}

fn interval(v: [f64; 2]) -> Interval {
    Interval::new(v[0], v[1])
}

/// Everything a run needs, validated.
pub struct Scenario {
    pub config: RunConfig,
    pub fleet: FleetSpec,
    pub roi: Roi,
    pub lattice: CubeLattice,
    pub shells: ShellAssignment,
    pub poses: Vec<LidarPose>,
}

impl Scenario {
    pub fn position_bounds(&self) -> [Interval; 3] {
        match &self.config.search.position_bounds {
            Some(b) => [interval(b.x), interval(b.y), interval(b.z)],
            None => [self.roi.x, self.roi.y, self.roi.z],
        }
    }

    pub fn search_config(&self, seed: Option<u64>) -> SearchConfig {
        let s = &self.config.search;
        let [bx, by, bz] = self.position_bounds();
        let angles = interval([s.angle_bounds_deg[0].to_radians(), s.angle_bounds_deg[1].to_radians()]);
        let bounds = self
            .poses
            .iter()
            .flat_map(|p| {
                let (pitch, roll) = if s.optimize_angles {
                    (angles, angles)
                } else {
                    (Interval::new(p.pitch, p.pitch), Interval::new(p.roll, p.roll))
                };
                [bx, by, bz, pitch, roll]
            })
            .collect();
        SearchConfig {
            bounds,
            multistarts: s.multistarts,
            schedule: AnnealSchedule {
                iterations: s.iterations,
                initial_temperature: s.initial_temperature,
                initial_step: s.initial_step,
                decay: s.decay,
            },
            refine_levels: s.refine_levels,
            seed: seed.unwrap_or(s.seed),
            initial: Some(self.poses.clone()),
        }
    }
}

pub fn parse_config(text: &str, path: &Path) -> CliResult<RunConfig> {
    let config: RunConfig = serde_json::from_str(text)
        .map_err(|e| CliError::Config { path: path.to_path_buf(), message: e.to_string() })?;
    if config.version != CONFIG_VERSION {
        return Err(CliError::Config {
            path: path.to_path_buf(),
            message: format!("unsupported config version {} (expected {CONFIG_VERSION})", config.version),
        });
    }
    Ok(config)
}

pub fn load_scenario(path: &Path) -> CliResult<Scenario> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    build_scenario(parse_config(&text, path)?)
}

pub fn build_scenario(config: RunConfig) -> CliResult<Scenario> {
    config.milp.validate()?;
    let lidars =
        config.fleet.lidars.iter().map(|l| l.beam_angles_deg.iter().map(|d| d.to_radians()).collect()).collect();
    let fleet = FleetSpec::with_faces(lidars, config.milp.n_faces)?;
    let r = &config.roi;
    let roi = Roi::new(interval(r.x), interval(r.y), interval(r.z), r.cube_edge)?;
    let lattice = build_lattice(&roi)?;
    let shells = assign_shells(&lattice, &build_cylinders(&roi, config.cylinders.radius_gap)?);
    let poses: Vec<LidarPose> = config.poses.iter().map(|p| p.to_pose()).collect();
    for (i, p) in poses.iter().enumerate() {
        p.validate().map_err(|e| Error::invalid(format!("poses[{i}]"), e.to_string()))?;
    }
    if poses.len() != fleet.n_lidars() {
        return Err(Error::invalid("poses", format!("{} poses for {} LiDARs", poses.len(), fleet.n_lidars())).into());
    }
    Ok(Scenario { config, fleet, roi, lattice, shells, poses })
}

fn write(path: &Path, contents: &str) -> CliResult<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e).into())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    write(path, &text)
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    Error::io(path, std::io::Error::other(e.to_string())).into()
}

#[derive(Serialize)]
struct CubeRow {
    x: f64,
    y: f64,
    z: f64,
    shell: i64,
    subspace: i64,
}

/// One row per cube; `-1` marks no shell or a non-monotone side vector.
pub fn write_cubes_csv(path: &Path, scenario: &Scenario, config: &[LidarPose], mode: SideMode) -> CliResult<()> {
    let fleet = &scenario.fleet;
    let tester = SideTester::new(fleet, config, mode);
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for (c, center) in scenario.lattice.centers.iter().enumerate() {
        let levels: Option<Vec<usize>> =
            (0..fleet.n_lidars()).map(|l| monotone_level(&tester.sides(l, center).collect::<Vec<_>>())).collect();
        let row = CubeRow {
            x: center.x,
            y: center.y,
            z: center.z,
            shell: scenario.shells.shell_of_cube[c].map_or(-1, |k| k as i64),
            subspace: levels.map_or(-1, |lv| subspace_index(&lv, fleet.n_lasers()) as i64),
        };
        w.serialize(row).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

#[derive(Serialize)]
struct TraceRow {
    start: usize,
    iteration: usize,
    best_objective: usize,
}

pub fn write_trace_csv(path: &Path, starts: &[StartTrace]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for st in starts {
        for (iteration, &best_objective) in st.best_objective.iter().enumerate() {
            w.serialize(TraceRow { start: st.start, iteration, best_objective }).map_err(|e| csv_error(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

#[derive(Serialize)]
struct BestConfig {
    objective: usize,
    poses: Vec<PoseConfig>,
}

fn prepare_out_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e).into())
}

pub fn run_evaluate(config_path: &Path, out_dir: &Path, mode: Option<SideMode>) -> CliResult<ObjectiveReport> {
    let sc = load_scenario(config_path)?;
    let mode = mode.unwrap_or(sc.config.mode);
    prepare_out_dir(out_dir)?;
    let report = evaluate(&sc.fleet, &sc.poses, &sc.lattice, &sc.shells, mode)?;
    write_json(&out_dir.join("report.json"), &report)?;
    write_cubes_csv(&out_dir.join("cubes.csv"), &sc, &sc.poses, mode)?;
    Ok(report)
}

pub fn run_optimize(
    config_path: &Path,
    out_dir: &Path,
    seed: Option<u64>,
    mode: Option<SideMode>,
) -> CliResult<(ObjectiveReport, Vec<StartTrace>)> {
    let sc = load_scenario(config_path)?;
    let mode = mode.unwrap_or(sc.config.mode);
    let cfg = sc.search_config(seed);
    prepare_out_dir(out_dir)?;
    let (best, trace) = optimize(&sc.fleet, &sc.lattice, &sc.shells, &cfg, mode)?;
    eprintln!("search finished in {:.2?}", trace.wall_time);
    let poses = best.iter().map(PoseConfig::from_pose).collect();
    write_json(&out_dir.join("best.json"), &BestConfig { objective: trace.report.objective, poses })?;
    write_trace_csv(&out_dir.join("trace.csv"), &trace.starts)?;
    write_json(&out_dir.join("report.json"), &trace.report)?;
    Ok((trace.report, trace.starts))
}

/// Returns `(variables, constraints)`.
pub fn run_export_milp(config_path: &Path, out_dir: &Path, mode: Option<SideMode>) -> CliResult<(usize, usize)> {
    if mode == Some(SideMode::Exact) {
        return Err(Error::invalid(
            "mode",
            "export-milp encodes the pyramid approximation; exact mode has no linear form",
        )
        .into());
    }
    let sc = load_scenario(config_path)?;
    if sc.config.search.optimize_angles {
        return Err(CliError::AngleSearch);
    }
    let angles: Vec<(f64, f64)> = sc.poses.iter().map(|p| (p.pitch, p.roll)).collect();
    let bounds = vec![sc.position_bounds(); sc.fleet.n_lidars()];
    let patterns = enumerate_patterns(&sc.fleet);
    let model = build_model(&sc.fleet, &angles, &bounds, &sc.lattice, &sc.shells, &patterns, &sc.config.milp)?;
    prepare_out_dir(out_dir)?;
    export_model(&model, &out_dir.join("model.lp"))?;
    Ok((model.n_variables(), model.n_constraints()))
}

/// Runs the parsed command; returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let out = cli.out_dir.as_path();
    let result = match &cli.command {
        Command::Evaluate { config } => run_evaluate(config, out, cli.mode).map(|r| {
            println!("objective: {} (approx. radius {:.3} m)", r.objective, r.approx_radius);
        }),
        Command::Optimize { config } => run_optimize(config, out, cli.seed, cli.mode).map(|(r, _)| {
            println!("objective: {} (approx. radius {:.3} m)", r.objective, r.approx_radius);
        }),
        Command::ExportMilp { config } => run_export_milp(config, out, cli.mode).map(|(v, c)| {
            println!("variables: {v}");
            println!("constraints: {c}");
        }),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "version": 1,
        "fleet": { "lidars": [ { "beam_angles_deg": [10.0, -10.0] } ] },
        "roi": { "x": [0.0, 1.0], "y": [0.0, 1.0], "z": [0.0, 1.0], "cube_edge": 1.0 },
        "cylinders": { "radius_gap": 1.0 },
        "poses": [ { "x": 0.0, "y": 0.0, "z": 0.0 } ]
    }"#;

    #[test]
    fn defaults_fill_in() {
        let c = parse_config(MINIMAL, Path::new("m.json")).unwrap();
        assert_eq!(c.mode, SideMode::Exact);
        assert_eq!(c.search.multistarts, 8);
        assert_eq!(c.search.angle_bounds_deg, [-20.0, 20.0]);
        assert_eq!(c.milp, MilpParams::default());
        let sc = build_scenario(c).unwrap();
        assert_eq!(sc.lattice.len(), 1);
        let cfg = sc.search_config(Some(5));
        assert_eq!(cfg.seed, 5);
        assert_eq!(cfg.bounds[3], Interval::new(0.0, 0.0));
    }

    #[test]
    fn unknown_fields_and_versions_are_rejected() {
        let extra = MINIMAL.replace("\"version\": 1,", "\"version\": 1, \"colour\": 3,");
        let e = parse_config(&extra, Path::new("m.json")).unwrap_err();
        assert!(e.to_string().contains("colour"), "{e}");
        assert_eq!(e.exit_code(), 2);
        let v2 = MINIMAL.replace("\"version\": 1", "\"version\": 2");
        assert!(parse_config(&v2, Path::new("m.json")).is_err());
    }

    #[test]
    fn pose_count_must_match_fleet() {
        let two = MINIMAL.replace(
            "[ { \"beam_angles_deg\": [10.0, -10.0] } ]",
            "[ { \"beam_angles_deg\": [10.0] }, { \"beam_angles_deg\": [5.0] } ]",
        );
        let c = parse_config(&two, Path::new("m.json")).unwrap();
        assert!(matches!(build_scenario(c), Err(CliError::Lib(Error::InvalidParameter { .. }))));
    }

    #[test]
    fn pose_degrees_round_trip() {
        let p = PoseConfig { x: 1.0, y: 2.0, z: 3.0, pitch_deg: 12.5, roll_deg: -4.0 };
        let back = PoseConfig::from_pose(&p.to_pose());
        assert!((back.pitch_deg - 12.5).abs() < 1e-12 && (back.roll_deg + 4.0).abs() < 1e-12);
    }
}
