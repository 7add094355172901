//! Batch subcommands: scenario runs, sweeps and letter drawing.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use log::info;

use microforge_core::gel::{GelModel, HydrogelParams};
use microforge_core::letters::{draw_letters, parse_waypoints, LetterError, LetterParams, LetterReport};
use microforge_core::scenario::{write_trace_csv, write_transitions_csv, RunStatus};
use microforge_core::sweep::{run_sweep, SweepKind, SweepParams, Table};
use microforge_core::{BodyKind, EngineSettings, MicroforgeConfig, Scenario, ScenarioError};

use crate::exit;

/// Overrides shared by every subcommand.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub dt: Option<f64>,
}

/// Result of one scenario file.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub path: PathBuf,
    pub name: String,
    pub exit_code: i32,
    pub message: String,
    pub out_dir: Option<PathBuf>,
}

fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<(), String> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| format!("{}: {e}", dir.display()))?;
    }
    let file = File::create(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut w = BufWriter::new(file);
    f(&mut w).and_then(|_| w.flush()).map_err(|e| format!("{}: {e}", path.display()))
}

fn load_scenario(path: &Path, o: &Overrides) -> Result<Scenario, ScenarioError> {
    let mut s = Scenario::load(path)?;
    if let Some(seed) = o.seed {
        s.metadata.seed = seed;
    }
    if let Some(dt) = o.dt {
        s.metadata.dt = dt;
        s.metadata.trace_interval = s.metadata.trace_interval.max(dt);
    }
    s.validate()?;
    Ok(s)
}

/// Run one scenario and write `trace.csv` and `transitions.csv` under
/// `<out>/<scenario name>/`.
pub fn run_one(path: &Path, settings: &EngineSettings, o: &Overrides, out: &Path) -> RunOutcome {
    let fail = |code: i32, name: String, message: String| RunOutcome {
        path: path.to_path_buf(),
        name,
        exit_code: code,
        message,
        out_dir: None,
    };
    let s = match load_scenario(path, o) {
        Ok(s) => s,
        Err(e) => return fail(e.exit_code(), path.display().to_string(), e.to_string()),
    };
    let name = s.metadata.name.clone();
    let report = match microforge_core::run_scenario(&s, settings.clone()) {
        Ok(r) => r,
        Err(e) => return fail(e.exit_code(), name, e.to_string()),
    };
    let dir = out.join(&name);
    let written = write_file(&dir.join("trace.csv"), |w| write_trace_csv(w, &report.trace))
        .and_then(|_| write_file(&dir.join("transitions.csv"), |w| write_transitions_csv(w, &report.transitions)));
    if let Err(e) = written {
        return fail(exit::FAILURE, name, e);
    }
    let message = match &report.status {
        RunStatus::Completed => format!("completed at t = {} s", report.engine.time()),
        RunStatus::AssertionFailed { time, detail, .. } => format!("assertion failed at t = {time} s: {detail}"),
    };
    RunOutcome { path: path.to_path_buf(), name, exit_code: report.exit_code(), message, out_dir: Some(dir) }
}

/// Run many scenarios on up to `jobs` threads. Results keep input order.
pub fn run_many(paths: &[PathBuf], settings: &EngineSettings, o: &Overrides, out: &Path, jobs: usize) -> Vec<RunOutcome> {
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<RunOutcome>>> = Mutex::new(vec![None; paths.len()]);
    let workers = jobs.clamp(1, paths.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(p) = paths.get(i) else { break };
                let r = run_one(p, settings, o, out);
                info!("{}: {}", r.name, r.message);
                results.lock().expect("result lock")[i] = Some(r);
            });
        }
    });
    results.into_inner().expect("result lock").into_iter().map(|r| r.expect("every scenario ran")).collect()
}

/// The most severe code wins: schema errors over assertion failures over
/// other failures.
pub fn combined_exit_code(outcomes: &[RunOutcome]) -> i32 {
    let rank = |c: i32| match c {
        exit::SCHEMA => 3,
        exit::ASSERTION => 2,
        exit::OK => 0,
        _ => 1,
    };
    outcomes.iter().map(|o| o.exit_code).max_by_key(|&c| rank(c)).unwrap_or(exit::OK)
}

pub fn sweep_table(kind: SweepKind, params: &SweepParams, config: &MicroforgeConfig) -> Result<Table, String> {
    let gel = gel_model(&config.world.gel)?;
    run_sweep(kind, params, &gel, &config.world.kinetics, &config.world.gripper.left).map_err(|e| e.to_string())
}

fn gel_model(p: &HydrogelParams) -> Result<GelModel, String> {
    GelModel::new(p.clone()).map_err(|e| e.to_string())
}

pub fn load_sweep_params(path: Option<&Path>) -> Result<SweepParams, String> {
    let Some(p) = path else { return Ok(SweepParams::default()) };
    let text = std::fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()))?;
    toml::from_str(&text).map_err(|e| format!("{}: {e}", p.display()))
}

/// Write a sweep to `<out>/<kind>.csv` and return the path.
pub fn sweep(kind: SweepKind, params: &SweepParams, config: &MicroforgeConfig, out: &Path) -> Result<PathBuf, String> {
    let table = sweep_table(kind, params, config)?;
    let path = out.join(format!("{kind}.csv"));
    write_file(&path, |w| table.write_csv(w))?;
    Ok(path)
}

pub fn parse_base_kind(s: &str) -> Result<BodyKind, String> {
    match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
        "type1" | "type1base" => Ok(BodyKind::Type1Base),
        "type2" | "type2base" => Ok(BodyKind::Type2Base),
        _ => Err(format!("unknown base '{s}' (expected type1 or type2)")),
    }
}

/// Follow the polyline in `waypoints` and write `<out>/<stem>_trace.csv`.
pub fn letters(
    waypoints: &Path,
    kind: BodyKind,
    config: &MicroforgeConfig,
    params: &LetterParams,
    out: &Path,
) -> Result<(LetterReport, PathBuf), String> {
    let file = File::open(waypoints).map_err(|e| format!("{}: {e}", waypoints.display()))?;
    let path = parse_waypoints(BufReader::new(file)).map_err(|e| e.to_string())?;
    let report = draw_letters(&path, kind, &config.world, &config.follower, params).map_err(|e| match e {
        LetterError::UnreachableWaypoint { .. } => format!("{e}"),
        other => other.to_string(),
    })?;
    let stem = waypoints.file_stem().and_then(|s| s.to_str()).unwrap_or("letters");
    let trace_path = out.join(format!("{stem}_trace.csv"));
    write_file(&trace_path, |w| write_trace_csv(w, &report.trace))?;
    Ok((report, trace_path))
}
