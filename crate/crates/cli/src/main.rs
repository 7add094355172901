use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand};
use log::{error, info, warn};

use microforge::commands::{self, Overrides};
use microforge::exit;
use microforge::serve::{self, ServeOptions};
use microforge_core::letters::LetterParams;
use microforge_core::sweep::SweepKind;
use microforge_core::teleop::{ScenarioLibrary, SimSession, TeleopParams};
use microforge_core::{MicroforgeConfig, CONFIG_ENV};

#[derive(Debug, Parser)]
#[command(name = "microforge", version, about = "Hydrogel modular microrobot workbench")]
struct Cli {
    /// Configuration file (TOML); falls back to $MICROFORGE_CONFIG, then built-in defaults.
    #[arg(long, global = true, env = CONFIG_ENV)]
    config: Option<PathBuf>,
    /// Override the scenario seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Override the integration step, s.
    #[arg(long, global = true)]
    dt: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run scenario files headless and write their traces.
    Run {
        #[arg(required = true)]
        scenarios: Vec<PathBuf>,
        /// Scenarios run in parallel.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Tabulate a model curve: swell_curve, transition_curve, bilayer_ratio or cycle_repeat.
    Sweep {
        kind: SweepKind,
        /// TOML file with grid settings.
        #[arg(long)]
        grid: Option<PathBuf>,
    },
    /// Drive a lone base along a waypoint polyline.
    Letters {
        waypoints: PathBuf,
        /// type1 or type2.
        #[arg(long, default_value = "type2")]
        base: String,
        /// Water fraction; defaults to the operating point of the base.
        #[arg(long)]
        water_fraction: Option<f64>,
        /// Simulated seconds allowed before the run counts as stalled.
        #[arg(long, default_value_t = 900.0)]
        budget: f64,
    },
    /// Serve a live session over WebSocket.
    Serve {
        #[arg(long, default_value_t = 8765)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        bind: String,
        /// Scenario to start with: a path, or a name in the scenario directory.
        #[arg(long)]
        scenario: String,
        /// Directory searched by `load_scenario` commands.
        #[arg(long, default_value = "scenarios")]
        scenario_dir: PathBuf,
        /// Write replay logs here when a session ends or is rebuilt.
        #[arg(long)]
        replay_dir: Option<PathBuf>,
        /// Stop after this many wall-clock seconds.
        #[arg(long)]
        max_seconds: Option<f64>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    // usage errors must not look like a failed assertion (exit 2)
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { exit::FAILURE as u8 } else { exit::OK as u8 });
        }
    };
    ExitCode::from(real_main(cli) as u8)
}

fn real_main(cli: Cli) -> i32 {
    let config = match MicroforgeConfig::resolve(cli.config.as_deref()) {
        Ok(c) => c,
        Err(e) => {
            error!("{e}");
            return exit::SCHEMA;
        }
    };
    let overrides = Overrides { seed: cli.seed, dt: cli.dt };
    match cli.command {
        Command::Run { scenarios, jobs } => {
            let outcomes = commands::run_many(&scenarios, &config.engine_settings(), &overrides, &cli.out, jobs);
            for o in &outcomes {
                let verdict = if o.exit_code == exit::OK { "ok" } else { "FAILED" };
                println!("{verdict:6} {} ({}): {}", o.name, o.path.display(), o.message);
            }
            commands::combined_exit_code(&outcomes)
        }
        Command::Sweep { kind, grid } => {
            let params = match commands::load_sweep_params(grid.as_deref()) {
                Ok(p) => p,
                Err(e) => {
                    error!("{e}");
                    return exit::SCHEMA;
                }
            };
            match commands::sweep(kind, &params, &config, &cli.out) {
                Ok(path) => {
                    println!("{}", path.display());
                    exit::OK
                }
                Err(e) => {
                    error!("{e}");
                    exit::FAILURE
                }
            }
        }
        Command::Letters { waypoints, base, water_fraction, budget } => {
            let kind = match commands::parse_base_kind(&base) {
                Ok(k) => k,
                Err(e) => {
                    error!("{e}");
                    return exit::SCHEMA;
                }
            };
            let mut params = LetterParams { water_fraction, budget_s: budget, ..LetterParams::default() };
            if let Some(dt) = overrides.dt {
                params.dt = dt;
            }
            match commands::letters(&waypoints, kind, &config, &params, &cli.out) {
                Ok((r, path)) => {
                    println!(
                        "{}: {} segments in {:.1} s, max cross-track {:.2} um",
                        path.display(),
                        r.waypoints_followed,
                        r.completion_s,
                        r.max_cross_track_um
                    );
                    exit::OK
                }
                Err(e) => {
                    error!("{e}");
                    exit::FAILURE
                }
            }
        }
        Command::Serve { port, bind, scenario, scenario_dir, replay_dir, max_seconds } => {
            let library = ScenarioLibrary::new(scenario_dir);
            let mut s = match serve::resolve_scenario(&scenario, &library) {
                Ok(s) => s,
                Err(e) => {
                    error!("{e}");
                    return exit::SCHEMA;
                }
            };
            if let Some(seed) = overrides.seed {
                s.metadata.seed = seed;
            }
            if let Some(dt) = overrides.dt {
                s.metadata.dt = dt;
            }
            let session = match SimSession::new(s, config.engine_settings(), TeleopParams::default(), library) {
                Ok(s) => s,
                Err(e) => {
                    error!("{e}");
                    return exit::SCHEMA;
                }
            };
            let handle = match serve::start(session, ServeOptions { bind, port, replay_dir }) {
                Ok(h) => h,
                Err(e) => {
                    error!("{e}");
                    return exit::FAILURE;
                }
            };
            println!("listening on ws://{}", handle.local_addr());
            let session = match max_seconds {
                Some(s) => {
                    std::thread::sleep(Duration::from_secs_f64(s.max(0.0)));
                    handle.shutdown()
                }
                None => handle.wait(),
            };
            for f in session.assertion_failures() {
                warn!("scripted assertion failed during the session: {f}");
            }
            info!("session ended at t = {} s", session.engine().time());
            exit::OK
        }
    }
}
