use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use topolattice_cli::{load_config, presets, run, RunError, TaskRegistry};

#[derive(Parser)]
#[command(name = "topolattice", version, about = "Run resonator-chain and magnon-coupling experiments from JSON configs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run {
        config: PathBuf,
        /// Directory that receives the artifacts.
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Worker threads for grid evaluation.
        #[arg(long, env = "TOPOLATTICE_THREADS")]
        threads: Option<usize>,
    },
    /// Check a config file without running it.
    Validate { config: PathBuf },
    /// Print a shipped config.
    Preset { name: String },
}

fn fail(err: &RunError) -> ExitCode {
    let report = serde_json::to_string(&err.report()).expect("report serializes");
    eprintln!("{report}");
    ExitCode::from(err.exit_code())
}

fn config_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, out, threads } => {
            if let Some(n) = threads {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                    log::warn!("thread pool already initialized: {e}");
                }
            }
            let cfg = match load_config(&config) {
                Ok(c) => c,
                Err(e) => return fail(&e),
            };
            match run(&cfg, &TaskRegistry::default(), &out, &config_dir(&config)) {
                Ok(written) => {
                    for w in written {
                        println!("{}", w.summary_line());
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => fail(&e),
            }
        }
        Command::Validate { config } => match load_config(&config) {
            Ok(cfg) => {
                println!("ok: task {}", cfg.task);
                ExitCode::SUCCESS
            }
            Err(e) => fail(&e),
        },
        Command::Preset { name } => match presets::preset(&name) {
            Some(text) => {
                print!("{text}");
                ExitCode::SUCCESS
            }
            None => {
                eprintln!(
                    "{}",
                    serde_json::json!({
                        "status": "error",
                        "kind": "preset",
                        "message": format!("unknown preset `{name}`; available: {}", presets::names().join(", ")),
                    })
                );
                ExitCode::from(2)
            }
        },
    }
}
