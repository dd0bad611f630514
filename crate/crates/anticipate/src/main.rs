use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anticipate::pipeline;
use anticipate::report;
use anticipate::{Config, Error, Result};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "anticipate", version, about = "Motion-triggered intention anticipation")]
struct Cli {
    /// TOML configuration. Defaults apply when the default file is absent.
    #[arg(short, long, global = true, default_value = "anticipate.toml")]
    config: PathBuf,
    /// More log output; repeat for debug level.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the world and write train/val/test episodes.
    GenData,
    /// Train the motion encoder on synthetic windows.
    PretrainMotion,
    /// Train the anticipator with every object observation.
    PretrainRnn,
    /// Train the trigger policy jointly with the anticipator.
    TrainJoint,
    /// Evaluate all gating modes on the test split.
    Eval {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Sweep the trigger threshold on the test split.
    Sweep {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Write plot-ready series from the sweep table.
    Export {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Classify windows of a `t,ax,ay,az,hand` CSV with the motion encoder.
    Classify {
        signals: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every stage from data generation to export.
    Run,
    /// Print the effective configuration as TOML.
    PrintConfig,
}

fn load_config(path: &Path) -> Result<Config> {
    if path.exists() {
        Config::load(path)
    } else if path == Path::new("anticipate.toml") {
        log::info!("no anticipate.toml found, using defaults");
        Ok(Config::default())
    } else {
        Err(Error::Config(format!("{} does not exist", path.display())))
    }
}

fn run(cli: &Cli) -> Result<()> {
    let cfg = load_config(&cli.config)?;
    match &cli.command {
        Command::GenData => gen_data(&cfg)?,
        Command::PretrainMotion => pretrain_motion(&cfg)?,
        Command::PretrainRnn => {
            let h = pipeline::pretrain_rnn(&cfg)?;
            if let Some(s) = h.last() {
                println!("pretrain: {} epochs, final L^A {:.4}", h.len(), s.anticipation_loss);
            }
        }
        Command::TrainJoint => train_joint(&cfg)?,
        Command::Eval { checkpoint } => {
            let rep = pipeline::eval(&cfg, checkpoint.as_deref())?;
            print!("{}", report::summary(&rep));
        }
        Command::Sweep { checkpoint } => {
            for r in pipeline::sweep(&cfg, checkpoint.as_deref())? {
                println!("tau {:.2}  ratio {:.3}  acc25 {:.4}  acc100 {:.4}", r.tau, r.ratio, r.accuracy[0], r.accuracy[1]);
            }
        }
        Command::Export { out } => {
            let path = pipeline::export(&cfg, out.as_deref())?;
            println!("wrote {}", path.display());
        }
        Command::Classify { signals, out } => {
            for p in pipeline::classify(&cfg, signals, out.as_deref())? {
                println!("{:?} {:>4} {:>9.3}s  {:<8} {:.3}", p.hand, p.window, p.start_t, p.class.name(), p.confidence);
            }
        }
        Command::Run => {
            gen_data(&cfg)?;
            pretrain_motion(&cfg)?;
            pipeline::pretrain_rnn(&cfg)?;
            train_joint(&cfg)?;
            let rep = pipeline::eval(&cfg, None)?;
            print!("{}", report::summary(&rep));
            pipeline::export(&cfg, None)?;
        }
        Command::PrintConfig => print!("{}", cfg.to_toml()),
    }
    Ok(())
}

fn gen_data(cfg: &Config) -> Result<()> {
    let s = pipeline::gen_data(cfg)?;
    println!(
        "{} episodes ({} train, {} val, {} test), mean length {:.1} frames",
        s.episodes, s.train, s.val, s.test, s.mean_len
    );
    Ok(())
}

fn pretrain_motion(cfg: &Config) -> Result<()> {
    let s = pipeline::pretrain_motion(cfg)?;
    println!(
        "motion encoder: right {:.4}, left flipped {:.4}, left unflipped {:.4}",
        s.right.overall(),
        s.left_flip.overall(),
        s.left_no_flip.overall()
    );
    Ok(())
}

fn train_joint(cfg: &Config) -> Result<()> {
    let h = pipeline::train_joint(cfg)?;
    if let Some(s) = h.last() {
        println!("joint: {} epochs, trigger ratio {:.3}", h.len(), s.trigger_ratio);
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
