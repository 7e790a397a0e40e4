use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use robot_mirror::commands::{cmd_babble, cmd_imitate, cmd_learn, cmd_sweep, cmd_train};
use robot_mirror::config::RunConfig;
use robot_mirror::Error;

#[derive(Parser)]
#[command(
    name = "robot-mirror",
    version,
    about = "Mirror babbling, pose association and twin imitation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Flat key = value config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed; sub-seeds not set explicitly are derived from it.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Override one config key, e.g. `--set t=200`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the babbling pose dataset.
    Babble,
    /// Train the pose VAE on the dataset.
    Train,
    /// Run the mirror phase and store the association memory.
    Learn,
    /// Imitate the test battery with the stored memory and score it.
    Imitate,
    /// Sweep t or d over several seeds.
    Sweep,
}

fn load(cli: &Cli) -> Result<RunConfig, Error> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.out_dir = o.clone();
    }
    for kv in &cli.overrides {
        cfg.apply_override(kv)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cmd: &Command, cfg: &RunConfig) -> Result<(), Error> {
    match cmd {
        Command::Babble => {
            let ds = cmd_babble(cfg)?;
            println!(
                "wrote {} poses to {} (modes L/R/sym/indep: {:?})",
                ds.len(),
                cfg.out_dir.join("dataset.csv").display(),
                ds.mode_counts
            );
        }
        Command::Train => {
            let (_, r) = cmd_train(cfg)?;
            for (i, l) in r.epoch_losses.iter().enumerate() {
                println!("epoch {:2}  loss {:.6}", i + 1, l);
            }
            println!(
                "train {} / test {} poses, batch {}, test MAE {:.4}, {:.1}s",
                r.train_size, r.test_size, r.batch_size, r.test_mae, r.wall_seconds
            );
        }
        Command::Learn => {
            let (m, trace) = cmd_learn(cfg)?;
            println!(
                "stored {} pairs ({} forced) in {} ticks",
                m.len(),
                trace.forced,
                trace.total_ticks()
            );
        }
        Command::Imitate => {
            let e = cmd_imitate(cfg)?;
            for (i, v) in e.per_posture.iter().enumerate() {
                println!("posture {i}: NMAE {v:.3}%");
            }
            println!("mean NMAE {:.3}%", e.mean);
        }
        Command::Sweep => {
            let r = cmd_sweep(cfg)?;
            println!("t\td\tepsilon\tmean NMAE %\tseeds");
            for (t, d, e, m, n) in r.cell_means() {
                println!("{t}\t{d:.6}\t{e}\t{m:.3}\t{n}");
            }
            for f in &r.failures {
                eprintln!(
                    "cell t={} d={} seed={} failed: {}",
                    f.cell.t, f.cell.d, f.cell.seed, f.message
                );
            }
        }
    }
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => 2,
        Error::Divergence { .. } | Error::TickBudget { .. } => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match load(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    match run(&cli.command, &cfg) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
