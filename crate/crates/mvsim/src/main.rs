use clap::{Parser, Subcommand};
use mvsim::harness::{convergence_study, run_simulation, summary_line, sweep, verify_lemmas};
use mvsim::{Config, MvError, Result};
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "mvsim", about = "Magnetoviscoelastic flow simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation from a config file.
    Run {
        config: PathBuf,
        /// Output directory (defaults to the config's out_dir).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the lemma verification suite.
    Verify {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one simulation per eps value and fit the defect slope.
    Sweep {
        config: PathBuf,
        /// Comma-separated eps values, e.g. 1e-1,1e-2,1e-3.
        #[arg(long)]
        eps: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the manufactured-solution convergence studies.
    Converge {
        config: PathBuf,
        /// Number of refinement levels (at least 3).
        #[arg(long, default_value_t = 3)]
        levels: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_config(path: &PathBuf) -> Result<Config> {
    let text = std::fs::read_to_string(path)?;
    let mut cfg = Config::parse(&text)?;
    if let Ok(v) = std::env::var("MVSIM_THREADS") {
        cfg.threads = v
            .parse()
            .map_err(|_| MvError::Config(format!("bad MVSIM_THREADS value '{v}'")))?;
        if cfg.threads == 0 {
            return Err(MvError::Config("MVSIM_THREADS must be at least 1".into()));
        }
    }
    mvsim::set_threads(cfg.threads);
    Ok(cfg)
}

fn out_dir(cfg: &Config, out: Option<PathBuf>) -> PathBuf {
    out.unwrap_or_else(|| PathBuf::from(&cfg.out_dir))
}

fn parse_eps_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|tok| {
            tok.trim()
                .parse::<f64>()
                .map_err(|_| MvError::Config(format!("bad eps value '{tok}'")))
        })
        .collect()
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { config, out } => {
            let cfg = load_config(&config)?;
            let dir = out_dir(&cfg, out);
            let summary = run_simulation(&cfg, &dir)?;
            println!("{}", summary_line(&summary));
        }
        Command::Verify { config, out } => {
            let cfg = load_config(&config)?;
            let dir = out_dir(&cfg, out);
            let report = verify_lemmas(&cfg)?;
            let lines = report.lines();
            for line in &lines {
                println!("{line}");
            }
            std::fs::create_dir_all(&dir)?;
            std::fs::write(dir.join("verify.txt"), lines.join("\n") + "\n")?;
            if !report.pass() {
                return Err(MvError::Verification(
                    "lemma verification failed".into(),
                ));
            }
        }
        Command::Sweep { config, eps, out } => {
            let cfg = load_config(&config)?;
            let dir = out_dir(&cfg, out);
            let eps_list = parse_eps_list(&eps)?;
            let report = sweep(&cfg, &eps_list, &dir)?;
            for (eps, defect) in &report.points {
                println!("eps={eps:e} defect_sup={defect:e}");
            }
            println!("slope={:.4}", report.slope);
        }
        Command::Converge {
            config,
            levels,
            out,
        } => {
            let cfg = load_config(&config)?;
            let dir = out_dir(&cfg, out);
            let report = convergence_study(&cfg, levels)?;
            for line in report.lines() {
                println!("{line}");
            }
            std::fs::create_dir_all(&dir)?;
            std::fs::write(dir.join("converge.csv"), report.csv())?;
            if !report.pass() {
                return Err(MvError::Verification(
                    "convergence orders below threshold".into(),
                ));
            }
        }
    }
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        eprintln!("error: {err}");
        std::process::exit(err.exit_code());
    }
}
